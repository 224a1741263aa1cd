"""Sum-over-paths probabilities for sequential quantum measurements, with a collapse-based oracle."""
from .hilbert import (
    OperatorMatrix,
    SpaceLayout,
    StateVector,
    Tolerances,
    adjoint,
    apply,
    basis_state,
    compose,
    embed_operator,
    inner,
    tensor_state,
)
from .protocol import (
    Branch,
    CouplingEvent,
    MeasurementEvent,
    ObservableDecomposition,
    Outcome,
    OutcomeSequence,
    Protocol,
    ProtocolValidationError,
    composite_basis_coupling,
    controlled_flip_coupling,
    projector_observable,
    validate,
)
from .path_engine import (
    certainty_check,
    enumerate_virtual_paths,
    full_distribution,
    interference_report,
    marginal,
    real_path_amplitude,
    sequence_probability,
)
from .collapse_oracle import evolve_collapse, state_after, wigner_comparison

__version__ = "0.1.0"
