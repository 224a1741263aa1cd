"""Wigner's-friend protocol builders, record chains and record erasure.

Layout is always (W, F, S, R1..RK): Wigner's probe, the friend's probe, the
spin, then the friend's record qubits. Default schedule: friend couples at
t=1, registers at t=2, Wigner couples at t=3 and reads his probe at t=4.
Record copies sit between t=1 and t=2, erasures between t=2 and t=3.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .hilbert import (
    SpaceLayout,
    StateVector,
    orthonormality_defect,
    permute_layout,
    tensor_state,
)
from .path_engine import full_distribution, interference_report, marginal, segment_unitaries
from .protocol import (
    Branch,
    CouplingEvent,
    MeasurementEvent,
    ObservableDecomposition,
    Protocol,
    composite_basis_coupling,
    controlled_flip_coupling,
    orthonormal_completion,
)

W, F, S = "W", "F", "S"
RECORD_PREFIX = "R"
MODES = ("spin", "probe", "composite")
CASE_NAMES = {"spin": "case-c", "probe": "case-d", "composite": "case-f"}

T_FRIEND_COUPLE, T_FRIEND_LOOK, T_WIGNER_COUPLE, T_WIGNER_LOOK = 1.0, 2.0, 3.0, 4.0

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
X_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
X_MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)

GAP_TOL = 1e-12


class ScenarioError(ValueError):
    pass


def _pair(states) -> tuple[np.ndarray, np.ndarray]:
    a, b = (np.asarray(s, dtype=complex).reshape(-1) for s in states)
    return a, b


def composite_pair(f_basis, phase: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """(|1^F s1> + e^{i phase}|0^F s2>)/sqrt2 and the same with a minus sign, on (F, S)."""
    s1, s2 = _pair(f_basis)
    a, b = np.kron(KET1, s1), np.exp(1j * phase) * np.kron(KET0, s2)
    return (a + b) / np.sqrt(2), (a - b) / np.sqrt(2)


def probe_basis_from_u(u) -> tuple[np.ndarray, np.ndarray]:
    """|phi_i> = u[i,0] |1^F> + u[i,1] |0^F>; rows of ``u`` are (u_i1, u_i0)."""
    u = np.asarray(u, dtype=complex)
    return tuple(u[i, 0] * KET1 + u[i, 1] * KET0 for i in range(2))


@dataclass(frozen=True, eq=False)
class WignerFriendConfig:
    spin_init: np.ndarray = field(default_factory=lambda: X_PLUS.copy())
    f_basis: tuple = (KET0, KET1)
    w_mode: str = "spin"
    w_basis: tuple | None = None
    f_registered: bool = True
    chain_length: int = 0
    erasure: frozenset = frozenset()
    f_readout: int = 0

    def __post_init__(self):
        if self.w_mode not in MODES:
            raise ScenarioError(f"w_mode must be one of {MODES}, got {self.w_mode!r}")
        s0 = np.asarray(self.spin_init, dtype=complex).reshape(-1)
        if s0.size != 2 or abs(np.linalg.norm(s0) - 1) > 1e-10:
            raise ScenarioError("spin_init must be a normalized qubit state")
        object.__setattr__(self, "spin_init", s0)
        object.__setattr__(self, "f_basis", _pair(self.f_basis))
        if self.w_basis is None:
            default = {
                "spin": (X_PLUS, X_MINUS),
                "probe": (KET1, KET0),
                "composite": composite_pair(self.f_basis),
            }[self.w_mode]
            object.__setattr__(self, "w_basis", default)
        else:
            object.__setattr__(self, "w_basis", _pair(self.w_basis))
        for name in ("f_basis", "w_basis"):
            if orthonormality_defect(getattr(self, name)) > 1e-10:
                raise ScenarioError(f"{name} is not orthonormal")
        expected = 4 if self.w_mode == "composite" else 2
        if self.w_basis[0].size != expected:
            raise ScenarioError(f"w_basis for mode {self.w_mode!r} needs {expected}-dim states")
        if self.chain_length < 0:
            raise ScenarioError("chain_length must be >= 0")
        erasure = frozenset(int(i) for i in self.erasure)
        if not erasure <= set(range(1, self.chain_length + 1)):
            raise ScenarioError(f"erasure {sorted(erasure)} not within 1..{self.chain_length}")
        object.__setattr__(self, "erasure", erasure)
        if not 0 <= self.f_readout <= self.chain_length:
            raise ScenarioError(f"f_readout must be in 0..{self.chain_length}")

    def but(self, **changes) -> "WignerFriendConfig":
        return replace(self, **changes)


def record_name(k: int) -> str:
    return f"{RECORD_PREFIX}{k}"


def product_observable(layout: SpaceLayout, reader: str,
                       factors: Sequence[tuple[Sequence[str], np.ndarray]],
                       label: str = "") -> ObservableDecomposition:
    """Yes/no reading of qubit ``reader`` whose branch bases are product states.

    ``factors`` lists (subsystem group, basis columns) covering the layout;
    the reader's own factor must be its computational basis so every product
    vector falls inside one branch.
    """
    names = [n for group, _ in factors for n in group]
    if sorted(names) != sorted(layout.names):
        raise ScenarioError(f"factors cover {names}, layout is {layout.names}")
    cols = np.ones((1, 1), dtype=complex)
    for _, basis in factors:
        cols = np.kron(cols, np.asarray(basis, dtype=complex))
    cols = permute_layout(cols, layout.sub(names), layout.names)
    pos = layout.position(reader)
    digit_weight = np.zeros(layout.total_dim)
    for idx in range(layout.total_dim):
        digit_weight[idx] = np.unravel_index(idx, layout.dims)[pos]
    yes_weight = np.real(np.einsum("ij,i,ij->j", cols.conj(), digit_weight, cols))
    yes = yes_weight > 0.5
    if np.any(np.abs(yes_weight - yes) > 1e-9):
        raise ScenarioError(f"product basis does not split along {reader!r}")
    return ObservableDecomposition(
        layout, (Branch(1.0, None, "yes", cols[:, yes]), Branch(0.0, None, "no", cols[:, ~yes])),
        label or reader)


def _eye(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex)


def _friend_observable(layout: SpaceLayout, config: WignerFriendConfig, reader: str):
    records = [n for n in layout.names if n.startswith(RECORD_PREFIX)]
    factors = [((W,), _eye(2)), ((F,), _eye(2)), ((S,), np.column_stack(config.f_basis))]
    factors += [((r,), _eye(2)) for r in records]
    return product_observable(layout, reader, factors, label=F)


def _wigner_observable(layout: SpaceLayout, config: WignerFriendConfig):
    records = [n for n in layout.names if n.startswith(RECORD_PREFIX)]
    if config.w_mode == "spin":
        factors = [((W,), _eye(2)), ((F,), _eye(2)), ((S,), np.column_stack(config.w_basis))]
    elif config.w_mode == "probe":
        factors = [((W,), _eye(2)), ((F,), np.column_stack(config.w_basis)),
                   ((S,), np.column_stack(config.f_basis))]
    else:
        fs = list(config.w_basis) + orthonormal_completion(config.w_basis, 4)
        factors = [((W,), _eye(2)), ((F, S), np.column_stack(fs))]
    factors += [((r,), _eye(2)) for r in records]
    return product_observable(layout, W, factors, label=W)


def _wigner_coupling(layout: SpaceLayout, config: WignerFriendConfig) -> CouplingEvent:
    if config.w_mode == "spin":
        u = controlled_flip_coupling(layout, W, S, config.w_basis)
        return CouplingEvent(T_WIGNER_COUPLE, u, (W, S))
    if config.w_mode == "probe":
        u = controlled_flip_coupling(layout, W, F, config.w_basis)
        return CouplingEvent(T_WIGNER_COUPLE, u, (W, F))
    completion = [config.w_basis[1]] + orthonormal_completion(config.w_basis, 4)
    u = composite_basis_coupling(layout, W, (F, S), config.w_basis[0], completion)
    return CouplingEvent(T_WIGNER_COUPLE, u, (W, F, S))


def _build(config: WignerFriendConfig, mode: str) -> Protocol:
    if config.w_mode != mode:
        raise ScenarioError(f"builder expects w_mode={mode!r}, config has {config.w_mode!r}")
    layout = SpaceLayout.qubits(W, F, S)
    initial = tensor_state([StateVector(layout.sub([W]), KET0), StateVector(layout.sub([F]), KET0),
                            StateVector(layout.sub([S]), config.spin_init)])
    friend = CouplingEvent(T_FRIEND_COUPLE, controlled_flip_coupling(layout, F, S, config.f_basis),
                           (F, S))
    events = [
        friend,
        MeasurementEvent(T_FRIEND_LOOK, F, _friend_observable(layout, config, F), config.f_registered),
        _wigner_coupling(layout, config),
        MeasurementEvent(T_WIGNER_LOOK, W, _wigner_observable(layout, config), True),
    ]
    protocol = Protocol(layout, initial, events, name=CASE_NAMES[mode])
    protocol = extend_chain(protocol, config.chain_length)
    protocol = erase_records(protocol, sorted(config.erasure))
    if config.f_readout:
        protocol = _reread(protocol, config, record_name(config.f_readout))
    return protocol


def _reread(protocol: Protocol, config: WignerFriendConfig, reader: str) -> Protocol:
    obs = _friend_observable(protocol.layout, config, reader)
    return protocol.with_events(
        replace(e, observable=obs) if isinstance(e, MeasurementEvent) and e.observer == F else e
        for e in protocol.events)


def build_case_C(config: WignerFriendConfig) -> Protocol:
    """Both observers couple their probes to the spin."""
    return _build(config, "spin")


def build_case_D(config: WignerFriendConfig) -> Protocol:
    """Wigner couples his probe to the friend's probe, in the basis ``config.w_basis``."""
    return _build(config, "probe")


def build_case_F(config: WignerFriendConfig) -> Protocol:
    """Wigner engages the friend's probe and the spin together."""
    return _build(config, "composite")


BUILDERS = {"spin": build_case_C, "probe": build_case_D, "composite": build_case_F}


def build(config: WignerFriendConfig) -> Protocol:
    return BUILDERS[config.w_mode](config)


def _kron_observable(obs: ObservableDecomposition, layout: SpaceLayout, extra: int
                     ) -> ObservableDecomposition:
    eye = _eye(extra)
    return ObservableDecomposition(
        layout,
        tuple(Branch(b.eigenvalue, np.kron(b.projector, eye), b.label, np.kron(b.basis, eye))
              for b in obs.branches),
        obs.label)


def extend_chain(protocol: Protocol, k: int, probe: str = F) -> Protocol:
    """Append ``k`` record qubits, each copied from ``probe`` right after the probe's coupling."""
    if k < 0:
        raise ScenarioError("chain length must be >= 0")
    if k == 0:
        return protocol
    existing = [n for n in protocol.layout.names if n.startswith(RECORD_PREFIX)]
    start = len(existing)
    names = [record_name(start + i) for i in range(1, k + 1)]
    layout = protocol.layout.concat(SpaceLayout.qubits(*names))
    initial = StateVector(layout, np.kron(protocol.initial.entries, np.eye(2 ** k)[:, 0]))

    events = list(protocol.events)
    idx = next((i for i, e in enumerate(events)
                if isinstance(e, CouplingEvent) and probe in e.targets and e.kind == "coupling"), None)
    if idx is None:
        raise ScenarioError(f"no coupling involving {probe!r} to copy records from")
    t0 = events[idx].time
    t1 = events[idx + 1].time if idx + 1 < len(events) else t0 + 1.0
    copies = [
        CouplingEvent(t0 + (t1 - t0) * (j + 1) / (k + 1),
                      controlled_flip_coupling(layout, name, probe, (KET1, KET0)),
                      (name, probe), kind="record-copy")
        for j, name in enumerate(names)
    ]
    extra = 2 ** k
    new_events = []
    for e in events[:idx + 1] + copies + events[idx + 1:]:
        if isinstance(e, MeasurementEvent):
            e = replace(e, observable=_kron_observable(e.observable, layout, extra))
        new_events.append(e)
    return replace(protocol, layout=layout, initial=initial, events=tuple(new_events))


def erase_records(protocol: Protocol, subset: Sequence[int], pointer: str = W,
                  probe: str = F) -> Protocol:
    """Undo the copy of each listed record just before ``pointer``'s coupling."""
    subset = sorted(set(int(i) for i in subset))
    if not subset:
        return protocol
    layout = protocol.layout
    for i in subset:
        if record_name(i) not in layout.names:
            raise ScenarioError(f"no record {record_name(i)!r} in layout {layout.names}")
    events = list(protocol.events)
    idx = max((i for i, e in enumerate(events)
               if isinstance(e, CouplingEvent) and pointer in e.targets and e.kind == "coupling"),
              default=None)
    if idx is None:
        raise ScenarioError(f"no coupling by {pointer!r}")
    t1 = events[idx].time
    t0 = events[idx - 1].time if idx > 0 else t1 - 1.0
    n = len(subset)
    erasers = [
        CouplingEvent(t0 + (t1 - t0) * (j + 1) / (n + 1),
                      controlled_flip_coupling(layout, record_name(i), probe, (KET1, KET0)),
                      (record_name(i), probe), kind="record-erase")
        for j, i in enumerate(subset)
    ]
    return protocol.with_events(events[:idx] + erasers + events[idx:])


def regroup(protocol: Protocol, order: Sequence[str]) -> Protocol:
    """Same physics with the subsystems listed in a different order."""
    old = protocol.layout
    layout = old.sub(order)
    initial = StateVector(layout, permute_layout(protocol.initial.entries, old, order))
    events = []
    for e in protocol.events:
        if isinstance(e, MeasurementEvent):
            obs = e.observable
            obs = ObservableDecomposition(
                layout,
                tuple(Branch(b.eigenvalue, permute_layout(b.projector, old, order), b.label,
                             permute_layout(b.basis, old, order)) for b in obs.branches),
                obs.label)
            e = replace(e, observable=obs)
        events.append(e)
    return replace(protocol, layout=layout, initial=initial, events=tuple(events))


class RecordInvariantError(AssertionError):
    pass


def _wigner_yes(protocol: Protocol, pointer: str = W) -> float:
    regs = protocol.registered
    slot = [i for i, e in enumerate(regs) if e.observer == pointer][-1]
    table = marginal(full_distribution(protocol), [slot])
    return sum(p for seq, p in table.items() if seq[0].label == "yes")


def surviving_records(protocol: Protocol, pointer: str = W) -> list[str]:
    """Records still holding a copy that the pointer's couplings never touch.

    Decided from the event list alone: a record is live when its copy
    couplings outnumber its erasures by an odd count.
    """
    records = [n for n in protocol.layout.names if n.startswith(RECORD_PREFIX)]
    engaged = {t for e in protocol.couplings if pointer in e.targets for t in e.targets}
    out = []
    for r in records:
        flips = sum(1 for e in protocol.couplings
                    if e.kind in ("record-copy", "record-erase") and e.targets[0] == r)
        if flips % 2 == 1 and r not in engaged:
            out.append(r)
    return out


def surviving_record_check(protocol: Protocol, pointer: str = W, friend: str = F) -> bool:
    """True iff some record survives; then P(yes^W) must not depend on the friend registering."""
    if not surviving_records(protocol, pointer):
        return False
    if any(m.observer == friend for m in protocol.measurements):
        reg = _wigner_yes(protocol.with_registered(friend, True), pointer)
        unreg = _wigner_yes(protocol.with_registered(friend, False), pointer)
        if abs(reg - unreg) > 1e-10:
            raise RecordInvariantError(
                f"surviving record but P(yes^{pointer}) differs: {reg!r} vs {unreg!r}")
    return True


@dataclass(frozen=True, eq=False)
class ScenarioReport:
    config: WignerFriendConfig
    amplitudes: tuple[complex, complex, complex, complex]
    table: dict[tuple[str, str], float]
    p_yes_registered: float
    p_yes_unregistered: float
    interference_term: float
    record_survival: bool

    @property
    def gap(self) -> float:
        return self.p_yes_unregistered - self.p_yes_registered


def shorthand_amplitudes(config: WignerFriendConfig) -> tuple[complex, ...]:
    """A1..A4 for the chain-free version of ``config``, from the shorthand states.

    Spin/probe modes pair (1',1), (2',1), (3',2), (4',2); composite mode
    pairs (1',1), (1',2), (2',1), (2',2).
    """
    base = build(config.but(chain_length=0, erasure=frozenset(), f_readout=0, f_registered=True))
    u_friend, u_wigner = segment_unitaries(base)
    phi0 = base.initial.entries
    s1, s2 = config.f_basis
    ket = lambda *v: np.kron(v[0], ket(*v[1:])) if len(v) > 1 else v[0]  # noqa: E731
    mid = [ket(KET0, KET1, s1), ket(KET0, KET0, s2)]
    if config.w_mode == "spin":
        w1, w2 = config.w_basis
        finals = [ket(KET1, KET1, w1), ket(KET0, KET1, w2), ket(KET1, KET0, w1), ket(KET0, KET0, w2)]
        pairs = [(0, 0), (1, 0), (2, 1), (3, 1)]
    elif config.w_mode == "probe":
        p1, p2 = config.w_basis
        finals = [ket(KET1, p1, s1), ket(KET0, p2, s1), ket(KET1, p1, s2), ket(KET0, p2, s2)]
        pairs = [(0, 0), (1, 0), (2, 1), (3, 1)]
    else:
        c1, c2 = config.w_basis
        finals = [ket(KET1, c1), ket(KET0, c2)]
        pairs = [(0, 0), (0, 1), (1, 0), (1, 1)]
    return tuple(
        complex(np.vdot(finals[f], u_wigner @ mid[m]) * np.vdot(mid[m], u_friend @ phi0))
        for f, m in pairs)


def registering_gap(config: WignerFriendConfig) -> ScenarioReport:
    registered = build(config.but(f_registered=True))
    unregistered = build(config.but(f_registered=False))
    p_reg = _wigner_yes(registered)
    p_unreg = _wigner_yes(unregistered)
    if config.w_mode in ("spin", "probe") and abs(p_unreg - p_reg) > GAP_TOL:
        raise RecordInvariantError(
            f"mode {config.w_mode!r}: registering changed P(yes^W) by {p_unreg - p_reg!r}")
    table = {(seq[0].label, seq[1].label): p
             for seq, p in ((r.outcome, r.probability) for r in full_distribution(registered))}
    report = interference_report(registered, "yes")
    return ScenarioReport(
        config=config,
        amplitudes=shorthand_amplitudes(config),
        table=table,
        p_yes_registered=p_reg,
        p_yes_unregistered=p_unreg,
        interference_term=report.interference_term,
        record_survival=surviving_record_check(registered) if config.chain_length else False,
    )
