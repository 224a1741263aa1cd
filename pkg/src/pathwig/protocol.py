"""Measurement protocols: observables as projector families plus time-ordered events."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Iterator, NamedTuple, Sequence, Union

import numpy as np

from .hilbert import (
    DEFAULT_TOLERANCES,
    LayoutError,
    NormalizationError,
    OperatorMatrix,
    SpaceLayout,
    StateVector,
    Tolerances,
    complete_basis,
    embed_operator,
    orthonormality_defect,
    unitarity_defect,
)

YES, NO = "yes", "no"


class ProtocolValidationError(ValueError):
    def __init__(self, diagnostics: Sequence[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("invalid protocol: " + "; ".join(self.diagnostics))


class UnknownOutcomeError(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class Branch:
    """One eigenvalue of an observable with its projector and a basis of the projector's range.

    Give either ``basis`` (columns, orthonormal) or ``projector``; a missing
    basis is taken from the eigenvectors of the projector.
    """

    eigenvalue: float
    projector: np.ndarray | None = None
    label: str = ""
    basis: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "eigenvalue", float(self.eigenvalue))
        if self.basis is None and self.projector is None:
            raise ValueError("branch needs a projector or a basis")
        basis = None if self.basis is None else np.array(self.basis, dtype=complex)
        if basis is not None and basis.ndim == 1:
            basis = basis[:, None]
        if self.projector is None:
            projector = basis @ basis.conj().T
        else:
            projector = np.array(self.projector, dtype=complex)
        if basis is None:
            w, v = np.linalg.eigh((projector + projector.conj().T) / 2)
            basis = v[:, w > 0.5]
        projector.setflags(write=False)
        basis.setflags(write=False)
        object.__setattr__(self, "projector", projector)
        object.__setattr__(self, "basis", basis)
        if not self.label:
            object.__setattr__(self, "label", _format_number(self.eigenvalue))

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def with_basis(self, basis: np.ndarray) -> "Branch":
        return Branch(self.eigenvalue, self.projector, self.label, basis)


def _format_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass(frozen=True, eq=False)
class ObservableDecomposition:
    layout: SpaceLayout
    branches: tuple[Branch, ...]
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        n = self.layout.total_dim
        for b in self.branches:
            if b.projector.shape != (n, n):
                raise LayoutError(f"branch {b.label!r} projector shape {b.projector.shape} != {(n, n)}")

    @property
    def eigenvalues(self) -> tuple[float, ...]:
        return tuple(b.eigenvalue for b in self.branches)

    def matrix(self) -> np.ndarray:
        """sum of eigenvalue * projector."""
        return sum((b.eigenvalue * b.projector for b in self.branches),
                   np.zeros((self.layout.total_dim,) * 2, dtype=complex))

    def basis_matrix(self) -> np.ndarray:
        """All branch bases side by side, in branch order."""
        return np.column_stack([b.basis for b in self.branches])

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for b in self.branches:
            out.append(acc)
            acc += b.rank
        out.append(acc)
        return tuple(out)

    def branch_slice(self, index: int) -> slice:
        return slice(self.offsets[index], self.offsets[index + 1])

    def locate(self, flat_index: int) -> tuple[int, int]:
        """(branch index, index within branch) of a column of ``basis_matrix``."""
        for i in range(len(self.branches)):
            if self.offsets[i] <= flat_index < self.offsets[i + 1]:
                return i, flat_index - self.offsets[i]
        raise IndexError(flat_index)

    def find(self, key: Union[float, str]) -> int:
        """Branch index by exact eigenvalue or by label."""
        for i, b in enumerate(self.branches):
            if isinstance(key, str):
                if b.label == key:
                    return i
            elif b.eigenvalue == float(key):
                return i
        raise UnknownOutcomeError(f"observable {self.label!r} has no branch {key!r}")

    def relabeled(self, mapping: Callable[[float], float], labels: Callable[[str], str] | None = None
                  ) -> "ObservableDecomposition":
        branches = []
        for b in self.branches:
            new_label = labels(b.label) if labels else ""
            branches.append(Branch(mapping(b.eigenvalue), b.projector, new_label, b.basis))
        return ObservableDecomposition(self.layout, tuple(branches), self.label)

    def rebased(self, index: int, basis: np.ndarray) -> "ObservableDecomposition":
        branches = list(self.branches)
        branches[index] = branches[index].with_basis(basis)
        return ObservableDecomposition(self.layout, tuple(branches), self.label)


def observable_diagnostics(obs: ObservableDecomposition, tol: float = DEFAULT_TOLERANCES.projector
                           ) -> list[str]:
    name = obs.label or "<unnamed>"
    out = []
    if not obs.branches:
        return [f"observable {name!r} has no branches"]
    n = obs.layout.total_dim
    total = np.zeros((n, n), dtype=complex)
    for b in obs.branches:
        p = b.projector
        if np.max(np.abs(p - p.conj().T)) > tol:
            out.append(f"observable {name!r}: projector {b.label!r} is not Hermitian")
        if np.max(np.abs(p @ p - p)) > tol:
            out.append(f"observable {name!r}: projector {b.label!r} is not idempotent")
        if b.basis.shape[0] != n:
            out.append(f"observable {name!r}: basis of {b.label!r} has wrong length")
            continue
        if b.rank == 0:
            out.append(f"observable {name!r}: branch {b.label!r} is empty")
            continue
        if orthonormality_defect(b.basis.T) > tol:
            out.append(f"observable {name!r}: basis of {b.label!r} is not orthonormal")
        elif np.max(np.abs(b.basis @ b.basis.conj().T - p)) > tol:
            out.append(f"observable {name!r}: basis of {b.label!r} does not span its projector")
        total = total + p
    for i, a in enumerate(obs.branches):
        for b in obs.branches[i + 1:]:
            if np.max(np.abs(a.projector @ b.projector)) > tol:
                out.append(f"observable {name!r}: projectors {a.label!r} and {b.label!r} overlap")
    if np.max(np.abs(total - np.eye(n))) > tol:
        out.append(f"incomplete observable {name!r}: projectors do not sum to identity")
    eigs = obs.eigenvalues
    if len(set(eigs)) != len(eigs):
        out.append(f"observable {name!r}: repeated eigenvalues {eigs}")
    labels = [b.label for b in obs.branches]
    if len(set(labels)) != len(labels):
        out.append(f"observable {name!r}: repeated branch labels {labels}")
    return out


def observable_from_bases(layout: SpaceLayout, branches: Sequence[tuple[float, str, np.ndarray]],
                          label: str = "") -> ObservableDecomposition:
    """Build an observable from (eigenvalue, label, basis columns) triples."""
    return ObservableDecomposition(
        layout, tuple(Branch(e, None, lab, np.asarray(cols)) for e, lab, cols in branches), label)


def projector_observable(layout: SpaceLayout, target: str, axis_state, label: str = "",
                         tol: float = DEFAULT_TOLERANCES.norm) -> ObservableDecomposition:
    """Two-outcome probe reading: eigenvalue 1 ("yes") on ``axis_state``, 0 ("no") on its complement."""
    axis = np.asarray(axis_state, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(axis) - 1.0) > tol:
        raise NormalizationError(f"axis state has norm {np.linalg.norm(axis)!r}")
    local = np.outer(axis, axis.conj())
    yes = embed_operator(local, [target], layout).entries
    no = np.eye(layout.total_dim) - yes
    return ObservableDecomposition(
        layout, (Branch(1.0, yes, YES), Branch(0.0, no, NO)), label or target)


def observable_from_hermitian(matrix, layout: SpaceLayout, gap: float = 1e-8, label: str = ""
                              ) -> ObservableDecomposition:
    """Approximate helper: cluster the spectrum of a Hermitian matrix into branches.

    Eigenvalues closer than ``gap`` are merged and replaced by their mean, so
    the result is only as exact as the eigensolver.
    """
    m = np.asarray(matrix, dtype=complex)
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    groups: list[list[int]] = []
    for i in range(len(w)):
        if groups and w[i] - w[groups[-1][-1]] < gap:
            groups[-1].append(i)
        else:
            groups.append([i])
    branches = tuple(Branch(float(np.mean(w[g])), None, "", v[:, g]) for g in groups)
    return ObservableDecomposition(layout, branches, label)


def controlled_flip_coupling(layout: SpaceLayout, pointer: str, system: str, basis: Sequence,
                             tol: float = DEFAULT_TOLERANCES.unitary) -> OperatorMatrix:
    """Local unitary on (pointer, system) flipping the pointer iff the system is in ``basis[0]``.

    |0>|b1> -> |1>|b1>, |0>|b2> -> |0>|b2>, and the unitary extension
    |1>|b1> -> |0>|b1>, |1>|b2> -> |1>|b2>.
    """
    local = layout.sub([pointer, system])
    if local.dim(pointer) != 2:
        raise LayoutError(f"pointer {pointer!r} must be a qubit")
    b = [np.asarray(s, dtype=complex).reshape(-1) for s in basis]
    if len(b) != 2 or any(v.size != local.dim(system) for v in b):
        raise ValueError(f"basis must be a pair of {system!r} states")
    if orthonormality_defect(b) > tol:
        raise ValueError(f"basis for {system!r} is not orthonormal")
    flip_on = np.outer(b[0], b[0].conj())
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    u = np.kron(x, flip_on) + np.kron(np.eye(2), np.eye(local.dim(system)) - flip_on)
    return OperatorMatrix(local, u, unitary=True)


def composite_basis_coupling(layout: SpaceLayout, pointer: str, targets: Sequence[str],
                             distinguished, completion: Sequence,
                             tol: float = DEFAULT_TOLERANCES.unitary) -> OperatorMatrix:
    """Flip the pointer iff the joint state of ``targets`` is ``distinguished``.

    ``completion`` must extend ``distinguished`` to an orthonormal basis of the
    targets' joint space; its states leave the pointer alone.
    """
    local = layout.sub([pointer, *targets])
    if local.dim(pointer) != 2:
        raise LayoutError(f"pointer {pointer!r} must be a qubit")
    dim = local.total_dim // 2
    family = [np.asarray(distinguished, dtype=complex).reshape(-1)]
    family += [np.asarray(s, dtype=complex).reshape(-1) for s in completion]
    if any(v.size != dim for v in family):
        raise ValueError(f"basis states must have dimension {dim}")
    if len(family) != dim:
        raise ValueError(f"family has {len(family)} states, joint space needs {dim}")
    if orthonormality_defect(family) > tol:
        raise ValueError("distinguished state and completion are not orthonormal")
    d = np.outer(family[0], family[0].conj())
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    u = np.kron(x, d) + np.kron(np.eye(2), np.eye(dim) - d)
    return OperatorMatrix(local, u, unitary=True)


def orthonormal_completion(states: Sequence, dim: int) -> list[np.ndarray]:
    basis = complete_basis(states, dim)
    return [basis[:, i] for i in range(len(states), dim)]


@dataclass(frozen=True, eq=False)
class CouplingEvent:
    time: float
    unitary: OperatorMatrix
    targets: tuple[str, ...]
    kind: str = "coupling"

    def __post_init__(self):
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "targets", tuple(self.targets))

    def full(self, layout: SpaceLayout) -> np.ndarray:
        return embed_operator(self.unitary, self.targets, layout).entries


@dataclass(frozen=True, eq=False)
class MeasurementEvent:
    time: float
    observer: str
    observable: ObservableDecomposition
    registered: bool = True

    def __post_init__(self):
        object.__setattr__(self, "time", float(self.time))


Event = Union[CouplingEvent, MeasurementEvent]


class Outcome(NamedTuple):
    observer: str
    eigenvalue: float
    label: str

    def __str__(self):
        return f"{self.label}^{self.observer}"


class OutcomeSequence(tuple):
    """Outcomes of the registered events, in time order."""

    def __new__(cls, outcomes=()):
        return super().__new__(cls, (Outcome(*o) for o in outcomes))

    def __str__(self):
        return ", ".join(str(o) for o in self)

    @property
    def eigenvalues(self) -> tuple[float, ...]:
        return tuple(o.eigenvalue for o in self)


@dataclass(frozen=True, eq=False)
class Protocol:
    layout: SpaceLayout
    initial: StateVector
    events: tuple[Event, ...]
    tolerances: Tolerances = field(default=DEFAULT_TOLERANCES)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def measurements(self) -> list[MeasurementEvent]:
        return [e for e in self.events if isinstance(e, MeasurementEvent)]

    @property
    def registered(self) -> list[MeasurementEvent]:
        return [e for e in self.measurements if e.registered]

    @property
    def couplings(self) -> list[CouplingEvent]:
        return [e for e in self.events if isinstance(e, CouplingEvent)]

    def with_events(self, events: Sequence[Event]) -> "Protocol":
        return replace(self, events=tuple(events))

    def with_registered(self, observer: str, registered: bool) -> "Protocol":
        """Toggle the ``registered`` flag of every measurement made by ``observer``."""
        if observer not in {m.observer for m in self.measurements}:
            raise UnknownOutcomeError(f"no measurement by observer {observer!r}")
        return self.with_events(
            replace(e, registered=registered)
            if isinstance(e, MeasurementEvent) and e.observer == observer else e
            for e in self.events)

    def demoted(self) -> "Protocol":
        """Same protocol with every registered event but the last one unregistered."""
        regs = self.registered
        keep = regs[-1] if regs else None
        return self.with_events(
            replace(e, registered=False)
            if isinstance(e, MeasurementEvent) and e.registered and e is not keep else e
            for e in self.events)

    def without_last_registered(self) -> "Protocol":
        last = self.registered[-1]
        return self.with_events(e for e in self.events if e is not last)

    def outcome_space(self) -> Iterator[OutcomeSequence]:
        """Every outcome sequence, branch order at each slot, earliest slot most significant."""
        regs = self.registered

        def rec(i, prefix):
            if i == len(regs):
                yield OutcomeSequence(prefix)
                return
            for b in regs[i].observable.branches:
                yield from rec(i + 1, prefix + [Outcome(regs[i].observer, b.eigenvalue, b.label)])

        return rec(0, [])

    def resolve(self, outcome) -> tuple[int, ...]:
        """Branch index per registered slot.

        ``outcome`` may be an OutcomeSequence, or a sequence whose items are
        Outcome tuples, eigenvalues, branch labels, or ``label^observer`` strings.
        """
        regs = self.registered
        items = list(outcome)
        if len(items) != len(regs):
            raise UnknownOutcomeError(
                f"outcome has {len(items)} slots, protocol has {len(regs)} registered events")
        out = []
        for event, item in zip(regs, items):
            if isinstance(item, tuple) and len(item) == 3:
                if item[0] != event.observer:
                    raise UnknownOutcomeError(f"slot observer {event.observer!r} != {item[0]!r}")
                out.append(event.observable.find(float(item[1])))
            elif isinstance(item, str):
                out.append(event.observable.find(split_label(item, event.observer)))
            else:
                out.append(event.observable.find(item))
        return tuple(out)

    def outcome_of(self, branch_indices: Sequence[int]) -> OutcomeSequence:
        regs = self.registered
        return OutcomeSequence(
            Outcome(e.observer, e.observable.branches[i].eigenvalue, e.observable.branches[i].label)
            for e, i in zip(regs, branch_indices))


def split_label(text: str, observer: str | None = None) -> str:
    """'yes^W' -> 'yes' (checking the observer when given); plain labels pass through."""
    if "^" in text:
        label, who = text.rsplit("^", 1)
        if observer is not None and who != observer:
            raise UnknownOutcomeError(f"label {text!r} names observer {who!r}, slot is {observer!r}")
        return label
    return text


def validate(protocol: Protocol) -> list[str]:
    """Every violated invariant, as human-readable diagnostics. Empty means valid."""
    tol = protocol.tolerances
    layout = protocol.layout
    out = []
    if protocol.initial.layout != layout:
        out.append(f"initial state layout {protocol.initial.layout} != protocol layout {layout}")
    elif not protocol.initial.is_normalized(tol.norm):
        out.append(f"initial state not normalized (norm {protocol.initial.norm!r})")
    times = [e.time for e in protocol.events]
    for i in range(1, len(times)):
        if times[i] <= times[i - 1]:
            out.append(f"non-increasing times: event {i} at t={times[i]} follows t={times[i - 1]}")
    for i, e in enumerate(protocol.events):
        if isinstance(e, CouplingEvent):
            bad = [t for t in e.targets if t not in layout.names]
            if bad:
                out.append(f"coupling {i}: unknown subsystems {bad}")
                continue
            if len(set(e.targets)) != len(e.targets):
                out.append(f"coupling {i}: repeated targets {e.targets}")
                continue
            if e.unitary.layout.dims != tuple(layout.dim(t) for t in e.targets):
                out.append(f"coupling {i}: operator dims {e.unitary.layout.dims} do not fit targets")
                continue
            defect = unitarity_defect(e.unitary.entries)
            if defect > tol.unitary:
                out.append(f"coupling {i}: non-unitary (|U^dag U - I|_max = {defect:.3g})")
        elif isinstance(e, MeasurementEvent):
            if e.observable.layout != layout:
                out.append(f"measurement {i} ({e.observer}): observable not on the full layout")
                continue
            out.extend(f"measurement {i} ({e.observer}): {d}"
                       for d in observable_diagnostics(e.observable, tol.projector))
        else:
            out.append(f"event {i}: unknown event type {type(e).__name__}")
    if not protocol.registered:
        out.append("no registered measurement event")
    return out


def require_valid(protocol: Protocol) -> Protocol:
    diagnostics = validate(protocol)
    if diagnostics:
        raise ProtocolValidationError(diagnostics)
    return protocol
