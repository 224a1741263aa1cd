"""Dense complex linear algebra over labeled tensor-product spaces.

Basis index convention: the leftmost subsystem of a layout is the most
significant digit of the composite index (numpy ``kron`` order).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import prod
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import null_space

TOL_NORM = 1e-12
TOL_UNITARY = 1e-10
TOL_PROJECTOR = 1e-10
PRUNE_EPS = 1e-14
MAX_TOTAL_DIM = 256


class LayoutError(ValueError):
    """Raised when layouts disagree or a subsystem name is unknown."""


class NormalizationError(ValueError):
    pass


class NonUnitaryError(ValueError):
    pass


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds; the defaults are the module constants."""

    norm: float = TOL_NORM
    unitary: float = TOL_UNITARY
    projector: float = TOL_PROJECTOR
    prune: float = PRUNE_EPS

    def scaled(self, factor: float) -> "Tolerances":
        return replace(
            self,
            norm=self.norm * factor,
            unitary=self.unitary * factor,
            projector=self.projector * factor,
        )


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class SpaceLayout:
    subsystems: tuple[tuple[str, int], ...]

    def __post_init__(self):
        subs = tuple((str(name), int(dim)) for name, dim in self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        if not subs:
            raise LayoutError("layout needs at least one subsystem")
        names = [name for name, _ in subs]
        if len(set(names)) != len(names):
            raise LayoutError(f"duplicate subsystem names in {names}")
        for name, dim in subs:
            if dim < 2:
                raise LayoutError(f"subsystem {name!r} has dim {dim}; need dim >= 2")
        if self.total_dim > MAX_TOTAL_DIM:
            raise LayoutError(f"total_dim {self.total_dim} exceeds {MAX_TOTAL_DIM}")

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> "SpaceLayout":
        return cls(tuple(pairs))

    @classmethod
    def qubits(cls, *names: str) -> "SpaceLayout":
        return cls(tuple((n, 2) for n in names))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.subsystems)

    @property
    def total_dim(self) -> int:
        return prod(self.dims)

    def position(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise LayoutError(f"unknown subsystem {name!r}; layout has {self.names}") from None

    def dim(self, name: str) -> int:
        return self.subsystems[self.position(name)][1]

    def sub(self, names: Sequence[str]) -> "SpaceLayout":
        return SpaceLayout(tuple((n, self.dim(n)) for n in names))

    def concat(self, other: "SpaceLayout") -> "SpaceLayout":
        return SpaceLayout(self.subsystems + other.subsystems)

    def __str__(self):
        return "(" + ", ".join(f"{n}:{d}" for n, d in self.subsystems) + ")"


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class StateVector:
    layout: SpaceLayout
    entries: np.ndarray

    def __post_init__(self):
        entries = _frozen(self.entries).reshape(-1)
        if entries.shape != (self.layout.total_dim,):
            raise LayoutError(
                f"state has {entries.size} entries, layout {self.layout} needs {self.layout.total_dim}"
            )
        object.__setattr__(self, "entries", entries)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def is_normalized(self, tol: float = TOL_NORM) -> bool:
        return abs(self.norm - 1.0) <= tol

    def normalized(self) -> "StateVector":
        n = self.norm
        if n == 0:
            raise NormalizationError("cannot normalize the zero vector")
        return StateVector(self.layout, self.entries / n)

    def projector(self) -> "OperatorMatrix":
        return OperatorMatrix(self.layout, np.outer(self.entries, self.entries.conj()))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    layout: SpaceLayout
    entries: np.ndarray
    unitary: bool = field(default=False)

    def __post_init__(self):
        entries = _frozen(self.entries)
        n = self.layout.total_dim
        if entries.shape != (n, n):
            raise LayoutError(f"operator shape {entries.shape} does not match layout {self.layout}")
        object.__setattr__(self, "entries", entries)

    def is_unitary(self, tol: float = TOL_UNITARY) -> bool:
        return unitarity_defect(self.entries) <= tol

    def is_hermitian(self, tol: float = TOL_PROJECTOR) -> bool:
        return float(np.max(np.abs(self.entries - self.entries.conj().T))) <= tol

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def unitarity_defect(matrix: np.ndarray) -> float:
    """max-norm of U^dagger U - I."""
    m = np.asarray(matrix)
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


def basis_state(layout: SpaceLayout, *digits: int) -> StateVector:
    """Computational basis state; one digit per subsystem, or a single flat index."""
    if len(digits) == 1 and len(layout.subsystems) > 1:
        index = digits[0]
    else:
        if len(digits) != len(layout.subsystems):
            raise LayoutError(f"need {len(layout.subsystems)} digits, got {len(digits)}")
        index = int(np.ravel_multi_index(digits, layout.dims))
    entries = np.zeros(layout.total_dim, dtype=complex)
    entries[index] = 1.0
    return StateVector(layout, entries)


def qubit_state(name: str, amplitudes: Sequence[complex]) -> StateVector:
    return StateVector(SpaceLayout.qubits(name), amplitudes)


def identity(layout: SpaceLayout) -> OperatorMatrix:
    return OperatorMatrix(layout, np.eye(layout.total_dim), unitary=True)


def tensor_state(factors: Sequence[StateVector], layout: SpaceLayout | None = None,
                 tol: float = TOL_NORM) -> StateVector:
    if not factors:
        raise LayoutError("tensor_state needs at least one factor")
    joined = factors[0].layout
    for f in factors[1:]:
        joined = joined.concat(f.layout)
    if layout is not None and joined != layout:
        raise LayoutError(f"factor layouts concatenate to {joined}, expected {layout}")
    entries = np.ones(1, dtype=complex)
    for f in factors:
        if not f.is_normalized(tol):
            raise NormalizationError(f"factor on {f.layout} has norm {f.norm!r}")
        entries = np.kron(entries, f.entries)
    return StateVector(joined, entries)


def _as_local_matrix(local, target_dims: tuple[int, ...]) -> tuple[np.ndarray, bool]:
    if isinstance(local, OperatorMatrix):
        if local.layout.dims != target_dims:
            raise LayoutError(
                f"local operator dims {local.layout.dims} do not match target dims {target_dims}"
            )
        return np.asarray(local.entries), local.unitary
    m = np.asarray(local, dtype=complex)
    n = prod(target_dims)
    if m.shape != (n, n):
        raise LayoutError(f"local matrix shape {m.shape} does not match target dims {target_dims}")
    return m, False


def _reorder_axes(layout: SpaceLayout, order: Sequence[str]) -> list[int]:
    # position in `order` of each layout subsystem
    return [list(order).index(name) for name in layout.names]


def embed_operator(local, targets: Sequence[str], layout: SpaceLayout,
                   tol: float = TOL_UNITARY) -> OperatorMatrix:
    """Lift ``local`` (acting on ``targets`` in the given order) to the full layout.

    Targets need not be adjacent or in layout order; the identity acts on
    every other subsystem.
    """
    targets = tuple(targets)
    if len(set(targets)) != len(targets):
        raise LayoutError(f"targets must be distinct, got {targets}")
    for t in targets:
        layout.position(t)
    target_dims = tuple(layout.dim(t) for t in targets)
    matrix, tagged = _as_local_matrix(local, target_dims)
    if tagged and unitarity_defect(matrix) > tol:
        raise NonUnitaryError(
            f"operator tagged unitary has |U^dag U - I|_max = {unitarity_defect(matrix):.3g}"
        )
    rest = [n for n in layout.names if n not in targets]
    rest_dim = prod(layout.dim(n) for n in rest) if rest else 1
    full = np.kron(matrix, np.eye(rest_dim))
    order = list(targets) + rest
    dims_in_order = [layout.dim(n) for n in order]
    k = len(order)
    perm = _reorder_axes(layout, order)
    full = full.reshape(dims_in_order + dims_in_order)
    full = full.transpose(perm + [p + k for p in perm])
    n = layout.total_dim
    return OperatorMatrix(layout, full.reshape(n, n), unitary=tagged)


def permute_layout(array: np.ndarray, layout: SpaceLayout, order: Sequence[str]) -> np.ndarray:
    """Re-index a vector, matrix, or column stack from ``layout`` to subsystem ``order``.

    For a 2-d array whose second axis is not of size total_dim (a stack of
    column vectors) only the rows are permuted.
    """
    order = list(order)
    if sorted(order) != sorted(layout.names):
        raise LayoutError(f"order {order} is not a permutation of {layout.names}")
    a = np.asarray(array)
    dims = list(layout.dims)
    perm = [layout.position(n) for n in order]
    new_dims = [dims[p] for p in perm]
    n = layout.total_dim
    k = len(dims)
    if a.ndim == 1:
        return a.reshape(dims).transpose(perm).reshape(n)
    if a.shape == (n, n):
        t = a.reshape(dims + dims).transpose(perm + [p + k for p in perm])
        return t.reshape(n, n)
    cols = a.shape[1]
    t = a.reshape(dims + [cols]).transpose(perm + [k])
    assert list(t.shape[:-1]) == new_dims
    return t.reshape(n, cols)


def _check_same_layout(a, b) -> None:
    if a.layout != b.layout:
        raise LayoutError(f"layout mismatch: {a.layout} vs {b.layout}")


def apply(op: OperatorMatrix, state: StateVector) -> StateVector:
    _check_same_layout(op, state)
    return StateVector(state.layout, op.entries @ state.entries)


def inner(a: StateVector, b: StateVector) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    _check_same_layout(a, b)
    return complex(np.vdot(a.entries, b.entries))


def adjoint(op: OperatorMatrix) -> OperatorMatrix:
    return OperatorMatrix(op.layout, op.entries.conj().T, unitary=op.unitary)


def compose(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    """Operator product ``a @ b`` (``b`` acts first)."""
    _check_same_layout(a, b)
    return OperatorMatrix(a.layout, a.entries @ b.entries, unitary=a.unitary and b.unitary)


def orthonormality_defect(states: Iterable) -> float:
    """max-norm of the Gram matrix minus identity."""
    cols = np.column_stack([np.asarray(s, dtype=complex).reshape(-1) for s in states])
    return float(np.max(np.abs(cols.conj().T @ cols - np.eye(cols.shape[1]))))


def complete_basis(states: Sequence, dim: int) -> np.ndarray:
    """Extend orthonormal ``states`` to a full orthonormal basis (returned as columns).

    The given states come first, unchanged.
    """
    if not len(states):
        return np.eye(dim, dtype=complex)
    given = np.column_stack([np.asarray(s, dtype=complex).reshape(-1) for s in states])
    return np.column_stack([given, null_space(given.conj().T)])
