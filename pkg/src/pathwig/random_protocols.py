"""Seeded generators for random states, observables, protocols and scenario configs."""
from __future__ import annotations

import numpy as np
from scipy.stats import unitary_group

from .hilbert import OperatorMatrix, SpaceLayout, StateVector
from .protocol import Branch, CouplingEvent, MeasurementEvent, ObservableDecomposition, Protocol
from .scenarios import MODES, WignerFriendConfig, composite_pair

LAYOUT_SHAPES = ((2,), (3,), (4,), (2, 2), (2, 3), (3, 2), (2, 2, 2), (4, 2), (2, 2, 3), (2, 2, 2, 2),
                 (4, 4), (3, 5))


def random_state(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    if dim == 1:
        return np.exp(2j * np.pi * rng.random()) * np.ones((1, 1))
    return unitary_group.rvs(dim, random_state=rng)


def random_qubit_basis(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    u = random_unitary(rng, 2)
    return u[:, 0], u[:, 1]


def random_layout(rng: np.random.Generator, max_dim: int = 16) -> SpaceLayout:
    shapes = [s for s in LAYOUT_SHAPES if np.prod(s) <= max_dim]
    dims = shapes[rng.integers(len(shapes))]
    return SpaceLayout(tuple((f"q{i}", d) for i, d in enumerate(dims)))


def random_observable(rng: np.random.Generator, layout: SpaceLayout, max_branches: int = 4,
                      label: str = "") -> ObservableDecomposition:
    """Random eigenbasis cut into 1..max_branches branches of mixed rank."""
    n = layout.total_dim
    v = random_unitary(rng, n)
    k = int(rng.integers(1, min(n, max_branches) + 1))
    cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False)) if k > 1 else []
    groups = np.split(np.arange(n), cuts)
    eigs = rng.choice(np.arange(-9, 10), size=k, replace=False)
    branches = tuple(Branch(float(e), None, "", v[:, g]) for e, g in zip(eigs, groups))
    return ObservableDecomposition(layout, branches, label)


def random_coupling(rng: np.random.Generator, layout: SpaceLayout, time: float) -> CouplingEvent:
    names = list(layout.names)
    size = int(rng.integers(1, len(names) + 1))
    targets = tuple(rng.permutation(names)[:size])
    sub = layout.sub(targets)
    return CouplingEvent(time, OperatorMatrix(sub, random_unitary(rng, sub.total_dim), unitary=True),
                         targets)


def random_protocol(rng: np.random.Generator, max_dim: int = 16, max_registered: int = 4,
                    max_branches: int = 4, unregistered: bool = True) -> Protocol:
    layout = random_layout(rng, max_dim)
    initial = StateVector(layout, random_state(rng, layout.total_dim))
    n_reg = int(rng.integers(1, max_registered + 1))
    events = []
    t = 0.0
    for i in range(n_reg):
        for _ in range(int(rng.integers(0, 3))):
            t += 1.0
            events.append(random_coupling(rng, layout, t))
        if unregistered and rng.random() < 0.25:
            t += 1.0
            events.append(MeasurementEvent(t, f"u{i}", random_observable(rng, layout, max_branches),
                                           registered=False))
        t += 1.0
        events.append(MeasurementEvent(t, f"o{i}", random_observable(rng, layout, max_branches, f"o{i}")))
    return Protocol(layout, initial, events, name="random")


def random_config(rng: np.random.Generator, mode: str | None = None, **overrides) -> WignerFriendConfig:
    mode = mode or MODES[rng.integers(len(MODES))]
    f_basis = random_qubit_basis(rng)
    if mode in ("spin", "probe"):
        w_basis = random_qubit_basis(rng)
    else:
        w_basis = composite_pair(f_basis, phase=float(rng.uniform(0, 2 * np.pi)))
    kw = dict(spin_init=random_state(rng, 2), f_basis=f_basis, w_mode=mode, w_basis=w_basis)
    kw.update(overrides)
    return WignerFriendConfig(**kw)
