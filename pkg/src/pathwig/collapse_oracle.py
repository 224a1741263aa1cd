"""Collapse-based reference engine.

Density-matrix evolution with Lüders branching at registered events. It
reads only coupling unitaries and branch projectors, never the branch
bases or any amplitude routine of the path engine, so agreement between
the two is a genuine cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .hilbert import SpaceLayout, StateVector, permute_layout
from .protocol import (
    CouplingEvent,
    MeasurementEvent,
    Outcome,
    OutcomeSequence,
    Protocol,
    require_valid,
    split_label,
)

DROP_EPS = 1e-14


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    layout: SpaceLayout
    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        n = self.layout.total_dim
        if m.shape != (n, n):
            raise ValueError(f"density matrix shape {m.shape} does not match {self.layout}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def pure(cls, state: StateVector) -> "DensityMatrix":
        return cls(state.layout, np.outer(state.entries, state.entries.conj()))

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    @property
    def purity(self) -> float:
        return float(np.trace(self.entries @ self.entries).real)

    def diagnostics(self, tol_trace: float = 1e-10, tol_herm: float = 1e-12,
                    tol_eig: float = 1e-9) -> list[str]:
        out = []
        if abs(self.trace - 1.0) > tol_trace:
            out.append(f"trace {self.trace!r} != 1")
        if np.max(np.abs(self.entries - self.entries.conj().T)) > tol_herm:
            out.append("not Hermitian")
        if np.min(np.linalg.eigvalsh((self.entries + self.entries.conj().T) / 2)) < -tol_eig:
            out.append("negative eigenvalue")
        return out


@dataclass
class BranchTree:
    """Node of the collapse tree; the root has no outcome."""

    probability: float
    state: DensityMatrix
    outcome: Outcome | None = None
    children: list["BranchTree"] = field(default_factory=list)

    def leaves(self, prefix: tuple = ()) -> list[tuple[OutcomeSequence, "BranchTree"]]:
        here = prefix + ((self.outcome,) if self.outcome is not None else ())
        if not self.children:
            return [(OutcomeSequence(here), self)]
        out = []
        for c in self.children:
            out.extend(c.leaves(here))
        return out

    def depth_masses(self) -> list[float]:
        """Total leaf-weighted probability at each tree depth."""
        masses: list[float] = []
        level = [self]
        while level:
            masses.append(sum(n.probability for n in level))
            level = [c for n in level for c in n.children]
        return masses


def collapse_tree(protocol: Protocol) -> BranchTree:
    """Branch at every registered event; probabilities stored are joint (path) probabilities."""
    require_valid(protocol)
    layout = protocol.layout
    root = BranchTree(1.0, DensityMatrix.pure(protocol.initial))
    frontier = [root]
    for e in protocol.events:
        if isinstance(e, CouplingEvent):
            u = e.full(layout)
            for node in frontier:
                node.state = DensityMatrix(layout, u @ node.state.entries @ u.conj().T)
        elif e.registered:
            nxt = []
            for node in frontier:
                rho = node.state.entries
                for b in e.observable.branches:
                    p = b.projector
                    post = p @ rho @ p
                    w = float(np.trace(post).real)
                    if w < DROP_EPS:
                        continue
                    child = BranchTree(node.probability * w, DensityMatrix(layout, post / w),
                                       Outcome(e.observer, b.eigenvalue, b.label))
                    node.children.append(child)
                    nxt.append(child)
            frontier = nxt
    return root


def evolve_collapse(protocol: Protocol) -> dict[OutcomeSequence, float]:
    """Leaf probabilities; branches below 1e-14 are dropped, not renormalized."""
    return {seq: node.probability for seq, node in collapse_tree(protocol).leaves()}


Mode = Literal["pure", "mixture"]


def state_after(protocol: Protocol, time: float, mode: Mode = "mixture"):
    """State once every event with ``event.time <= time`` has acted.

    ``pure`` applies couplings only and refuses registered events up to
    ``time``; ``mixture`` averages Lüders branches over registered events.
    """
    require_valid(protocol)
    if not protocol.events or time < protocol.events[0].time:
        raise ValueError(f"time {time} precedes the first event")
    layout = protocol.layout
    if mode == "pure":
        psi = protocol.initial.entries
        for e in protocol.events:
            if e.time > time:
                break
            if isinstance(e, MeasurementEvent) and e.registered:
                raise ValueError(f"pure state requested after registered event at t={e.time}")
            if isinstance(e, CouplingEvent):
                psi = e.full(layout) @ psi
        return StateVector(layout, psi)
    if mode != "mixture":
        raise ValueError(f"unknown mode {mode!r}")
    rho = DensityMatrix.pure(protocol.initial).entries
    for e in protocol.events:
        if e.time > time:
            break
        if isinstance(e, CouplingEvent):
            u = e.full(layout)
            rho = u @ rho @ u.conj().T
        elif e.registered:
            rho = sum(b.projector @ rho @ b.projector for b in e.observable.branches)
    return DensityMatrix(layout, rho)


def partial_trace(rho: DensityMatrix, keep: Sequence[str]) -> DensityMatrix:
    layout = rho.layout
    keep = list(keep)
    dims = list(layout.dims)
    t = np.asarray(rho.entries).reshape(dims + dims)
    traced = [layout.position(n) for n in layout.names if n not in keep]
    # trace highest axes first so remaining axis numbers stay valid
    for ax in sorted(traced, reverse=True):
        t = np.trace(t, axis1=ax, axis2=ax + t.ndim // 2)
    sub = layout.sub([n for n in layout.names if n in keep])
    kept = [n for n in layout.names if n in keep]
    n = sub.total_dim
    out = DensityMatrix(sub, t.reshape(n, n))
    if kept != keep:
        out = DensityMatrix(layout.sub(keep), permute_layout(out.entries, sub, keep))
    return out


def wigner_comparison(protocol: Protocol, final_outcome) -> tuple[float, float]:
    """(p_pure, p_mixture) for the final observer's outcome.

    p_pure keeps the friend's measurement unregistered (coherent superposition),
    p_mixture registers it (Lüders mixture). Both evaluate the final
    projector on the state just before the final measurement.
    """
    measurements = protocol.measurements
    if len(measurements) != 2:
        raise ValueError(f"expected one friend and one final measurement, got {len(measurements)}")
    friend, final = measurements
    label = final_outcome
    if isinstance(final_outcome, tuple) and len(final_outcome) == 3:
        label = float(final_outcome[1])
    elif isinstance(final_outcome, str):
        label = split_label(final_outcome, final.observer)
    proj = final.observable.branches[final.observable.find(label)].projector

    def with_flags(friend_reg: bool) -> Protocol:
        events = []
        for e in protocol.events:
            if e is friend:
                e = MeasurementEvent(e.time, e.observer, e.observable, friend_reg)
            elif e is final:
                e = MeasurementEvent(e.time, e.observer, e.observable, True)
            events.append(e)
        return protocol.with_events(events)

    before_final = final.time - 0.5 * (final.time - max(
        (e.time for e in protocol.events if e.time < final.time), default=final.time - 1.0))
    psi = state_after(with_flags(False), before_final, "pure").entries
    rho = state_after(with_flags(True), before_final, "mixture").entries
    p_pure = float(np.vdot(psi, proj @ psi).real)
    p_mix = float(np.trace(proj @ rho).real)
    return p_pure, p_mix
