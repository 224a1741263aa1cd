"""Sum-over-paths probabilities for sequences of registered measurement outcomes.

A virtual path picks one basis vector of one branch at every registered
event; its amplitude is the product of transfer matrix elements between
consecutive picks, the first factor being the overlap with the initial
state. The amplitude of an observed sequence (a real path) sums virtual
paths coherently over the basis vectors inside each intermediate branch;
the last event's basis vectors stay separate and their squared moduli add.

Couplings act between registered events; unregistered measurements add no
path node. Times only order events.

Summation order is fixed: amplitudes are accumulated by matrix-vector
products event by event (earliest first), outcome sequences are visited
with the earliest slot most significant and branches in declaration order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np

from .protocol import (
    CouplingEvent,
    MeasurementEvent,
    Outcome,
    OutcomeSequence,
    Protocol,
    UnknownOutcomeError,
    require_valid,
    split_label,
)

MAX_VIRTUAL_PATHS = 1 << 22


@dataclass(frozen=True)
class VirtualPath:
    node_indices: tuple[tuple[int, int], ...]
    amplitude: complex

    @property
    def branches(self) -> tuple[int, ...]:
        return tuple(b for b, _ in self.node_indices)


@dataclass(frozen=True, eq=False)
class RealPathRecord:
    outcome: OutcomeSequence
    coherent_amplitudes: np.ndarray
    probability: float


@dataclass(frozen=True, eq=False)
class InterferenceReport:
    final_outcome: Outcome
    paths: tuple[VirtualPath, ...]
    real_path_amplitudes: Mapping[OutcomeSequence, np.ndarray]
    incoherent_sum: float
    coherent_sum: float
    interference_term: float
    cross_term: float = field(default=0.0)


@dataclass(frozen=True, eq=False)
class _Transfer:
    """Per registered event: its observable's basis and the matrix linking it to the previous one."""

    events: tuple[MeasurementEvent, ...]
    first: np.ndarray  # <q^1_n| U_1 |initial>
    steps: tuple[np.ndarray, ...]  # <q^l_m| U_l |q^(l-1)_n>


def segment_unitaries(protocol: Protocol) -> list[np.ndarray]:
    """Full-space evolution before each registered event, since the previous one.

    Couplings after the last registered event are dropped; the identity is
    used where no coupling intervenes.
    """
    n = protocol.layout.total_dim
    current = np.eye(n, dtype=complex)
    out = []
    for e in protocol.events:
        if isinstance(e, CouplingEvent):
            current = e.full(protocol.layout) @ current
        elif e.registered:
            out.append(current)
            current = np.eye(n, dtype=complex)
    return out


def _transfer(protocol: Protocol) -> _Transfer:
    require_valid(protocol)
    events = tuple(protocol.registered)
    segs = segment_unitaries(protocol)
    bases = [e.observable.basis_matrix() for e in events]
    first = bases[0].conj().T @ (segs[0] @ protocol.initial.entries)
    steps = tuple(bases[i].conj().T @ segs[i] @ bases[i - 1] for i in range(1, len(events)))
    return _Transfer(events, first, steps)


def virtual_path_amplitudes(protocol: Protocol) -> np.ndarray:
    """Dense tensor of every virtual path amplitude, axis l = basis index at registered event l."""
    tr = _transfer(protocol)
    dims = [tr.first.size] + [s.shape[0] for s in tr.steps]
    if np.prod(dims, dtype=float) > MAX_VIRTUAL_PATHS:
        raise ValueError(f"{np.prod(dims, dtype=float):.0f} virtual paths exceed the dense limit")
    amp = tr.first
    for step in tr.steps:
        amp = amp[..., None] * step.T
    return amp


def enumerate_virtual_paths(protocol: Protocol, prune_eps: float | None = None) -> list[VirtualPath]:
    """Depth-first listing of virtual paths with |amplitude| > prune_eps.

    Exact-zero transfer elements and pruned prefixes cut whole subtrees.
    """
    tr = _transfer(protocol)
    eps = protocol.tolerances.prune if prune_eps is None else prune_eps
    observables = [e.observable for e in tr.events]
    out: list[VirtualPath] = []

    def walk(level: int, index: int, amp: complex, nodes: list):
        nodes = nodes + [observables[level].locate(index)]
        if level == len(tr.steps):
            out.append(VirtualPath(tuple(nodes), complex(amp)))
            return
        column = tr.steps[level][:, index]
        for nxt in np.flatnonzero(column):
            a = amp * column[nxt]
            if abs(a) > eps:
                walk(level + 1, int(nxt), a, nodes)

    for start in np.flatnonzero(tr.first):
        if abs(tr.first[start]) > eps:
            walk(0, int(start), tr.first[start], [])
    return out


def _propagate(tr: _Transfer, branches: Sequence[int]) -> np.ndarray:
    obs = [e.observable for e in tr.events]
    v = tr.first[obs[0].branch_slice(branches[0])]
    for level, step in enumerate(tr.steps, start=1):
        rows = obs[level].branch_slice(branches[level])
        cols = obs[level - 1].branch_slice(branches[level - 1])
        v = step[rows, cols] @ v
    return v


def real_path_amplitude(protocol: Protocol, outcome) -> np.ndarray:
    """Coherent amplitudes, one per basis vector of the final outcome's branch."""
    return _propagate(_transfer(protocol), protocol.resolve(outcome))


def sequence_probability(protocol: Protocol, outcome) -> float:
    amps = real_path_amplitude(protocol, outcome)
    return float(np.sum(np.abs(amps) ** 2))


def full_distribution(protocol: Protocol, report_eps: float = 0.0) -> list[RealPathRecord]:
    """One record per outcome sequence whose probability is at least ``report_eps``."""
    tr = _transfer(protocol)
    obs = [e.observable for e in tr.events]
    out = []

    def walk(level: int, branches: list[int], v: np.ndarray):
        if level == len(obs) - 1:
            p = float(np.sum(np.abs(v) ** 2))
            if p >= report_eps:
                out.append(RealPathRecord(protocol.outcome_of(branches), v, p))
            return
        step = tr.steps[level]
        cols = obs[level].branch_slice(branches[-1])
        for b in range(len(obs[level + 1].branches)):
            rows = obs[level + 1].branch_slice(b)
            walk(level + 1, branches + [b], step[rows, cols] @ v)

    for b in range(len(obs[0].branches)):
        walk(0, [b], tr.first[obs[0].branch_slice(b)])
    return out


def as_table(distribution: Iterable[RealPathRecord] | Mapping[OutcomeSequence, float]
             ) -> dict[OutcomeSequence, float]:
    if isinstance(distribution, Mapping):
        return dict(distribution)
    return {r.outcome: r.probability for r in distribution}


def marginal(distribution, keep: Sequence[int]) -> dict[OutcomeSequence, float]:
    """Sum probabilities over every slot not listed in ``keep`` (slot indices, time order)."""
    keep = list(keep)
    if not keep:
        raise ValueError("marginal needs at least one slot to keep")
    table = as_table(distribution)
    width = len(next(iter(table))) if table else 0
    if any(not 0 <= k < width for k in keep) or len(set(keep)) != len(keep):
        raise ValueError(f"invalid slots {keep} for sequences of length {width}")
    out: dict[OutcomeSequence, float] = {}
    for seq, p in table.items():
        key = OutcomeSequence(seq[k] for k in keep)
        out[key] = out.get(key, 0.0) + p
    return out


def _final_branch(protocol: Protocol, final_outcome) -> int:
    regs = protocol.registered
    if not regs:
        raise UnknownOutcomeError("protocol has no registered event")
    last = regs[-1]
    if isinstance(final_outcome, tuple) and len(final_outcome) == 3:
        return last.observable.find(float(final_outcome[1]))
    if isinstance(final_outcome, str):
        return last.observable.find(split_label(final_outcome, last.observer))
    return last.observable.find(final_outcome)


def interference_report(protocol: Protocol, final_outcome) -> InterferenceReport:
    """Registered intermediate events versus the same protocol with them demoted.

    ``real_path_amplitudes`` maps each intermediate outcome sequence (final
    slot included) to its coherent amplitudes A_i over the final branch basis;
    the coherent sum uses the demoted protocol and the incoherent sum adds the
    |A_i|^2, so their difference is 2 sum_{i<j} Re[A_i^* A_j].
    """
    tr = _transfer(protocol)
    final_b = _final_branch(protocol, final_outcome)
    obs = [e.observable for e in tr.events]
    last = tr.events[-1]
    final = Outcome(last.observer, obs[-1].branches[final_b].eigenvalue, obs[-1].branches[final_b].label)

    amps: dict[OutcomeSequence, np.ndarray] = {}
    for prefix in product(*(range(len(o.branches)) for o in obs[:-1])):
        branches = list(prefix) + [final_b]
        amps[protocol.outcome_of(branches)] = _propagate(tr, branches)
    stacked = np.array(list(amps.values()))
    incoherent = float(np.sum(np.abs(stacked) ** 2))
    cross = 0.0
    for i in range(len(stacked)):
        for j in range(i + 1, len(stacked)):
            cross += 2.0 * float(np.sum((stacked[i].conj() * stacked[j]).real))
    coherent = sequence_probability(protocol.demoted(), [final])

    paths = tuple(p for p in enumerate_virtual_paths(protocol) if p.branches[-1] == final_b)
    return InterferenceReport(final, paths, amps, incoherent, coherent, coherent - incoherent, cross)


@dataclass(frozen=True)
class CertaintyClaim:
    outcome: Outcome | None
    probability: float
    pairing: tuple[tuple[Outcome, Outcome], ...]


def _evolution_between(protocol: Protocol, start, stop) -> np.ndarray:
    """Product of coupling unitaries after ``start`` (None = preparation) and before ``stop``."""
    u = np.eye(protocol.layout.total_dim, dtype=complex)
    started = start is None
    for e in protocol.events:
        if e is start:
            started = True
        elif e is stop:
            break
        elif started and isinstance(e, CouplingEvent):
            u = e.full(protocol.layout) @ u
    return u


def certainty_check(protocol: Protocol, tol: float = 1e-10) -> CertaintyClaim | None:
    """Detect a final observable that repeats an earlier one carried forward by the evolution.

    With one registered event the earlier "observable" is the preparation
    itself: a final branch equal to U|psi0><psi0|U^dag is forced. With two or
    more, the test is Q_last = U Q_first U^dag (U the coupling evolution
    between the two events) and the final outcome repeats the first one.
    ``probability`` is the chance that it does; ``outcome`` is the forced
    final outcome pairing with the most likely first outcome.
    """
    require_valid(protocol)
    regs = protocol.registered
    last = regs[-1]
    if len(regs) == 1:
        u = _evolution_between(protocol, None, last)
        psi = u @ protocol.initial.entries
        target = np.outer(psi, psi.conj())
        for j, c in enumerate(last.observable.branches):
            if np.max(np.abs(c.projector - target)) <= tol:
                out = Outcome(last.observer, c.eigenvalue, c.label)
                return CertaintyClaim(out, sequence_probability(protocol, [out]), ())
        return None

    first = regs[0]
    u = _evolution_between(protocol, first, last)
    evolved = u @ first.observable.matrix() @ u.conj().T
    if np.max(np.abs(evolved - last.observable.matrix())) > tol:
        return None

    pairs = []
    for b in first.observable.branches:
        try:
            j = last.observable.find(b.eigenvalue)
        except UnknownOutcomeError:
            return None
        c = last.observable.branches[j]
        pairs.append((Outcome(first.observer, b.eigenvalue, b.label),
                      Outcome(last.observer, c.eigenvalue, c.label)))
    table = marginal(full_distribution(protocol), [0, len(regs) - 1])
    p_agree = sum(table.get(OutcomeSequence(pair), 0.0) for pair in pairs)
    first_marg = marginal(table, [0])
    best = max(pairs, key=lambda pr: first_marg.get(OutcomeSequence([pr[0]]), 0.0))
    return CertaintyClaim(best[1], float(p_agree), tuple(pairs))
