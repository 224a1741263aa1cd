from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathwig.path_engine import as_table, enumerate_virtual_paths, full_distribution
from pathwig.protocol import validate
from pathwig.random_protocols import random_config, random_unitary
from pathwig.scenarios import (
    KET0,
    KET1,
    X_PLUS,
    RecordInvariantError,
    ScenarioError,
    WignerFriendConfig,
    _wigner_yes,
    build,
    build_case_C,
    build_case_D,
    build_case_F,
    erase_records,
    extend_chain,
    shorthand_amplitudes,
    probe_basis_from_u,
    regroup,
    registering_gap,
    surviving_record_check,
)

seeds = st.integers(0, 2**32 - 1)
R2 = 1 / np.sqrt(2)
CANON_F = WignerFriendConfig(w_mode="composite")


def p_yes(config):
    return _wigner_yes(build(config))


def overlap_amplitudes(cfg):
    """Overlap products <s_i^W|s_j^F><s_j^F|s0> in the order A1..A4."""
    (f1, f2), (w1, w2), s0 = cfg.f_basis, cfg.w_basis, cfg.spin_init
    return [np.vdot(w1, f1) * np.vdot(f1, s0), np.vdot(w2, f1) * np.vdot(f1, s0),
            np.vdot(w1, f2) * np.vdot(f2, s0), np.vdot(w2, f2) * np.vdot(f2, s0)]


# --- builders ---------------------------------------------------------------------------------

def test_case_c_default_four_paths_and_overlaps():
    cfg = WignerFriendConfig()
    assert len(enumerate_virtual_paths(build_case_C(cfg))) == 4
    assert np.allclose(shorthand_amplitudes(cfg), overlap_amplitudes(cfg), atol=1e-12)


def test_case_c_spin_in_friend_state():
    a = shorthand_amplitudes(WignerFriendConfig(spin_init=KET0))
    assert a[2] == 0 and a[3] == 0


def test_builders_check_mode():
    with pytest.raises(ScenarioError):
        build_case_D(WignerFriendConfig())
    with pytest.raises(ScenarioError):
        build_case_F(WignerFriendConfig(w_mode="probe"))
    with pytest.raises(ScenarioError):
        build_case_C(WignerFriendConfig(w_mode="composite"))


def test_config_validation():
    with pytest.raises(ScenarioError):
        WignerFriendConfig(spin_init=[1, 1])
    with pytest.raises(ScenarioError):
        WignerFriendConfig(f_basis=(KET0, X_PLUS))
    with pytest.raises(ScenarioError):
        WignerFriendConfig(chain_length=1, erasure={2})
    with pytest.raises(ScenarioError):
        WignerFriendConfig(w_mode="composite", w_basis=(KET0, KET1))


def test_case_d_copy_basis():
    cfg = WignerFriendConfig(w_mode="probe", spin_init=np.array([0.6, 0.8]))
    table = as_table(full_distribution(build(cfg)))
    yes_f = sum(v for k, v in table.items() if k[0].label == "yes")
    assert abs(p_yes(cfg) - yes_f) < 1e-12


def test_case_d_identity_u_with_friend_spin():
    cfg = WignerFriendConfig(w_mode="probe", w_basis=probe_basis_from_u(np.eye(2)), spin_init=KET0)
    assert abs(p_yes(cfg) - 1) < 1e-12


def test_case_f_canonical_gap():
    rep = registering_gap(CANON_F)
    assert abs(rep.p_yes_registered - 0.5) < 1e-12
    assert abs(rep.p_yes_unregistered - 1.0) < 1e-12
    assert abs(rep.gap - 0.5) < 1e-12
    assert abs(rep.interference_term - rep.gap) < 1e-12


def test_case_f_friend_state_has_no_gap():
    rep = registering_gap(CANON_F.but(spin_init=KET0))
    assert abs(rep.gap) < 1e-12
    assert abs(rep.amplitudes[0] - R2) < 1e-12 and abs(rep.amplitudes[1]) < 1e-12


def test_case_f_validates_and_has_four_paths():
    p = build(CANON_F)
    assert validate(p) == []
    assert len(enumerate_virtual_paths(p)) == 4


def test_gap_restored_after_erasing_all_records():
    k0 = registering_gap(CANON_F).gap
    full_erase = registering_gap(CANON_F.but(chain_length=2, erasure={1, 2})).gap
    assert abs(full_erase - k0) < 1e-12


def test_report_table_rows_sum_to_one():
    for mode in ("spin", "probe", "composite"):
        rep = registering_gap(WignerFriendConfig(w_mode=mode))
        assert abs(sum(rep.table.values()) - 1) < 1e-10
        assert all(-1e-12 <= v <= 1 + 1e-12 for v in rep.table.values())


# --- chain and erasure ------------------------------------------------------------------------

def test_extend_chain_zero_is_identity():
    p = build(WignerFriendConfig())
    assert extend_chain(p, 0) is p
    assert erase_records(p, []) is p


def test_chain_redundant_in_case_c():
    base = as_table(full_distribution(build(WignerFriendConfig())))
    chained = as_table(full_distribution(build(WignerFriendConfig(chain_length=2))))
    for k, v in base.items():
        assert abs(chained[k] - v) < 1e-12


def test_record_enforces_registering_value():
    cfg = CANON_F.but(chain_length=1, f_registered=False)
    assert abs(p_yes(cfg) - 0.5) < 1e-12


def test_erase_unknown_record():
    with pytest.raises(ScenarioError):
        erase_records(build(CANON_F.but(chain_length=1)), [3])


def test_surviving_record_check_examples():
    assert surviving_record_check(build(CANON_F.but(chain_length=3, erasure={2})))
    assert not surviving_record_check(build(CANON_F.but(chain_length=3, erasure={1, 2, 3})))
    assert not surviving_record_check(build(CANON_F))
    assert abs(p_yes(CANON_F.but(chain_length=3, erasure={2}, f_registered=False)) - 0.5) < 1e-10
    assert abs(p_yes(CANON_F.but(chain_length=3, erasure={1, 2, 3}, f_registered=False)) - 1.0) < 1e-10


def test_record_dichotomy_exhaustive():
    for k in (1, 2, 3):
        for r in range(k + 1):
            for erased in combinations(range(1, k + 1), r):
                cfg = CANON_F.but(chain_length=k, erasure=frozenset(erased), f_registered=False)
                expected = 1.0 if r == k else 0.5
                assert abs(p_yes(cfg) - expected) < 1e-10


def test_registering_gap_rejects_broken_invariant(monkeypatch):
    import pathwig.scenarios as sc
    calls = iter([0.25, 0.75])
    monkeypatch.setattr(sc, "_wigner_yes", lambda p: next(calls))
    with pytest.raises(RecordInvariantError):
        sc.registering_gap(WignerFriendConfig())


# --- regrouping -------------------------------------------------------------------------------

def test_regroup_and_readout_leave_distributions_unchanged():
    cfg = CANON_F.but(chain_length=2, erasure={1})
    base = as_table(full_distribution(build(cfg)))
    p = build(cfg)
    shuffled = regroup(p, ["R2", "S", "W", "R1", "F"])
    for q in (shuffled, build(cfg.but(f_readout=1)), build(cfg.but(f_readout=2))):
        table = as_table(full_distribution(q))
        for k, v in base.items():
            assert abs(table[k] - v) <= 1e-12


# --- properties -------------------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from(["spin", "probe"]))
def test_registering_invariance_spin_probe(seed, mode):
    cfg = random_config(np.random.default_rng(seed), mode)
    assert abs(p_yes(cfg) - p_yes(cfg.but(f_registered=False))) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_case_c_table_is_overlap_products(seed):
    cfg = random_config(np.random.default_rng(seed), "spin")
    table = registering_gap(cfg).table
    a = overlap_amplitudes(cfg)
    for (f, w), i in ((("yes", "yes"), 0), (("yes", "no"), 1), (("no", "yes"), 2), (("no", "no"), 3)):
        assert abs(table[(f, w)] - abs(a[i]) ** 2) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_case_d_random_u(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng, "probe", w_basis=probe_basis_from_u(random_unitary(rng, 2)))
    rep = registering_gap(cfg)
    assert abs(rep.gap) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_case_f_gap_is_cross_term(seed):
    cfg = random_config(np.random.default_rng(seed), "composite")
    rep = registering_gap(cfg)
    a1, a2, a3, a4 = rep.amplitudes
    # A1, A2 reach the W-yes final state; A3, A4 the W-no one
    cross = 2 * (np.conj(a1) * a2).real
    assert abs(rep.gap - cross) <= 1e-10
    assert abs(rep.interference_term - rep.gap) <= 1e-10
