import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathwig.hilbert import (
    LayoutError,
    NonUnitaryError,
    NormalizationError,
    OperatorMatrix,
    SpaceLayout,
    StateVector,
    adjoint,
    apply,
    basis_state,
    compose,
    embed_operator,
    identity,
    inner,
    permute_layout,
    tensor_state,
)
from pathwig.random_protocols import random_state, random_unitary

R2 = 1 / np.sqrt(2)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def qubit(name, amps):
    return StateVector(SpaceLayout.qubits(name), amps)


def test_layout_rejects_duplicates_and_trivial_dims():
    with pytest.raises(LayoutError):
        SpaceLayout.qubits("a", "a")
    with pytest.raises(LayoutError):
        SpaceLayout.of(("a", 1))
    assert SpaceLayout.of(("a", 2), ("b", 3)).total_dim == 6


def test_tensor_state_computational_zero():
    layout = SpaceLayout.qubits("W", "F", "S")
    psi = tensor_state([qubit(n, [1, 0]) for n in "WFS"])
    assert psi.layout == layout
    assert np.array_equal(psi.entries, np.eye(8)[0])


def test_tensor_state_product_structure():
    psi = tensor_state([qubit("W", [1, 0]), qubit("F", [1, 0]), qubit("S", [R2, R2])])
    expected = np.zeros(8)
    expected[[0, 1]] = R2
    assert np.allclose(psi.entries, expected, atol=1e-15)


def test_tensor_state_plus_minus():
    psi = tensor_state([qubit("a", [R2, R2]), qubit("b", [R2, -R2])])
    assert np.allclose(psi.entries, [0.5, -0.5, 0.5, -0.5], atol=1e-15)


def test_tensor_state_errors():
    with pytest.raises(NormalizationError):
        tensor_state([qubit("a", [1, 1])])
    with pytest.raises(LayoutError):
        tensor_state([qubit("a", [1, 0])], layout=SpaceLayout.qubits("b"))


def test_embed_identity():
    layout = SpaceLayout.qubits("W", "F", "S")
    out = embed_operator(np.eye(2), ["S"], layout)
    assert np.array_equal(out.entries, np.eye(8))


def test_embed_cnot_spin_controls_probe():
    # CNOT with control = spin, target = F probe, layout (W, F, S)
    layout = SpaceLayout.qubits("W", "F", "S")
    u = embed_operator(OperatorMatrix(SpaceLayout.qubits("S", "F"), CNOT, unitary=True), ["S", "F"], layout)
    images = {i: int(np.argmax(np.abs(u.entries[:, i]))) for i in range(8)}
    # only states with S = 1 flip F
    assert images == {0: 0, 1: 3, 2: 2, 3: 1, 4: 4, 5: 7, 6: 6, 7: 5}
    assert images[0b001] == 0b011


def test_embed_non_adjacent_targets():
    layout = SpaceLayout.qubits("a", "b", "c")
    u = embed_operator(CNOT, ["a", "c"], layout).entries
    # a controls c, b untouched
    for i in range(8):
        a, b, c = (i >> 2) & 1, (i >> 1) & 1, i & 1
        j = (a << 2) | (b << 1) | (c ^ a)
        assert u[j, i] == 1


def test_embed_rejects_non_unitary_and_bad_targets():
    layout = SpaceLayout.qubits("a", "b")
    with pytest.raises(NonUnitaryError):
        embed_operator(OperatorMatrix(SpaceLayout.qubits("a"), [[1, 1], [0, 1]], unitary=True), ["a"], layout)
    with pytest.raises(LayoutError):
        embed_operator(np.eye(2), ["z"], layout)
    with pytest.raises(LayoutError):
        embed_operator(np.eye(4), ["a"], layout)
    with pytest.raises(LayoutError):
        embed_operator(np.eye(4), ["a", "a"], layout)


def test_apply_inner_examples():
    layout = SpaceLayout.qubits("a")
    psi = StateVector(layout, [R2, R2])
    assert np.allclose(apply(identity(layout), psi).entries, psi.entries)
    assert inner(basis_state(layout, 0), basis_state(layout, 1)) == 0
    assert abs(inner(psi, basis_state(layout, 0)) - R2) < 1e-15


def test_inner_is_conjugate_linear_in_first_argument():
    layout = SpaceLayout.qubits("a")
    a = StateVector(layout, [1j, 0])
    b = StateVector(layout, [1, 0])
    assert inner(a, b) == -1j


def test_layout_mismatch_in_apply():
    with pytest.raises(LayoutError):
        apply(identity(SpaceLayout.qubits("a")), basis_state(SpaceLayout.qubits("b"), 0))


def test_permute_layout_roundtrip(rng):
    layout = SpaceLayout.of(("a", 2), ("b", 3), ("c", 2))
    v = random_state(rng, 12)
    w = permute_layout(v, layout, ["c", "a", "b"])
    back = permute_layout(w, layout.sub(["c", "a", "b"]), ["a", "b", "c"])
    assert np.array_equal(back, v)


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(2, 8))
def test_unitary_preserves_inner(seed, n):
    rng = np.random.default_rng(seed)
    layout = SpaceLayout.of(("x", n))
    u = OperatorMatrix(layout, random_unitary(rng, n), unitary=True)
    a, b = (StateVector(layout, random_state(rng, n)) for _ in range(2))
    assert abs(inner(apply(u, a), apply(u, b)) - inner(a, b)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_embed_product_of_disjoint_adjacent(seed):
    rng = np.random.default_rng(seed)
    layout = SpaceLayout.of(("a", 2), ("b", 3), ("c", 2))
    A, B = random_unitary(rng, 2), random_unitary(rng, 3)
    lhs = compose(embed_operator(A, ["a"], layout), embed_operator(B, ["b"], layout)).entries
    rhs = embed_operator(np.kron(A, B), ["a", "b"], layout).entries
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_double_adjoint_exact(seed):
    rng = np.random.default_rng(seed)
    layout = SpaceLayout.qubits("a", "b")
    u = OperatorMatrix(layout, random_unitary(rng, 4))
    assert np.array_equal(adjoint(adjoint(u)).entries, u.entries)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_tensor_norm_is_product(seed):
    rng = np.random.default_rng(seed)
    a = StateVector(SpaceLayout.qubits("a"), random_state(rng, 2))
    b = StateVector(SpaceLayout.of(("b", 3)), random_state(rng, 3))
    assert abs(tensor_state([a, b]).norm - a.norm * b.norm) <= 1e-12
