import numpy as np
import pytest
from hypothesis import given, strategies as st

from kidecomp.channels import (
    Superoperator,
    apply,
    channel_from_json,
    channel_to_json,
    disturbance,
    from_heisenberg,
    from_kraus,
    from_schrodinger,
    identity_channel,
    is_cptp_unital,
    multiplicative_domain_member,
    pinching,
    preserves_experiment,
    reprepare,
    schwarz_block_check,
    transpose_map,
    unitary_channel,
)
from kidecomp.errors import ShapeMismatch
from kidecomp.experiment import gen_planted
from kidecomp.linalg import dagger, fro, ginibre, haar_unitary, matrix_to_json, random_density
from kidecomp.structure import ki_decomposition

seeds = st.integers(0, 2**32 - 1)


def random_unital_cp(rng, d, k=3):
    """Heisenberg map X -> sum K^dag X K with sum K^dag K = 1 (a CP unital map)."""
    g = [ginibre(rng, d) for _ in range(k)]
    s = sum(dagger(x) @ x for x in g)
    w, v = np.linalg.eigh(s)
    inv = (v / np.sqrt(w)) @ dagger(v)
    return from_kraus([x @ inv for x in g])


def test_apply_examples(rng):
    x = ginibre(rng, 3)
    np.testing.assert_allclose(identity_channel(3)(x), x, atol=1e-14)
    sigma = random_density(rng, 3)
    rho = random_density(rng, 3)
    np.testing.assert_allclose(apply(reprepare(sigma), rho, "schrodinger"), sigma, atol=1e-14)
    u = haar_unitary(rng, 3)
    np.testing.assert_allclose(unitary_channel(u)(x), dagger(u) @ x @ u, atol=1e-13)
    with pytest.raises(ShapeMismatch):
        identity_channel(3)(np.eye(2))
    with pytest.raises(ValueError):
        apply(identity_channel(2), np.eye(2), "sideways")


def test_choi_convention():
    # the Choi matrix is sum_ij E_ij (x) L(E_ij)
    ch = transpose_map(2)
    want = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            e = np.zeros((2, 2))
            e[i, j] = 1
            want += np.kron(e, e.T)
    np.testing.assert_array_equal(ch.choi, want)


def test_is_cptp_unital_examples(rng):
    assert is_cptp_unital(identity_channel(3)) == {"cp": True, "tp": True, "unital": True}
    flags = is_cptp_unital(transpose_map(2))
    assert flags["cp"] is False and flags["tp"] is True
    # Choi of the transpose is the swap, eigenvalues +-1
    np.testing.assert_allclose(np.linalg.eigvalsh(transpose_map(2).choi), [-1, 1, 1, 1])
    sigma = random_density(rng, 3)
    flags = is_cptp_unital(reprepare(sigma))
    assert flags["cp"] and flags["tp"] and not flags["unital"]
    assert is_cptp_unital(reprepare(np.eye(3) / 3))["unital"]


def test_schwarz_examples(rng):
    a = ginibre(rng, 3)
    assert schwarz_block_check(identity_channel(3), a)
    assert not schwarz_block_check(transpose_map(2), np.array([[0, 1], [0, 0]]))


@given(seeds, st.integers(1, 4))
def test_cp_unital_is_schwarz(seed, d):
    rng = np.random.default_rng(seed)
    ch = random_unital_cp(rng, d)
    assert schwarz_block_check(ch, ginibre(rng, d))


def test_multiplicative_domain_examples(rng):
    assert multiplicative_domain_member(identity_channel(3), ginibre(rng, 3))
    p0, p1 = np.diag([1.0, 0, 0]), np.diag([0, 1.0, 1.0])
    assert multiplicative_domain_member(pinching([p0, p1]), p0)
    pinch2 = pinching([np.diag([1.0, 0]), np.diag([0, 1.0])])
    assert not multiplicative_domain_member(pinch2, np.array([[0, 1], [0, 0]]))


@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_multiplicative_domain_bimodule(seed, n1, n2):
    # for a pinching the multiplicative domain is the block-diagonal algebra
    rng = np.random.default_rng(seed)
    d = n1 + n2
    p0 = np.diag([1.0] * n1 + [0.0] * n2)
    ch = pinching([p0, np.eye(d) - p0])
    a = p0 @ ginibre(rng, d) @ p0 + (np.eye(d) - p0) @ ginibre(rng, d) @ (np.eye(d) - p0)
    assert multiplicative_domain_member(ch, a)
    b = ginibre(rng, d)
    assert fro(ch(b @ a) - ch(b) @ ch(a)) <= 1e-7
    assert fro(ch(a @ b) - ch(a) @ ch(b)) <= 1e-7


@given(seeds, st.integers(1, 4))
def test_duality(seed, d):
    rng = np.random.default_rng(seed)
    ch = random_unital_cp(rng, d)
    rho, x = random_density(rng, d), ginibre(rng, d)
    assert abs(np.trace(ch.dual(rho) @ x) - np.trace(rho @ ch(x))) <= 1e-8


@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_from_schrodinger_matches_from_heisenberg(seed, din, dout):
    rng = np.random.default_rng(seed)
    ks = [ginibre(rng, din, dout) for _ in range(2)]
    ch = from_kraus(ks)
    h = from_heisenberg(lambda x: sum(dagger(k) @ x @ k for k in ks), din, dout)
    s = from_schrodinger(lambda r: sum(k @ r @ dagger(k) for k in ks), dout, din)
    assert fro(h.choi - ch.choi) < 1e-12
    assert fro(s.choi - ch.choi) < 1e-12


@given(seeds, st.integers(1, 4))
def test_kraus_channels_flags(seed, d):
    rng = np.random.default_rng(seed)
    ch = random_unital_cp(rng, d)
    flags = is_cptp_unital(ch)
    assert flags["cp"] and flags["tp"]
    u = haar_unitary(rng, d)
    assert is_cptp_unital(unitary_channel(u)) == {"cp": True, "tp": True, "unital": True}


@given(seeds)
def test_multiplicative_domain_factors_out(seed):
    # elements of the multiplicative domain factor out of products on both sides
    rng = np.random.default_rng(seed)
    u = haar_unitary(rng, 3)
    p0 = np.diag([1.0, 1.0, 0.0])
    # X -> sum_i P_i U^dag X U P_i; its domain is U (block-diagonal) U^dag
    ch = from_kraus([u @ p0, u @ (np.eye(3) - p0)])
    inside = u @ (p0 @ ginibre(rng, 3) @ p0 + np.diag([0, 0, 1.0]) * rng.standard_normal()) @ dagger(u)
    outside = u @ np.array([[0, 0, 1.0], [0, 0, 0], [0, 0, 0]]) @ dagger(u)
    assert not multiplicative_domain_member(ch, outside)
    assert multiplicative_domain_member(ch, inside)
    b = ginibre(rng, 3)
    assert fro(ch(b @ inside) - ch(b) @ ch(inside)) <= 1e-7
    assert fro(ch(inside @ b) - ch(inside) @ ch(b)) <= 1e-7


def test_preserves_experiment(rng):
    e, _ = gen_planted([(1, 1), (2, 1)], 3, seed=2)
    assert preserves_experiment(identity_channel(e.dim), e)
    k = ki_decomposition(e)
    assert preserves_experiment(pinching([b.projection for b in k.blocks]), e)
    assert not preserves_experiment(unitary_channel(haar_unitary(rng, e.dim)), e)
    assert disturbance(unitary_channel(haar_unitary(rng, e.dim)), e) > 1e-3


def test_json_roundtrip(rng):
    ch = random_unital_cp(rng, 2)
    back = channel_from_json(channel_to_json(ch))
    assert np.array_equal(back.choi, ch.choi)
    kr = channel_from_json({"kraus": [matrix_to_json(k) for k in ch.kraus]})
    assert fro(kr.choi - ch.choi) < 1e-14


def test_superoperator_shape_check():
    with pytest.raises(ShapeMismatch):
        Superoperator(2, 2, np.eye(3))
