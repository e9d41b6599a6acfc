import numpy as np
import pytest
from hypothesis import given, strategies as st

from kidecomp.errors import RetriesExhausted, ShapeMismatch, ValidationError
from kidecomp.experiment import (
    StatisticalExperiment,
    average_state,
    experiment_from_json,
    experiment_to_json,
    gen_planted,
    planted_state,
    restrict_to_joint_support,
    validate,
)
from kidecomp.linalg import dagger, fro, haar_unitary
from kidecomp.minsuff import minimal_sufficient_algebra
from kidecomp.opspace import close_algebra, contains

seeds = st.integers(0, 2**32 - 1)


def single(rho):
    rho = np.asarray(rho)
    return StatisticalExperiment(rho.shape[0], ["x"], [rho])


def test_validate_examples():
    assert validate(single(np.diag([0.5, 0.5]))) == []
    assert any("trace" in p for p in validate(single(np.diag([1.0, 1.0]))))
    assert any("Hermitian" in p for p in validate(single(np.array([[0, 1], [0, 0]]))))
    assert any("negative" in p for p in validate(single(np.diag([1.5, -0.5]))))


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        StatisticalExperiment(2, ["a"], [np.eye(3) / 3])
    with pytest.raises(ShapeMismatch):
        StatisticalExperiment(2, ["a", "b"], [np.eye(2) / 2])


def test_average_state_examples():
    rho = np.diag([0.25, 0.75])
    e = StatisticalExperiment(2, ["a", "b"], [rho, rho])
    np.testing.assert_allclose(average_state(e), rho)
    e = StatisticalExperiment(2, ["a", "b"], [np.diag([1.0, 0]), np.diag([0, 1.0])])
    np.testing.assert_allclose(average_state(e), np.diag([0.5, 0.5]))
    np.testing.assert_allclose(average_state(e, [1 / 3, 2 / 3]), np.diag([1 / 3, 2 / 3]))
    with pytest.raises(ValidationError):
        average_state(e, [1.0, 0.0])


def test_restrict_examples(rng):
    e = StatisticalExperiment(2, ["a", "b"], [np.diag([0.5, 0.5]), np.diag([1 / 3, 2 / 3])])
    r, v = restrict_to_joint_support(e)
    assert r is e and np.array_equal(v, np.eye(2))

    r, v = restrict_to_joint_support(single(np.diag([0.5, 0.5, 0])))
    assert r.dim == 2
    np.testing.assert_allclose(r.states[0], np.diag([0.5, 0.5]), atol=1e-15)

    u = haar_unitary(rng, 3)
    a, b = u[:, :1], u[:, 1:2]
    e = StatisticalExperiment(3, ["a", "b"], [a @ dagger(a), b @ dagger(b)])
    r, v = restrict_to_joint_support(e)
    assert r.dim == 2
    assert fro(dagger(v) @ v - np.eye(2)) < 1e-12
    for s, s0 in zip(r.states, e.states):
        assert fro(v @ s @ dagger(v) - s0) < 1e-12


@given(seeds, st.integers(1, 4), st.integers(0, 2))
def test_restrict_idempotent_and_faithful(seed, rank, kernel):
    rng = np.random.default_rng(seed)
    d = rank + kernel
    u = haar_unitary(rng, d)[:, :rank]
    states = []
    for _ in range(2):
        g = rng.standard_normal((rank, rank)) + 1j * rng.standard_normal((rank, rank))
        s = u @ g @ dagger(g) @ dagger(u)
        states.append(s / np.trace(s))
    r, _ = restrict_to_joint_support(StatisticalExperiment(d, ["a", "b"], states))
    assert r.dim == rank
    r2, v2 = restrict_to_joint_support(r)
    assert r2.dim == r.dim and np.array_equal(v2, np.eye(rank))
    lam = np.linalg.eigvalsh(average_state(r))
    assert lam[0] > 1e-9 * lam[-1]


# gen_planted -----------------------------------------------------------------------


def test_planted_single_degenerate_block():
    e, truth = gen_planted([(1, 3)], 3, seed=5)
    for s in e.states[1:]:
        assert fro(s - e.states[0]) < 1e-12
    assert minimal_sufficient_algebra(e).dim == 1


def test_planted_generic_pair_is_full():
    e, _ = gen_planted([(2, 1)], 2, seed=1)
    # oracle: the closure of the raw states with the unit reaches M_2
    assert close_algebra([np.eye(2), *e.states]).dim == 4
    assert minimal_sufficient_algebra(e).dim == 4


def test_planted_commuting():
    e, truth = gen_planted([(1, 1), (1, 1)], 2, seed=3)
    q = [truth.planted_q[t] for t in truth.labels]
    assert not np.allclose(q[0], q[1])
    m0 = minimal_sufficient_algebra(e)
    assert m0.dim == 2
    for x in m0.basis:
        for y in m0.basis:
            assert fro(x @ y - y @ x) < 1e-10
    for s in e.states:
        assert contains(m0, s)


@given(seeds, st.lists(st.tuples(st.integers(1, 3), st.integers(1, 3)), min_size=1, max_size=3), st.integers(2, 4))
def test_planted_valid_and_reconstructs(seed, dims, labels):
    e, truth = gen_planted(dims, labels, seed)
    assert validate(e) == []
    assert e.dim == sum(n * m for n, m in dims)
    for i, t in enumerate(truth.labels):
        rhos = [truth.planted_rho_i_theta[b][t] for b in range(len(dims))]
        want = planted_state(dims, truth.planted_unitary, truth.planted_q[t], rhos, truth.planted_sigmas)
        assert fro(e.states[i] - want) <= 1e-12


def test_planted_deterministic():
    e1, _ = gen_planted([(2, 1), (1, 2)], 3, seed=7)
    e2, _ = gen_planted([(2, 1), (1, 2)], 3, seed=7)
    for a, b in zip(e1.states, e2.states):
        assert np.array_equal(a, b)


def test_planted_unreachable_raises():
    # with a single label every q ratio is constant, so two (1,1) blocks merge
    with pytest.raises(RetriesExhausted):
        gen_planted([(1, 1), (1, 1)], 1, seed=0, max_retries=5)


def test_planted_rejects_bad_dims():
    with pytest.raises(ValidationError):
        gen_planted([(0, 1)], 2, 0)
    with pytest.raises(ValidationError):
        gen_planted([(8, 9)], 2, 0)


def test_json_roundtrip(rng):
    e, _ = gen_planted([(2, 1)], 2, seed=0)
    back = experiment_from_json(experiment_to_json(e))
    assert back.labels == e.labels
    for a, b in zip(back.states, e.states):
        assert np.array_equal(a, b)
    bad = experiment_to_json(e)
    bad["extra"] = 1
    with pytest.raises(ValidationError):
        experiment_from_json(bad)
    bad = experiment_to_json(e)
    del bad["states"]["t0"]
    with pytest.raises(ValidationError):
        experiment_from_json(bad)
