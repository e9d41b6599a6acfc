from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kidecomp.classical import classical_part
from kidecomp.errors import MatchingFailed, ValidationError
from kidecomp.experiment import StatisticalExperiment, gen_planted
from kidecomp.linalg import fro, haar_unitary, support_projection
from kidecomp.products import (
    check_product_classical,
    check_product_minimal_sufficiency,
    pair_label,
    tensor_experiments,
)
from kidecomp.structure import ki_decomposition
from kidecomp.suites import random_small_experiment

seeds = st.integers(0, 2**32 - 1)


def trivial():
    return StatisticalExperiment(1, ["*"], [np.eye(1)])


def pure_pair_generic(rng):
    a, b = haar_unitary(rng, 2)[:, 0], haar_unitary(rng, 2)[:, 0]
    return StatisticalExperiment(2, ["a", "b"], [np.outer(a, a.conj()), np.outer(b, b.conj())])


def test_tensor_with_trivial(commuting_pair):
    ef = tensor_experiments(commuting_pair, trivial())
    assert ef.dim == 2
    assert ef.labels == [pair_label(t, "*") for t in commuting_pair.labels]
    for a, b in zip(ef.states, commuting_pair.states):
        assert np.array_equal(a, b)


def test_tensor_dims_and_supports(rng):
    e, _ = gen_planted([(2, 1)], 2, seed=0)
    f, _ = gen_planted([(1, 1), (1, 2)], 2, seed=1)
    ef = tensor_experiments(e, f)
    assert ef.dim == 6 and len(ef) == 4
    r = np.diag([0.5, 0.5, 0.0])
    s = np.diag([1.0, 0.0])
    g = tensor_experiments(StatisticalExperiment(3, ["x"], [r]), StatisticalExperiment(2, ["y"], [s]))
    want = np.kron(support_projection(r).matrix, support_projection(s).matrix)
    assert fro(support_projection(g.states[0]).matrix - want) < 1e-12


def test_product_cap():
    e, _ = gen_planted([(3, 3)], 2, seed=0)
    with pytest.raises(ValidationError):
        check_product_minimal_sufficiency(e, e)


def test_minimal_sufficiency_examples(rng, identical_pair):
    e, f = pure_pair_generic(rng), pure_pair_generic(rng)
    assert check_product_minimal_sufficiency(e, f) == (True, True, True)
    ms = check_product_minimal_sufficiency(identical_pair, f)
    assert ms[0] is False and ms[2] is False
    assert check_product_minimal_sufficiency(e, e) == (True, True, True)


@given(seeds)
def test_minimal_sufficiency_product_property(seed):
    rng = np.random.default_rng(seed)
    e, f = random_small_experiment(rng), random_small_experiment(rng)
    ms_e, ms_f, ms_ef = check_product_minimal_sufficiency(e, f)
    assert ms_ef == (ms_e and ms_f)


def test_product_classical_commuting(commuting_pair):
    rep = check_product_classical(commuting_pair, commuting_pair)
    assert rep.matched
    assert Counter(map(tuple, rep.product_dims)) == Counter({(1, 1): 4})
    assert rep.q_factorization_residual <= 1e-12


def test_product_classical_pure_times_identical(rng, identical_pair):
    e = pure_pair_generic(rng)
    rep = check_product_classical(e, identical_pair)
    assert rep.matched and rep.product_dims == [(2, 2)]
    k = ki_decomposition(tensor_experiments(e, identical_pair))
    assert len(classical_part(k).index_labels) == 1


def test_product_classical_unit_factor(commuting_pair):
    rep = check_product_classical(commuting_pair, trivial())
    assert rep.matched and rep.product_dims == rep.left_dims


@given(seeds)
def test_product_classical_property(seed):
    rng = np.random.default_rng(seed)
    e, f = random_small_experiment(rng), random_small_experiment(rng)
    rep = check_product_classical(e, f, seed=seed)
    predicted = Counter((a * c, b * d) for a, b in rep.left_dims for c, d in rep.right_dims)
    assert Counter(map(tuple, rep.product_dims)) == predicted
    assert rep.q_factorization_residual <= 1e-6


def test_product_classical_strict_raises(monkeypatch, commuting_pair):
    import kidecomp.products as products

    real = products.ki_decomposition
    calls = []

    def fake(e, tol, seed):
        calls.append(e)
        k = real(e, tol, seed)
        if len(calls) == 3:  # the product: drop the label dependence of q
            for b in k.blocks:
                first = b.q[k.labels[0]]
                for t in k.labels:
                    b.q[t] = first
        return k

    monkeypatch.setattr(products, "ki_decomposition", fake)
    with pytest.raises(MatchingFailed):
        check_product_classical(commuting_pair, commuting_pair)


def test_associativity(rng, commuting_pair):
    f, _ = gen_planted([(1, 1), (1, 1)], 2, seed=4)
    g = trivial()
    left = tensor_experiments(tensor_experiments(commuting_pair, f), g)
    right = tensor_experiments(commuting_pair, tensor_experiments(f, g))
    cl_l = classical_part(ki_decomposition(left))
    cl_r = classical_part(ki_decomposition(right))
    # same label order, so distributions agree as multisets per label
    for tl, tr in zip(left.labels, right.labels):
        np.testing.assert_allclose(sorted(cl_l.distributions[tl]), sorted(cl_r.distributions[tr]), atol=1e-10)
