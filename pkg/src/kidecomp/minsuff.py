"""Minimal sufficient subalgebra and its state-preserving conditional expectation.

For a faithful family with average ``rb``, a unital *-subalgebra N is
sufficient exactly when it is invariant under ``X -> [log rb, X]`` and
contains every ``D_t = rb^{-1/2} rho_t rb^{-1/2}``. The minimal sufficient
algebra is therefore the closure of ``{1, D_t}`` under adjoint, products
and that bracket.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import Superoperator
from .errors import NotFaithful, NotInvariant
from .experiment import StatisticalExperiment, average_state, restrict_to_joint_support, validate
from .linalg import (
    DEFAULT_TOL,
    Tolerance,
    eigh,
    fro,
    hermitian_part,
    random_hermitian,
    spectral_apply,
)
from .opspace import OperatorAlgebra, close_algebra, orthonormalize_span

PROBE_COUNT = 200


@dataclass(eq=False)
class CocycleGenerators:
    reference: np.ndarray
    modular_generator: np.ndarray
    generators: list
    weights: np.ndarray


def hermitian_probes(rng: np.random.Generator, d: int, count: int = PROBE_COUNT) -> np.ndarray:
    """Unit-Frobenius-norm Hermitian probes from the Ginibre ensemble."""
    return np.stack([random_hermitian(rng, d) for _ in range(count)])


def cocycle_generators(e: StatisticalExperiment, weights=None, tol: Tolerance = DEFAULT_TOL) -> CocycleGenerators:
    w = e.resolved_weights(weights)
    rb = average_state(e, w)
    lam = eigh(rb, tol)[0]
    if lam[0] <= tol.rank_cut * lam[-1]:
        raise NotFaithful(
            f"average state has smallest eigenvalue {lam[0]:.3e}; restrict to the joint support first"
        )
    inv_sqrt = spectral_apply(rb, lambda x: x ** -0.5, tol=tol)
    log_rb = hermitian_part(spectral_apply(rb, np.log, tol=tol))
    gens = [hermitian_part(inv_sqrt @ rho @ inv_sqrt) for rho in e.states]
    return CocycleGenerators(rb, log_rb, gens, w)


def minimal_sufficient_algebra(e: StatisticalExperiment, weights=None, tol: Tolerance = DEFAULT_TOL) -> OperatorAlgebra:
    cg = cocycle_generators(e, weights, tol)
    seed = orthonormalize_span([np.eye(e.dim, dtype=complex), *cg.generators], tol)
    return close_algebra(seed, [cg.modular_generator], tol)


def _projection_matrix(m0: OperatorAlgebra, rho_bar: np.ndarray) -> np.ndarray:
    """Row-major vec matrix of the tr(rb X^dag Y)-orthogonal projection onto m0."""
    b = m0.basis
    rb = np.asarray(rho_bar, dtype=complex)
    # functionals A -> tr(rb b_j^dag A), as row vectors acting on vec(A)
    func = np.einsum("xy,kzy->kxz", rb, b.conj()).transpose(0, 2, 1).reshape(len(b), -1)
    gram = func @ b.reshape(len(b), -1).T
    coef = np.linalg.solve(gram, func)
    return b.reshape(len(b), -1).T @ coef


def conditional_expectation(
    m0: OperatorAlgebra,
    rho_bar,
    tol: Tolerance = DEFAULT_TOL,
    check: bool = True,
    seed: int = 0,
) -> Superoperator:
    """The rb-preserving conditional expectation onto ``m0``.

    Built as the orthogonal projection for ``<X, Y> = tr(rb X^dag Y)``. The
    result is checked for unitality, complete positivity and the module
    property; failure means ``m0`` is not invariant under the modular
    group of ``rb``.
    """
    d = m0.ambient_dim
    mat = _projection_matrix(m0, rho_bar)
    choi = mat.reshape(d, d, d, d).transpose(2, 0, 3, 1).reshape(d * d, d * d)
    ce = Superoperator(d, d, choi)
    if check:
        problems = check_conditional_expectation(ce, m0, tol, seed=seed)
        if problems:
            raise NotInvariant("projection is not a conditional expectation: " + "; ".join(problems))
    return ce


def check_conditional_expectation(ce: Superoperator, m0: OperatorAlgebra, tol: Tolerance = DEFAULT_TOL, seed: int = 0, probes: int = 8) -> list[str]:
    d = m0.ambient_dim
    problems = []
    if fro(ce(np.eye(d)) - np.eye(d)) > tol.residual:
        problems.append("not unital")
    c = hermitian_part(ce.choi)
    if np.linalg.eigvalsh(c)[0] < -tol.residual * max(1.0, float(np.max(np.abs(c)))):
        problems.append("Choi matrix not PSD")
    rng = np.random.default_rng(seed)
    for _ in range(probes):
        a = random_hermitian(rng, d)
        b1 = _random_element(rng, m0)
        b2 = _random_element(rng, m0)
        if fro(ce(b1 @ a @ b2) - b1 @ ce(a) @ b2) > tol.residual:
            problems.append("module property violated")
            break
    return problems


def _random_element(rng: np.random.Generator, a: OperatorAlgebra) -> np.ndarray:
    c = rng.standard_normal(a.dim) + 1j * rng.standard_normal(a.dim)
    x = np.einsum("k,kij->ij", c / np.linalg.norm(c), a.basis)
    return x


def is_minimal_sufficient(e: StatisticalExperiment, tol: Tolerance = DEFAULT_TOL) -> bool:
    if validate(e, tol):
        return False
    restricted, _ = restrict_to_joint_support(e, tol)
    if restricted.dim < e.dim:
        return False
    return minimal_sufficient_algebra(e, tol=tol).dim == e.dim ** 2
