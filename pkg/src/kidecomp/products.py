"""Direct products of experiments and the factorization of their structure."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import MatchingFailed, ValidationError
from .experiment import StatisticalExperiment
from .linalg import DEFAULT_TOL, Tolerance, kron
from .minsuff import is_minimal_sufficient
from .structure import ki_decomposition

MAX_PRODUCT_DIM = 64
Q_FACTOR_TOL = 1e-6


def pair_label(a: str, b: str) -> str:
    return f"({a},{b})"


def tensor_experiments(e: StatisticalExperiment, f: StatisticalExperiment) -> StatisticalExperiment:
    """Labels are pairs, states Kronecker products, weights products."""
    labels, states, weights = [], [], []
    we, wf = e.resolved_weights(), f.resolved_weights()
    for a, ra, wa in zip(e.labels, e.states, we):
        for b, rb, wb in zip(f.labels, f.states, wf):
            labels.append(pair_label(a, b))
            states.append(kron(ra, rb))
            weights.append(wa * wb)
    w = None if e.weights is None and f.weights is None else np.asarray(weights)
    return StatisticalExperiment(e.dim * f.dim, labels, states, w)


def _check_size(e, f):
    if e.dim * f.dim > MAX_PRODUCT_DIM:
        raise ValidationError(f"product dimension {e.dim * f.dim} exceeds {MAX_PRODUCT_DIM}")


def check_product_minimal_sufficiency(e, f, tol: Tolerance = DEFAULT_TOL, seed=0) -> tuple[bool, bool, bool]:
    _check_size(e, f)
    return (
        is_minimal_sufficient(e, tol),
        is_minimal_sufficient(f, tol),
        is_minimal_sufficient(tensor_experiments(e, f), tol),
    )


@dataclass
class ProductReport:
    left_dims: list
    right_dims: list
    product_dims: list
    matched: bool
    q_factorization_residual: float
    minimal_sufficiency_checks: tuple | None = None
    assignment: list | None = None

    def to_json(self) -> dict:
        out = asdict(self)
        for key in ("left_dims", "right_dims", "product_dims"):
            out[key] = [list(x) for x in out[key]]
        if out["minimal_sufficiency_checks"] is not None:
            out["minimal_sufficiency_checks"] = list(out["minimal_sufficiency_checks"])
        return out


def check_product_classical(
    e,
    f,
    tol: Tolerance = DEFAULT_TOL,
    seed=0,
    q_tol: float = Q_FACTOR_TOL,
    strict: bool = True,
) -> ProductReport:
    """Match blocks of ki(E (x) F) to pairs of blocks of ki(E), ki(F).

    Each product block ``k`` carries a vector ``q_(t,x)(k)`` over product
    labels; a pair ``(i, j)`` predicts ``q_t(i) q_x(j)``. The bijection is
    the optimal assignment on the sup-distance between these vectors, with
    dimension mismatches forbidden.
    """
    _check_size(e, f)
    ke = ki_decomposition(e, tol, seed)
    kf = ki_decomposition(f, tol, seed)
    ef = tensor_experiments(e, f)
    kp = ki_decomposition(ef, tol, seed)

    pairs = [(i, j) for i in range(len(ke.blocks)) for j in range(len(kf.blocks))]
    predicted_dims = [
        (ke.blocks[i].n * kf.blocks[j].n, ke.blocks[i].m * kf.blocks[j].m) for i, j in pairs
    ]
    predicted_q = np.array(
        [[ke.blocks[i].q[a] * kf.blocks[j].q[b] for a in e.labels for b in f.labels] for i, j in pairs]
    )
    got_q = np.array([[blk.q[t] for t in ef.labels] for blk in kp.blocks])
    dims_match = Counter(predicted_dims) == Counter(kp.block_dims)

    residual = float("inf")
    assignment = None
    if dims_match:
        cost = np.max(np.abs(got_q[:, None, :] - predicted_q[None, :, :]), axis=2)
        forbid = np.array([[kb.dims != pd for pd in predicted_dims] for kb in kp.blocks])
        cost = np.where(forbid, 1e6, cost)
        rows, cols = linear_sum_assignment(cost)
        residual = float(np.max(cost[rows, cols]))
        assignment = [[int(r), list(pairs[c])] for r, c in zip(rows, cols)]
    matched = bool(dims_match and residual <= q_tol)
    report = ProductReport(
        ke.block_dims, kf.block_dims, kp.block_dims, matched, residual, assignment=assignment
    )
    if strict and not matched:
        raise MatchingFailed(
            f"product blocks {kp.block_dims} do not match pairs {predicted_dims} "
            f"(q residual {residual:.3e})"
        )
    return report
