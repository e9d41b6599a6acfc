"""Classical part, broadcastability and the non-disturbing extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import Superoperator, from_kraus
from .errors import NotClassical, ValidationError, VerificationFailed
from .experiment import StatisticalExperiment
from .linalg import DEFAULT_TOL, Tolerance, dagger, fro, partial_trace, trace_norm
from .opspace import center
from .structure import KIDecomposition


@dataclass(eq=False)
class ClassicalExperiment:
    index_labels: list
    distributions: dict  # experiment label -> probability vector over index_labels

    def to_json(self) -> dict:
        return {
            "index": list(self.index_labels),
            "distributions": {t: [float(x) for x in q] for t, q in self.distributions.items()},
        }

    @classmethod
    def from_json(cls, obj) -> "ClassicalExperiment":
        if not isinstance(obj, dict) or set(obj) != {"index", "distributions"}:
            raise ValidationError("classical part must have exactly 'index' and 'distributions'")
        dist = {t: np.asarray(q, dtype=float) for t, q in obj["distributions"].items()}
        return cls(list(obj["index"]), dist)


def classical_part(k: KIDecomposition, tol: Tolerance = DEFAULT_TOL) -> ClassicalExperiment:
    """Block weights ``q_t(i)``: the states restricted to the center of M0."""
    index = list(range(len(k.blocks)))
    if k.algebra is not None:
        zdim = center(k.algebra, tol).dim
        if zdim != len(index):
            raise VerificationFailed(f"center has dimension {zdim} but there are {len(index)} blocks")
    return ClassicalExperiment(index, {t: k.q_vector(t) for t in k.labels})


def is_broadcastable(k: KIDecomposition) -> bool:
    return all(b.n == 1 for b in k.blocks)


def _embedded_projections(k: KIDecomposition) -> tuple[list, np.ndarray]:
    v = k.support_isometry
    projs = [v @ b.projection @ dagger(v) for b in k.blocks]
    rest = np.eye(k.source_dim) - v @ dagger(v)
    return projs, rest


def broadcast_channel(k: KIDecomposition) -> Superoperator:
    """Measure-and-prepare witness ``rho -> sum_i tr(P_i rho) s_i (x) s_i``.

    ``s_i`` is the block's sigma embedded into the source space (valid since
    every block has n = 1). Weight outside the joint support is sent to
    ``s_0 (x) s_0`` so the map stays trace preserving.
    """
    if not is_broadcastable(k):
        dims = [b.dims for b in k.blocks]
        raise NotClassical(f"experiment has a block with n > 1 (block dims {dims}); no broadcast exists")
    v = k.support_isometry
    projs, rest = _embedded_projections(k)
    prepared = []
    for b in k.blocks:
        s = v @ b.embed(b.sigma) @ dagger(v)
        prepared.append(np.kron(s, s))
    choi = sum(np.kron(t.T, p) for t, p in zip(prepared, projs))
    if fro(rest) > 0.5:
        choi = choi + np.kron(prepared[0].T, rest)
    d = k.source_dim
    return Superoperator(d * d, d, choi)


def broadcast_marginal_residual(ch: Superoperator, e: StatisticalExperiment) -> float:
    """Worst Frobenius deviation of either marginal of ``ch*(rho_t)`` from ``rho_t``."""
    d = e.dim
    worst = 0.0
    for rho in e.states:
        out = ch.dual(rho)
        for side in ("A", "B"):
            worst = max(worst, fro(partial_trace(out, (d, d), side) - rho))
    return worst


def extraction_instrument(k: KIDecomposition, e: StatisticalExperiment | None = None, tol: Tolerance = DEFAULT_TOL):
    """Pinching along the block projections and its outcome distributions.

    With ``e`` given, non-disturbance of every state is certified and a
    breach raises :class:`VerificationFailed`.
    """
    projs, rest = _embedded_projections(k)
    kraus = projs + ([rest] if fro(rest) > 0.5 else [])
    pinch = from_kraus(kraus)
    outcomes = {t: np.array([float(np.trace(p @ rho).real) for p in projs]) for t, rho in _states(k, e)}
    if e is not None:
        worst = max(trace_norm(pinch.dual(rho) - rho) for rho in e.states)
        if worst > tol.residual:
            raise VerificationFailed(f"pinching disturbs the family: trace-norm change {worst:.3e}")
    return pinch, outcomes


def _states(k: KIDecomposition, e):
    if e is not None:
        return zip(e.labels, e.states)
    return ((t, k.reconstruct(t)) for t in k.labels)


def extraction_channel(k: KIDecomposition) -> Superoperator:
    """Quantum-classical channel ``rho -> sum_i |i><i| (x) P_i rho P_i``.

    Its classical marginal is the classical part, its quantum marginal the
    pinched (undisturbed) state. Heisenberg input is ``C^|I| (x) C^d``.
    """
    projs, rest = _embedded_projections(k)
    if fro(rest) > 0.5:
        projs = [projs[0] + rest] + projs[1:]
    r = len(projs)
    kraus = []
    for i, p in enumerate(projs):
        ket = np.zeros((r, 1))
        ket[i, 0] = 1
        kraus.append(np.kron(ket, p))
    return from_kraus(kraus)
