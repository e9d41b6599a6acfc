"""Block structure of the minimal sufficient algebra and the full decomposition.

Pipeline: restrict to the joint support, compute the minimal sufficient
algebra, split it by its minimal central projections, factor each block as
``M_n (x) 1_m`` and read off the block weights ``q_t(i)``, the block states
``rho_{i,t}`` and the label-independent factors ``sigma_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import Superoperator, from_heisenberg
from .errors import NonIntegralMultiplicity, RetriesExhausted, VerificationFailed
from .experiment import (
    StatisticalExperiment,
    average_state,
    require_valid,
    restrict_to_joint_support,
)
from .linalg import (
    AMBIGUITY_FACTOR,
    DEFAULT_TOL,
    Projection,
    Tolerance,
    cluster_values,
    dagger,
    fro,
    hermitian_part,
    matrix_from_json,
    matrix_to_json,
    partial_trace,
    support_basis,
)
from .minsuff import PROBE_COUNT, conditional_expectation, hermitian_probes, minimal_sufficient_algebra
from .opspace import OperatorAlgebra, center, compress, contains, orthonormalize_span

MAX_DRAWS = 10


@dataclass(eq=False)
class Block:
    """One summand ``H_i (x) K_i``; matrices live on the support space.

    ``unitary`` is an ``(n*m) x d'`` co-isometry with ``U U^dag = 1`` and
    ``U^dag U = projection``.
    """

    projection: np.ndarray
    n: int
    m: int
    unitary: np.ndarray
    sigma: np.ndarray
    q: dict
    rho: dict
    q_zero_flags: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.n * self.m

    @property
    def dims(self) -> tuple[int, int]:
        return (self.n, self.m)

    def embed(self, x: np.ndarray) -> np.ndarray:
        """Map an operator on C^n (x) C^m into the support space."""
        return dagger(self.unitary) @ x @ self.unitary

    def local(self, a: np.ndarray) -> np.ndarray:
        """Compress a support-space operator to C^n (x) C^m."""
        return self.unitary @ a @ dagger(self.unitary)


@dataclass(eq=False)
class KIDecomposition:
    blocks: list
    support_isometry: np.ndarray
    source_dim: int
    labels: list
    algebra: OperatorAlgebra | None = None
    reference: np.ndarray | None = None

    @property
    def support_dim(self) -> int:
        return self.support_isometry.shape[1]

    @property
    def block_dims(self) -> list[tuple[int, int]]:
        return [b.dims for b in self.blocks]

    def q_vector(self, label) -> np.ndarray:
        return np.array([b.q[label] for b in self.blocks])

    def reconstruct(self, label) -> np.ndarray:
        """``sum_i q(i) rho_i (x) sigma_i`` embedded back into the source space."""
        v = self.support_isometry
        acc = sum(b.q[label] * b.embed(np.kron(b.rho[label], b.sigma)) for b in self.blocks)
        return v @ acc @ dagger(v)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _hermitian_basis(a, tol: Tolerance) -> np.ndarray:
    mats = np.concatenate([a.basis + dagger_stack(a.basis), 1j * (a.basis - dagger_stack(a.basis))])
    return orthonormalize_span(mats, tol, a.ambient_dim).basis


def dagger_stack(x: np.ndarray) -> np.ndarray:
    return np.conj(np.transpose(x, (0, 2, 1)))


def _generic_hermitian(rng, herm_basis: np.ndarray) -> np.ndarray:
    c = rng.standard_normal(len(herm_basis))
    return hermitian_part(np.einsum("k,kij->ij", c / np.linalg.norm(c), herm_basis))


def _clusters_ok(values: np.ndarray, gap: float) -> bool:
    steps = np.diff(np.sort(values))
    return not np.any((steps > gap / AMBIGUITY_FACTOR) & (steps < gap * AMBIGUITY_FACTOR))


def minimal_central_projections(a: OperatorAlgebra, tol: Tolerance = DEFAULT_TOL, seed=0) -> list[Projection]:
    """Minimal projections of the center, by clustering a generic central element."""
    rng = _rng(seed)
    z = center(a, tol)
    if z.dim == 1:
        return [Projection(a.unit, int(round(np.trace(a.unit).real)))]
    w = support_basis(a.unit, tol)
    herm = _hermitian_basis(z, tol)
    for _ in range(MAX_DRAWS):
        h = dagger(w) @ _generic_hermitian(rng, herm) @ w
        lam, vec = np.linalg.eigh(hermitian_part(h))
        gap = tol.cluster_gap * max(1.0, float(np.max(np.abs(lam))))
        if not _clusters_ok(lam, gap):
            continue
        groups = cluster_values(lam, gap)
        if len(groups) != z.dim:
            continue
        projs = []
        for idx in groups:
            cols = w @ vec[:, idx]
            projs.append(Projection(cols @ dagger(cols), len(idx)))
        if all(contains(z, p.matrix, tol) for p in projs) and all(
            center(compress(a, p.matrix, tol), tol).dim == 1 for p in projs
        ):
            return projs
    raise RetriesExhausted(f"no generic central element separated the center in {MAX_DRAWS} draws")


def factorize_block(a: OperatorAlgebra, p, tol: Tolerance = DEFAULT_TOL, seed=0):
    """Write the corner ``P A P`` as ``M_n (x) 1_m``.

    Returns ``(n, m, U, units)`` where ``U`` is an ``(n*m) x d`` co-isometry
    onto range(P) with ``U e_kl U^dag = |k><l| (x) 1_m`` for the matrix units
    ``units[k, l]`` (each ``d x d``).
    """
    rng = _rng(seed)
    pm = p.matrix if isinstance(p, Projection) else np.asarray(p, dtype=complex)
    w = support_basis(pm, tol)
    r = w.shape[1]
    local = orthonormalize_span(np.einsum("ji,kjl,lm->kim", w.conj(), a.basis, w), tol, r)
    n = int(round(np.sqrt(local.dim)))
    if n * n != local.dim:
        raise NonIntegralMultiplicity(f"block algebra dimension {local.dim} is not a square")
    if r % n:
        raise NonIntegralMultiplicity(f"block rank {r} is not a multiple of n={n}")
    m = r // n
    herm = _hermitian_basis(local, tol)
    for _ in range(MAX_DRAWS):
        lam, vec = np.linalg.eigh(_generic_hermitian(rng, herm))
        gap = tol.cluster_gap * max(1.0, float(np.max(np.abs(lam))))
        groups = cluster_values(lam, gap)
        if not _clusters_ok(lam, gap) or len(groups) != n or any(len(g) != m for g in groups):
            continue
        frames = [vec[:, g] for g in groups]
        c = np.einsum("k,kij->ij", rng.standard_normal(local.dim) + 1j * rng.standard_normal(local.dim), local.basis)
        cols = [frames[0]]
        ok = True
        for fk in frames[1:]:
            blk = dagger(fk) @ c @ frames[0]
            scale2 = float(np.trace(dagger(blk) @ blk).real) / m
            if scale2 < 1e-6 * fro(c) ** 2 / r:
                ok = False
                break
            u = blk / np.sqrt(scale2)
            if fro(dagger(u) @ u - np.eye(m)) > np.sqrt(tol.residual):
                ok = False
                break
            # polar factor of an (almost) unitary block
            uu, _, vh = np.linalg.svd(u)
            cols.append(fk @ (uu @ vh))
        if not ok:
            continue
        ucols = np.concatenate(cols, axis=1)  # r x r unitary, column index k*m + j
        if not _factor_check(local, ucols, n, m, tol):
            continue
        big = w @ ucols
        units = np.empty((n, n) + pm.shape, dtype=complex)
        for k in range(n):
            for l in range(n):
                units[k, l] = big[:, k * m:(k + 1) * m] @ dagger(big[:, l * m:(l + 1) * m])
        return n, m, dagger(big), units
    raise RetriesExhausted(f"block factorization failed after {MAX_DRAWS} generic draws")


def _factor_check(local, ucols, n, m, tol) -> bool:
    for b in local.basis:
        x = dagger(ucols) @ b @ ucols
        red = partial_trace(x, (n, m), "B") / m
        if fro(x - np.kron(red, np.eye(m))) > tol.residual:
            return False
    return True


def _canonical_rotation(mat: np.ndarray) -> np.ndarray:
    """Unitary whose columns are eigenvectors of ``mat``, eigenvalues descending."""
    lam, vec = np.linalg.eigh(hermitian_part(mat))
    vec = vec[:, ::-1]
    # phase convention: largest-modulus component of each column real positive
    idx = np.argmax(np.abs(vec), axis=0)
    ph = vec[idx, np.arange(vec.shape[1])]
    return vec * (np.abs(ph) / ph)


def ki_decomposition(e: StatisticalExperiment, tol: Tolerance = DEFAULT_TOL, seed=0) -> KIDecomposition:
    """Koashi-Imoto decomposition of a finite family of density matrices."""
    require_valid(e, tol)
    rng = _rng(seed)
    restricted, v = restrict_to_joint_support(e, tol)
    m0 = minimal_sufficient_algebra(restricted, tol=tol)
    rb = average_state(restricted)
    blocks = []
    for proj in minimal_central_projections(m0, tol, rng):
        n, m, u, _ = factorize_block(m0, proj, tol, rng)
        ref = u @ rb @ dagger(u)
        sig = partial_trace(ref, (n, m), "A")
        hpart = partial_trace(ref, (n, m), "B")
        u = np.kron(dagger(_canonical_rotation(hpart)), dagger(_canonical_rotation(sig))) @ u
        blocks.append(_fill_block(restricted, proj.matrix, n, m, u, tol))
    first = restricted.labels[0]
    blocks.sort(key=lambda b: (b.n, b.m, -b.q[first], tuple(-np.diag(b.sigma).real)))
    k = KIDecomposition(blocks, v, e.dim, list(e.labels), m0, rb)
    worst = max(reconstruction_residuals(e, k).values())
    if worst > tol.residual:
        raise VerificationFailed(
            f"reconstruction residual {worst:.3e} exceeds {tol.residual:.1e}",
            report={"reconstruction": worst},
        )
    return k


def _fill_block(e: StatisticalExperiment, p, n, m, u, tol) -> Block:
    ref = u @ average_state(e) @ dagger(u)
    sig = partial_trace(ref, (n, m), "A")
    sig = hermitian_part(sig / np.trace(sig).real)
    q, rho, flags = {}, {}, []
    for label, state in zip(e.labels, e.states):
        qt = float(np.trace(state @ p).real)
        q[label] = qt
        if qt <= tol.residual:
            rho[label] = np.eye(n, dtype=complex) / n
            flags.append(label)
        else:
            rho[label] = hermitian_part(partial_trace(u @ state @ dagger(u), (n, m), "B") / qt)
    return Block(p, n, m, u, sig, q, rho, flags)


def reconstruction_residuals(e: StatisticalExperiment, k: KIDecomposition) -> dict:
    return {t: fro(rho - k.reconstruct(t)) for t, rho in zip(e.labels, e.states)}


def explicit_conditional_expectation(k: KIDecomposition) -> Superoperator:
    """``A -> (+)_i tr_K(P_i A P_i (1 (x) sigma_i)) (x) 1_K`` on the support space."""
    d = k.support_dim

    def ce(a):
        out = np.zeros((d, d), dtype=complex)
        for b in k.blocks:
            x = b.local(a) @ np.kron(np.eye(b.n), b.sigma)
            out += b.embed(np.kron(partial_trace(x, (b.n, b.m), "B"), np.eye(b.m)))
        return out

    return from_heisenberg(ce, d, d)


def _item(value: float, threshold: float) -> dict:
    return {"value": float(value), "threshold": float(threshold), "pass": bool(value <= threshold)}


def verify_ki(e: StatisticalExperiment, k: KIDecomposition, tol: Tolerance = DEFAULT_TOL, seed=0, probes: int = PROBE_COUNT) -> dict:
    """Check a decomposition against its contracts; returns a report dict."""
    report = {}
    rec = reconstruction_residuals(e, k)
    report["reconstruction"] = {"per_label": rec, **_item(max(rec.values()), tol.residual)}

    d = k.support_dim
    v = k.support_isometry
    report["support_isometry"] = _item(fro(dagger(v) @ v - np.eye(d)), tol.residual)
    ps = [b.projection for b in k.blocks]
    proj_err = max(max(fro(p - dagger(p)), fro(p @ p - p)) for p in ps)
    orth_err = max((fro(ps[i] @ ps[j]) for i in range(len(ps)) for j in range(i + 1, len(ps))), default=0.0)
    sum_err = fro(sum(ps) - np.eye(d))
    rank_err = max(abs(np.trace(b.projection).real - b.rank) for b in k.blocks)
    report["projections"] = _item(max(proj_err, orth_err, sum_err, rank_err), tol.residual)
    uerr = max(
        max(fro(b.unitary @ dagger(b.unitary) - np.eye(b.rank)), fro(dagger(b.unitary) @ b.unitary - b.projection))
        for b in k.blocks
    )
    report["block_unitaries"] = _item(uerr, tol.residual)
    margin = min(float(np.linalg.eigvalsh(b.sigma)[0]) for b in k.blocks)
    report["sigma_faithful"] = {"value": margin, "threshold": tol.rank_cut, "pass": bool(margin > tol.rank_cut)}
    qerr = max(abs(sum(b.q[t] for b in k.blocks) - 1) for t in k.labels)
    report["q_normalized"] = _item(qerr, tol.residual)

    restricted = StatisticalExperiment(d, e.labels, [dagger(v) @ s @ v for s in e.states], e.weights)
    explicit = explicit_conditional_expectation(k)
    rng = np.random.default_rng(seed)
    probe_set = hermitian_probes(rng, d, probes)
    try:
        m0 = minimal_sufficient_algebra(restricted, tol=tol)
        projected = conditional_expectation(m0, average_state(restricted), tol)
        agree = max(fro(explicit(a) - projected(a)) for a in probe_set)
    except Exception as exc:  # report-only: a failing route is a failed item
        agree = float("inf")
        report["ce_route_error"] = str(exc)
    report["ce_agreement"] = _item(agree, 10 * tol.residual)
    eq1 = max(
        abs(np.trace(rho @ explicit(a)) - np.trace(rho @ a)) for a in probe_set for rho in restricted.states
    )
    report["state_preservation"] = _item(eq1, tol.residual)
    report["pass"] = all(item["pass"] for item in report.values() if isinstance(item, dict) and "pass" in item)
    return report


# ---------------------------------------------------------------------------
# JSON


def decomposition_to_json(k: KIDecomposition) -> dict:
    return {
        "support_isometry": matrix_to_json(k.support_isometry),
        "blocks": [
            {
                "P": matrix_to_json(b.projection),
                "U": matrix_to_json(b.unitary),
                "n": b.n,
                "m": b.m,
                "sigma": matrix_to_json(b.sigma),
                "q": {t: float(x) for t, x in b.q.items()},
                "rho": {t: matrix_to_json(r) for t, r in b.rho.items()},
                "q_zero_flags": list(b.q_zero_flags),
            }
            for b in k.blocks
        ],
    }


def decomposition_from_json(obj, labels=None) -> KIDecomposition:
    from .errors import ValidationError

    if not isinstance(obj, dict) or set(obj) - {"support_isometry", "blocks", "schema"}:
        raise ValidationError("bad decomposition object")
    v = matrix_from_json(obj["support_isometry"])
    blocks = []
    for bo in obj["blocks"]:
        blocks.append(
            Block(
                matrix_from_json(bo["P"]),
                int(bo["n"]),
                int(bo["m"]),
                matrix_from_json(bo["U"]),
                matrix_from_json(bo["sigma"]),
                {t: float(x) for t, x in bo["q"].items()},
                {t: matrix_from_json(r) for t, r in bo["rho"].items()},
                list(bo.get("q_zero_flags", [])),
            )
        )
    if labels is None:
        labels = list(blocks[0].q) if blocks else []
    return KIDecomposition(blocks, v, v.shape[0], list(labels))
