"""Subspaces and *-subalgebras of d x d matrices.

A subspace is stored as a Hilbert-Schmidt orthonormal basis. Internally the
basis is handled as a ``(k, d*d)`` array of row-major vectorized matrices
with orthonormal rows, which turns most operations into small dense
linear-algebra problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousRank, NonConvergence, ShapeMismatch, VerificationFailed
from .linalg import (
    AMBIGUITY_FACTOR,
    DEFAULT_TOL,
    Tolerance,
    cluster_values,
    dagger,
    fro,
    support_projection,
)

# upper bound on the number of complex entries materialized per product batch
_BATCH_ENTRIES = 1 << 22


@dataclass(frozen=True, eq=False)
class OperatorSubspace:
    ambient_dim: int
    basis: np.ndarray  # shape (k, d, d), orthonormal under tr(X^dag Y)

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    @property
    def vecs(self) -> np.ndarray:
        return self.basis.reshape(self.dim, self.ambient_dim ** 2)

    def __len__(self):
        return self.dim


@dataclass(frozen=True, eq=False)
class OperatorAlgebra(OperatorSubspace):
    unit: np.ndarray = None


def _from_vecs(d: int, q: np.ndarray) -> OperatorSubspace:
    return OperatorSubspace(d, np.ascontiguousarray(q).reshape(q.shape[0], d, d))


def _as_stack(mats, d: int | None = None) -> np.ndarray:
    if isinstance(mats, OperatorSubspace):
        return mats.basis
    arr = [np.asarray(m, dtype=complex) for m in mats]
    if not arr:
        if d is None:
            raise ShapeMismatch("cannot infer ambient dimension from an empty list")
        return np.zeros((0, d, d), dtype=complex)
    d0 = arr[0].shape[0]
    for m in arr:
        if m.shape != (d0, d0):
            raise ShapeMismatch(f"matrices must share a square shape, got {m.shape} and {(d0, d0)}")
    if d is not None and d0 != d:
        raise ShapeMismatch(f"ambient dimension {d0} != {d}")
    return np.stack(arr)


def orthonormalize_span(mats, tol: Tolerance = DEFAULT_TOL, d: int | None = None) -> OperatorSubspace:
    """Orthonormal basis of the span of ``mats`` (rank via relative singular values)."""
    stack = _as_stack(mats, d)
    d = stack.shape[1] if d is None else d
    if stack.shape[0] == 0:
        return _from_vecs(d, np.zeros((0, d * d), dtype=complex))
    a = stack.reshape(stack.shape[0], -1)
    _, s, vh = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0:
        return _from_vecs(d, np.zeros((0, d * d), dtype=complex))
    cut = tol.rank_cut * s[0]
    _check_band(s, cut, "span rank")
    return _from_vecs(d, vh[s > cut])


def _check_band(s: np.ndarray, cut: float, what: str) -> None:
    near = (s > cut / AMBIGUITY_FACTOR) & (s < cut * AMBIGUITY_FACTOR)
    if np.any(near):
        raise AmbiguousRank(f"{what}: singular value {s[near][0]:.3e} near cut {cut:.3e}")


def _project_out(q: np.ndarray, x: np.ndarray) -> np.ndarray:
    if q.shape[0] == 0:
        return x
    for _ in range(2):
        x = x - (x @ q.conj().T) @ q
    return x


def _grow(q: np.ndarray, cands: np.ndarray, threshold: float) -> np.ndarray:
    """Append to ``q`` the directions of ``cands`` outside its row space.

    Candidates are expected to have Frobenius norm at most 1, so the
    threshold is absolute. Candidates are processed in chunks so each SVD
    stays small; later chunks are projected against the grown basis.
    """
    full = cands.shape[1]
    chunk = max(64, 2 * full)
    for start in range(0, cands.shape[0], chunk):
        if q.shape[0] >= full:
            break
        r = _project_out(q, cands[start:start + chunk])
        norms = np.linalg.norm(r, axis=1)
        r = r[norms > threshold / AMBIGUITY_FACTOR]
        if r.shape[0] == 0:
            continue
        _, s, vh = np.linalg.svd(r, full_matrices=False)
        _check_band(s, threshold, "closure step")
        new = vh[s > threshold]
        if new.shape[0]:
            new = _project_out(q, new)
            qq, _ = np.linalg.qr(new.T)
            q = np.concatenate([q, qq.T], axis=0)
    return q


def contains(s: OperatorSubspace, x, tol: Tolerance = DEFAULT_TOL) -> bool:
    x = np.asarray(x, dtype=complex)
    if x.shape != (s.ambient_dim, s.ambient_dim):
        raise ShapeMismatch(f"matrix shape {x.shape} does not match ambient dim {s.ambient_dim}")
    v = x.reshape(-1)
    r = _project_out(s.vecs, v[None, :])[0]
    return fro(r) <= tol.residual * max(1.0, fro(v))


def project(s: OperatorSubspace, x) -> np.ndarray:
    """Hilbert-Schmidt orthogonal projection of ``x`` onto ``s``."""
    q = s.vecs
    v = np.asarray(x, dtype=complex).reshape(-1)
    return ((q.conj() @ v) @ q).reshape(s.ambient_dim, s.ambient_dim)


def mutually_contained(a: OperatorSubspace, b: OperatorSubspace, tol: Tolerance = DEFAULT_TOL) -> bool:
    return (
        a.dim == b.dim
        and all(contains(b, x, tol) for x in a.basis)
        and all(contains(a, x, tol) for x in b.basis)
    )


def containment_residual(a: OperatorSubspace, b: OperatorSubspace) -> float:
    """Largest distance of a basis element of one subspace from the other."""
    worst = 0.0
    for x, y in ((a, b), (b, a)):
        if x.dim:
            r = _project_out(y.vecs, x.vecs)
            worst = max(worst, float(np.max(np.linalg.norm(r, axis=1))))
    return worst


# ---------------------------------------------------------------------------
# closure


class _Derivation:
    """Spectral projections of X -> [H, X].

    A subspace is invariant under the bracket iff it is invariant under every
    spectral projection of the bracket map. The projections are masks in the
    eigenbasis of H, grouped by (clustered) eigenvalue differences.
    """

    def __init__(self, h: np.ndarray, tol: Tolerance):
        w, v = np.linalg.eigh((h + dagger(h)) / 2)
        self.h = h
        self.v = v
        diffs = (w[:, None] - w[None, :]).reshape(-1)
        scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
        labels = np.empty(diffs.size, dtype=int)
        clusters = cluster_values(diffs, tol.cluster_gap * scale)
        for c, idx in enumerate(clusters):
            labels[idx] = c
        labels = labels.reshape(w.size, w.size)
        self.masks = [labels == c for c in range(len(clusters))]

    def images(self, mats: np.ndarray) -> np.ndarray:
        v = self.v
        rot = dagger(v)[None] @ mats @ v[None]
        out = [v[None] @ (rot * m[None]) @ dagger(v)[None] for m in self.masks]
        return np.concatenate(out, axis=0)


def _products(frontier: np.ndarray, basis: np.ndarray, d: int) -> np.ndarray:
    """All products f@b and b@f for f in frontier, b in basis (vectorized rows)."""
    f = frontier.reshape(-1, d, d)
    b = basis.reshape(-1, d, d)
    left = np.einsum("fij,kjl->fkil", f, b).reshape(-1, d * d)
    right = np.einsum("kij,fjl->fkil", b, f).reshape(-1, d * d)
    return np.concatenate([left, right], axis=0)


def close_algebra(
    seed,
    derivations=(),
    tol: Tolerance = DEFAULT_TOL,
) -> OperatorAlgebra:
    """Smallest subspace containing ``seed`` closed under adjoint, products
    and every bracket ``X -> [H, X]`` with H in ``derivations``.

    Each round runs an adjoint/bracket pass, then a product pass, then
    re-checks adjoint and bracket invariance of the whole basis; it stops
    once a round adds nothing. Elements created by products need no bracket
    pass of their own (brackets are derivations), so only the re-check
    touches them.
    """
    seed_space = seed if isinstance(seed, OperatorSubspace) else orthonormalize_span(seed, tol)
    d = seed_space.ambient_dim
    full = d * d
    threshold = tol.rank_cut
    ders = [_Derivation(np.asarray(h, dtype=complex), tol) for h in derivations]

    q = seed_space.vecs.copy()
    pending = 0  # q[pending:] still needs the adjoint/bracket pass
    multiplied = 0  # all products among q[:multiplied] are in the span
    for _ in range(full + 2):
        # adjoint + bracket pass
        while pending < q.shape[0] < full:
            mats = q[pending:].reshape(-1, d, d)
            cands = [np.conj(np.transpose(mats, (0, 2, 1))).reshape(-1, full)]
            cands += [der.images(mats).reshape(-1, full) for der in ders]
            pending = q.shape[0]
            q = _grow(q, np.concatenate(cands, axis=0), threshold)
        # product pass
        while multiplied < q.shape[0] < full:
            stop = q.shape[0]
            per = max(1, _BATCH_ENTRIES // (2 * stop * full))
            for start in range(multiplied, stop, per):
                q = _grow(q, _products(q[start:min(start + per, stop)], q, d), threshold)
                if q.shape[0] >= full:
                    break
            multiplied = stop
        if q.shape[0] >= full:
            break
        # re-check of adjoint and bracket invariance on the whole basis
        mats = q.reshape(-1, d, d)
        cands = [np.conj(np.transpose(mats, (0, 2, 1))).reshape(-1, full)]
        for der in ders:
            br = der.h[None] @ mats - mats @ der.h[None]
            cands.append(br.reshape(-1, full) / (2 * max(fro(der.h), 1.0)))
        before = q.shape[0]
        pending = before
        q = _grow(q, np.concatenate(cands, axis=0), threshold)
        if q.shape[0] == before:
            break
    else:
        raise NonConvergence("closure did not stabilize within d^2 rounds")

    if q.shape[0] >= full:
        return full_algebra(d)
    return _as_algebra(_from_vecs(d, q), tol)


def _as_algebra(s: OperatorSubspace, tol: Tolerance, unit=None) -> OperatorAlgebra:
    d = s.ambient_dim
    if unit is None:
        if s.dim == 0:
            unit = np.zeros((d, d), dtype=complex)
        else:
            acc = np.einsum("kij,klj->il", s.basis, s.basis.conj())
            unit = support_projection(acc, tol).matrix
        for b in s.basis:
            if fro(unit @ b - b) > tol.residual or fro(b @ unit - b) > tol.residual:
                raise VerificationFailed("computed unit does not act as identity on the algebra")
    return OperatorAlgebra(d, s.basis, unit)


def algebra_from_basis(s: OperatorSubspace, tol: Tolerance = DEFAULT_TOL, unit=None) -> OperatorAlgebra:
    return _as_algebra(s, tol, unit)


def full_algebra(d: int) -> OperatorAlgebra:
    return OperatorAlgebra(d, np.eye(d * d, dtype=complex).reshape(-1, d, d), np.eye(d, dtype=complex))


def scalars(d: int) -> OperatorAlgebra:
    return OperatorAlgebra(d, (np.eye(d, dtype=complex) / np.sqrt(d))[None], np.eye(d, dtype=complex))


# ---------------------------------------------------------------------------
# commutant, intersection, center


def _commutator_gram(s: OperatorSubspace) -> np.ndarray:
    """Gram operator sum_b L_b^dag L_b of the maps L_b: X -> bX - Xb.

    Only depends on the subspace, not on the chosen orthonormal basis.
    """
    d = s.ambient_dim
    b = s.basis
    eye = np.eye(d, dtype=complex)
    c1 = np.einsum("kji,kjl->il", b.conj(), b)  # sum b^dag b
    c2 = np.einsum("kij,klj->il", b, b.conj()).conj()  # sum conj(b b^dag)
    q = s.vecs
    pm = q.T @ q.conj()
    r = pm.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    return np.kron(c1, eye) + np.kron(eye, c2) - r - dagger(r)


def commutant(s: OperatorSubspace, tol: Tolerance = DEFAULT_TOL) -> OperatorAlgebra:
    """All X commuting with every element of ``s``; an algebra with unit 1."""
    d = s.ambient_dim
    g = _commutator_gram(s)
    w, v = np.linalg.eigh((g + dagger(g)) / 2)
    # orthonormal basis elements keep G at scale O(1); floor the reference so
    # a pure-noise G (central S) does not define its own cut
    top = max(float(w[-1]) if w.size else 0.0, 1.0)
    cut = tol.rank_cut * top
    _check_band(w, cut, "commutant null space")
    null = v[:, w <= cut].T
    return OperatorAlgebra(d, _from_vecs(d, null).basis, np.eye(d, dtype=complex))


def intersect(a: OperatorSubspace, b: OperatorSubspace, tol: Tolerance = DEFAULT_TOL) -> OperatorSubspace:
    """Intersection via principal angles: cosines within cluster_gap of 1."""
    d = a.ambient_dim
    if a.dim == 0 or b.dim == 0:
        return _from_vecs(d, np.zeros((0, d * d), dtype=complex))
    m = a.vecs.conj() @ b.vecs.T
    u, s, _ = np.linalg.svd(m, full_matrices=True)
    s_full = np.zeros(a.dim)
    s_full[: s.size] = s
    defect = 1.0 - s_full
    gap = tol.cluster_gap
    near = (defect > gap / AMBIGUITY_FACTOR) & (defect < gap * AMBIGUITY_FACTOR)
    if np.any(near):
        raise AmbiguousRank(f"intersection: principal cosine 1-{defect[near][0]:.3e} near gap {gap:.1e}")
    sel = defect <= gap
    vecs = u[:, sel].T @ a.vecs
    qq, _ = np.linalg.qr(vecs.T) if vecs.shape[0] else (vecs.T, None)
    return _from_vecs(d, qq.T)


def center(a: OperatorAlgebra, tol: Tolerance = DEFAULT_TOL) -> OperatorAlgebra:
    if a.dim == a.ambient_dim ** 2:
        return scalars(a.ambient_dim)
    z = intersect(a, commutant(a, tol), tol)
    return OperatorAlgebra(a.ambient_dim, z.basis, a.unit)


def compress(a: OperatorAlgebra, p: np.ndarray, tol: Tolerance = DEFAULT_TOL) -> OperatorAlgebra:
    """The corner algebra p A p for a projection p (central or in A)."""
    mats = np.einsum("ij,kjl,lm->kim", p, a.basis, p)
    return OperatorAlgebra(a.ambient_dim, orthonormalize_span(mats, tol, a.ambient_dim).basis, p)


def conjugate(s: OperatorSubspace, u: np.ndarray) -> OperatorSubspace:
    """The subspace U S U^dag (U unitary); orthonormality is preserved."""
    b = np.einsum("ij,kjl,ml->kim", u, s.basis, u.conj())
    if isinstance(s, OperatorAlgebra):
        return OperatorAlgebra(s.ambient_dim, b, u @ s.unit @ dagger(u))
    return OperatorSubspace(s.ambient_dim, b)


def is_closed(a: OperatorSubspace, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Membership test for X^dag and XY over all basis pairs."""
    d = a.ambient_dim
    q = a.vecs
    adj = np.conj(np.transpose(a.basis, (0, 2, 1))).reshape(-1, d * d)
    if np.max(np.linalg.norm(_project_out(q, adj), axis=1), initial=0.0) > tol.residual:
        return False
    prods = _products(q, q, d)
    return float(np.max(np.linalg.norm(_project_out(q, prods), axis=1), initial=0.0)) <= tol.residual
