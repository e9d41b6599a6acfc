"""Finite-dimensional channels in the Heisenberg and Schrodinger pictures.

A :class:`Superoperator` stores the Choi matrix of a Heisenberg-picture map
``L: M_in -> M_out``::

    choi = sum_ij E_ij (x) L(E_ij)

with ``E_ij`` the matrix units of ``M_in``. The Schrodinger-picture map
``L*: M_out -> M_in`` is the trace dual, ``tr(L*(rho) X) = tr(rho L(X))``.
Kraus operators ``K`` (shape ``in_dim x out_dim``) act as
``L(X) = sum K^dag X K`` and ``L*(rho) = sum K rho K^dag``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ShapeMismatch, ValidationError
from .linalg import (
    DEFAULT_TOL,
    Tolerance,
    dagger,
    fro,
    hermitian_part,
    matrix_from_json,
    matrix_to_json,
    trace_norm,
)

HEISENBERG = "heisenberg"
SCHRODINGER = "schrodinger"


@dataclass(eq=False)
class Superoperator:
    in_dim: int
    out_dim: int
    choi: np.ndarray
    kraus: list | None = None

    def __post_init__(self):
        self.choi = np.asarray(self.choi, dtype=complex)
        n = self.in_dim * self.out_dim
        if self.choi.shape != (n, n):
            raise ShapeMismatch(f"Choi matrix must be {n}x{n}, got {self.choi.shape}")

    @property
    def choi4(self) -> np.ndarray:
        """Choi as ``C[i, a, j, b] = L(E_ij)[a, b]``."""
        return self.choi.reshape(self.in_dim, self.out_dim, self.in_dim, self.out_dim)

    def __call__(self, x):
        return apply(self, x, HEISENBERG)

    def dual(self, rho):
        return apply(self, rho, SCHRODINGER)


def apply(ch: Superoperator, x, picture: str = HEISENBERG) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if picture == HEISENBERG:
        if x.shape != (ch.in_dim, ch.in_dim):
            raise ShapeMismatch(f"Heisenberg input must be {ch.in_dim}x{ch.in_dim}, got {x.shape}")
        return np.einsum("ij,iajb->ab", x, ch.choi4)
    if picture == SCHRODINGER:
        if x.shape != (ch.out_dim, ch.out_dim):
            raise ShapeMismatch(f"Schrodinger input must be {ch.out_dim}x{ch.out_dim}, got {x.shape}")
        return np.einsum("iajb,ba->ji", ch.choi4, x)
    raise ValueError(f"unknown picture {picture!r}")


# ---------------------------------------------------------------------------
# constructors


def from_heisenberg(f: Callable[[np.ndarray], np.ndarray], in_dim: int, out_dim: int) -> Superoperator:
    """Choi assembly of a linear Heisenberg map given as a function."""
    c = np.zeros((in_dim, out_dim, in_dim, out_dim), dtype=complex)
    for i in range(in_dim):
        for j in range(in_dim):
            e = np.zeros((in_dim, in_dim), dtype=complex)
            e[i, j] = 1
            c[i, :, j, :] = f(e)
    return Superoperator(in_dim, out_dim, c.reshape(in_dim * out_dim, -1))


def from_schrodinger(f: Callable[[np.ndarray], np.ndarray], out_dim: int, in_dim: int) -> Superoperator:
    """Superoperator whose Schrodinger action ``M_out -> M_in`` is ``f``."""
    c = np.zeros((in_dim, out_dim, in_dim, out_dim), dtype=complex)
    for a in range(out_dim):
        for b in range(out_dim):
            e = np.zeros((out_dim, out_dim), dtype=complex)
            e[b, a] = 1
            # L*(E_ba)[j, i] = C[i, a, j, b]
            c[:, a, :, b] = f(e).T
    return Superoperator(in_dim, out_dim, c.reshape(in_dim * out_dim, -1))


def from_kraus(kraus) -> Superoperator:
    ks = [np.asarray(k, dtype=complex) for k in kraus]
    if not ks:
        raise ValidationError("empty Kraus list")
    in_dim, out_dim = ks[0].shape
    for k in ks:
        if k.shape != (in_dim, out_dim):
            raise ShapeMismatch("Kraus operators must share one shape")
    vecs = np.stack([k.conj().reshape(-1) for k in ks])
    choi = vecs.T @ vecs.conj()
    return Superoperator(in_dim, out_dim, choi, ks)


def identity_channel(d: int) -> Superoperator:
    return from_kraus([np.eye(d)])


def unitary_channel(u) -> Superoperator:
    """Heisenberg map ``X -> U^dag X U``."""
    return from_kraus([u])


def pinching(projections) -> Superoperator:
    return from_kraus(list(projections))


def reprepare(sigma) -> Superoperator:
    """Heisenberg map ``X -> tr(X sigma) 1``; Schrodinger ``rho -> tr(rho) sigma``."""
    sigma = np.asarray(sigma, dtype=complex)
    d = sigma.shape[0]
    return from_heisenberg(lambda x: np.trace(x @ sigma) * np.eye(d), d, d)


def transpose_map(d: int) -> Superoperator:
    return from_heisenberg(lambda x: x.T, d, d)


# ---------------------------------------------------------------------------
# checks


def is_cptp_unital(ch: Superoperator, tol: Tolerance = DEFAULT_TOL) -> dict:
    """CP / TP / unital flags, stated for the Schrodinger-picture map.

    ``tp``: the Schrodinger map preserves trace, i.e. ``L(1) = 1``.
    ``unital``: the Schrodinger map fixes the identity.
    """
    c = hermitian_part(ch.choi)
    scale = max(1.0, float(np.max(np.abs(c))))
    cp = bool(np.linalg.eigvalsh(c)[0] >= -tol.residual * scale)
    c4 = ch.choi4
    heis_unit = np.einsum("iaib->ab", c4)
    schr_unit = np.einsum("iaja->ij", c4).T
    return {
        "cp": cp,
        "tp": bool(fro(heis_unit - np.eye(ch.out_dim)) <= tol.residual),
        "unital": bool(fro(schr_unit - np.eye(ch.in_dim)) <= tol.residual),
    }


def schwarz_block_check(ch: Superoperator, a, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Pointwise Schwarz test via positivity of the 2 x 2 block matrix."""
    a = np.asarray(a, dtype=complex)
    ad = dagger(a)
    blk = np.block([[ch(ad @ a), ch(ad)], [ch(a), np.eye(ch.out_dim)]])
    blk = hermitian_part(blk)
    scale = max(1.0, fro(blk))
    return bool(np.linalg.eigvalsh(blk)[0] >= -tol.residual * scale)


def multiplicative_domain_member(ch: Superoperator, a, tol: Tolerance = DEFAULT_TOL) -> bool:
    a = np.asarray(a, dtype=complex)
    ad = dagger(a)
    la, lad = ch(a), ch(ad)
    bound = tol.residual * (1 + fro(a) ** 2)
    return fro(ch(ad @ a) - lad @ la) <= bound and fro(ch(a @ ad) - la @ lad) <= bound


def preserves_experiment(ch: Superoperator, e, tol: Tolerance = DEFAULT_TOL) -> bool:
    return disturbance(ch, e) <= tol.residual


def disturbance(ch: Superoperator, e) -> float:
    """Largest trace-norm change of a state of ``e`` under the Schrodinger map."""
    if ch.in_dim != ch.out_dim or ch.in_dim != e.dim:
        raise ShapeMismatch("channel must be square and match the experiment dimension")
    return max(trace_norm(ch.dual(rho) - rho) for rho in e.states)


# ---------------------------------------------------------------------------
# JSON


def channel_to_json(ch: Superoperator) -> dict:
    return {"in_dim": ch.in_dim, "out_dim": ch.out_dim, "choi": matrix_to_json(ch.choi)}


def channel_from_json(obj) -> Superoperator:
    if not isinstance(obj, dict):
        raise ValidationError("channel must be a JSON object")
    if set(obj) == {"kraus"}:
        if not isinstance(obj["kraus"], list):
            raise ValidationError("kraus must be a list of matrices")
        return from_kraus([matrix_from_json(k) for k in obj["kraus"]])
    if set(obj) != {"in_dim", "out_dim", "choi"}:
        raise ValidationError(f"bad channel fields: {sorted(obj)}")
    return Superoperator(int(obj["in_dim"]), int(obj["out_dim"]), matrix_from_json(obj["choi"]))
