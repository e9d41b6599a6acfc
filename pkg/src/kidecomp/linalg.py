"""Dense complex-matrix primitives shared by the whole package.

Everything here is a pure function of its inputs. Matrices are plain
``numpy.ndarray`` objects of complex dtype.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    AmbiguousRank,
    ConvergenceFailure,
    DomainError,
    NotHermitian,
    NotPSD,
    ShapeMismatch,
    ValidationError,
)

# an eigenvalue within this factor of the cut (either side) is ambiguous
AMBIGUITY_FACTOR = 10.0


@dataclass(frozen=True)
class Tolerance:
    """Numerical thresholds used throughout the package.

    ``rank_cut`` is a relative eigenvalue / singular-value cutoff,
    ``residual`` the threshold for verification residuals and
    ``cluster_gap`` the separation below which eigenvalues are merged.
    """

    rank_cut: float = 1e-9
    residual: float = 1e-8
    cluster_gap: float = 1e-6

    def __post_init__(self):
        for name in ("rank_cut", "residual", "cluster_gap"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"tolerance {name} must be positive, got {v!r}")
        if self.rank_cut >= 1:
            raise ValidationError(f"rank_cut must be < 1, got {self.rank_cut!r}")


DEFAULT_TOL = Tolerance()


@dataclass(frozen=True)
class Projection:
    matrix: np.ndarray
    rank: int


def as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=complex)
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix has non-finite entries")
    return a


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return (a + a.conj().T) / 2


def fro(a) -> float:
    return float(np.linalg.norm(a))


def trace_norm(a: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def check_hermitian(h: np.ndarray, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    h = as_matrix(h)
    if h.shape[0] != h.shape[1]:
        raise ShapeMismatch(f"square matrix required, got {h.shape}")
    if fro(h - dagger(h)) > tol.residual * max(fro(h), np.finfo(float).tiny):
        raise NotHermitian("matrix is not Hermitian within tolerance")
    return hermitian_part(h)


def eigh(h, tol: Tolerance = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix."""
    h = check_hermitian(h, tol)
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return w, v


def _check_ambiguous(values: np.ndarray, cut: float, what: str) -> None:
    near = (values > cut / AMBIGUITY_FACTOR) & (values < cut * AMBIGUITY_FACTOR)
    if np.any(near):
        raise AmbiguousRank(
            f"{what}: value {values[near][0]:.3e} within a factor "
            f"{AMBIGUITY_FACTOR:g} of the cut {cut:.3e}"
        )


def spectral_apply(
    h,
    f: Callable[[np.ndarray], np.ndarray],
    support_only: bool = False,
    tol: Tolerance = DEFAULT_TOL,
) -> np.ndarray:
    """Return ``sum_k f(lam_k) P_k`` over the spectral projections of ``h``.

    With ``support_only`` the sum runs over eigenvalues above
    ``rank_cut * lam_max``; the remaining directions are mapped to zero.
    """
    w, v = eigh(h, tol)
    if support_only:
        top = max(float(np.max(np.abs(w))), np.finfo(float).tiny) if w.size else 1.0
        keep = w > tol.rank_cut * top
    else:
        keep = np.ones(w.shape, dtype=bool)
    with np.errstate(all="ignore"):
        fw = np.asarray(f(w[keep]), dtype=complex)
    if not np.all(np.isfinite(fw)):
        raise DomainError("function is not finite on the selected spectrum")
    vk = v[:, keep]
    return (vk * fw) @ dagger(vk)


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def partial_trace(m, dims: tuple[int, int], side: str = "B") -> np.ndarray:
    """Trace out subsystem ``side`` ("A" or "B") of a matrix on ``dA x dB``."""
    m = np.asarray(m, dtype=complex)
    da, db = dims
    if m.shape != (da * db, da * db):
        raise ShapeMismatch(f"matrix of shape {m.shape} is not on dims {dims}")
    t = m.reshape(da, db, da, db)
    if side == "B":
        return np.einsum("ikjk->ij", t)
    if side == "A":
        return np.einsum("kikj->ij", t)
    raise ValueError(f"side must be 'A' or 'B', got {side!r}")


def support_projection(s, tol: Tolerance = DEFAULT_TOL) -> Projection:
    """Orthogonal projection onto the support of a PSD matrix."""
    basis = support_basis(s, tol)
    p = basis @ dagger(basis)
    return Projection(p, basis.shape[1])


def support_basis(s, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal columns spanning the support of a PSD matrix.

    Columns are ordered by descending eigenvalue.
    """
    w, v = eigh(s, tol)
    top = float(w[-1]) if w.size else 0.0
    if top <= 0:
        return np.zeros((w.size, 0), dtype=complex)
    if w[0] < -tol.residual * top:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} is negative beyond tolerance")
    cut = tol.rank_cut * top
    _check_ambiguous(w, cut, "support rank")
    keep = w > cut
    return v[:, keep][:, ::-1]


def is_projection(p, tol: Tolerance = DEFAULT_TOL) -> bool:
    p = np.asarray(p, dtype=complex)
    return fro(p - dagger(p)) <= tol.residual and fro(p @ p - p) <= tol.residual


def cluster_values(values: np.ndarray, gap: float) -> list[np.ndarray]:
    """Group sorted-order indices of ``values`` into clusters.

    Consecutive sorted values closer than ``gap`` end up in the same cluster.
    Returns index arrays (into ``values``), clusters in ascending order.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return []
    order = np.argsort(values, kind="stable")
    breaks = np.nonzero(np.diff(values[order]) > gap)[0] + 1
    return np.split(order, breaks)


# ---------------------------------------------------------------------------
# random sampling


def ginibre(rng: np.random.Generator, rows: int, cols: int | None = None) -> np.ndarray:
    cols = rows if cols is None else cols
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def random_density(rng: np.random.Generator, d: int) -> np.ndarray:
    g = ginibre(rng, d)
    rho = g @ dagger(g)
    return hermitian_part(rho / np.trace(rho).real)


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(ginibre(rng, d))
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_hermitian(rng: np.random.Generator, d: int, normalize: bool = True) -> np.ndarray:
    h = hermitian_part(ginibre(rng, d))
    if normalize:
        h = h / fro(h)
    return h


# ---------------------------------------------------------------------------
# JSON encoding


def matrix_to_json(a) -> dict:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a 2-d array, got shape {a.shape}")
    return {
        "rows": int(a.shape[0]),
        "cols": int(a.shape[1]),
        "re": a.real.tolist(),
        "im": a.imag.tolist(),
    }


def matrix_from_json(obj) -> np.ndarray:
    if not isinstance(obj, dict):
        raise ValidationError("matrix must be a JSON object")
    extra = set(obj) - {"rows", "cols", "re", "im"}
    missing = {"rows", "cols", "re", "im"} - set(obj)
    if extra or missing:
        raise ValidationError(f"bad matrix fields: extra={sorted(extra)} missing={sorted(missing)}")
    rows, cols = obj["rows"], obj["cols"]
    if not (isinstance(rows, int) and isinstance(cols, int)) or rows < 1 or cols < 1:
        raise ValidationError("rows/cols must be positive integers")
    try:
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"matrix entries must be numbers: {exc}") from exc
    if re.shape != (rows, cols) or im.shape != (rows, cols):
        raise ValidationError(f"matrix entries do not match shape {rows}x{cols}")
    return as_matrix(re + 1j * im)
