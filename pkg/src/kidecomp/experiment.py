"""Statistical experiments: finite labelled families of density matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RetriesExhausted, ShapeMismatch, ValidationError
from .linalg import (
    DEFAULT_TOL,
    Tolerance,
    as_matrix,
    dagger,
    fro,
    haar_unitary,
    hermitian_part,
    matrix_from_json,
    matrix_to_json,
    random_density,
    support_basis,
)


@dataclass(eq=False)
class StatisticalExperiment:
    """A family of density matrices ``states[k]`` labelled by ``labels[k]``.

    ``weights`` (optional) is a strictly positive probability vector over the
    labels, used when forming the average state; ``None`` means uniform.
    """

    dim: int
    labels: list
    states: list
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.labels = [str(t) for t in self.labels]
        self.states = [as_matrix(s) for s in self.states]
        if len(self.labels) != len(self.states):
            raise ShapeMismatch("one state per label required")
        for s in self.states:
            if s.shape != (self.dim, self.dim):
                raise ShapeMismatch(f"state of shape {s.shape} in a dim-{self.dim} experiment")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)

    def __len__(self):
        return len(self.labels)

    def state(self, label) -> np.ndarray:
        return self.states[self.labels.index(str(label))]

    def resolved_weights(self, weights=None) -> np.ndarray:
        if weights is None:
            weights = self.weights
        if weights is None:
            return np.full(len(self), 1.0 / len(self))
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(self),) or np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
            raise ValidationError("weights must be a strictly positive probability vector over labels")
        return w

    def conjugated(self, u: np.ndarray) -> "StatisticalExperiment":
        """The experiment with every state replaced by ``u rho u^dag``."""
        return StatisticalExperiment(
            u.shape[0], self.labels, [u @ s @ dagger(u) for s in self.states], self.weights
        )


@dataclass(eq=False)
class PlantedGroundTruth:
    block_dims: list
    planted_unitary: np.ndarray
    planted_sigmas: list
    planted_q: dict  # label -> probability vector over blocks
    planted_rho_i_theta: list  # per block: dict label -> n_i x n_i density matrix
    labels: list = field(default_factory=list)


def validate(e: StatisticalExperiment, tol: Tolerance = DEFAULT_TOL) -> list[str]:
    """Violations of the experiment axioms; an empty list means valid."""
    problems = []
    if not e.labels:
        problems.append("no labels")
    if len(set(e.labels)) != len(e.labels):
        problems.append("duplicate labels")
    for label, rho in zip(e.labels, e.states):
        scale = max(fro(rho), 1.0)
        if fro(rho - dagger(rho)) > tol.residual * scale:
            problems.append(f"{label}: not Hermitian")
            continue
        w = np.linalg.eigvalsh(hermitian_part(rho))
        if w.size and w[0] < -tol.residual:
            problems.append(f"{label}: negative eigenvalue {w[0]:.3e}")
        tr = np.trace(rho)
        if abs(tr - 1) > tol.residual:
            problems.append(f"{label}: trace {tr.real:.6g} != 1")
    if e.weights is not None:
        w = np.asarray(e.weights, dtype=float)
        if w.shape != (len(e.labels),):
            problems.append("weights do not match labels")
        elif np.any(w <= 0) or abs(w.sum() - 1) > tol.residual:
            problems.append("weights are not a strictly positive probability vector")
    return problems


def require_valid(e: StatisticalExperiment, tol: Tolerance = DEFAULT_TOL) -> None:
    problems = validate(e, tol)
    if problems:
        raise ValidationError("invalid experiment: " + "; ".join(problems))


def average_state(e: StatisticalExperiment, weights=None) -> np.ndarray:
    w = e.resolved_weights(weights)
    return hermitian_part(sum(wt * s for wt, s in zip(w, e.states)))


def restrict_to_joint_support(e: StatisticalExperiment, tol: Tolerance = DEFAULT_TOL):
    """Restrict the experiment to the support of its average state.

    Returns the restricted experiment and the isometry ``V`` (d x d') whose
    columns span the joint support; restricted states are ``V^dag rho V``.
    """
    rho_bar = average_state(e)
    v = support_basis(rho_bar, tol)
    if v.shape[1] == e.dim:
        v = np.eye(e.dim, dtype=complex)
        return e, v
    states = [hermitian_part(dagger(v) @ s @ v) for s in e.states]
    return StatisticalExperiment(v.shape[1], e.labels, states, e.weights), v


# ---------------------------------------------------------------------------
# planted instances


def _direct_sum(blocks: list[np.ndarray]) -> np.ndarray:
    d = sum(b.shape[0] for b in blocks)
    out = np.zeros((d, d), dtype=complex)
    k = 0
    for b in blocks:
        n = b.shape[0]
        out[k:k + n, k:k + n] = b
        k += n
    return out


def planted_state(block_dims, unitary, q, rhos, sigmas) -> np.ndarray:
    """``U (sum_i q(i) rho_i (x) sigma_i) U^dag`` for one label."""
    blocks = [qi * np.kron(r, s) for qi, r, s in zip(q, rhos, sigmas)]
    return unitary @ _direct_sum(blocks) @ dagger(unitary)


def _irreducible(block_dims, labels, q, rho_blocks, tol) -> bool:
    from .minsuff import minimal_sufficient_algebra

    reduced = [
        _direct_sum([q[t][i] * rho_blocks[i][t] for i in range(len(block_dims))]) for t in labels
    ]
    e = StatisticalExperiment(reduced[0].shape[0], labels, reduced)
    target = sum(n * n for n, _ in block_dims)
    return minimal_sufficient_algebra(e, tol=tol).dim == target


def gen_planted(block_dims, num_labels: int, seed: int, tol: Tolerance = DEFAULT_TOL, max_retries: int = 100):
    """Sample an experiment with a known block decomposition.

    States are ``U (+)_i q_t(i) rho_{i,t} (x) sigma_i U^dag`` with a Haar
    random ``U``, Ginibre density matrices and Dirichlet block weights. Draws
    are rejected until the planted blocks are exactly the maximal ones,
    checked by computing the minimal sufficient algebra of the family with
    the sigma factors removed.
    """
    block_dims = [(int(n), int(m)) for n, m in block_dims]
    if not block_dims or any(n < 1 or m < 1 for n, m in block_dims):
        raise ValidationError("block dims must be positive pairs")
    if num_labels < 1:
        raise ValidationError("need at least one label")
    d = sum(n * m for n, m in block_dims)
    if d > 64:
        raise ValidationError(f"total dimension {d} exceeds 64")
    rng = np.random.default_rng(seed)
    labels = [f"t{k}" for k in range(num_labels)]
    nb = len(block_dims)
    for _ in range(max_retries):
        sigmas = [random_density(rng, m) for _, m in block_dims]
        q = {t: rng.dirichlet(np.full(nb, 2.0)) for t in labels}
        rho_blocks = [{t: random_density(rng, n) for t in labels} for n, _ in block_dims]
        if _irreducible(block_dims, labels, q, rho_blocks, tol):
            break
    else:
        raise RetriesExhausted(f"no irreducible draw for block dims {block_dims} in {max_retries} tries")
    u = haar_unitary(rng, d)
    states = [
        hermitian_part(planted_state(block_dims, u, q[t], [rb[t] for rb in rho_blocks], sigmas))
        for t in labels
    ]
    truth = PlantedGroundTruth(block_dims, u, sigmas, q, rho_blocks, labels)
    return StatisticalExperiment(d, labels, states), truth


# ---------------------------------------------------------------------------
# JSON


def experiment_to_json(e: StatisticalExperiment) -> dict:
    out = {"dim": e.dim, "labels": list(e.labels)}
    if e.weights is not None:
        out["weights"] = [float(w) for w in e.weights]
    out["states"] = {t: matrix_to_json(s) for t, s in zip(e.labels, e.states)}
    return out


def experiment_from_json(obj) -> StatisticalExperiment:
    if not isinstance(obj, dict):
        raise ValidationError("experiment must be a JSON object")
    allowed = {"dim", "labels", "weights", "states"}
    extra = set(obj) - allowed
    if extra:
        raise ValidationError(f"unknown experiment fields: {sorted(extra)}")
    for key in ("dim", "labels", "states"):
        if key not in obj:
            raise ValidationError(f"missing experiment field {key!r}")
    d, labels, states = obj["dim"], obj["labels"], obj["states"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise ValidationError("dim must be a positive integer")
    if not isinstance(labels, list) or not labels or not all(isinstance(t, str) for t in labels):
        raise ValidationError("labels must be a nonempty list of strings")
    if len(set(labels)) != len(labels):
        raise ValidationError("duplicate labels")
    if not isinstance(states, dict) or set(states) != set(labels):
        raise ValidationError("states must map exactly the listed labels to matrices")
    weights = obj.get("weights")
    if weights is not None:
        if not isinstance(weights, list) or len(weights) != len(labels):
            raise ValidationError("weights must be a list with one entry per label")
        try:
            weights = np.asarray(weights, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValidationError("weights must be numbers") from exc
    mats = [matrix_from_json(states[t]) for t in labels]
    for m in mats:
        if m.shape != (d, d):
            raise ValidationError(f"state shape {m.shape} does not match dim {d}")
    return StatisticalExperiment(d, labels, mats, weights)


def truth_to_json(t: PlantedGroundTruth) -> dict:
    return {
        "block_dims": [list(bd) for bd in t.block_dims],
        "planted_unitary": matrix_to_json(t.planted_unitary),
        "planted_sigmas": [matrix_to_json(s) for s in t.planted_sigmas],
        "planted_q": {lab: [float(x) for x in v] for lab, v in t.planted_q.items()},
        "planted_rho_i_theta": [
            {lab: matrix_to_json(r) for lab, r in block.items()} for block in t.planted_rho_i_theta
        ],
    }
