"""Seeded property suites.

Each suite draws its instances from a seeded generator, evaluates a set of
named metrics and reports the worst value of each against its threshold.
The command-line ``verify`` command and the acceptance tests both run these.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .channels import Superoperator, from_kraus, is_cptp_unital
from .classical import (
    broadcast_channel,
    broadcast_marginal_residual,
    classical_part,
    extraction_channel,
    extraction_instrument,
    is_broadcastable,
)
from .errors import NotClassical
from .experiment import StatisticalExperiment, average_state, gen_planted
from .linalg import DEFAULT_TOL, Tolerance, dagger, fro, haar_unitary, partial_trace, trace_norm
from .minsuff import (
    PROBE_COUNT,
    cocycle_generators,
    conditional_expectation,
    hermitian_probes,
    minimal_sufficient_algebra,
)
from .opspace import containment_residual, conjugate, contains, project
from .products import check_product_classical, check_product_minimal_sufficiency
from .structure import explicit_conditional_expectation, ki_decomposition, reconstruction_residuals

DEFAULT_SIZES = {
    "planted": 100,
    "conditional": 50,
    "products": 50,
    "invariance": 25,
}

SUITES = ("fixtures", "planted", "conditional", "extraction", "broadcast", "products", "invariance")


@dataclass
class Metric:
    name: str
    threshold: float
    worst: float = 0.0
    higher_is_worse: bool = True

    def update(self, value: float) -> None:
        value = float(value)
        if self.higher_is_worse:
            self.worst = max(self.worst, value)
        else:
            self.worst = min(self.worst, value)

    @property
    def passed(self) -> bool:
        if self.higher_is_worse:
            return bool(self.worst <= self.threshold)
        return bool(self.worst >= self.threshold)


@dataclass
class SuiteResult:
    name: str
    metrics: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    instances: int = 0
    seconds: float = 0.0
    coverage: dict = field(default_factory=dict)

    def metric(self, name, threshold, higher_is_worse=True, start=None) -> Metric:
        if name not in self.metrics:
            init = 0.0 if higher_is_worse else (np.inf if start is None else start)
            self.metrics[name] = Metric(name, threshold, init, higher_is_worse)
        return self.metrics[name]

    def fail(self, message: str) -> None:
        self.failures.append(message)

    @property
    def passed(self) -> bool:
        return not self.failures and all(m.passed for m in self.metrics.values())

    def to_json(self, timing: bool = False) -> dict:
        out = {
            "suite": self.name,
            "pass": self.passed,
            "instances": self.instances,
            "metrics": {
                k: {"worst": m.worst, "threshold": m.threshold, "pass": m.passed}
                for k, m in self.metrics.items()
            },
            "failures": list(self.failures),
        }
        if self.coverage:
            out["coverage"] = dict(self.coverage)
        if timing:
            out["seconds"] = round(self.seconds, 3)
        return out


# ---------------------------------------------------------------------------
# instance generators


def random_block_dims(rng: np.random.Generator, max_dim: int = 12, max_blocks: int = 4, max_factor: int = 3):
    while True:
        nb = int(rng.integers(1, max_blocks + 1))
        dims = [(int(rng.integers(1, max_factor + 1)), int(rng.integers(1, max_factor + 1))) for _ in range(nb)]
        if sum(n * m for n, m in dims) <= max_dim:
            return dims


def embed_with_kernel(e: StatisticalExperiment, extra: int, rng: np.random.Generator) -> StatisticalExperiment:
    """Embed ``e`` isometrically into a space with ``extra`` unused dimensions."""
    d = e.dim + extra
    v = haar_unitary(rng, d)[:, : e.dim]
    return StatisticalExperiment(d, e.labels, [v @ s @ dagger(v) for s in e.states], e.weights)


def planted_instances(count: int, seed: int, max_dim: int = 12, kernel_every: int = 0):
    """Yield ``(experiment, truth)`` pairs; every ``kernel_every``-th gets a kernel."""
    rng = np.random.default_rng(seed)
    for k in range(count):
        dims = random_block_dims(rng, max_dim)
        labels = int(rng.integers(2, 5))
        e, truth = gen_planted(dims, labels, int(rng.integers(2**63)))
        if kernel_every and k % kernel_every == kernel_every - 1 and e.dim < max_dim:
            e = embed_with_kernel(e, 1, rng)
        yield e, truth


def random_small_experiment(rng: np.random.Generator, max_dim: int = 4) -> StatisticalExperiment:
    """Small experiments mixing minimal sufficient, reducible and non-faithful cases."""
    kind = rng.choice(["full", "blocks", "kernel", "pure"], p=[0.35, 0.35, 0.15, 0.15])
    d = int(rng.integers(1, max_dim + 1))
    labels = int(rng.integers(2, 4))
    s = int(rng.integers(2**63))
    if kind == "full":
        return gen_planted([(d, 1)], labels, s)[0]
    if kind == "pure" and d >= 2:
        vecs = [haar_unitary(rng, d)[:, 0] for _ in range(max(labels, d))]
        return StatisticalExperiment(d, [f"p{k}" for k in range(len(vecs))], [np.outer(v, v.conj()) for v in vecs])
    if kind == "kernel" and d >= 2:
        inner = random_small_experiment(rng, d - 1)
        return embed_with_kernel(inner, d - inner.dim, rng) if inner.dim < d else inner
    dims = random_block_dims(rng, max_dim=d, max_blocks=3, max_factor=2) if d >= 1 else [(1, 1)]
    return gen_planted(dims, labels, s)[0]


# ---------------------------------------------------------------------------
# analytic fixtures


def identical_pair(d: int = 2) -> StatisticalExperiment:
    rho = np.diag(np.arange(1, d + 1, dtype=float))
    rho = rho / np.trace(rho)
    return StatisticalExperiment(d, ["a", "b"], [rho, rho.copy()])


def commuting_pair() -> StatisticalExperiment:
    return StatisticalExperiment(2, ["a", "b"], [np.diag([0.5, 0.5]), np.diag([1 / 3, 2 / 3])])


def pure_pair() -> StatisticalExperiment:
    plus = np.full((2, 2), 0.5)
    return StatisticalExperiment(2, ["zero", "plus"], [np.diag([1.0, 0.0]), plus])


# ---------------------------------------------------------------------------
# suites


def suite_fixtures(tol: Tolerance = DEFAULT_TOL, **_) -> SuiteResult:
    res = SuiteResult("fixtures")
    cg = cocycle_generators(commuting_pair(), tol=tol)
    expected = [np.diag([6 / 5, 6 / 7]), np.diag([4 / 5, 8 / 7])]
    m = res.metric("d_matrices", 1e-12)
    for got, want in zip(cg.generators, expected):
        m.update(np.max(np.abs(got - want)))
    for name, e, dim in (("identical", identical_pair(), 1), ("commuting", commuting_pair(), 2), ("pure", pure_pair(), 4)):
        got = minimal_sufficient_algebra(e, tol=tol).dim
        res.instances += 1
        if got != dim:
            res.fail(f"M0 dimension for {name} fixture: {got} != {dim}")
    return res


def suite_planted(tol: Tolerance = DEFAULT_TOL, seed: int = 0, sizes=None, **_) -> SuiteResult:
    sizes = {**DEFAULT_SIZES, **(sizes or {})}
    res = SuiteResult("planted")
    rec = res.metric("reconstruction", tol.residual)
    qm = res.metric("q_agreement", 1e-6)
    start = time.perf_counter()
    recovered = 0
    for k, (e, truth) in enumerate(planted_instances(sizes["planted"], seed)):
        res.instances += 1
        kd = ki_decomposition(e, tol, seed=k)
        rec.update(max(reconstruction_residuals(e, kd).values()))
        if Counter(kd.block_dims) != Counter(truth.block_dims):
            res.fail(f"instance {k}: recovered {sorted(kd.block_dims)} != planted {sorted(truth.block_dims)}")
            continue
        recovered += 1
        qm.update(_planted_q_distance(kd, truth))
    res.seconds = time.perf_counter() - start
    res.metric("recovered_fraction", 1.0, higher_is_worse=False).update(recovered / max(res.instances, 1))
    return res


def _planted_q_distance(kd, truth) -> float:
    """Sup-distance of q vectors after an optimal dimension-respecting matching."""
    from scipy.optimize import linear_sum_assignment

    labels = truth.labels
    got = np.array([[b.q[t] for t in labels] for b in kd.blocks])
    want = np.array([[truth.planted_q[t][i] for t in labels] for i in range(len(truth.block_dims))])
    cost = np.max(np.abs(got[:, None] - want[None]), axis=2)
    forbid = np.array([[b.dims != tuple(td) for td in truth.block_dims] for b in kd.blocks])
    cost = np.where(forbid, 1e6, cost)
    r, c = linear_sum_assignment(cost)
    return float(np.max(cost[r, c]))


def suite_conditional(
    tol: Tolerance = DEFAULT_TOL, seed: int = 0, sizes=None, inject_bug: bool = False, **_
) -> SuiteResult:
    """Two constructions of the conditional expectation and their properties."""
    sizes = {**DEFAULT_SIZES, **(sizes or {})}
    res = SuiteResult("conditional")
    agree = res.metric("ce_agreement", 1e-7)
    eq1 = res.metric("ce_state_preservation", 1e-8)
    idem = res.metric("ce_idempotence", 1e-8)
    unital = res.metric("ce_unitality", 1e-8)
    psd = res.metric("ce_choi_min_eigenvalue", -1e-9, higher_is_worse=False)
    module = res.metric("ce_module_property", 1e-8)
    kms = res.metric("ce_kms_symmetry", 1e-8)
    ergodic = res.metric("ce_pinching_invariance", 1e-8)
    in_alg = res.metric("ce_range_in_algebra", 1e-8)
    fixes = res.metric("ce_fixes_algebra", 1e-8)
    floor = res.metric("m0_contains_generators_and_supports", 0)
    rng = np.random.default_rng(seed + 1)
    for k, (e, _) in enumerate(planted_instances(sizes["conditional"], seed + 1, kernel_every=5)):
        res.instances += 1
        kd = ki_decomposition(e, tol, seed=k)
        v = kd.support_isometry
        states = [dagger(v) @ s @ v for s in e.states]
        restricted = StatisticalExperiment(kd.support_dim, e.labels, states)
        m0 = kd.algebra
        rb = average_state(restricted)
        proj = conditional_expectation(m0, rb, tol, check=not inject_bug)
        if inject_bug:
            proj = Superoperator(proj.in_dim, proj.out_dim, -proj.choi)
        expl = explicit_conditional_expectation(kd)
        d = kd.support_dim
        probes = hermitian_probes(rng, d, PROBE_COUNT)
        rb_half = _sqrtm(rb)
        pinch = from_kraus([b.projection for b in kd.blocks])
        for a in probes:
            pa, ea = proj(a), expl(a)
            agree.update(fro(pa - ea))
            for rho in states:
                eq1.update(abs(np.trace(rho @ pa) - np.trace(rho @ a)))
            idem.update(fro(proj(pa) - pa))
            in_alg.update(fro(pa - project(m0, pa)))
            ergodic.update(max(fro(proj(pinch(a)) - pa), fro(pinch(pa) - pa)))
        for a, bb in zip(probes[:20], probes[20:40]):
            lhs = np.trace(rb_half @ dagger(proj(a)) @ rb_half @ bb)
            rhs = np.trace(rb_half @ dagger(a) @ rb_half @ proj(bb))
            kms.update(abs(lhs - rhs))
        for a in probes[:20]:
            b1, b2 = _random_member(rng, m0), _random_member(rng, m0)
            module.update(fro(proj(b1 @ a @ b2) - b1 @ proj(a) @ b2))
        unital.update(fro(proj(np.eye(d)) - np.eye(d)))
        psd.update(np.linalg.eigvalsh((proj.choi + dagger(proj.choi)) / 2)[0])
        for b in m0.basis:
            fixes.update(fro(proj(b) - b))
        gens = cocycle_generators(restricted, tol=tol).generators
        supports = [_support(s, tol) for s in states]
        missing = sum(not contains(m0, x, tol) for x in [*gens, *supports])
        floor.update(missing)
    return res


def _sqrtm(rho):
    w, v = np.linalg.eigh(rho)
    return (v * np.sqrt(np.clip(w, 0, None))) @ dagger(v)


def _support(rho, tol):
    from .linalg import support_projection

    return support_projection(rho, tol).matrix


def _random_member(rng, alg):
    c = rng.standard_normal(alg.dim) + 1j * rng.standard_normal(alg.dim)
    return np.einsum("k,kij->ij", c / np.linalg.norm(c), alg.basis)


def suite_extraction(tol: Tolerance = DEFAULT_TOL, seed: int = 0, sizes=None, **_) -> SuiteResult:
    """Pinching along the block projections: no disturbance, outcomes = classical part."""
    sizes = {**DEFAULT_SIZES, **(sizes or {})}
    res = SuiteResult("extraction")
    dist = res.metric("pinching_disturbance_trace_norm", 1e-9)
    outm = res.metric("outcome_vs_classical_part", 1e-10)
    qc = res.metric("qc_channel_marginals", 1e-9)
    cptp = res.metric("pinching_not_cptp", 0)
    instances = [
        e for e, _ in planted_instances(sizes["conditional"], seed + 2, kernel_every=4)
    ] + [identical_pair(), commuting_pair(), pure_pair()]
    for k, e in enumerate(instances):
        res.instances += 1
        kd = ki_decomposition(e, tol, seed=k)
        pinch, outcomes = extraction_instrument(kd)
        cl = classical_part(kd, tol)
        flags = is_cptp_unital(pinch, tol)
        cptp.update(0 if flags["cp"] and flags["tp"] else 1)
        for t, rho in zip(e.labels, e.states):
            dist.update(trace_norm(pinch.dual(rho) - rho))
            outm.update(np.max(np.abs(outcomes[t] - cl.distributions[t])))
        qcc = extraction_channel(kd)
        r = len(kd.blocks)
        for t, rho in zip(e.labels, e.states):
            out = qcc.dual(rho)
            classical = np.diag(partial_trace(out, (r, e.dim), "B")).real
            quantum = partial_trace(out, (r, e.dim), "A")
            qc.update(max(np.max(np.abs(classical - cl.distributions[t])), trace_norm(quantum - rho)))
    return res


def suite_broadcast(tol: Tolerance = DEFAULT_TOL, **_) -> SuiteResult:
    res = SuiteResult("broadcast")
    marg = res.metric("witness_marginals", 1e-9)
    for name, e, expected in (
        ("identical", identical_pair(), True),
        ("commuting", commuting_pair(), True),
        ("pure", pure_pair(), False),
    ):
        res.instances += 1
        kd = ki_decomposition(e, tol)
        verdict = is_broadcastable(kd)
        if verdict != expected:
            res.fail(f"{name}: broadcastable={verdict}, expected {expected}")
            continue
        try:
            ch = broadcast_channel(kd)
        except NotClassical:
            if expected:
                res.fail(f"{name}: no witness for a classical experiment")
            continue
        if not expected:
            res.fail(f"{name}: witness produced for a non-classical experiment")
            continue
        flags = is_cptp_unital(ch, tol)
        if not (flags["cp"] and flags["tp"]):
            res.fail(f"{name}: witness is not CPTP")
        marg.update(broadcast_marginal_residual(ch, e))
    return res


def _product_pairs(count: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield random_small_experiment(rng), random_small_experiment(rng)


def suite_products(tol: Tolerance = DEFAULT_TOL, seed: int = 0, sizes=None, **_) -> SuiteResult:
    sizes = {**DEFAULT_SIZES, **(sizes or {})}
    res = SuiteResult("products")
    viol = res.metric("product_minimality_violations", 0)
    qres = res.metric("product_q_factorization", 1e-6)
    counts = Counter()
    for k, (e, f) in enumerate(_product_pairs(sizes["products"], seed + 3)):
        res.instances += 1
        ms_e, ms_f, ms_ef = check_product_minimal_sufficiency(e, f, tol)
        counts[(ms_e, ms_f)] += 1
        if ms_ef != (ms_e and ms_f):
            viol.update(viol.worst + 1)
            res.fail(f"pair {k}: ms(E)={ms_e} ms(F)={ms_f} but ms(E(x)F)={ms_ef}")
        rep = check_product_classical(e, f, tol, seed=k, strict=False)
        if not rep.matched:
            res.fail(f"pair {k}: product blocks {rep.product_dims} vs {rep.left_dims} x {rep.right_dims}")
        qres.update(rep.q_factorization_residual)
    res.coverage = {f"ms(E)={a},ms(F)={b}": n for (a, b), n in sorted(counts.items())}
    return res


def suite_invariance(tol: Tolerance = DEFAULT_TOL, seed: int = 0, sizes=None, **_) -> SuiteResult:
    sizes = {**DEFAULT_SIZES, **(sizes or {})}
    res = SuiteResult("invariance")
    wi = res.metric("weight_independence", 1e-8)
    uc = res.metric("unitary_covariance", 1e-8)
    rng = np.random.default_rng(seed + 4)
    for k, (e, _) in enumerate(planted_instances(sizes["invariance"], seed + 4)):
        res.instances += 1
        w1, w2 = rng.dirichlet(np.ones(len(e))), rng.dirichlet(np.ones(len(e)))
        a1 = minimal_sufficient_algebra(e, w1, tol)
        a2 = minimal_sufficient_algebra(e, w2, tol)
        if a1.dim != a2.dim:
            res.fail(f"instance {k}: weight-dependent M0 dimension {a1.dim} vs {a2.dim}")
        else:
            wi.update(containment_residual(a1, a2))
        u = haar_unitary(rng, e.dim)
        a0 = minimal_sufficient_algebra(e, tol=tol)
        au = minimal_sufficient_algebra(e.conjugated(u), tol=tol)
        if au.dim != a0.dim:
            res.fail(f"instance {k}: conjugation changed M0 dimension")
        else:
            uc.update(containment_residual(conjugate(a0, u), au))
        k0 = ki_decomposition(e, tol, seed=k)
        ku = ki_decomposition(e.conjugated(u), tol, seed=k)
        if Counter(k0.block_dims) != Counter(ku.block_dims):
            res.fail(f"instance {k}: conjugation changed block dims")
    return res


RUNNERS = {
    "fixtures": suite_fixtures,
    "planted": suite_planted,
    "conditional": suite_conditional,
    "extraction": suite_extraction,
    "broadcast": suite_broadcast,
    "products": suite_products,
    "invariance": suite_invariance,
}


def run_suites(names=None, tol: Tolerance = DEFAULT_TOL, seed: int = 0, sizes=None, inject_bug: bool = False):
    names = list(SUITES) if not names or names == ["all"] else names
    out = []
    for name in names:
        start = time.perf_counter()
        result = RUNNERS[name](tol=tol, seed=seed, sizes=sizes, inject_bug=inject_bug)
        if not result.seconds:
            result.seconds = time.perf_counter() - start
        out.append(result)
    return out
