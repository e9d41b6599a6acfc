"""Command-line front end.

Exit codes: 0 ok, 1 input error, 2 numerical failure, 3 verification failure.
Reports are JSON (schema ``ki-decomp/1``) or a short text rendering, and are
written once, atomically, when the command finishes.
"""

from __future__ import annotations

import argparse
import ast
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .channels import channel_to_json, is_cptp_unital
from .classical import (
    broadcast_channel,
    broadcast_marginal_residual,
    classical_part,
    extraction_instrument,
    is_broadcastable,
)
from .errors import InputError, NumericalError, ValidationError, VerificationError
from .experiment import experiment_from_json, experiment_to_json, gen_planted, truth_to_json
from .linalg import DEFAULT_TOL, Tolerance
from .products import check_product_classical, check_product_minimal_sufficiency
from .structure import decomposition_to_json, ki_decomposition, verify_ki
from .suites import DEFAULT_SIZES, SUITES, run_suites

SCHEMA = "ki-decomp/1"
EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_VERIFICATION = 0, 1, 2, 3


class Failed(Exception):
    """A completed run whose report says the checks did not pass."""

    def __init__(self, report, message):
        super().__init__(message)
        self.report = report


def _seed(args) -> int:
    raw = args.seed if args.seed is not None else os.environ.get("KIDECOMP_SEED", "0")
    try:
        seed = int(raw)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"seed must be an integer, got {raw!r}") from exc
    if not 0 <= seed < 2**64:
        raise ValidationError("seed must fit in 64 unsigned bits")
    return seed


def _tolerance(args) -> Tolerance:
    return Tolerance(
        rank_cut=DEFAULT_TOL.rank_cut if args.tol_rank is None else args.tol_rank,
        residual=DEFAULT_TOL.residual if args.tol_residual is None else args.tol_residual,
        cluster_gap=DEFAULT_TOL.cluster_gap if args.cluster_gap is None else args.cluster_gap,
    )


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc


def _load_experiment(path):
    return experiment_from_json(_load_json(path))


def _inputs(args, count):
    paths = args.input or []
    if len(paths) != count:
        raise ValidationError(f"{args.command} needs exactly {count} --input file(s), got {len(paths)}")
    return [_load_experiment(p) for p in paths]


def _json_safe(x):
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    return x


def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# commands


def run_decompose(args, tol, seed):
    (e,) = _inputs(args, 1)
    k = ki_decomposition(e, tol, seed)
    report = verify_ki(e, k, tol, seed)
    out = {
        "block_dims": [list(bd) for bd in k.block_dims],
        "decomposition": decomposition_to_json(k),
        "verification": report,
        "pass": report["pass"],
    }
    if not report["pass"]:
        failing = [key for key, v in report.items() if isinstance(v, dict) and not v.get("pass", True)]
        raise Failed(out, f"verify_ki failed: {', '.join(failing)}")
    return out


def run_classical(args, tol, seed):
    (e,) = _inputs(args, 1)
    k = ki_decomposition(e, tol, seed)
    cl = classical_part(k, tol)
    _, outcomes = extraction_instrument(k, e, tol)
    worst = max(float(np.max(np.abs(outcomes[t] - cl.distributions[t]))) for t in e.labels)
    out = {
        "block_dims": [list(bd) for bd in k.block_dims],
        "classical_part": cl.to_json(),
        "extraction": {"outcome_residual": worst, "threshold": tol.residual, "pass": worst <= tol.residual},
        "pass": worst <= tol.residual,
    }
    if not out["pass"]:
        raise Failed(out, f"extraction outcomes deviate from the classical part by {worst:.3e}")
    return out


def run_broadcast_check(args, tol, seed):
    (e,) = _inputs(args, 1)
    k = ki_decomposition(e, tol, seed)
    verdict = is_broadcastable(k)
    out = {"block_dims": [list(bd) for bd in k.block_dims], "broadcastable": verdict, "pass": True}
    if verdict:
        ch = broadcast_channel(k)
        flags = is_cptp_unital(ch, tol)
        resid = broadcast_marginal_residual(ch, e)
        ok = bool(flags["cp"] and flags["tp"] and resid <= tol.residual)
        out["witness"] = {"marginal_residual": resid, "threshold": tol.residual, "cp": flags["cp"], "tp": flags["tp"]}
        out["pass"] = ok
        if args.witness:
            atomic_write(args.witness, json.dumps(_json_safe(channel_to_json(ch))))
        if not ok:
            raise Failed(out, f"broadcast witness fails: marginal residual {resid:.3e}, flags {flags}")
    return out


def run_tensor_check(args, tol, seed):
    e, f = _inputs(args, 2)
    ms = check_product_minimal_sufficiency(e, f, tol, seed)
    rep = check_product_classical(e, f, tol, seed, strict=False)
    rep.minimal_sufficiency_checks = ms
    consistent = ms[2] == (ms[0] and ms[1])
    out = {"product": rep.to_json(), "minimal_sufficiency_consistent": consistent, "pass": consistent and rep.matched}
    if not out["pass"]:
        raise Failed(out, "product structure does not factorize" if consistent else "ms(E(x)F) != ms(E) and ms(F)")
    return out


def parse_dims(text: str):
    try:
        dims = ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise ValidationError(f"cannot parse block dims {text!r}; expected e.g. '[(2,1),(1,2)]'") from exc
    if isinstance(dims, tuple) and len(dims) == 2 and all(isinstance(x, int) for x in dims):
        dims = [dims]
    if not isinstance(dims, (list, tuple)) or not dims:
        raise ValidationError("block dims must be a nonempty list of (n, m) pairs")
    out = []
    for bd in dims:
        if (
            not isinstance(bd, (list, tuple))
            or len(bd) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 1 for x in bd)
        ):
            raise ValidationError(f"bad block dims entry {bd!r}")
        out.append((int(bd[0]), int(bd[1])))
    return out


def run_gen_planted(args, tol, seed):
    if args.dims is None:
        raise ValidationError("gen-planted needs --dims")
    dims = parse_dims(args.dims)
    total = sum(n * m for n, m in dims)
    if args.dim is not None and args.dim != total:
        raise ValidationError(f"block dims {dims} give dimension {total}, not {args.dim}")
    if args.labels is None or args.labels < 1:
        raise ValidationError("gen-planted needs --labels >= 1")
    e, truth = gen_planted(dims, args.labels, seed, tol)
    exp_json, truth_json = experiment_to_json(e), truth_to_json(truth)
    out = {"dim": e.dim, "block_dims": [list(bd) for bd in dims], "labels": list(e.labels), "pass": True}
    if args.output:
        truth_path = args.truth or str(Path(args.output).with_suffix("")) + ".truth.json"
        atomic_write(truth_path, json.dumps(_json_safe(truth_json), sort_keys=True))
        out["files"] = {"experiment": args.output, "truth": truth_path}
        out["_payload"] = exp_json
    else:
        out["experiment"] = exp_json
        out["truth"] = truth_json
    return out


def parse_sizes(text):
    sizes = {}
    if not text:
        return sizes
    for part in text.split(","):
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep or key not in DEFAULT_SIZES:
            raise ValidationError(f"bad --sizes entry {part!r}; keys are {sorted(DEFAULT_SIZES)}")
        try:
            sizes[key] = int(val)
        except ValueError as exc:
            raise ValidationError(f"size for {key} must be an integer") from exc
        if sizes[key] < 1:
            raise ValidationError(f"size for {key} must be positive")
    return sizes


def run_verify(args, tol, seed):
    names = args.suite or ["all"]
    results = run_suites(names, tol, seed, parse_sizes(args.sizes), inject_bug=args.inject_bug)
    out = {
        "sizes": {**DEFAULT_SIZES, **parse_sizes(args.sizes)},
        "inject_bug": bool(args.inject_bug),
        "suites": [r.to_json() for r in results],
        "pass": all(r.passed for r in results),
    }
    if args.format == "text":
        for r in results:
            print(f"[{r.name}] {r.seconds:.2f}s", file=sys.stderr)
    if not out["pass"]:
        failing = [
            f"{r.name}:{name}" for r in results for name, m in r.metrics.items() if not m.passed
        ] + [f"{r.name}:{msg}" for r in results for msg in r.failures]
        raise Failed(out, "failing properties: " + ", ".join(failing))
    return out


COMMANDS = {
    "decompose": run_decompose,
    "classical": run_classical,
    "broadcast-check": run_broadcast_check,
    "tensor-check": run_tensor_check,
    "gen-planted": run_gen_planted,
    "verify": run_verify,
}


# ---------------------------------------------------------------------------
# output


def render_text(report: dict) -> str:
    lines = [f"{report['command']}: {'PASS' if report.get('pass') else 'FAIL'}"]
    if "error" in report:
        lines.append(f"error: {report['error']['type']}: {report['error']['message']}")
    if "block_dims" in report:
        lines.append("blocks (n, m): " + ", ".join(f"({n},{m})" for n, m in report["block_dims"]))
    if "verification" in report:
        for key, item in report["verification"].items():
            if isinstance(item, dict) and "pass" in item:
                lines.append(f"  {key:18s} {item['value']:.3e} (threshold {item['threshold']:.1e})  {'ok' if item['pass'] else 'FAIL'}")
    if "classical_part" in report:
        for t, q in report["classical_part"]["distributions"].items():
            lines.append(f"  q[{t}] = " + " ".join(f"{x:.6f}" for x in q))
    if "broadcastable" in report:
        lines.append(f"broadcastable: {report['broadcastable']}")
        if "witness" in report:
            lines.append(f"  witness marginal residual {report['witness']['marginal_residual']:.3e}")
    if "product" in report:
        p = report["product"]
        lines.append(f"  left {p['left_dims']} right {p['right_dims']} product {p['product_dims']}")
        lines.append(f"  q factorization residual {p['q_factorization_residual']}")
        lines.append(f"  minimal sufficiency (E, F, E(x)F): {p['minimal_sufficiency_checks']}")
    if "files" in report:
        lines.append(f"  wrote {report['files']['experiment']} and {report['files']['truth']}")
    for s in report.get("suites", []):
        lines.append(f"[{s['suite']}] {'PASS' if s['pass'] else 'FAIL'} ({s['instances']} instances)")
        for name, m in s["metrics"].items():
            lines.append(f"  {name:38s} worst {m['worst']:.3e} (threshold {m['threshold']:.1e}) {'ok' if m['pass'] else 'FAIL'}")
        for msg in s["failures"]:
            lines.append(f"  failure: {msg}")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", action="append", help="experiment JSON file (repeat for tensor-check)")
    common.add_argument("--output", help="write the report here instead of stdout")
    common.add_argument("--seed", help="RNG seed (default: $KIDECOMP_SEED or 0)")
    common.add_argument("--tol-rank", type=float, help=f"rank cut (default {DEFAULT_TOL.rank_cut:g})")
    common.add_argument("--tol-residual", type=float, help=f"residual bound (default {DEFAULT_TOL.residual:g})")
    common.add_argument("--cluster-gap", type=float, help=f"eigenvalue cluster gap (default {DEFAULT_TOL.cluster_gap:g})")
    common.add_argument("--format", choices=("json", "text"), default="json")

    parser = argparse.ArgumentParser(prog="kidecomp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kidecomp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("decompose", parents=[common], help="KI decomposition with verification report")
    sub.add_parser("classical", parents=[common], help="classical part and extraction certificate")
    bc = sub.add_parser("broadcast-check", parents=[common], help="broadcastability verdict and witness")
    bc.add_argument("--witness", help="write the witness channel JSON here")
    sub.add_parser("tensor-check", parents=[common], help="structure of a product of two experiments")
    gp = sub.add_parser("gen-planted", parents=[common], help="planted instance with known decomposition")
    gp.add_argument("--dims", help="block dims, e.g. '[(2,1),(1,2)]'")
    gp.add_argument("--labels", type=int, help="number of labels")
    gp.add_argument("--dim", type=int, help="expected total dimension (checked against --dims)")
    gp.add_argument("--truth", help="ground-truth output path (default <output stem>.truth.json)")
    vf = sub.add_parser("verify", parents=[common], help="run the seeded property suites")
    vf.add_argument("--suite", action="append", choices=(*SUITES, "all"))
    vf.add_argument("--sizes", help="ensemble sizes, e.g. 'planted=100,conditional=50'")
    vf.add_argument("--inject-bug", action="store_true", help="negate the conditional expectation (harness self-test)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT

    report = {"schema": SCHEMA, "version": __version__, "command": args.command}
    code = EXIT_OK
    try:
        seed = _seed(args)
        tol = _tolerance(args)
        report["seed"] = seed
        report["tolerance"] = {"rank_cut": tol.rank_cut, "residual": tol.residual, "cluster_gap": tol.cluster_gap}
        report.update(COMMANDS[args.command](args, tol, seed))
    except Failed as exc:
        report.update(exc.report)
        report["pass"] = False
        report["error"] = {"type": "VerificationFailed", "message": str(exc)}
        code = EXIT_VERIFICATION
    except (InputError, NumericalError, VerificationError, np.linalg.LinAlgError) as exc:
        report["pass"] = False
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, InputError):
            code = EXIT_INPUT
        elif isinstance(exc, VerificationError):
            code = EXIT_VERIFICATION
        else:
            code = EXIT_NUMERICAL

    if "error" in report:
        print(f"kidecomp {args.command}: {report['error']['type']}: {report['error']['message']}", file=sys.stderr)

    payload = report.pop("_payload", None)
    if payload is not None:
        # gen-planted: the experiment itself goes to --output, the summary to stdout
        atomic_write(args.output, json.dumps(_json_safe(payload), sort_keys=True))
        args.output = None
    text = render_text(report) if args.format == "text" else json.dumps(_json_safe(report), sort_keys=True, indent=1) + "\n"
    if args.output:
        atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
