"""Command-line entry point ``semigroup-lab``.

Every subcommand reads a JSON configuration, writes its outputs into
``--out`` atomically (temp file + rename) and always leaves a
``manifest.json`` describing the run, including failed runs.

Exit codes: 0 all claims pass, 1 a claim fails (or is inconclusive),
2 usage error (bad flags, missing or malformed files, invalid
configuration), 3 numerical abort (step-size violation, blow-up, solver
failure).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .coeffs import CoefficientError, CoefficientField, PolynomialFamilyParams, field_from_json, growth_constants
from .grid import GridError, apply_operator, default_margin, field_from_csv, field_to_csv, make_grid, restrict_array, sample
from .hypotheses import HypothesisError, ShellSampling, check_family_closed_form, check_numeric
from .semigroup import EvolveConfig, NumericalAbort, QuadratureConfig, evolve, resolvent, resolvent_direct
from .seminorms import (
    SeminormError,
    besov_seminorm,
    ck_norm,
    holder_seminorm,
    lp_norm,
    sobolev_norm,
    sup_norm,
    zygmund_seminorm,
)
from . import verify as V

log = logging.getLogger("semigroup_lab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3
THREADS_ENV = "SEMIGROUP_LAB_THREADS"
SEED_MAX = 2**64


class UsageError(ValueError):
    """Invalid invocation or configuration."""


# ---------------------------------------------------------------------------
# exit codes


def exit_code(status: Optional[str], error: Optional[BaseException] = None) -> int:
    """Exit code as a function of the run status and the error class."""
    if error is None:
        return EXIT_OK if status == "pass" else EXIT_FAIL
    if isinstance(error, NumericalAbort):
        return EXIT_ABORT
    if isinstance(error, V.UncertifiedClaim):
        return EXIT_FAIL
    if isinstance(error, (UsageError, CoefficientError, GridError, HypothesisError, SeminormError,
                          json.JSONDecodeError, OSError, KeyError, TypeError, ValueError)):
        return EXIT_USAGE
    return EXIT_ABORT


# ---------------------------------------------------------------------------
# configuration and manifest


def canonical_json(obj) -> str:
    """Key-sorted, compact JSON with shortest round-trip float formatting."""

    def norm(v):
        if isinstance(v, dict):
            return {str(k): norm(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [norm(x) for x in v]
        if isinstance(v, (bool, np.bool_)):
            return bool(v)
        if isinstance(v, (int, np.integer)):
            return int(v)
        if isinstance(v, (float, np.floating)):
            v = float(v)
            if not math.isfinite(v):
                return str(v)
            return v
        return v

    return json.dumps(norm(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def load_json(path: str | Path) -> dict:
    """Read a JSON object; malformed documents raise UsageError with line and column."""
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise UsageError(f"file not found: {p}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {p}: {exc.msg} at line {exc.lineno}, column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{p}: top-level JSON value must be an object")
    return doc


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunManifest:
    command: str
    config_digest: Optional[str]
    seed: Optional[int]
    version: str = __version__
    wall_time: float = 0.0
    outputs: list = field(default_factory=list)
    threads: Optional[int] = None
    status: Optional[str] = None
    exit_code: Optional[int] = None
    error: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "version": self.version,
            "wall_time": self.wall_time,
            "outputs": list(self.outputs),
            "threads": self.threads,
            "status": self.status,
            "exit_code": self.exit_code,
            "error": self.error,
        }


class Outputs:
    """Atomic writer that remembers what it wrote."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.files: list[str] = []

    def text(self, name: str, text: str) -> Path:
        path = self.dir / name
        atomic_write(path, text)
        self.files.append(name)
        return path

    def json(self, name: str, doc) -> Path:
        return self.text(name, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return str(v)


def _resolve_threads(value: Optional[int]) -> int:
    if value is None:
        env = os.environ.get(THREADS_ENV)
        if env is None or env == "":
            return 1
        try:
            value = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if value < 1:
        raise UsageError(f"thread count must be positive, got {value}")
    return value


def _parse_seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}") from None
    if not 0 <= v < SEED_MAX:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64), got {v}")
    return v


# ---------------------------------------------------------------------------
# shared config helpers


def _coefficients(cfg: dict) -> CoefficientField:
    doc = cfg.get("coefficients")
    if doc is None:
        raise UsageError("configuration needs a 'coefficients' object")
    return field_from_json(doc)


def _require_seed(spec: dict, seed: Optional[int], what: str) -> int:
    s = spec.get("seed", seed)
    if s is None:
        raise UsageError(f"{what} samples randomly and needs a seed (config 'seed' or --seed)")
    return int(s)


def _datum(spec: Optional[dict], d: int, m: int, seed: Optional[int]) -> Callable:
    spec = dict(spec or {"kind": "gaussian"})
    if spec.get("kind") == "random":
        spec["seed"] = _require_seed(spec, seed, "random datum")
    return V.datum_from_spec(spec, d, m)


def _grid_spec(cfg: dict) -> V.GridSpec:
    g = cfg.get("grid", cfg)
    try:
        return V.GridSpec(float(g["L"]), int(g["n"]), float(g["dt"]))
    except KeyError as exc:
        raise UsageError(f"grid configuration misses {exc.args[0]!r}") from None


# ---------------------------------------------------------------------------
# subcommands; each returns a status string


def cmd_check(cfg: dict, out: Outputs, seed: Optional[int]) -> str:
    """Hypothesis reports for the requested levels."""
    del seed  # shell sampling is deterministic
    doc = cfg.get("coefficients", cfg)
    fld = field_from_json(doc)
    levels = cfg.get("levels", [1])
    levels = [levels] if isinstance(levels, int) else list(levels)
    nu = float(cfg.get("nu", 1.0))
    is_family = doc.get("kind", "family" if "Q0" in doc else None) == "family"
    method = cfg.get("method", "closed-form" if is_family else "numeric")
    if method not in ("closed-form", "numeric", "both"):
        raise UsageError(f"unknown check method {method!r}")
    if method != "numeric" and not is_family:
        raise UsageError("the closed form applies to the polynomial family only")
    sampling = ShellSampling(**cfg.get("sampling", {}))
    ok = True
    for level in levels:
        reps = []
        if method in ("closed-form", "both"):
            reps.append(check_family_closed_form(PolynomialFamilyParams.from_json(doc), int(level)))
        if method in ("numeric", "both"):
            reps.append(check_numeric(fld, nu, int(level), sampling))
        for rep in reps:
            tag = "closed" if rep.method == "closed-form" else "numeric"
            out.json(f"report_{rep.level}_{tag}.json", rep.to_json())
            ok = ok and rep.passed
            print(f"{rep.level:>8} {rep.method:<12} {rep.status}")
    return "pass" if ok else "fail"


def cmd_evolve(cfg: dict, out: Outputs, seed: Optional[int]) -> str:
    """``T(t) f`` snapshots as Field CSVs plus a diagnostics JSON."""
    coeffs = _coefficients(cfg)
    g = make_grid(coeffs.d, float(cfg["L"]), int(cfg["n"]))
    f = sample(g, _datum(cfg.get("datum"), coeffs.d, coeffs.m, seed), coeffs.m)
    ecfg = EvolveConfig(dt=float(cfg["dt"]), t_final=float(cfg["t_final"]),
                        snapshots=tuple(cfg.get("snapshots", ())), scheme=cfg.get("scheme", "imex"),
                        safety=float(cfg.get("safety", 0.9)), drift=cfg.get("drift", "hybrid"))
    report = None
    if "certify_level" in cfg:
        report = check_numeric(coeffs, float(cfg.get("nu", 1.0)), int(cfg["certify_level"]))
    traj = evolve(coeffs, f, ecfg, hypothesis_report=report)
    wanted = sorted(set(ecfg.snapshots) | {ecfg.t_final})
    for i, t in enumerate(wanted):
        out.text(f"snapshot_{i:03d}_t{t:g}.csv", field_to_csv(traj.at(t)))
    diag = dict(traj.diagnostics)
    max_abs = diag.pop("max_abs", [])
    diag.update({
        "config": ecfg.to_json(),
        "grid": g.fingerprint(),
        "operator": coeffs.fingerprint(),
        "snapshots": wanted,
        "sup_norms": [traj.at(t).sup() for t in wanted],
        "max_abs_overall": max(max_abs) if max_abs else f.sup(),
        "hypotheses_status": report.status if report is not None else "absent",
    })
    out.json("diagnostics.json", diag)
    return "pass"


def cmd_resolvent(cfg: dict, out: Outputs, seed: Optional[int]) -> str:
    """``u_lambda`` by Laplace quadrature (or a direct sparse solve) with its residual."""
    coeffs = _coefficients(cfg)
    nu = float(cfg.get("nu", 1.0))
    g = make_grid(coeffs.d, float(cfg["L"]), int(cfg["n"]))
    f = sample(g, _datum(cfg.get("datum"), coeffs.d, coeffs.m, seed), coeffs.m)
    gc = growth_constants(coeffs, nu)
    lam = float(cfg["lambda"]) if "lambda" in cfg else gc.H_nu + float(cfg.get("shift", 5.0))
    method = cfg.get("method", "laplace")
    if method == "laplace":
        u = resolvent(coeffs, f, lam, gc.H_nu, QuadratureConfig(**cfg.get("quadrature", {})),
                      dt=float(cfg.get("dt", 1e-3)))
    elif method == "direct":
        u = resolvent_direct(coeffs, f, lam)
    else:
        raise UsageError(f"unknown resolvent method {method!r}")
    res = lam * np.asarray(u.values) - np.asarray(apply_operator(coeffs, u).values) - np.asarray(f.values)
    mg = default_margin(g)
    fn = f.sup()
    residual = float(np.max(restrict_array(np.sqrt(np.sum(res**2, axis=0)), g.d, mg)))
    out.text("resolvent.csv", field_to_csv(u))
    out.json("diagnostics.json", {
        "lambda": lam, "H_nu": gc.H_nu, "nu": nu, "method": method, "residual": residual,
        "relative_residual": residual / fn if fn else 0.0, "meta": dict(u.meta),
        "grid": g.fingerprint(), "operator": coeffs.fingerprint(),
    })
    return "pass"


SEMINORMS = ("sup", "ck", "holder", "zygmund", "lp", "sobolev", "besov")


def cmd_seminorm(cfg: dict, out: Outputs, seed: Optional[int]) -> str:
    """One seminorm estimate of a Field CSV."""
    if "field" not in cfg:
        raise UsageError("seminorm configuration needs a 'field' path (or --field)")
    try:
        fld = field_from_csv(Path(cfg["field"]).read_text())
    except FileNotFoundError:
        raise UsageError(f"file not found: {cfg['field']}") from None
    kind = cfg.get("kind")
    mg = cfg.get("margin")
    window = cfg.get("window")
    if kind == "sup":
        est = sup_norm(fld, mg)
    elif kind == "ck":
        est = ck_norm(fld, int(cfg.get("k", 0)), mg)
    elif kind == "holder":
        s = None
        if fld.grid.d > 1:
            s = _require_seed(cfg, seed, "the 2D Hoelder estimator")
        est = holder_seminorm(fld, float(cfg["alpha"]), window, int(cfg.get("pair_samples", 100_000)), s, mg)
    elif kind == "zygmund":
        if window is None:
            raise UsageError("the Zygmund estimator needs a 'window'")
        est = zygmund_seminorm(fld, float(window), mg)
    elif kind == "lp":
        est = lp_norm(fld, float(cfg.get("p", 2.0)), mg)
    elif kind == "sobolev":
        est = sobolev_norm(fld, int(cfg.get("k", 1)), float(cfg.get("p", 2.0)), mg)
    elif kind == "besov":
        est = besov_seminorm(fld, float(cfg["s"]), float(cfg.get("p", 2.0)), window,
                             int(cfg.get("h_samples", 48)), int(cfg.get("n_dirs", 16)), mg)
    else:
        raise UsageError(f"unknown seminorm kind {kind!r}; expected one of {', '.join(SEMINORMS)}")
    out.json("seminorm.json", est.to_json())
    print(f"{est.kind}: {est.value!r}")
    return "pass"


def _claim_params(claim: str, prefix: str, keys: tuple) -> dict:
    # "pointwise-k0-l1" -> {"k": 0, "l": 1}
    parts = claim[len(prefix):].split("-")
    vals = {}
    for part, key in zip(parts, keys):
        if not part.startswith(key):
            raise UsageError(f"malformed claim id {claim!r}")
        try:
            vals[key] = float(part[len(key):]) if key == "p" else int(part[len(key):])
        except ValueError:
            raise UsageError(f"malformed claim id {claim!r}") from None
    if len(vals) != len(keys) or len(parts) != len(keys):
        raise UsageError(f"malformed claim id {claim!r}")
    return vals


CLAIMS = ("pointwise-k<k>-l<l>", "smoothing-k<k>-l<l>", "domination", "sup-bound", "resolvent",
          "schauder-elliptic", "schauder-parabolic", "lp-p<p>", "semigroup-law", "truncation-monotone")


def run_claim(claim: str, cfg: dict, seed: Optional[int]) -> V.VerificationRecord:
    coeffs = _coefficients(cfg)
    nu = float(cfg.get("nu", 1.0))
    gs = _grid_spec(cfg) if claim != "truncation-monotone" else None
    f = _datum(cfg.get("datum"), coeffs.d, coeffs.m, seed)
    t_list = [float(t) for t in cfg.get("t_list", (0.01, 0.05, 0.1))]
    if claim.startswith("pointwise-"):
        kl = _claim_params(claim, "pointwise-", ("k", "l"))
        return V.pointwise_check(coeffs, nu, f, kl["k"], kl["l"], t_list, gs,
                                 certify=bool(cfg.get("certify", True)), bound=cfg.get("bound"))
    if claim.startswith("smoothing-"):
        kl = _claim_params(claim, "smoothing-", ("k", "l"))
        t_grid = cfg.get("t_grid") or list(np.geomspace(1e-3, 1e-1, 9))
        return V.decay_rate_record(coeffs, f, kl["k"], kl["l"], t_grid, gs, tol=float(cfg.get("tol", 0.1)))
    if claim == "domination":
        return V.domination_check(coeffs, nu, f, t_list, gs)
    if claim == "sup-bound":
        return V.sup_bound_check(coeffs, nu, f, t_list, gs)
    if claim == "resolvent":
        return V.resolvent_check(coeffs, nu, f, gs, shift=float(cfg.get("shift", 5.0)))
    if claim == "schauder-elliptic":
        alpha = float(cfg.get("alpha", 0.5))
        s = _require_seed(cfg, seed, "the Hoelder estimator") if alpha > 0 and coeffs.d > 1 else cfg.get("seed", seed)
        family = [_datum(spec, coeffs.d, coeffs.m, seed) for spec in cfg.get("data", [cfg.get("datum")])]
        return V.schauder_elliptic_check(coeffs, nu, family, alpha, gs, window=float(cfg.get("window", 0.5)),
                                         shift=float(cfg.get("shift", 5.0)), seed=s or 0,
                                         certify=bool(cfg.get("certify", True)))
    if claim == "schauder-parabolic":
        alpha = float(cfg.get("alpha", 0.5))
        s = _require_seed(cfg, seed, "the Hoelder estimator") if coeffs.d > 1 else cfg.get("seed", seed)
        src = _datum(cfg.get("source", {"kind": "constant", "value": [0.0]}), coeffs.d, coeffs.m, seed)
        return V.schauder_parabolic_check(coeffs, f, lambda t, x: src(x), alpha, float(cfg.get("T", 0.1)), gs,
                                          snapshots=t_list, window=float(cfg.get("window", 0.5)), seed=s or 0)
    if claim.startswith("lp-"):
        p = _claim_params(claim, "lp-", ("p",))["p"]
        return V.lp_checks(coeffs, nu, f, p, t_list, int(cfg.get("k", 0)), int(cfg.get("l", 1)), gs,
                           continuity_times=tuple(cfg.get("continuity_times", (1e-3, 2e-3, 4e-3))))
    if claim == "semigroup-law":
        return V.semigroup_property_check(coeffs, f, float(cfg.get("t", 0.05)), float(cfg.get("s", 0.05)), gs)
    if claim == "truncation-monotone":
        return V.truncation_monotonicity_check(coeffs, nu, f, float(cfg.get("t", 0.1)),
                                               [float(L) for L in cfg.get("L_list", (4, 6, 8))],
                                               float(cfg.get("h", 0.05)), float(cfg.get("dt", 1e-3)))
    raise UsageError(f"unknown claim {claim!r}; known claims: {', '.join(CLAIMS)}")


def cmd_verify(cfg: dict, out: Outputs, seed: Optional[int]) -> str:
    claim = cfg.get("claim")
    if not claim:
        raise UsageError("verify needs a claim id (positional argument or config 'claim')")
    rec = run_claim(str(claim), cfg, seed)
    out.json("record.json", rec.to_json())
    out.text("rows.csv", rec.rows_csv())
    print(f"{rec.claim}: {rec.status}")
    return rec.status


REPORT_FIELDS = ("claim", "status", "operator", "grid", "scheme", "fitted", "source")


def _record_key(rec: dict) -> str:
    return canonical_json({"operator": rec.get("operator"), "grid": rec.get("grid"), "scheme": rec.get("scheme")})


def cmd_report(records: list, out: Outputs) -> str:
    """Aggregated CSV with one row per record, sorted by claim id."""
    if not records:
        raise UsageError("report needs at least one record file")
    loaded = []
    for path in records:
        rec = load_json(path)
        if "claim" not in rec or "status" not in rec:
            raise UsageError(f"{path} is not a verification record")
        loaded.append((str(rec["claim"]), str(path), rec))
    loaded.sort(key=lambda item: (item[0], item[1]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    seen: dict = {}
    statuses = []
    for claim, path, rec in loaded:
        w.writerow([claim, rec["status"], rec.get("operator", ""), canonical_json(rec.get("grid")),
                    canonical_json(rec.get("scheme")), canonical_json(rec.get("fitted", {})), path])
        statuses.append(rec["status"])
        key = _record_key(rec)
        if claim in seen and seen[claim][0] != key:
            w.writerow([claim, "warning", "", "", "", "", f"conflicting fingerprints: {seen[claim][1]} vs {path}"])
        seen.setdefault(claim, (key, path))
    out.text("report.csv", buf.getvalue())
    width = max(len(c) for c, _, _ in loaded)
    for claim, path, rec in loaded:
        print(f"{claim:<{width}}  {rec['status']:<12}  {path}")
    return "pass" if all(s == "pass" for s in statuses) else "fail"


# ---------------------------------------------------------------------------
# argument parsing


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=d, help="JSON configuration file")
    parser.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS if suppress else "out",
                        help="output directory (default: ./out)")
    parser.add_argument("--threads", metavar="N", type=int, default=d,
                        help=f"worker threads (fallback: ${THREADS_ENV}, else 1)")
    parser.add_argument("--seed", metavar="U64", type=_parse_seed, default=d,
                        help="seed for sampling configurations without their own")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semigroup-lab",
                                     description="Numerical checks for semigroups of elliptic systems.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="certify the structural hypotheses")
    sub.add_parser("evolve", parents=[common], help="evolve a datum and write snapshots")
    sub.add_parser("resolvent", parents=[common], help="solve lambda u - A u = f")
    p = sub.add_parser("seminorm", parents=[common], help="estimate a seminorm of a Field CSV")
    p.add_argument("--field", metavar="CSV", help="field CSV (overrides the config 'field')")
    p = sub.add_parser("verify", parents=[common], help="run one verification claim")
    p.add_argument("claim", nargs="?", help="claim id (overrides the config 'claim')")
    p = sub.add_parser("report", parents=[common], help="aggregate verification records")
    p.add_argument("records", nargs="*", metavar="RECORD", help="record JSON files")
    return parser


COMMANDS = {"check": cmd_check, "evolve": cmd_evolve, "resolvent": cmd_resolvent, "seminorm": cmd_seminorm,
            "verify": cmd_verify}


def _config_seed(cfg: dict) -> Optional[int]:
    """Seed recorded in the config itself (top level or inside the datum)."""
    for doc in (cfg, cfg.get("datum") or {}):
        if isinstance(doc, dict) and "seed" in doc:
            return int(doc["seed"])
    return None


def _resolve_paths(cfg: dict, base: Path) -> dict:
    if "field" in cfg and not Path(cfg["field"]).is_absolute():
        cfg = dict(cfg, field=str(base / cfg["field"]))
    return cfg


def main(argv: Optional[list] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    out = Outputs(Path(args.out))
    manifest = RunManifest(command=args.command, config_digest=None, seed=args.seed)
    start = time.perf_counter()
    status, error = None, None
    try:
        manifest.threads = _resolve_threads(args.threads)
        if args.command == "report":
            records = list(args.records)
            if args.config:
                records += list(load_json(args.config).get("records", []))
            manifest.config_digest = config_digest({"records": records})
            status = cmd_report(records, out)
        else:
            if args.config is None:
                raise UsageError(f"{args.command} needs --config")
            cfg = load_json(args.config)
            manifest.config_digest = config_digest(cfg)
            cfg = _resolve_paths(cfg, Path(args.config).resolve().parent)
            if args.command == "seminorm" and args.field:
                cfg["field"] = args.field
            if args.command == "verify" and args.claim:
                cfg["claim"] = args.claim
            if manifest.seed is None:
                manifest.seed = _config_seed(cfg)
            status = COMMANDS[args.command](cfg, out, args.seed)
    except Exception as exc:  # every failure still produces a manifest
        error = exc
        status = "error"
        step = getattr(exc, "step", None)
        manifest.error = f"{type(exc).__name__}: {exc}" + (f" (step {step})" if step is not None else "")
        print(f"error: {manifest.error}", file=sys.stderr)
        if exit_code(status, exc) == EXIT_ABORT and not isinstance(exc, NumericalAbort):
            log.exception("unexpected failure")
    manifest.status = status
    manifest.exit_code = exit_code(status, error)
    manifest.wall_time = time.perf_counter() - start
    manifest.outputs = list(out.files)
    try:
        atomic_write(out.dir / "manifest.json", json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"error: cannot write manifest: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
