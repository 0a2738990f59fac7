"""Command-line entry point: ``rstokes {kernel-eval,solve,verify,demo-illposed}``.

Exit status: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import checks
from .config import ConfigError, RunConfig, load_config
from .errors import (
    DomainError, IllConditionedWarning, InvariantViolation, PreconditionError, QuadratureError,
)
from .kernel import eval_A, eval_B
from .solvers import solve_backward, solve_forward, solve_nonlocal, verify_coercive
from .spectral import coefvec_to_csv, sample_physical, spectrum_to_csv

log = logging.getLogger("rstokes")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
SUITES = ("kernel_bounds", "coercive", "backward", "conditional_stability", "nonlocal", "all")


def fmt(x) -> str:
    return f"{float(x):.17g}"


def write_atomic(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _parse_list(text: Optional[str], cast=float):
    if text is None:
        return None
    try:
        return [cast(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}: {exc}") from exc


# --- subcommands -------------------------------------------------------------

def cmd_kernel_eval(cfg: RunConfig, lambdas, times, out_dir: Path) -> int:
    """Tabulate B and A; failures become a status column instead of aborting."""
    rows = []
    for lam in lambdas:
        for t in times:
            try:
                b = eval_B(cfg.params, lam, t)
                a = eval_A(cfg.params, lam, t)
                rows.append([float(lam), float(t), b.value, a.value, max(b.est_error, a.est_error), "ok"])
            except (QuadratureError, DomainError) as exc:
                log.warning("kernel-eval lambda=%s t=%s: %s", lam, t, exc)
                rows.append([float(lam), float(t), "nan", "nan", "nan", type(exc).__name__])
    write_atomic(out_dir / "kernel.csv", _csv(["lambda", "t", "B", "A", "est_error", "status"], rows))
    return EXIT_OK if all(r[-1] == "ok" for r in rows) else EXIT_NUMERIC


def _sample_points(spectrum, n=33):
    if spectrum.generator == "interval_dirichlet":
        return np.linspace(0.0, spectrum.geometry[0], n)
    Lx, Ly = spectrum.geometry
    m = 9
    X, Y = np.meshgrid(np.linspace(0.0, Lx, m), np.linspace(0.0, Ly, m), indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def cmd_solve(cfg: RunConfig, out_dir: Path) -> int:
    spec = cfg.problem()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IllConditionedWarning)
        if spec.kind == "forward":
            rep = solve_forward(spec)
        elif spec.kind == "backward":
            rep = solve_backward(spec, amplification_threshold=float(
                cfg.verify.get("amplification_threshold", 1e8)))
        else:
            rep = solve_nonlocal(spec)
    for w in caught:
        log.warning("%s", w.message)
    grid = rep.field.time_grid
    lam = spec.spectrum.eigenvalues
    if "csv" in cfg.formats:
        rows = [[j, grid[j], k + 1, lam[k], rep.field.trajectories[k, j]]
                for k in range(lam.size) for j in range(grid.size)]
        write_atomic(out_dir / "trajectories.csv",
                     _csv(["time_index", "t", "mode", "lambda", "value"], rows))
        write_atomic(out_dir / "spectrum.csv", spectrum_to_csv(spec.spectrum))
        if rep.recovered_initial is not None:
            write_atomic(out_dir / "recovered_initial.csv",
                         coefvec_to_csv(rep.recovered_initial, spec.spectrum))
        write_atomic(out_dir / "coercive.csv", _csv(
            ["t", "lhs", "lhs_fd"],
            [[t, a, b] for t, a, b in zip(rep.coercive_times, rep.coercive_lhs, rep.coercive_lhs_fd)]))
        if spec.spectrum.has_eigenfunctions:
            pts = _sample_points(spec.spectrum)
            srows = []
            for j in range(grid.size):
                vals = sample_physical(rep.field, pts, j)
                for i, v in enumerate(vals):
                    p = np.atleast_1d(pts[i])
                    srows.append([j, grid[j], *[float(c) for c in p], v])
            cols = ["x"] if spec.spectrum.generator == "interval_dirichlet" else ["x", "y"]
            write_atomic(out_dir / "samples.csv", _csv(["time_index", "t", *cols, "value"], srows))
    if "json" in cfg.formats:
        fwd_spec = spec if spec.kind != "backward" else spec.with_data("forward", rep.recovered_initial)
        kind = checks.coercive_kind(fwd_spec)
        try:
            co = verify_coercive(fwd_spec, rep, kind)
            co.pop("times")
        except (PreconditionError, DomainError) as exc:
            co = {"kind": kind, "skipped": str(exc)}
        diag = dict(rep.diagnostics)
        diag["coercive_check"] = co
        diag["warnings"] = [str(w.message) for w in caught]
        write_atomic(out_dir / "diagnostics.json", dump_json(diag))
    if cfg.plot:
        from . import plotting

        plotting.plot_solution(rep, out_dir / "trajectories.png")
    return EXIT_OK


def run_suite(cfg: RunConfig, suite: str, eps_list=None, seed=None) -> List[Dict]:
    spec = cfg.problem()
    v = cfg.verify
    recs: List[Dict] = []
    names = SUITES[:-1] if suite == "all" else (suite,)
    for name in names:
        if name == "kernel_bounds":
            r = checks.kernel_bounds_suite(T=cfg.params.horizon_T)
        elif name == "coercive":
            r = checks.coercive_suite(spec)
        elif name == "backward":
            r = checks.backward_suite(spec, threshold=float(v.get("amplification_threshold", 1e8)))
        elif name == "conditional_stability":
            eps = eps_list or v.get("eps", [0.25, 0.5, 1.0])
            eps = eps if isinstance(eps, list) else [eps]
            r = checks.conditional_stability_suite(
                cfg.params, cfg.spectrum, cfg.time_grid, [float(e) for e in eps],
                int(v.get("n_instances", 20)), int(seed if seed is not None else v.get("seed", 0)))
        else:
            r = checks.nonlocal_suite(spec)
        for rec in r:
            rec["suite"] = name
        recs.extend(r)
    return recs


def cmd_verify(cfg: RunConfig, suite: str, out_dir: Path, eps_list=None, seed=None) -> int:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedWarning)
        recs = run_suite(cfg, suite, eps_list, seed)
    passed = all(r["passed"] for r in recs)
    write_atomic(out_dir / "verify.json", dump_json({"suite": suite, "passed": passed, "checks": recs}))
    for r in recs:
        log.info("%s %s/%s", "PASS" if r["passed"] else "FAIL", r["suite"], r["name"])
    return EXIT_OK if passed else EXIT_FAIL


def cmd_demo_illposed(cfg: RunConfig, ks, eps, out_dir: Path) -> int:
    rows = checks.illposed_rows(cfg.params, cfg.spectrum, ks, eps)
    cols = ["k", "lambda_k", "psi_norm", "phi_norm", "amplification", "psi_norm1",
            "phi_lower_bound", "phi_upper_bound"]
    write_atomic(out_dir / "illposed.csv", _csv(cols, [[r[c] for c in cols] for r in rows]))
    verdict = checks.illposed_suite(rows)
    if "json" in cfg.formats:
        write_atomic(out_dir / "illposed.json", dump_json({"eps": eps, "checks": verdict}))
    if cfg.plot:
        from . import plotting

        plotting.plot_illposed(rows, out_dir / "illposed.png")
    return EXIT_OK if all(r["passed"] for r in verdict) else EXIT_FAIL


# --- argument handling -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rstokes", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, type=Path, help="TOML run configuration")
        p.add_argument("--out", type=Path, help="output directory (overrides [output] directory)")
        p.add_argument("--seed", type=int, help="seed for randomized instances")
        p.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")
        return p

    p = common(sub.add_parser("kernel-eval", help="tabulate B and A"))
    p.add_argument("--lambdas", help="comma-separated lambda values")
    p.add_argument("--times", help="comma-separated times")
    common(sub.add_parser("solve", help="solve the configured problem"))
    p = common(sub.add_parser("verify", help="run property suites"))
    p.add_argument("--suite", choices=SUITES, default="all")
    p.add_argument("--eps", help="smoothness indices, comma-separated")
    p = common(sub.add_parser("demo-illposed", help="ill-posedness curve for the backward problem"))
    p.add_argument("--modes", help="comma-separated mode numbers k (1-based)")
    p.add_argument("--eps", type=float, help="exponent eps in (0, 1)")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, seed=args.seed)
        if args.plot:
            cfg.plot = True
        out_dir = args.out if args.out is not None else cfg.out_dir
        if args.command == "kernel-eval":
            lams = _parse_list(args.lambdas) or cfg.kernel_lambdas
            times = _parse_list(args.times) or cfg.kernel_times
            return cmd_kernel_eval(cfg, lams, times, out_dir)
        if args.command == "solve":
            return cmd_solve(cfg, out_dir)
        if args.command == "verify":
            return cmd_verify(cfg, args.suite, out_dir, _parse_list(args.eps), args.seed)
        ks = _parse_list(args.modes, int) or list(cfg.demo.get("modes", [1, 2, 4, 8, 16]))
        eps = args.eps if args.eps is not None else float(cfg.demo.get("eps", 0.1))
        if not 0.0 < eps < 1.0:
            raise ConfigError("--eps must lie in (0, 1)")
        if any(not 1 <= k <= cfg.spectrum.n_modes for k in ks):
            raise ConfigError(f"--modes must lie in 1..{cfg.spectrum.n_modes}")
        return cmd_demo_illposed(cfg, ks, eps, out_dir)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (QuadratureError, InvariantViolation, DomainError, PreconditionError,
            FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
