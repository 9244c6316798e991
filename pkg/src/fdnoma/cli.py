"""Command line front end: parameter sweeps, CSV output and validation runs.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import analytic
from .estimators import ExhaustiveSearchAllocator, ScaPowerAllocator, sample_design
from .optimizer import SolverFailure
from .params import ConfigError, DuplexMode, SystemParams, params_from_dict
from .simulator import estimate_outage

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

# sweepable names and the SystemParams field each one drives
SWEEP_ALIASES = {
    "snr_db": "snr_db", "beta": "beta",
    "K": "n_sts", "n_sts": "n_sts",
    "N": "n_antennas", "n_antennas": "n_antennas",
    "M": "n_srs", "n_srs": "n_srs",
    "lambda_sp": "lambda_sp", "lambda_ps": "lambda_ps", "lambda_sr": "lambda_sr",
}
_INTEGER_FIELDS = {"n_sts", "n_antennas", "n_srs"}

# run-level keys a config file may carry next to the model parameters
_RUN_KEYS = {"sweep", "grid", "modes", "trials", "seed", "draws", "es_grid", "eps", "max_iter", "n_jobs"}

VALIDATION_GRID = (-20.0, -15.0, -12.0, -9.0, -6.0, -3.0, 0.0)

OUTAGE_HEADER = ["parameter", "value", "mode", "node", "mc_probability", "ci_halfwidth",
                 "analytic_probability", "trials", "seed"]
THROUGHPUT_HEADER = ["parameter", "value", "mode", "mc_nu_p", "mc_nu_s", "analytic_nu_p", "analytic_nu_s",
                     "trials", "seed"]
SUMRATE_HEADER = ["parameter", "value", "mode", "n_srs", "draws", "feasible_draws", "infeasible_draws",
                  "mean_sca_sum_rate", "mean_es_sum_rate", "mean_iterations", "converged_fraction", "seed"]
DRAW_HEADER = ["parameter", "value", "mode", "draw", "feasible", "st_decoded", "iterations", "converged",
               "sca_sum_rate", "es_sum_rate", "alpha"]
CONVERGENCE_HEADER = ["parameter", "value", "mode", "draw", "iteration", "objective", "sum_rate"]
VALIDATE_HEADER = ["parameter", "value", "mode", "node", "mc_probability", "ci_halfwidth",
                   "analytic_probability", "abs_gap", "relative_gap", "tolerance", "status"]


def fmt(value: Any) -> str:
    """CSV cell text: 9 significant digits for floats, blank for ``None``."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return ""
        return f"{float(value):.9g}"
    return str(value)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# -- configuration --------------------------------------------------------------

@dataclass
class SweepPlan:
    swept_parameter: str
    grid: list[float]
    modes: list[DuplexMode]
    trials: int
    seed: int
    output_path: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.swept_parameter not in SWEEP_ALIASES:
            raise ConfigError(f"cannot sweep {self.swept_parameter!r}; choose from {', '.join(SWEEP_ALIASES)}")
        if not self.grid:
            raise ConfigError("grid is empty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ConfigError("grid must be strictly increasing")
        target = SWEEP_ALIASES[self.swept_parameter]
        if target in _INTEGER_FIELDS and any(v != int(v) for v in self.grid):
            raise ConfigError(f"{self.swept_parameter} takes integer values only")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")

    def params_at(self, base: SystemParams, value: float) -> SystemParams:
        target = SWEEP_ALIASES[self.swept_parameter]
        value = int(value) if target in _INTEGER_FIELDS else float(value)
        try:
            return base.replace(**{target: value})
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (stop included) or a comma separated list."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ConfigError(f"grid {text!r}: expected start:stop:step")
            start, stop, step = parts
            if not step > 0:
                raise ConfigError(f"grid {text!r}: step must be positive")
            count = math.floor((stop - start) / step + 1e-9) + 1
            return [round(start + k * step, 12) for k in range(max(count, 0))]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"grid {text!r}: {exc}") from exc


def _key_line(text: str, key: str) -> int | None:
    match = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, match.start()) + 1 if match else None


def load_config(path: str) -> tuple[SystemParams, dict[str, Any]]:
    """Read a JSON config; returns parameters and the run-level keys.

    Errors name the file and, where it can be found, the offending line.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: top level must be a JSON object")
    run = {k: data.pop(k) for k in list(data) if k in _RUN_KEYS}
    try:
        params = params_from_dict(data)
    except ConfigError as exc:
        # messages name the field; report the line where it is set
        culprit = next((k for k in sorted(data, key=len, reverse=True) if k in str(exc)), None)
        line = _key_line(text, culprit) if culprit else None
        raise ConfigError(f"{path}:{line or 1}: {exc}") from exc
    return params, run


def _modes(text: str | None, default: Sequence[str]) -> list[DuplexMode]:
    names = default if text in (None, "all") else text.split(",")
    try:
        return [DuplexMode.parse(n) for n in names]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_plan(args, run: dict[str, Any], base: SystemParams, default_modes: Sequence[str],
               default_grid: Sequence[float] | None) -> SweepPlan:
    sweep = args.sweep or run.get("sweep", "snr_db")
    if args.grid is not None:
        grid = parse_grid(args.grid)
    elif "grid" in run:
        grid = parse_grid(run["grid"]) if isinstance(run["grid"], str) else [float(v) for v in run["grid"]]
    elif default_grid is not None and sweep == "snr_db":
        grid = list(default_grid)
    else:
        target = SWEEP_ALIASES.get(sweep)
        if target is None:
            raise ConfigError(f"cannot sweep {sweep!r}; choose from {', '.join(SWEEP_ALIASES)}")
        grid = [float(getattr(base, target))]
    modes_text = args.mode if args.mode is not None else (",".join(run["modes"]) if "modes" in run else None)
    trials = args.trials if args.trials is not None else int(run.get("trials", 10 ** 5))
    seed = args.seed if args.seed is not None else int(run.get("seed", 0))
    return SweepPlan(sweep, grid, _modes(modes_text, default_modes), int(trials), int(seed), args.out)


# -- commands -------------------------------------------------------------------

def _analytic_or_blank(params: SystemParams, mode: DuplexMode, coeffs=analytic.c_coefficients):
    if mode is DuplexMode.OMA_TDMA or not params.analytic_supported:
        return None
    return analytic.outage_analytic(params, mode, coeffs)


def outage_rows(plan: SweepPlan, base: SystemParams, n_jobs: int = 1,
                coeffs: Callable = analytic.c_coefficients) -> list[list[Any]]:
    rows = []
    for value in plan.grid:
        params = plan.params_at(base, value)
        for mode in plan.modes:
            est = estimate_outage(params, mode, plan.trials, plan.seed, n_jobs=n_jobs)
            ana = _analytic_or_blank(params, mode, coeffs)
            for node in range(params.n_receivers):
                rows.append([plan.swept_parameter, value, mode.value, _node_name(node),
                             est.probability[node], est.ci_halfwidth[node],
                             None if ana is None else ana[node], plan.trials, plan.seed])
    return rows


def _node_name(node: int) -> str:
    return "PR" if node == 0 else f"SR{node}"


def cmd_outage(args, base, run) -> int:
    plan = build_plan(args, run, base, ("fd", "hd", "oma"), None)
    _emit(_csv_text(OUTAGE_HEADER, outage_rows(plan, base, args.n_jobs)), plan.output_path)
    return EXIT_OK


def cmd_throughput(args, base, run) -> int:
    plan = build_plan(args, run, base, ("fd", "hd", "oma"), None)
    rows = []
    for value in plan.grid:
        params = plan.params_at(base, value)
        for mode in plan.modes:
            est = estimate_outage(params, mode, plan.trials, plan.seed, n_jobs=args.n_jobs)
            nu = analytic.throughput_from_outage(est.probability, params.target_rates)
            ana = _analytic_or_blank(params, mode)
            nu_a = (None, None) if ana is None else analytic.throughput_from_outage(ana, params.target_rates)
            rows.append([plan.swept_parameter, value, mode.value, nu[0], nu[1], nu_a[0], nu_a[1],
                         plan.trials, plan.seed])
    _emit(_csv_text(THROUGHPUT_HEADER, rows), plan.output_path)
    return EXIT_OK


def _fit_chunk(job):
    kind, params, mode, X, options = job
    if kind == "sca":
        est = ScaPowerAllocator(params, mode.value, **options).fit(X)
        return est.alpha_, est.sum_rate_, est.feasible_, est.st_decoded_, est.traces_
    est = ExhaustiveSearchAllocator(params, mode.value, **options).fit(X)
    return est.alpha_, est.sum_rate_, est.feasible_, est.st_decoded_, None


def _fit_parallel(kind, params, mode, X, options, n_jobs):
    chunks = np.array_split(X, max(1, min(n_jobs, len(X))))
    jobs = [(kind, params, mode, c, options) for c in chunks if len(c)]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_fit_chunk, jobs))
    else:
        parts = [_fit_chunk(j) for j in jobs]
    alpha = np.vstack([p[0] for p in parts])
    rate = np.concatenate([p[1] for p in parts])
    feasible = np.concatenate([p[2] for p in parts])
    st_ok = np.concatenate([p[3] for p in parts])
    traces = sum((p[4] for p in parts), []) if kind == "sca" else None
    return alpha, rate, feasible, st_ok, traces


def cmd_sumrate(args, base, run) -> int:
    plan = build_plan(args, run, base, ("fd", "hd"), None)
    if DuplexMode.OMA_TDMA in plan.modes:
        raise ConfigError("sumrate optimizes the NOMA modes only (fd, hd)")
    draws = args.draws if args.draws is not None else int(run.get("draws", 100))
    if draws < 1:
        raise ConfigError("draws must be at least 1")
    es_grid = args.es_grid if args.es_grid is not None else run.get("es_grid")
    eps = args.eps if args.eps is not None else float(run.get("eps", 1e-4))
    max_iter = args.max_iter if args.max_iter is not None else int(run.get("max_iter", 50))
    if not eps > 0 or max_iter < 1:
        raise ConfigError("eps must be positive and max_iter at least 1")
    started = time.perf_counter()
    agg, per_draw, conv = [], [], []
    for value in plan.grid:
        params = plan.params_at(base, value)
        X = sample_design(params, draws, plan.seed)
        for mode in plan.modes:
            alpha, rate, feasible, st_ok, traces = _fit_parallel(
                "sca", params, mode, X, {"eps": eps, "max_iter": max_iter}, args.n_jobs)
            es_rate = None
            if es_grid is not None:
                es_rate = _fit_parallel("es", params, mode, X, {"grid_step": float(es_grid)}, args.n_jobs)[1]
            prelog = 1.0 if mode is DuplexMode.FD else 0.5
            iters = [t.iterations for t in traces if t is not None]
            agg.append([plan.swept_parameter, value, mode.value, params.n_srs, draws, int(feasible.sum()),
                        int((~feasible).sum()),
                        float(rate[feasible].mean()) if feasible.any() else None,
                        float(es_rate[feasible].mean()) if es_rate is not None and feasible.any() else None,
                        float(np.mean(iters)) if iters else None,
                        float(np.mean([t.converged for t in traces if t is not None])) if iters else None,
                        plan.seed])
            for d in range(draws):
                trace = traces[d]
                per_draw.append([plan.swept_parameter, value, mode.value, d, bool(feasible[d]), bool(st_ok[d]),
                                 trace.iterations if trace else None, trace.converged if trace else None,
                                 rate[d] if feasible[d] else None,
                                 es_rate[d] if es_rate is not None and feasible[d] else None,
                                 " ".join(fmt(a) for a in alpha[d]) if feasible[d] else ""])
                if trace is not None:
                    for k, obj in enumerate(trace.objectives):
                        conv.append([plan.swept_parameter, value, mode.value, d, k, obj,
                                     prelog * math.log2(obj)])
    elapsed = time.perf_counter() - started
    _emit(_csv_text(SUMRATE_HEADER, agg), plan.output_path)
    if plan.output_path is not None:
        stem = Path(plan.output_path)
        Path(stem.with_name(stem.stem + "_draws.csv")).write_text(_csv_text(DRAW_HEADER, per_draw))
        Path(stem.with_name(stem.stem + "_convergence.csv")).write_text(_csv_text(CONVERGENCE_HEADER, conv))
    print(f"sumrate: {len(plan.grid)} grid point(s), {draws} draws each, wall time {elapsed:.2f} s",
          file=sys.stderr)
    return EXIT_OK


def validation_tolerance(mc: float) -> float:
    return max(0.02, 0.10 * mc)


def _corrupted(l: int, n: int) -> analytic.CoefficientTable:
    table = analytic.c_coefficients(l, n)
    return analytic.CoefficientTable(l, n, tuple(v * (1.0 + 0.5 * j) for j, v in enumerate(table.values)))


def cmd_validate(args, base, run) -> int:
    if args.seed is None and "seed" not in run:
        raise ConfigError("validate needs an explicit --seed")
    if args.trials is None and "trials" not in run:
        args.trials = 10 ** 6
    plan = build_plan(args, run, base, ("fd", "hd"), VALIDATION_GRID)
    coeffs = _corrupted if args.corrupt_coefficients else analytic.c_coefficients
    failed = False
    rows = []
    for row in outage_rows(plan, base, args.n_jobs, coeffs):
        mc, ci, ana = row[4], row[5], row[6]
        if ana is None:
            rows.append(row[:7] + [None, None, None, "unsupported"])
            continue
        gap = abs(ana - mc)
        tol = validation_tolerance(mc)
        ok = gap <= tol
        failed |= not ok
        rows.append(row[:7] + [gap, gap / mc if mc > 0 else None, tol, "pass" if ok else "FAIL"])
    _emit(_csv_text(VALIDATE_HEADER, rows), plan.output_path)
    bad = sum(r[-1] == "FAIL" for r in rows)
    print(f"validate: {len(rows) - bad}/{len(rows)} rows within tolerance", file=sys.stderr)
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_selftest(args, base, run) -> int:
    from fractions import Fraction

    from scipy.integrate import quad

    from .optimizer import Infeasible, sca_optimize
    from .params import sample_realization

    checks: list[tuple[str, bool]] = []
    # C_j against a direct polynomial power
    ok = True
    for l in range(1, 4):
        for n in range(1, 5):
            base_poly = [Fraction(1, math.factorial(k)) for k in range(n)]
            poly = [Fraction(1)]
            for _ in range(l):
                out = [Fraction(0)] * (len(poly) + len(base_poly) - 1)
                for i, p in enumerate(poly):
                    for k, b in enumerate(base_poly):
                        out[i + k] += p * b
                poly = out
            ok &= np.allclose(analytic.c_coefficients(l, n).values, [float(p) for p in poly], rtol=1e-15, atol=0)
    checks.append(("power-series coefficients", bool(ok)))
    ref = quad(lambda t: t ** 2 * math.exp(-t), 1.5, math.inf, epsabs=0, epsrel=1e-13)[0]
    checks.append(("incomplete gamma", abs(analytic.upper_incomplete_gamma_int(3, 1.5) - ref) <= 1e-12 * ref))
    params = base.replace(snr_db=-9.0)
    est = estimate_outage(params, "fd", 2 * 10 ** 5, 1)
    ana = analytic.outage_analytic(params, "fd")
    checks.append(("closed form vs Monte Carlo",
                   bool(np.all(np.abs(ana - est.probability) <= np.maximum(0.02, 0.1 * est.probability)))))
    rng = np.random.default_rng(5)
    mono = True
    done = 0
    p_opt = base.replace(snr_db=-5.0)
    while done < 5:
        try:
            trace = sca_optimize(sample_realization(p_opt, rng), p_opt)
        except Infeasible:
            continue
        mono &= all(b >= a for a, b in zip(trace.objectives, trace.objectives[1:]))
        done += 1
    checks.append(("SCA monotone", bool(mono)))
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
    return EXIT_OK if all(p for _, p in checks) else EXIT_VALIDATION


# -- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdnoma", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with model parameters and optional run settings")
    common.add_argument("--mode", help="fd, hd, oma, a comma list, or all")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per grid point")
    common.add_argument("--seed", type=int, help="global random seed")
    common.add_argument("--out", help="output CSV path (default: stdout)")
    common.add_argument("--sweep", help=f"parameter to sweep: {', '.join(SWEEP_ALIASES)}")
    common.add_argument("--grid", help="start:stop:step (stop included) or comma list")
    common.add_argument("--n-jobs", type=int, default=1, help="worker processes")
    for name, text in (("outage", "outage probability sweep"), ("throughput", "throughput sweep"),
                       ("validate", "closed form vs Monte Carlo report"), ("selftest", "quick health checks")):
        p = sub.add_parser(name, parents=[common], help=text)
        if name == "validate":
            p.add_argument("--corrupt-coefficients", action="store_true", help=argparse.SUPPRESS)
    p = sub.add_parser("sumrate", parents=[common], help="SCA power allocation over random draws")
    p.add_argument("--draws", type=int, help="channel draws per grid point (default 100)")
    p.add_argument("--es-grid", type=float, help="also run exhaustive search with this step")
    p.add_argument("--eps", type=float, help="relative objective tolerance (default 1e-4)")
    p.add_argument("--max-iter", type=int, help="SCA iteration cap (default 50)")
    return parser


COMMANDS = {"outage": cmd_outage, "throughput": cmd_throughput, "sumrate": cmd_sumrate,
            "validate": cmd_validate, "selftest": cmd_selftest}


def _join_grid(argv: Sequence[str]) -> list[str]:
    # argparse takes "--grid -20:0:5" for two options; glue the value on
    out = list(argv)
    for i, tok in enumerate(out[:-1]):
        if tok == "--grid" and out[i + 1].startswith("-"):
            out[i:i + 2] = [f"--grid={out[i + 1]}"]
            break
    return out


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(_join_grid(argv))
    try:
        if args.config:
            base, run = load_config(args.config)
        else:
            base, run = SystemParams(), {}
        if args.n_jobs < 1:
            raise ConfigError("--n-jobs must be at least 1")
        return COMMANDS[args.command](args, base, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
