"""Command-line front end.

Subcommands:

  solve   --config PATH [--seed S] [--out DIR] [--timing]
          run one algorithm on one problem instance; writes a trace CSV and
          a flat key=value report; exit code 0 only on a completed budget.

  compare REPORT [REPORT ...] [--out PATH]
          merge completed runs into one CSV keyed on cumulative eigenvector
          cost, one best-objective-so-far column per run.

  phase   --config PATH [--seed S] [--out DIR]
          Monte Carlo scaling report for the rank-one perturbation phase
          transition; writes CSV + JSON.

Config files are flat `key = value` text; '#' starts a comment. Seeds are
mandatory (no wall-clock seeding); all numeric output uses round-trip
decimal formatting. The only environment variable honored is
EIGSMOOTH_VERBOSE (per-row progress on stderr).
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path


from .optimize import (
    SolverConfig,
    acsa_linesearch_run,
    acsa_run,
    nesterov_smooth_baseline,
    read_trace,
    subgradient_baseline,
    write_trace,
)
from .phase import (
    equal_gap_model,
    load_spectrum,
    monte_carlo_gap,
    tile_model,
    write_phase_report,
)
from .problems import dspca_problem, load_covariance, maxcut_problem, synthetic_covariance
from .smoothing import sample_rng

ALGORITHMS = ("stoch_ls", "acsa", "det_smooth", "subgrad")


class ConfigError(Exception):
    pass


def parse_config(path):
    """Flat key = value file; later keys override earlier ones."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        values[key] = value.strip()
    return values


class Config:
    """Typed accessors over a flat key -> string mapping."""

    def __init__(self, values, path):
        self.values = values
        self.path = path
        self.used = set()

    def _fetch(self, key, cast, default, required):
        if key in self.values:
            self.used.add(key)
            raw = self.values[key]
            try:
                return cast(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"{self.path}: field {key!r} has invalid value {raw!r}") from None
        if required:
            raise ConfigError(f"{self.path}: missing required field {key!r}")
        return default

    def str(self, key, default=None, required=False, choices=None):
        val = self._fetch(key, str, default, required)
        if choices is not None and val is not None and val not in choices:
            raise ConfigError(f"{self.path}: field {key!r} must be one of {choices}, got {val!r}")
        return val

    def int(self, key, default=None, required=False):
        return self._fetch(key, lambda s: int(str(s), 10), default, required)

    def float(self, key, default=None, required=False):
        return self._fetch(key, float, default, required)

    def check_unused(self, known):
        unknown = set(self.values) - set(known)
        if unknown:
            raise ConfigError(f"{self.path}: unknown field {sorted(unknown)[0]!r}")


SOLVE_KEYS = (
    "problem", "algorithm", "n", "seed", "name", "eps", "k", "q", "N",
    "radius", "rho", "data_path", "n_select",
    "gamma_max", "gamma_min", "gamma_init", "gamma_d", "ladder_span",
    "lip_scale", "det_lip_scale", "oracle_path", "oracle_tol", "true_obj_every",
)


def _build_problem(cfg, seed):
    kind = cfg.str("problem", required=True, choices=("dspca", "maxcut"))
    n = cfg.int("n", required=True)
    data_rng = sample_rng(seed, 9001)  # problem data stream, disjoint from the solver's
    if kind == "dspca":
        data_path = cfg.str("data_path")
        if data_path is not None:
            A = load_covariance(data_path, cfg.int("n_select", default=n))
        else:
            A = synthetic_covariance(n, data_rng)
        return dspca_problem(A, rho=cfg.float("rho"))
    return maxcut_problem(n, data_rng, radius=cfg.float("radius"))


def _run_solver(cfg, seed):
    algorithm = cfg.str("algorithm", required=True, choices=ALGORITHMS)
    problem = _build_problem(cfg, seed)
    n = problem.dim
    setup = problem.prox_setup()
    eps = cfg.float("eps", default=0.05)
    budget = cfg.int("N", default=int(math.ceil(100.0 * math.sqrt(n))))
    if algorithm == "det_smooth":
        result = nesterov_smooth_baseline(
            problem, setup, eps, budget,
            lip_scale=cfg.float("det_lip_scale", default=1.0),
            true_obj_every=cfg.int("true_obj_every"),
        )
    elif algorithm == "subgrad":
        result = subgradient_baseline(
            problem, setup, budget, seed=seed, true_obj_every=cfg.int("true_obj_every"),
        )
    else:
        config = SolverConfig(
            N=budget,
            eps=eps,
            k=cfg.int("k", default=3),
            q=cfg.int("q", default=max(1, int(math.ceil(0.1 / eps)))),
            seed=seed,
            gamma_max=cfg.float("gamma_max"),
            gamma_min=cfg.float("gamma_min"),
            gamma_init=cfg.float("gamma_init"),
            gamma_d=cfg.float("gamma_d", default=0.5),
            ladder_span=cfg.float("ladder_span", default=16.0),
            lip_scale=cfg.float("lip_scale", default=100.0),
            oracle_path=cfg.str("oracle_path", default="lanczos", choices=("lanczos", "secular")),
            oracle_tol=cfg.float("oracle_tol", default=1e-6),
            true_obj_every=cfg.int("true_obj_every"),
        )
        runner = acsa_linesearch_run if algorithm == "stoch_ls" else acsa_run
        result = runner(problem, None, setup, config)
    return algorithm, problem, result


def _write_report(path, fields):
    with open(path, "w") as fh:
        for key, value in fields.items():
            if isinstance(value, float):
                value = repr(value)
            fh.write(f"{key} = {value}\n")


def read_report(path):
    values = parse_config(path)
    required = ("algorithm", "iterations", "total_eigvecs", "best_objective", "trace")
    for key in required:
        if key not in values:
            raise ConfigError(f"{path}: report is missing field {key!r}")
    return values


def cmd_solve(args):
    cfg = Config(parse_config(args.config), args.config)
    cfg.check_unused(SOLVE_KEYS)
    seed = args.seed if args.seed is not None else cfg.int("seed")
    if seed is None:
        raise ConfigError(f"{args.config}: missing required field 'seed' (or pass --seed)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    algorithm, problem, result = _run_solver(cfg, seed)
    name = cfg.str("name", default=algorithm)
    trace_path = out / f"{name}_trace.csv"
    report_path = out / f"{name}_report.txt"
    write_trace(trace_path, result.trace, timing=args.timing)
    # aborted runs may have charged the failing iteration after the last row
    if not result.aborted and result.trace and result.trace[-1].eigvecs != result.total_eigvecs:
        raise RuntimeError("trace cost column out of sync with the run total")
    fields = {
        "algorithm": algorithm,
        "name": name,
        "problem": cfg.str("problem"),
        "n": problem.dim,
        "seed": seed,
        "iterations": result.iterations,
        "total_eigvecs": repr(float(result.total_eigvecs)),
        "best_objective": repr(float(result.best_objective)),
        "trace": str(trace_path),
        "completed": "true" if not result.aborted else "false",
    }
    if result.gap_bound is not None:
        fields["gap_bound"] = repr(float(result.gap_bound))
    if result.t_gamma is not None:
        fields["t_gamma"] = result.t_gamma
    if result.aborted:
        fields["abort_reason"] = result.abort_reason
    _write_report(report_path, fields)
    print(f"{algorithm}: iterations={result.iterations} "
          f"eigvecs={float(result.total_eigvecs)!r} "
          f"best_objective={float(result.best_objective)!r}")
    print(f"report: {report_path}")
    return 0 if not result.aborted else 3


def cmd_compare(args):
    if len(args.reports) < 2:
        raise ConfigError("compare needs at least two report files")
    runs = []
    for path in args.reports:
        rep = read_report(path)
        records = read_trace(rep["trace"])
        if not records:
            raise ConfigError(f"{rep['trace']}: empty trace rejected")
        runs.append((rep, records))
    names = []
    for i, (rep, _) in enumerate(runs):
        base = rep.get("name", rep["algorithm"])
        name = base if base not in names else f"{base}_{i}"
        names.append(name)
    checkpoints = sorted({r.eigvecs for _, records in runs for r in records})
    columns = []
    for _, records in runs:
        best = float("inf")
        series = []
        idx = 0
        for cp in checkpoints:
            while idx < len(records) and records[idx].eigvecs <= cp:
                if not math.isnan(records[idx].obj_true):
                    best = min(best, records[idx].obj_true)
                idx += 1
            series.append(best if best < float("inf") else float("nan"))
        columns.append(series)
    out = Path(args.out)
    with open(out, "w") as fh:
        fh.write("eigvecs," + ",".join(f"best_{n}" for n in names) + "\n")
        for j, cp in enumerate(checkpoints):
            row = [repr(float(cp))] + [repr(float(col[j])) for col in columns]
            fh.write(",".join(row) + "\n")
    print(f"compare: {len(runs)} runs, {len(checkpoints)} checkpoints -> {out}")
    return 0


PHASE_KEYS = (
    "model", "seed", "n_list", "eps_rule", "trials",
    "gamma", "top", "multiplicity", "spectrum_path",
)


def _parse_eps_rule(text):
    text = text.strip()
    if text.endswith("eps0"):
        head = text[: -len("eps0")].rstrip()
        if head.endswith("*"):
            head = head[:-1].strip()
        factor = float(head) if head else 1.0
        return lambda eps0, n: factor * eps0
    value = float(text)
    return lambda eps0, n: value


def cmd_phase(args):
    cfg = Config(parse_config(args.config), args.config)
    cfg.check_unused(PHASE_KEYS)
    seed = args.seed if args.seed is not None else cfg.int("seed")
    if seed is None:
        raise ConfigError(f"{args.config}: missing required field 'seed' (or pass --seed)")
    model_kind = cfg.str("model", default="equal_gap", choices=("equal_gap", "file"))
    if model_kind == "equal_gap":
        gamma = cfg.float("gamma", default=1.0)
        top = cfg.float("top", default=1.0)
        mult = cfg.int("multiplicity", default=1)
        family = lambda n: equal_gap_model(n, gamma=gamma, top=top, multiplicity=mult)
        default_sizes = "100,400,1600"
    else:
        base = load_spectrum(cfg.str("spectrum_path", required=True))
        family = lambda n: base if n == base.n else tile_model(base, n)
        default_sizes = str(base.n)
    sizes = [int(s) for s in cfg.str("n_list", default=default_sizes).split(",") if s.strip()]
    rule = _parse_eps_rule(cfg.str("eps_rule", default="eps0"))
    trials = cfg.int("trials", default=500)
    report = monte_carlo_gap(family, sizes, rule, trials, seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "phase.csv"
    json_path = out / "phase.json"
    write_phase_report(report, csv_path, json_path)
    print(f"regime={report.regime} slope={report.slope!r} trials={report.trials}")
    print(f"report: {csv_path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="eigsmooth", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run one solver on one problem instance")
    solve.add_argument("--config", required=True)
    solve.add_argument("--seed", type=int, default=None)
    solve.add_argument("--out", default=".")
    solve.add_argument("--timing", action="store_true",
                       help="record wall times in the trace (breaks byte-reproducibility)")
    solve.set_defaults(func=cmd_solve)

    compare = sub.add_parser("compare", help="merge run reports on cumulative eigenvector cost")
    compare.add_argument("reports", nargs="+")
    compare.add_argument("--out", default="compare.csv")
    compare.set_defaults(func=cmd_compare)

    phase = sub.add_parser("phase", help="phase-transition scaling report")
    phase.add_argument("--config", required=True)
    phase.add_argument("--seed", type=int, default=None)
    phase.add_argument("--out", default=".")
    phase.set_defaults(func=cmd_phase)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    verbose = os.environ.get("EIGSMOOTH_VERBOSE", "")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # solver aborts surface as nonzero exits
        if verbose:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
