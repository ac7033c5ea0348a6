"""Command-line driver: adaptive runs and slope fitting.

``bubblefem run`` executes a benchmark with the configured adaptivity
mode and writes records.csv, config.json and summary.txt into the output
directory.  ``bubblefem slope`` fits a log-log least-squares slope over
the trailing rows of a records CSV.  Flags override values from an
optional JSON config file.  Exit codes: 0 success, 1 configuration
error, 2 solver failure.
"""

import argparse
import csv
import json
import math
import pathlib
import sys
from dataclasses import asdict, dataclass

import numpy as np

from .adapt import LoopConfig, adaptive_loop
from .benchmarks import BENCHMARKS, get_benchmark
from .solvers import SolverError


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Effective configuration of one run (file values merged with flags)."""

    benchmark: str = "exp1"
    mode: str = "energy"
    p: int = 1
    k: int = 3
    theta: float | None = None  # default depends on the mode
    alpha: float = 3.5
    sigma0: float | None = None
    max_dofs: int | None = None
    max_iters: int | None = None
    delta: float = 0.01
    outdir: str = "out"
    vtk: bool = False
    dump_matrices: bool = False
    quad_degree: int | None = None
    window: int = 5

    def resolved_theta(self):
        if self.theta is not None:
            return self.theta
        return 0.2 if self.mode == "goa" else 0.5

    def validate(self):
        if self.benchmark not in BENCHMARKS:
            raise ConfigError(f"unknown benchmark {self.benchmark!r}")
        if self.mode not in ("energy", "goa", "uniform"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.p not in (1, 2, 3):
            raise ConfigError("p must be 1, 2 or 3")
        if not (self.k > max(self.p, 2) or self.k <= self.p):
            raise ConfigError("k must satisfy k > max(p, 2) or k <= p")
        if not 0.0 < self.resolved_theta() <= 1.0:
            raise ConfigError("theta must lie in (0, 1]")
        if self.delta <= 0.0:
            raise ConfigError("delta must be positive")
        if self.max_dofs is None and self.max_iters is None:
            raise ConfigError("one of --max-dofs / --max-iters is required")
        if self.mode == "goa" and self.benchmark != "exp2":
            raise ConfigError("goal-oriented mode requires the exp2 benchmark")
        return self


def slope(rows, x_column, y_column, window=5):
    """Least-squares slope of log(y) vs log(x) over the trailing window.

    ``rows`` is a list of dicts (CSV rows); nonpositive or missing values
    are rejected.
    """
    if window < 2:
        raise ValueError("window must cover at least two rows")
    tail = rows[-window:] if len(rows) > window else rows
    if len(tail) < 2:
        raise ValueError("need at least two rows to fit a slope")
    xs, ys = [], []
    for row in tail:
        x, y = float(row[x_column]), float(row[y_column])
        if not (x > 0.0 and y > 0.0) or math.isnan(x) or math.isnan(y):
            raise ValueError(f"nonpositive or missing value in {x_column}/{y_column}")
        xs.append(math.log(x))
        ys.append(math.log(y))
    return float(np.polyfit(xs, ys, 1)[0])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _summarize(records, config):
    rows = [dict(zip(
        ["iter", "dofs_trial", "dofs_test", "dofs_total", "est_energy",
         "err_L2_rel", "err_triple", "err_qoi_rel", "saturation", "marked"],
        rec.csv_row())) for rec in records]
    lines = [
        f"benchmark: {config.benchmark}  mode: {config.mode}  "
        f"p={config.p} k={config.k} theta={config.resolved_theta():g}",
        f"iterations: {len(records)}  final total DoFs: {records[-1].dofs_total}",
    ]
    for column in ("est_energy", "err_L2_rel", "err_triple", "err_qoi_rel"):
        try:
            s = slope(rows, "dofs_total", column, config.window)
        except (ValueError, KeyError):
            continue
        lines.append(f"slope {column} vs dofs_total (last {config.window}): {s:+.3f}")
    return "\n".join(lines) + "\n"


def run(config):
    """Execute a configured run; returns the process exit code."""
    try:
        config.validate()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1

    bench = get_benchmark(config.benchmark, delta=config.delta)
    loop = LoopConfig(
        p=config.p,
        k=config.k,
        theta=config.resolved_theta(),
        mode=config.mode,
        alpha=config.alpha,
        max_dofs=config.max_dofs,
        max_iters=config.max_iters,
        sigma0=config.sigma0,
        quad_degree=config.quad_degree,
        outdir=config.outdir,
        vtk=config.vtk,
        dump_matrices=config.dump_matrices,
    )
    outdir = pathlib.Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "config.json", "w") as fh:
        json.dump(asdict(config), fh, indent=2)
    try:
        records = adaptive_loop(bench, loop)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    summary = _summarize(records, config)
    (outdir / "summary.txt").write_text(summary)
    print(summary, end="")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # configuration errors exit with code 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser():
    parser = _Parser(prog="bubblefem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="execute an adaptive benchmark run")
    runp.add_argument("--config", help="JSON file with RunConfig keys (flags override)")
    runp.add_argument("--benchmark", choices=sorted(BENCHMARKS))
    runp.add_argument("--mode", choices=["energy", "goa", "uniform"])
    runp.add_argument("--p", type=int)
    runp.add_argument("--k", type=int)
    runp.add_argument("--theta", type=float)
    runp.add_argument("--alpha", type=float)
    runp.add_argument("--sigma0", type=float)
    runp.add_argument("--max-dofs", type=int, dest="max_dofs")
    runp.add_argument("--max-iters", type=int, dest="max_iters")
    runp.add_argument("--delta", type=float)
    runp.add_argument("--outdir")
    runp.add_argument("--vtk", action="store_true", default=None)
    runp.add_argument("--dump-matrices", action="store_true", default=None,
                      dest="dump_matrices")
    runp.add_argument("--quad-degree", type=int, dest="quad_degree")
    runp.add_argument("--window", type=int)

    slopep = sub.add_parser("slope", help="fit a log-log slope from a records CSV")
    slopep.add_argument("csv")
    slopep.add_argument("x_column")
    slopep.add_argument("y_column")
    slopep.add_argument("--window", type=int, default=5)
    return parser


def parse_run_config(args):
    """Merge config-file values and command-line flags into a RunConfig."""
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        unknown = set(file_values) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for field in RunConfig.__dataclass_fields__:
        flag = getattr(args, field, None)
        if flag is not None:
            values[field] = flag
    return RunConfig(**values)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        try:
            config = parse_run_config(args)
        except (ConfigError, TypeError) as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return 1
        return run(config)
    if args.command == "slope":
        rows = read_csv(args.csv)
        try:
            value = slope(rows, args.x_column, args.y_column, args.window)
        except (ValueError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"{value:+.6f}")
        return 0
    return 1


def entry():
    sys.exit(main())
