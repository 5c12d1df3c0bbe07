"""Command-line entry point: ``agnostic-control <command> [flags]``.

Commands and their CSV columns (fixed order):

  mr-sweep    sigma_v,T,sigma_opt,mr_star,residual,iters,status
  ar-sweep    sigma_v,T,T0,y_gap,x_gap_norm,decay_ratio,status
  simulate    strategy,a,mean_cost,std_error,predicted,z_score
  estimate    horizon,n,a_hat_1..d,q_hat_1..d,constraint_residual[,error_1..d]

``status`` is 0 for a converged row and 1 otherwise (outputs then NaN).
Exit codes: 0 success, 2 some sweep rows failed, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import errors
from .estimator import estimate_state, solve_weights
from .model import PriorSpec, SystemSpec, TimeGrid, read_matrix, validate_spec
from .numerics import Trajectory
from .regret import ar_limit, bayesian_cost, known_a_cost, solve_constant_mr_prior
from .simulator import (
    AgnosticAdditive,
    Bayesian,
    KnownA,
    SimConfig,
    default_threads,
    simulate,
)

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2
FLAT_PRIOR_VARIANCE = 1e6

MR_COLUMNS = ["sigma_v", "T", "sigma_opt", "mr_star", "residual", "iters", "status"]
AR_COLUMNS = ["sigma_v", "T", "T0", "y_gap", "x_gap_norm", "decay_ratio", "status"]
SIM_COLUMNS = ["strategy", "a", "mean_cost", "std_error", "predicted", "z_score"]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17e" % float(v)
    return str(v)


def _write_csv(rows, columns, out: str | None) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    if out is None or out == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(out).write_text(buf.getvalue())


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:count[:log|lin]``; log spacing by default."""
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise argparse.ArgumentTypeError(f"grid must be start:stop:count[:log|lin], got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
    kind = parts[3] if len(parts) == 4 else "log"
    if count < 1 or kind not in ("log", "lin"):
        raise argparse.ArgumentTypeError(f"bad grid {text!r}")
    if kind == "log":
        if start <= 0 or stop <= 0:
            raise argparse.ArgumentTypeError("log grid needs positive endpoints")
        return np.geomspace(start, stop, count)
    return np.linspace(start, stop, count)


def _add_spec_flags(p: argparse.ArgumentParser, sigma_v_list: bool) -> None:
    g = p.add_argument_group("system")
    g.add_argument("--d", type=int, default=1, help="state dimension (isotropic scalars)")
    if sigma_v_list:
        g.add_argument("--sigma-v", type=_float_list, default=[1.0],
                       help="comma list of sensor noise std devs")
    else:
        g.add_argument("--sigma-v", type=float, default=1.0, help="sensor noise std dev")
    g.add_argument("--sigma-w", type=float, default=1.0, help="process noise std dev")
    g.add_argument("--sigma-q0", type=float, default=1.0, help="initial state std dev")
    g.add_argument("--q", type=float, default=1.0, help="state cost weight")
    g.add_argument("--r", type=float, default=1.0, help="control cost weight")
    for name in ("sigma-v", "sigma-w", "sigma-q0", "q", "r"):
        g.add_argument(f"--{name}-matrix", type=Path, default=None,
                       help=f"file with the full {name} matrix (overrides the scalar)")
    p.add_argument("--steps", type=float, default=500.0,
                   help="ODE steps per unit time (default 500)")
    p.add_argument("--min-steps", type=int, default=400, help="minimum ODE steps per solve")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $AGNOSTIC_CONTROL_THREADS or CPU count)")


def build_spec(args, sigma_v: float, t_final: float, t0: float) -> SystemSpec:
    d = args.d
    spec = SystemSpec.isotropic(d, sigma_v=sigma_v, sigma_w=args.sigma_w,
                                sigma_q0=args.sigma_q0, q=args.q, r=args.r,
                                t_final=t_final, t0=t0)
    overrides = {}
    for attr, flag in (("sigma_v", "sigma_v_matrix"), ("sigma_w", "sigma_w_matrix"),
                       ("sigma_q0", "sigma_q0_matrix"), ("q_weight", "q_matrix"),
                       ("r_weight", "r_matrix")):
        path = getattr(args, flag)
        if path is not None:
            overrides[attr] = read_matrix(path)
    return validate_spec(spec.__class__(**{**spec.__dict__, **overrides})) if overrides else spec


def _grid(args, spec: SystemSpec) -> TimeGrid:
    return TimeGrid.for_spec(spec, steps_per_unit=args.steps, min_steps=args.min_steps)


def _threads(args) -> int:
    return args.threads if args.threads else default_threads()


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SweepRow:
    values: dict

    def __getitem__(self, key):
        return self.values[key]


def _mr_chain(args, sigma_v: float, t_values: np.ndarray) -> list[SweepRow]:
    rows = []
    init = args.init_sigma
    for t_final in t_values:
        spec = build_spec(args, sigma_v, float(t_final), args.t0)
        try:
            sol = solve_constant_mr_prior(spec, _grid(args, spec), init_sigma=init)
        except (errors.NoConvergence, errors.NonFinite, errors.Singular,
                errors.DegenerateOptimal) as exc:
            rows.append(SweepRow(dict(sigma_v=sigma_v, T=float(t_final), sigma_opt=math.nan,
                                      mr_star=math.nan, residual=getattr(exc, "residual", math.nan)
                                      or math.nan,
                                      iters=getattr(exc, "iterations", -1) or -1, status=1)))
            continue
        init = sol.sigma
        rows.append(SweepRow(dict(sigma_v=sigma_v, T=float(t_final), sigma_opt=sol.sigma,
                                  mr_star=sol.report.worst_case_mr, residual=sol.residual,
                                  iters=sol.iterations, status=0)))
    return rows


def cmd_mr_sweep(args) -> int:
    t_values = args.t_grid
    chains = _map(lambda sv: _mr_chain(args, sv, t_values), list(args.sigma_v), _threads(args))
    rows = [r for chain in chains for r in chain]
    _write_csv(rows, MR_COLUMNS, args.out)
    return EXIT_PARTIAL if any(r["status"] for r in rows) else EXIT_OK


def _ar_point(args, sigma_v: float, t_final: float, t0: float) -> SweepRow:
    base = dict(sigma_v=sigma_v, T=t_final, T0=t0)
    try:
        spec = build_spec(args, sigma_v, t_final, t0)
        rep = ar_limit(spec, _grid(args, spec), args.sigma_sq_schedule)
    except (errors.NonFinite, errors.Singular, errors.GridMismatch) as exc:
        print(f"warning: sigma_v={sigma_v} T={t_final} T0={t0}: {exc}", file=sys.stderr)
        return SweepRow(dict(base, y_gap=math.nan, x_gap_norm=math.nan,
                             decay_ratio=math.nan, status=1))
    ratio = float(rep.decay_ratios.min()) if rep.decay_ratios.size else math.nan
    if rep.y_gap_change > 1e-2:
        print(f"warning: sigma_v={sigma_v} T={t_final} T0={t0}: y_gap still moved by "
              f"{rep.y_gap_change:.1%} over the last schedule step; extend "
              "--sigma-sq-schedule (with a finer --steps) for the limit", file=sys.stderr)
    return SweepRow(dict(base, y_gap=rep.y_gap, x_gap_norm=rep.table[-1].x_gap_norm,
                         decay_ratio=ratio, status=0))


def cmd_ar_sweep(args) -> int:
    if args.mode == "t0-sweep":
        points = [(sv, args.t_final, float(t0)) for sv in args.sigma_v for t0 in args.t0_grid]
    else:
        points = [(sv, float(t), args.t0) for sv in args.sigma_v for t in args.t_grid]
    rows = _map(lambda p: _ar_point(args, *p), points, _threads(args))
    _write_csv(rows, AR_COLUMNS, args.out)
    return EXIT_PARTIAL if any(r["status"] for r in rows) else EXIT_OK


def parse_strategy(text: str):
    name, _, value = text.partition(":")
    try:
        if name == "bayesian":
            return Bayesian(PriorSpec.isotropic(float(value) if value else 1.0))
        if name == "known-a":
            return KnownA()
        if name == "agnostic":
            return AgnosticAdditive(int(value) if value else AgnosticAdditive().n)
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(
        f"strategy must be bayesian:<sigma-sq>, known-a or agnostic:<n>, got {text!r}")


def cmd_simulate(args) -> int:
    spec = build_spec(args, args.sigma_v, args.t_final, args.t0)
    strategy = args.strategy
    if isinstance(strategy, Bayesian) and strategy.prior.d != spec.d:
        strategy = Bayesian(PriorSpec(strategy.prior.sigma_prior[0, 0] * np.eye(spec.d)))
    a = np.asarray(args.a, dtype=float)
    if a.size == 1 and spec.d > 1:
        a = np.full(spec.d, a[0])
    config = SimConfig(dt=args.dt, trials=args.trials, seed=args.seed, strategy=strategy,
                       threads=_threads(args), n_paths=args.dump_paths)
    result = simulate(spec, config, a)
    grid = _grid(args, spec)
    if isinstance(strategy, Bayesian):
        quad = bayesian_cost(spec, strategy.prior, grid)
        label = f"bayesian:{_fmt(float(strategy.prior.sigma_prior[0, 0]))}"
    elif isinstance(strategy, KnownA):
        quad = known_a_cost(spec, grid)
        label = "known-a"
    else:
        quad = bayesian_cost(spec, PriorSpec(FLAT_PRIOR_VARIANCE * np.eye(spec.d)), grid)
        label = f"agnostic:{strategy.n}"
    predicted = quad(a)
    z = (result.mean_cost - predicted) / result.std_error if result.std_error > 0 else math.nan
    row = dict(strategy=label, a=" ".join(_fmt(v) for v in a), mean_cost=result.mean_cost,
               std_error=result.std_error, predicted=predicted, z_score=z)
    _write_csv([row], SIM_COLUMNS, args.out)
    if args.dump_paths and result.sample_paths is not None:
        target = args.paths_out or Path("paths.csv")
        for p in result.sample_paths.write_csv(target):
            print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


def _read_path_csv(path: Path, horizon: float):
    data = np.genfromtxt(path, delimiter=",", names=True)
    cols = data.dtype.names
    if not cols or cols[0] != "t":
        raise errors.DimensionMismatch(f"{path}: first column must be 't'")
    t = np.atleast_1d(data["t"])
    y = np.column_stack([np.atleast_1d(data[c]) for c in cols[1:]])
    n = len(t) - 1
    if n < 2:
        raise errors.DimensionMismatch(f"{path}: need at least 3 samples")
    grid = TimeGrid(0.0, horizon, n)
    if np.max(np.abs(t - grid.nodes)) > 1e-9 * max(1.0, horizon):
        raise errors.GridMismatch(f"{path}: samples must sit on a uniform grid over [0, {horizon}]")
    return grid, y


def cmd_estimate(args) -> int:
    spec = build_spec(args, args.sigma_v, args.horizon, 0.0)
    if args.path is not None:
        grid, y = _read_path_csv(args.path, args.horizon)
        n = grid.n_steps
        truth = None
    else:
        n = args.n
        grid = TimeGrid(0.0, args.horizon, n)
        truth = np.asarray(args.synthetic_a, dtype=float)
        if truth.size == 1 and spec.d > 1:
            truth = np.full(spec.d, truth[0])
        y = np.outer(grid.nodes**2 / 2.0, truth)
    if y.shape[1] != spec.d:
        raise errors.DimensionMismatch(f"path has {y.shape[1]} components, system has {spec.d}")
    try:
        weights = solve_weights(spec, args.horizon, n)
    except errors.Singular as exc:
        raise errors.Singular(f"{exc}; try a larger --n or a larger --sigma-v") from None
    a_hat, q_hat = estimate_state(Trajectory(grid, y), weights)
    d = spec.d
    row = dict(horizon=args.horizon, n=n, constraint_residual=weights.constraint_residual())
    columns = ["horizon", "n"] + [f"a_hat_{i + 1}" for i in range(d)] \
        + [f"q_hat_{i + 1}" for i in range(d)] + ["constraint_residual"]
    for i in range(d):
        row[f"a_hat_{i + 1}"] = a_hat[i]
        row[f"q_hat_{i + 1}"] = q_hat[i]
    if truth is not None:
        for i in range(d):
            row[f"error_{i + 1}"] = a_hat[i] - truth[i]
        columns += [f"error_{i + 1}" for i in range(d)]
    _write_csv([row], columns, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agnostic-control",
        description=__doc__.split("\n\n", 1)[0],
        epilog=__doc__.split("\n\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mr-sweep", help="constant-MR prior and worst-case MR over horizons",
                       description="Columns: " + ",".join(MR_COLUMNS))
    _add_spec_flags(p, sigma_v_list=True)
    p.add_argument("--t-grid", type=parse_grid, default=parse_grid("0.05:20:40:log"),
                   help="horizons start:stop:count[:log|lin] (default 0.05:20:40:log)")
    p.add_argument("--t0", type=float, default=0.0, help="control start")
    p.add_argument("--init-sigma", type=float, default=1.0, help="first Newton guess for sigma")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_mr_sweep)

    p = sub.add_parser("ar-sweep", help="flat-prior additive regret over T0 or T",
                       description="Columns: " + ",".join(AR_COLUMNS)
                       + ". decay_ratio is the smallest ratio of successive ||X - X*||.")
    _add_spec_flags(p, sigma_v_list=True)
    p.add_argument("--mode", choices=("t0-sweep", "t-sweep"), required=True)
    p.add_argument("--sigma-sq-schedule", type=_float_list, default=[1e2, 1e4, 1e6],
                   help="increasing prior variances (default 1e2,1e4,1e6)")
    p.add_argument("--t-final", type=float, default=10.0, help="horizon for t0-sweep")
    p.add_argument("--t0-grid", type=parse_grid, default=parse_grid("0.01:1:3:log"),
                   help="control starts for t0-sweep")
    p.add_argument("--t0", type=float, default=0.1, help="control start for t-sweep")
    p.add_argument("--t-grid", type=parse_grid, default=parse_grid("1:100:9:log"),
                   help="horizons for t-sweep")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_ar_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo cost of one controller",
                       description="Columns: " + ",".join(SIM_COLUMNS))
    _add_spec_flags(p, sigma_v_list=False)
    p.add_argument("--a", type=_float_list, default=[0.0], help="true drift (comma list)")
    p.add_argument("--strategy", type=parse_strategy, default=Bayesian(PriorSpec.isotropic(1.0)),
                   help="bayesian:<sigma-sq> | known-a | agnostic:<n>")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-final", type=float, default=1.0)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--dump-paths", type=int, default=0, metavar="K",
                   help="write trajectories of the first K trials")
    p.add_argument("--paths-out", type=Path, default=None,
                   help="path prefix for dumped trajectories (default paths.csv)")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="flat-prior drift estimate from an observation path")
    _add_spec_flags(p, sigma_v_list=False)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--n", type=int, default=400, help="quadrature steps (synthetic mode)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--path", type=Path, help="CSV with columns t,y_1..y_d on a uniform grid")
    src.add_argument("--synthetic-a", type=_float_list,
                     help="use the noiseless mean path for this drift")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_estimate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which here means a partial sweep
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    try:
        return args.func(args)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
