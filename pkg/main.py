"""
Main entry point of the stiff-ODE reduced-order-model pipeline.

    python main.py --config config/experiments/vdp.json generate
    python main.py --config config/experiments/vdp.json train --stage all
    python main.py --config config/experiments/vdp.json benchmark
    python main.py --config config/experiments/vdp.json search --budget 8
    python main.py solve --problem rober --mu 0.04,1e4,3e7 --solver radau --tol 1e-6

Exit codes: 0 success, 2 configuration or usage error, 3 missing dataset or
model, 4 numerical failure.
"""

import argparse
import os
import sys

from config.constants import EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERICAL, EXIT_OK
from config.experiment import default_experiment, load_experiment
from engine.benchmark import Benchmark
from engine.data_generator import DataGenerator
from engine.reporter import write_json
from engine.trainer import Trainer
from utils.errors import ConfigError, MissingArtifactError, NumericalError
from utils.ode_core import DOPRI5, RK4, Tolerance, solve_adaptive, solve_fixed
from utils.problems import get_problem
from utils.radau import radau_solve
from config.settings import *


def _floats(text):
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def build_parser():
    # accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="experiment file (JSON or YAML)")
    common.add_argument("--problem", default=argparse.SUPPRESS, help="problem id, registry defaults (no --config)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the experiment seed")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="parallel workers")
    common.add_argument("--overwrite", action="store_true", default=argparse.SUPPRESS,
                        help="replace existing datasets / models")

    parser = argparse.ArgumentParser(prog="stiffrom", description=__doc__.split("\n\n")[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="reference solves -> dataset")

    train = sub.add_parser("train", parents=[common], help="train the dynamics and/or time-map networks")
    train.add_argument("--stage", choices=("dynamics", "timemap", "all"), default="all")

    bench = sub.add_parser("benchmark", parents=[common], help="ROM vs Radau comparison table")
    bench.add_argument("--mu", type=_floats, action="append",
                       help="comma-separated parameter vector, repeatable (default: test points)")

    search = sub.add_parser("search", parents=[common], help="random hyperparameter search")
    search.add_argument("--budget", type=int, default=None)

    solve = sub.add_parser("solve", parents=[common], help="one-off solve of a registered problem to CSV")
    solve.add_argument("--mu", type=_floats, default=None, help="comma-separated parameter vector")
    solve.add_argument("--solver", choices=("radau", "dopri5", "rk4"), default="radau")
    solve.add_argument("--tol", type=float, default=1e-6)
    solve.add_argument("--dt", type=float, default=None, help="step of the fixed rk4 solver")
    solve.add_argument("--t-final", type=float, default=None, help="defaults to the training horizon")
    solve.add_argument("--out", default=None, help="output CSV (default <problem>_<solver>.csv)")
    return parser


def _experiment(args):
    seed, workers = getattr(args, "seed", None), getattr(args, "workers", None)
    if getattr(args, "config", None):
        return load_experiment(args.config, seed=seed, workers=workers)
    if getattr(args, "problem", None):
        return default_experiment(args.problem, seed=seed, workers=workers)
    raise ConfigError("Pass --config <experiment file> or --problem <id>")


def cmd_generate(args):
    config = _experiment(args)
    result = DataGenerator("generate", config, overwrite=getattr(args, "overwrite", False)).run()
    if not result.ok:
        for failure in result.failures:
            print(f"  {failure['tag']} mu={failure['mu']}: {failure['error']}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_train(args):
    config = _experiment(args)
    Trainer("train", config, overwrite=getattr(args, "overwrite", False)).run(args.stage)
    return EXIT_OK


def cmd_benchmark(args):
    config = _experiment(args)
    table = Benchmark("benchmark", config).run(args.mu)
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_search(args):
    config = _experiment(args)
    budget = config.search.budget if args.budget is None else args.budget
    if budget < 1:
        raise ConfigError(f"--budget must be at least 1, got {budget}")
    ranked = Trainer("search", config).search(budget)
    for trial in ranked:
        print(f"#{trial['rank']}: {trial['activation']} depth={trial['depth']} width={trial['width']} "
              f"lr={trial['lr']:.3g} val_loss={trial['val_loss']:.6g}")
    return EXIT_OK


def cmd_solve(args):
    name = getattr(args, "problem", None)
    if name is None and getattr(args, "config", None):
        name = load_experiment(args.config).problem
    if name is None:
        raise ConfigError("solve needs --problem (or --config)")
    problem = get_problem(name)
    mu = problem.check_param(args.mu if args.mu is not None else problem.test_points[0])
    tf = args.t_final if args.t_final is not None else problem.horizon(mu)
    f, jac = problem.bind(mu)
    u0 = problem.initial_state(mu)

    print(f"Solving {problem.name} mu={mu.tolist()} with {args.solver} on [0, {tf:g}]")
    if args.solver == "radau":
        traj, stats = radau_solve(f, jac, u0, 0.0, tf, Tolerance.parse(args.tol))
    elif args.solver == "dopri5":
        traj, stats = solve_adaptive(f, u0, 0.0, tf, Tolerance.parse(args.tol), tableau=DOPRI5)
    else:
        if args.dt is None:
            raise ConfigError("rk4 needs --dt")
        traj, stats = solve_fixed(f, u0, 0.0, tf, args.dt, tableau=RK4)

    out = args.out or f"{problem.name}_{args.solver}.csv"
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    traj.to_csv(out)
    write_json(os.path.splitext(out)[0] + "_stats.json",
               {"problem": problem.name, "mu": mu.tolist(), "solver": args.solver, **stats.to_dict()})
    print(f"{len(traj)} points written to {out} (n_fev={stats.n_fev}, n_jev={stats.n_jev}, n_lu={stats.n_lu})")
    return EXIT_OK


COMMANDS_DICT = {
    "generate": cmd_generate,
    "train": cmd_train,
    "benchmark": cmd_benchmark,
    "search": cmd_search,
    "solve": cmd_solve,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    S = get_settings()
    print("Process started with RUN_ID:", S.RUN_ID)

    try:
        code = COMMANDS_DICT[args.command](args)
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as e:
        print(f"Missing artifact: {e}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalError as e:
        print(f"Numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL

    print("\nProcess ended")
    return code


if __name__ == "__main__":
    sys.exit(main())
