"""Command-line front end: ``solve``, ``benchmark``, ``reduce`` and ``generate``.

Exit codes: 0 success, 1 usage or input error, 2 no convergence within the
iteration limit.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from .driver import RunConfig, benchmark, run, write_benchmark_csv
from .instance import InstanceError, generate_synthetic, read_instance, write_instance
from .scenred import compute_z_matrix, distance, export_similarity_graph, kmedoid, reduce_instance
from .solver import SolverError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2

METHOD_NAMES = {"none": "none", "proximal": "proximal", "level": "level", "trust": "trust_region"}
SCHEDULE_NAMES = {"none": "none", "exp": "exponential", "lin": "linear", "log": "logarithmic"}

log = logging.getLogger("bendersplan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad input; 2 is reserved for non-convergence here
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _short(table: dict, long_name: str) -> str:
    return next(k for k, v in table.items() if v == long_name)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    d = RunConfig(method="none")  # method-independent defaults
    p.add_argument("instance", help="instance JSON file")
    p.add_argument("--config", help="JSON file with RunConfig fields; flags given explicitly win")
    p.add_argument("--method", choices=list(METHOD_NAMES), default=_short(METHOD_NAMES, RunConfig.method))
    p.add_argument("--epsilon", type=float, default=d.epsilon)
    p.add_argument("--eta", type=int, default=d.eta)
    p.add_argument("--schedule", choices=list(SCHEDULE_NAMES), default=_short(SCHEDULE_NAMES, d.schedule))
    p.add_argument("--vi", action="store_true", default=d.use_valid_inequalities,
                   help="add the yearly energy-balance valid inequalities to the master")
    p.add_argument("--initialize", action=argparse.BooleanOptionalAction, default=None,
                   help="start from the most probable scenario's plan (default: on when stabilised)")
    p.add_argument("--mu-start", type=float, default=d.mu_start)
    p.add_argument("--mu-max", type=float, default=d.mu_max)
    p.add_argument("--beta", type=float, default=d.beta)
    p.add_argument("--psi", type=float, default=d.psi)
    p.add_argument("--max-iters", type=int, default=d.max_iterations)
    p.add_argument("--workers", type=int, default=d.workers)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bendersplan", description="Stabilised Benders decomposition for stochastic capacity expansion.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_run_flags(sub.add_parser("solve", help="solve an instance by decomposition"))
    _add_run_flags(sub.add_parser("benchmark", help="closed problem vs decomposition, writes report.csv"))

    red = sub.add_parser("reduce", help="k-medoid scenario reduction")
    red.add_argument("instance")
    red.add_argument("--m", type=int, required=True, help="number of representative scenarios")
    red.add_argument("--seed", type=int, default=0)
    red.add_argument("--out", default=".")

    gen = sub.add_parser("generate", help="write a seeded synthetic instance")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--scenarios", type=int, default=4)
    gen.add_argument("--techs", type=int, default=3)
    gen.add_argument("--storage", type=int, default=1)
    gen.add_argument("--time-steps", type=int, default=168)
    gen.add_argument("--years", type=int, default=2)
    gen.add_argument("--out", default="instance.json", help="output file")
    return parser


_FLAG_FIELDS = {
    "epsilon": "epsilon", "eta": "eta", "vi": "use_valid_inequalities", "mu_start": "mu_start",
    "mu_max": "mu_max", "beta": "beta", "psi": "psi", "max_iters": "max_iterations",
    "workers": "workers", "seed": "seed",
}


def config_from_args(args, argv=()) -> RunConfig:
    """RunConfig from parsed flags, layered over an optional JSON config file."""
    values = {}
    if args.config:
        with open(args.config) as fh:
            values = json.load(fh)
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(values) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    given = {a.split("=")[0] for a in argv if a.startswith("--")}

    def put(field, value, flag):
        if field not in values or flag in given:
            values[field] = value

    put("method", METHOD_NAMES[args.method], "--method")
    put("schedule", SCHEDULE_NAMES[args.schedule], "--schedule")
    for attr, field in _FLAG_FIELDS.items():
        put(field, getattr(args, attr), "--" + attr.replace("_", "-"))
    if args.initialize is not None:
        values["initialize"] = args.initialize
    if values.get("initialize") and values["method"] == "none":
        raise UsageError("--initialize requires a stabilization method (--method proximal|level|trust)")
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _solve(args, argv) -> int:
    config = config_from_args(args, argv)
    instance = read_instance(args.instance)
    result = run(instance, config)
    os.makedirs(args.out, exist_ok=True)
    result.trace.write_csv(os.path.join(args.out, "trace.csv"))
    with open(os.path.join(args.out, "solution.json"), "w") as fh:
        json.dump(result.to_json(), fh, indent=2)
    print(f"objective {result.objective:.6f}  lower bound {result.lower_bound:.6f}  "
          f"gap {result.gap:.4%}  iterations {result.iterations}")
    if not result.converged:
        print(f"no convergence within {config.max_iterations} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _benchmark(args, argv) -> int:
    config = config_from_args(args, argv)
    instance = read_instance(args.instance)
    rows = benchmark(instance, config)
    os.makedirs(args.out, exist_ok=True)
    write_benchmark_csv(rows, os.path.join(args.out, "report.csv"))
    for r in rows:
        print(f"{r['solver']:>22}  {r['solve_s']:8.2f} s  objective {r['objective']:.6f}")
    return EXIT_OK


def _reduce(args) -> int:
    instance = read_instance(args.instance)
    n = len(instance.scenarios)
    if not 1 <= args.m <= n:
        raise UsageError(f"--m must lie in [1, {n}]")
    ids = [s.id for s in instance.scenarios]
    dm = distance(compute_z_matrix(instance), ids)
    red = kmedoid(dm, args.m, seed=args.seed)
    export_similarity_graph(dm, red, args.out)
    write_instance(reduce_instance(instance, red), os.path.join(args.out, "reduced.json"))
    print("medoids: " + ", ".join(f"{ids[k]} ({red.weights[k]:.3f})" for k in red.medoids))
    return EXIT_OK


def _generate(args) -> int:
    try:
        inst = generate_synthetic(args.seed, args.scenarios, args.techs, args.storage, args.time_steps, args.years)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(parent, exist_ok=True)
    write_instance(inst, args.out)
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "solve":
            return _solve(args, argv)
        if args.command == "benchmark":
            return _benchmark(args, argv)
        if args.command == "reduce":
            return _reduce(args)
        return _generate(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (InstanceError, ValueError, OSError) as exc:
        print(f"bendersplan: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"bendersplan: solver failure: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
