"""Command line front end: gen, decompose, solve, validate, bench.

Exit codes: 0 on success, 2 when a plan fails validation, 3 for
configuration problems (bad arguments, missing files, unusable maps).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .bench import BenchConfig, gen_instance, records_to_csv, resolve_map, run_bench
from .decompose import decompose_instance
from .gridmap import InstanceError, MapFormatError, load_instance, save_instance
from .layered import (
    METHODS,
    layered_solve,
    parse_solution,
    solution_to_text,
    validate_solution,
)
from .pipeline import prepare

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CONFIG = 3


class _ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; route them to the config code
    # instead so 2 stays reserved for validation failures.
    def error(self, message):
        raise _ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="lamapf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a random instance")
    p_gen.add_argument("--map", required=True, help="map file path or bundled map name")
    p_gen.add_argument("--agents", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="instance file to write")

    p_dec = sub.add_parser("decompose", help="cluster and layer an instance")
    p_dec.add_argument("--instance", required=True)
    p_dec.add_argument("--budget-s", type=float, default=5.0)
    p_dec.add_argument("--out", help="write the report here instead of stdout")

    p_solve = sub.add_parser("solve", help="plan collision-free paths")
    p_solve.add_argument("--instance", required=True)
    p_solve.add_argument("--method", choices=METHODS, default="layered-cbs")
    p_solve.add_argument("--budget-s", type=float, default=60.0)
    p_solve.add_argument("--out", help="write the solution here instead of stdout")

    p_val = sub.add_parser("validate", help="check a solution file against its instance")
    p_val.add_argument("--instance", required=True)
    p_val.add_argument("--plan", required=True, help="solution file to check")

    p_bench = sub.add_parser("bench", help="run the benchmark grid")
    p_bench.add_argument(
        "--map", action="append", required=True, help="repeatable; path or bundled name"
    )
    p_bench.add_argument("--agents", type=int, action="append", required=True)
    p_bench.add_argument("--reps", type=int, default=20)
    p_bench.add_argument(
        "--method", action="append", choices=METHODS, help="repeatable; default all"
    )
    p_bench.add_argument("--budget-s", type=float, default=60.0)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--workers", type=int, default=1)
    p_bench.add_argument("--out", help="CSV file; stdout when omitted")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_gen(args) -> int:
    grid = resolve_map(args.map)
    agents = gen_instance(grid, args.agents, args.seed)
    save_instance(args.out, args.map, agents, args.seed)
    print(f"wrote {args.out}: {len(agents)} agents on {grid.name}")
    return EXIT_OK


def _load_prepared(instance_path: str):
    grid, agents = load_instance(instance_path)
    return prepare(grid, agents)


def _cmd_decompose(args) -> int:
    prep = _load_prepared(args.instance)
    decomp = decompose_instance(
        prep.subgraphs, prep.relations, prep.connectivity, budget_s=args.budget_s
    )
    _emit(decomp.report(), args.out)
    return EXIT_OK


def _cmd_solve(args) -> int:
    prep = _load_prepared(args.instance)
    t0 = time.perf_counter()
    decomp = None
    if args.method != "raw-cbs":
        decomp = decompose_instance(
            prep.subgraphs,
            prep.relations,
            prep.connectivity,
            budget_s=args.budget_s,
            certify=False,
        )
    remaining = max(args.budget_s - (time.perf_counter() - t0), 1e-9)
    result = layered_solve(prep.subgraphs, decomp, method=args.method, budget_s=remaining)
    wall = time.perf_counter() - t0
    print(f"status {result.status} method {args.method} wall_time_s {wall:.3f}", file=sys.stderr)
    if not result.solved:
        return EXIT_OK
    errors = validate_solution(prep.subgraphs, result.paths)
    if errors:
        for e in errors:
            print(f"invalid: {e}", file=sys.stderr)
        return EXIT_INVALID
    soc = result.sum_of_costs(prep.subgraphs)
    mk = result.makespan(prep.subgraphs)
    print(f"soc {soc} makespan {mk}", file=sys.stderr)
    _emit(solution_to_text(prep.subgraphs, result.paths), args.out)
    return EXIT_OK


def _cmd_validate(args) -> int:
    prep = _load_prepared(args.instance)
    text = Path(args.plan).read_text()
    try:
        paths = parse_solution(text, prep.subgraphs)
    except ValueError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    errors = validate_solution(prep.subgraphs, paths)
    if errors:
        for e in errors:
            print(f"invalid: {e}", file=sys.stderr)
        return EXIT_INVALID
    print("valid")
    return EXIT_OK


def _cmd_bench(args) -> int:
    config = BenchConfig(
        maps=args.map,
        agent_counts=args.agents,
        repetitions=args.reps,
        methods=tuple(args.method) if args.method else METHODS,
        budget_s=args.budget_s,
        seed=args.seed,
        workers=args.workers,
    )
    records, ok = run_bench(config, out_path=args.out)
    if not args.out:
        sys.stdout.write(records_to_csv(records))
    else:
        print(f"wrote {args.out}: {len(records)} runs")
    if not ok:
        for rec in records:
            for e in rec.validation_errors:
                print(f"invalid ({rec.map} n={rec.agents} {rec.method}): {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "decompose": _cmd_decompose,
    "solve": _cmd_solve,
    "validate": _cmd_validate,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, MapFormatError, InstanceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
