"""Command-line entry point: ``lkhrekey {gen-tree,solve,bench,oracle}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import ALGORITHMS, brute_force_optimum, builtin_suite, load_config, run_algorithm, run_benchmark
from .dca import SolverConfig, dcaep_insertion_only, dcaep_plus
from .keytree import KeyTree, RekeyInstance, generate_random_tree


def _read_tree(path: str) -> KeyTree:
    return KeyTree.from_json(Path(path).read_text())


def _parse_departing(text: str) -> list[int]:
    """Comma separated leaf indices, or @file holding a JSON list."""
    if text.startswith("@"):
        return [int(a) for a in json.loads(Path(text[1:]).read_text())]
    return [int(a) for a in text.split(",") if a.strip()]


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_gen_tree(args) -> int:
    tree = generate_random_tree(args.height, args.balance, args.seed, leaves=args.leaves)
    _emit(tree.to_json(), args.out)
    return 0


def cmd_solve(args) -> int:
    tree = _read_tree(args.tree)
    instance = RekeyInstance.build(tree, _parse_departing(args.departing), args.joins)
    config = SolverConfig(
        lam=args.lam, t0=args.t0, theta=args.theta, epsilon=args.eps,
        max_iters=args.max_iters, starts=args.starts, seed=args.seed,
    )
    trace = None
    if args.algo == "dcaep+":
        result = dcaep_plus(instance, config)
        report, assignment, trace = result.report, result.assignment, result.trace
        counts = {"insert": assignment.insert_counts.tolist(), "replace": assignment.replace_counts.tolist()}
    elif args.algo == "dcaep":
        result = dcaep_insertion_only(tree, instance.departing, instance.m, config)
        report, trace = result.report, result.trace
        counts = {"insert": result.assignment.insert_counts.tolist(), "replace": []}
    else:
        report = run_algorithm(args.algo, tree, instance, config)
        counts = None
    if args.trace:
        Path(args.trace).write_text(trace.to_jsonl() if trace is not None else "")
    out = {"report": report.to_dict(), "remaining": list(instance.remaining),
           "departing": list(instance.departing), "counts": counts}
    print(json.dumps(out, indent=2))
    return 0


def cmd_bench(args) -> int:
    if args.config:
        suite, timing = load_config(args.config)
    else:
        suite, timing = builtin_suite(args.suite), False
    timing = timing or args.timing
    result = run_benchmark(suite, args.out_csv, args.out_json, timing=timing)
    if not args.out_csv:
        sys.stdout.write(result.csv_text())
    for agg in result.aggregates:
        print(json.dumps(agg, sort_keys=True), file=sys.stderr)
    return 0


def cmd_oracle(args) -> int:
    tree = _read_tree(args.tree)
    instance = RekeyInstance.build(tree, _parse_departing(args.departing), args.joins)
    assignment, value = brute_force_optimum(instance, args.lam)
    print(json.dumps({
        "objective": value,
        "insert": assignment.insert_counts.tolist(),
        "replace": assignment.replace_counts.tolist(),
        "remaining": list(instance.remaining),
        "departing": list(instance.departing),
    }, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lkhrekey", description="Batch rekeying for binary key trees")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-tree", help="generate a seeded random full binary tree")
    g.add_argument("--height", type=int, required=True)
    g.add_argument("--balance", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--leaves", type=int, default=None)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_gen_tree)

    s = sub.add_parser("solve", help="run one algorithm on one instance")
    s.add_argument("--tree", required=True, help="tree JSON file")
    s.add_argument("--departing", default="", help="comma separated leaves or @file.json")
    s.add_argument("--joins", type=int, default=0)
    s.add_argument("--algo", choices=ALGORITHMS, default="dcaep+")
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.add_argument("--t0", type=float, default=None)
    s.add_argument("--theta", type=float, default=None)
    s.add_argument("--eps", type=float, default=1e-5)
    s.add_argument("--max-iters", type=int, default=500)
    s.add_argument("--starts", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trace", default=None, help="write per-iteration JSON lines here")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a benchmark suite")
    src = b.add_mutually_exclusive_group()
    src.add_argument("--config", default=None, help="YAML suite description")
    src.add_argument("--suite", default="desk", choices=("desk", "trend", "full"))
    b.add_argument("--out-csv", default=None)
    b.add_argument("--out-json", default=None)
    b.add_argument("--timing", action="store_true", help="fill the time column (breaks byte determinism)")
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("oracle", help="brute-force optimum of a small instance")
    o.add_argument("--tree", required=True)
    o.add_argument("--departing", default="")
    o.add_argument("--joins", type=int, default=0)
    o.add_argument("--lambda", dest="lam", type=float, default=None)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
