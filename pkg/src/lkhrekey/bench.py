"""Seeded benchmark scenarios, the brute-force oracle and report tables."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .baselines import STRATEGIES, evaluate_plan
from .costmodel import Assignment, objective
from .dca import SolverConfig, dcaep_insertion_only, dcaep_plus
from .keytree import KeyTree, RekeyInstance, generate_random_tree
from .report import RekeyReport

ALGORITHMS = ("dcaep+", "dcaep", "rotation", "marking", "merging")
BRUTE_FORCE_LIMIT = 10**6

CSV_COLUMNS = [
    "scenario", "H", "D", "J", "algorithm",
    "exact_cost", "approx_cost", "balance_coefficient", "tree_balance", "time",
    # extras
    "objective", "deletion_cost", "insertion_cost", "rebalance_cost",
    "iterations", "final_penalty", "repaired", "converged", "lambda", "leaves", "error",
]


@dataclass(frozen=True)
class Scenario:
    id: str
    height: int
    balance: int
    departing: int
    joins: int
    seed: int = 0
    leaves: int | None = None
    algorithms: tuple[str, ...] = ALGORITHMS
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.departing < 0 or self.joins < 0:
            raise ValueError("counts must be nonnegative")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithms {unknown}")

    def config(self) -> SolverConfig:
        return SolverConfig(**{"seed": self.seed, **self.solver})


def sample_departing(tree: KeyTree, count: int, seed: int) -> list[int]:
    leaves = tree.leaves
    if count > len(leaves):
        raise ValueError(f"cannot pick {count} departing members from {len(leaves)} leaves")
    if count == len(leaves) and len(tree) > 1:
        raise ValueError("at least one leaf must remain")
    rng = np.random.default_rng([seed, 1])
    return sorted(int(a) for a in rng.choice(leaves, size=count, replace=False))


def generate_scenario(sc: Scenario) -> tuple[KeyTree, RekeyInstance]:
    tree = generate_random_tree(sc.height, sc.balance, sc.seed, leaves=sc.leaves)
    departing = sample_departing(tree, sc.departing, sc.seed)
    return tree, RekeyInstance.build(tree, departing, sc.joins)


def _compositions(total: int, parts: int):
    """All nonnegative integer vectors of length ``parts`` summing to ``total``, lexicographic."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def brute_force_optimum(instance: RekeyInstance, lam: float | None = None) -> tuple[Assignment, float]:
    """Global minimizer of the step-cost + balance objective by enumeration.

    The objective depends on an assignment only through its row counts, so it
    suffices to enumerate count vectors.  Ties go to the lexicographically
    smallest (insert counts, replace counts) vector.
    """
    lam = instance.default_lambda() if lam is None else lam
    n, m = instance.l1 + instance.l2, instance.m
    if n**m > BRUTE_FORCE_LIMIT:
        raise ValueError(f"instance too large for enumeration: {n}^{m} > {BRUTE_FORCE_LIMIT}")
    if m == 0:
        empty = Assignment.empty(instance)
        return empty, objective(instance, empty, lam)
    if n == 0:
        raise ValueError("no leaves to place joiners in")
    best, best_val = None, math.inf
    for counts in _compositions(m, n):
        a = Assignment.from_counts(counts[: instance.l1], counts[instance.l1:])
        val = objective(instance, a, lam)
        if val < best_val:
            best, best_val = a, val
    return best, best_val


def run_algorithm(name: str, tree: KeyTree, instance: RekeyInstance, config: SolverConfig) -> RekeyReport:
    if name == "dcaep+":
        return dcaep_plus(instance, config).report
    if name == "dcaep":
        return dcaep_insertion_only(tree, instance.departing, instance.m, config).report
    began = time.perf_counter()
    plan = STRATEGIES[name](instance)
    seconds = time.perf_counter() - began
    return replace(evaluate_plan(instance, plan, config.resolve(instance).lam), seconds=seconds)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(round(value, 9))
    return str(value)


@dataclass
class BenchResult:
    rows: list[dict]
    aggregates: list[dict]

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: _fmt(row.get(k)) for k in CSV_COLUMNS})
        return buf.getvalue()

    def json_text(self) -> str:
        return json.dumps({"rows": self.rows, "aggregates": self.aggregates}, indent=2, sort_keys=True)


def _row(sc: Scenario, name: str, lam: float | None, leaves: int | None, timing: bool) -> dict:
    return {
        "scenario": sc.id, "H": sc.height, "D": sc.departing, "J": sc.joins,
        "algorithm": name, "lambda": lam, "leaves": leaves,
        "time": None if timing else "NA",
    }


def run_scenario(sc: Scenario, timing: bool = False) -> list[dict]:
    rows = []
    try:
        tree, instance = generate_scenario(sc)
        config = sc.config()
        lam = config.resolve(instance).lam
    except Exception as exc:  # recorded, the run continues
        for name in sc.algorithms:
            rows.append({**_row(sc, name, None, None, timing), "error": f"{type(exc).__name__}: {exc}"})
        return rows
    for name in sc.algorithms:
        row = _row(sc, name, lam, len(tree.leaves), timing)
        try:
            rep = run_algorithm(name, tree, instance, config)
        except Exception as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            continue
        row.update(
            exact_cost=rep.exact_cost,
            approx_cost=rep.approx_cost,
            balance_coefficient=rep.balance_coefficient,
            tree_balance=rep.tree_balance,
            objective=rep.objective,
            deletion_cost=rep.deletion_cost,
            insertion_cost=rep.insertion_cost,
            rebalance_cost=rep.rebalance_cost,
            iterations=rep.iterations,
            final_penalty=rep.final_penalty,
            repaired=rep.repaired,
            converged=rep.converged,
        )
        if timing:
            row["time"] = f"{rep.seconds:.2f}"
        rows.append(row)
    return rows


def reduction_percent(plus_costs: Sequence[float], dcaep_costs: Sequence[float]) -> float:
    """How much lower the DCAEP+ mean cost is than the DCAEP mean, in percent."""
    return 100.0 * (1.0 - float(np.mean(plus_costs)) / float(np.mean(dcaep_costs)))


def aggregate(rows: Iterable[dict]) -> list[dict]:
    groups: dict = {}
    for r in rows:
        if r.get("error") or r.get("exact_cost") is None:
            continue
        groups.setdefault((r["H"], r["D"]), {}).setdefault(r["algorithm"], []).append(r)
    out = []
    for (H, D), by_algo in sorted(groups.items()):
        entry = {"H": H, "D": D}
        for name in ALGORITHMS:
            rs = by_algo.get(name)
            if rs:
                entry[f"{name}_mean_exact_cost"] = float(np.mean([r["exact_cost"] for r in rs]))
                entry[f"{name}_mean_tree_balance"] = float(np.mean([r["tree_balance"] for r in rs]))
        plus = {(r["scenario"]): r["exact_cost"] for r in by_algo.get("dcaep+", [])}
        base = {(r["scenario"]): r["exact_cost"] for r in by_algo.get("dcaep", [])}
        common = sorted(set(plus) & set(base))
        if common:
            entry["dcaep_plus_reduction_percent"] = reduction_percent(
                [plus[s] for s in common], [base[s] for s in common]
            )
        out.append(entry)
    return out


def run_benchmark(
    suite: Sequence[Scenario],
    out_csv: str | Path | None = None,
    out_json: str | Path | None = None,
    timing: bool = False,
) -> BenchResult:
    rows = []
    for sc in suite:
        rows.extend(run_scenario(sc, timing))
    result = BenchResult(rows, aggregate(rows))
    if out_csv is not None:
        Path(out_csv).write_text(result.csv_text())
    if out_json is not None:
        Path(out_json).write_text(result.json_text())
    return result


# -- suites and config files -------------------------------------------------

TREND_JOINS = (30, 50, 100, 150, 180, 200, 220, 250, 270, 280,
               300, 320, 350, 370, 380, 400, 420, 450, 480, 500)


def trend_suite(algorithms: Sequence[str] = ALGORITHMS, solver: dict | None = None) -> list[Scenario]:
    """Height 8, balance 5, 100 departures, one seeded tree per join count."""
    return [
        Scenario(f"trend-{s:02d}", 8, 5, 100, J, seed=s, algorithms=tuple(algorithms), solver=dict(solver or {}))
        for s, J in enumerate(TREND_JOINS)
    ]


DESK_ROWS = (
    # height, balance, D, joins
    (6, 3, 20, (10, 20, 40)),
    (7, 4, 40, (20, 40, 80)),
    (8, 5, 100, (30, 100, 200)),
    (9, 4, 150, (100, 150, 250)),
    (10, 4, 200, (100, 200, 300)),
)

FULL_ROWS = (
    (8, 5, 100, (30, 50, 100, 200, 300, 400, 500)),
    (9, 4, 300, (200, 300, 400, 600, 800, 1000)),
    (10, 4, 700, (500, 1000, 1500, 2000, 2500, 3000)),
    (11, 5, 1000, (500, 1000, 1500, 2000, 2500, 3000)),
    (12, 5, 3000, (2000, 4000, 5000, 6000, 8000, 10000)),
    (13, 5, 4000, (2000, 4000, 6000, 8000, 9000, 10000)),
)


def _grid(prefix: str, rows, solver: dict | None) -> list[Scenario]:
    out = []
    n = 0
    for H, bal, D, joins in rows:
        for J in joins:
            out.append(Scenario(f"{prefix}-{n:02d}", H, bal, D, J, seed=n, solver=dict(solver or {})))
            n += 1
    return out


def builtin_suite(name: str) -> list[Scenario]:
    if name == "trend":
        return trend_suite()
    if name == "desk":
        return _grid("desk", DESK_ROWS, {"starts": 5})
    if name == "full":
        return _grid("full", FULL_ROWS, None)
    raise ValueError(f"unknown suite {name!r}; choose trend, desk or full")


def suite_from_config(data: dict) -> tuple[list[Scenario], bool]:
    """Expand a config mapping into scenarios; returns (suite, timing)."""
    algorithms = tuple(data.get("algorithms", ALGORITHMS))
    solver = dict(data.get("solver") or {})
    suite = []
    for n, entry in enumerate(data.get("scenarios") or []):
        joins = entry["joins"]
        joins = list(joins) if isinstance(joins, (list, tuple)) else [joins]
        seeds = entry.get("seed", 0)
        seeds = list(seeds) if isinstance(seeds, (list, tuple)) else [seeds] * len(joins)
        if len(seeds) != len(joins):
            raise ValueError(f"scenario {n}: seed list and joins list differ in length")
        base = entry.get("id", f"s{n:02d}")
        for q, (J, seed) in enumerate(zip(joins, seeds)):
            suite.append(Scenario(
                id=base if len(joins) == 1 else f"{base}-{q:02d}",
                height=int(entry["height"]),
                balance=int(entry["balance"]),
                departing=int(entry["departing"]),
                joins=int(J),
                seed=int(seed),
                leaves=entry.get("leaves"),
                algorithms=tuple(entry.get("algorithms", algorithms)),
                solver={**solver, **(entry.get("solver") or {})},
            ))
    return suite, bool(data.get("timing", False))


def load_config(path: str | Path) -> tuple[list[Scenario], bool]:
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ValueError("config must be a mapping")
    return suite_from_config(data)
