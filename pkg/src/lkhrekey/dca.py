"""DC algorithm with exact penalty for the batch rekeying model.

The relaxed problem is ``min g - h`` over the lifted set, with

    g = lam * (max pos + max -pos)           (plus the indicator of the set)
    h = -sum (d_i - 1) u_i + sum v_k - t * p

where ``p`` is the concave binarity penalty.  Each iteration linearizes ``h``
at the current point and solves the resulting linear program.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .costmodel import (
    Assignment,
    LiftedPoint,
    balance_coefficient,
    forced_deletion_term,
    objective,
    penalty_p,
    spread_term,
    total_cost,
)
from .keytree import (
    KeyTree,
    RekeyInstance,
    apply_rekey,
    delete_sequentially,
    exact_rekey_cost,
    tree_balance,
)
from .lp import LpSession, build_constraints, lp_cost
from .report import RekeyReport


class InfeasibleInstanceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SubgradientBundle:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.alpha.ravel(), self.beta.ravel(), self.gamma, self.sigma])


@dataclass(frozen=True)
class SolverConfig:
    """DCA knobs.  ``None`` for lam/t0/theta means: derive from the instance.

    ``min_iters`` keeps the loop running past an early stop (used to watch
    binary persistence); ``repair`` can be disabled to inspect raw iterates.
    """

    lam: float | None = None
    t0: float | None = None
    theta: float | None = None
    epsilon: float = 1e-5
    max_iters: int = 500
    starts: int = 10
    seed: int = 0
    min_iters: int = 0
    repair: bool = True

    def __post_init__(self):
        for name in ("lam", "t0", "theta"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive, got {val}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1 or self.starts < 1:
            raise ValueError("max_iters and starts must be >= 1")

    def resolve(self, instance: RekeyInstance) -> "SolverConfig":
        lam = self.lam if self.lam is not None else instance.default_lambda()
        max_depth = max(
            [int(d) for d in instance.depths_remaining] + [int(d) for d in instance.depths_departing],
            default=0,
        )
        t0 = self.t0 if self.t0 is not None else 2 * (max_depth + lam * instance.max_leaf_index)
        theta = self.theta if self.theta is not None else t0 / 2
        return replace(self, lam=lam, t0=t0, theta=theta)


@dataclass(frozen=True)
class IterRecord:
    l: int
    f: float          # objective at the new iterate, under the t that produced it
    f_prev: float     # objective at the previous iterate, same t
    p: float
    t: float
    is_binary: bool


@dataclass
class DcaRun:
    """One start of the multi-start loop."""

    start: int
    records: list[IterRecord]
    final_point: LiftedPoint
    assignment: Assignment
    objective: float
    iterations: int
    converged: bool
    repaired: bool
    fractional_after_binary: bool
    seconds: float


@dataclass
class DcaTrace:
    runs: list[DcaRun]
    best: int
    seconds: float = 0.0

    @property
    def best_run(self) -> DcaRun:
        return self.runs[self.best]

    @property
    def records(self) -> list[IterRecord]:
        return self.best_run.records

    @property
    def final_point(self) -> LiftedPoint:
        return self.best_run.final_point

    @property
    def iterations(self) -> int:
        return sum(r.iterations for r in self.runs)

    def to_jsonl(self) -> str:
        lines = []
        for run in self.runs:
            for r in run.records:
                lines.append(json.dumps({
                    "start": run.start, "l": r.l, "f": r.f, "p": r.p,
                    "t": r.t, "is_binary": r.is_binary,
                }))
        return "\n".join(lines) + ("\n" if lines else "")


class DcaResult(NamedTuple):
    assignment: Assignment
    trace: DcaTrace
    report: RekeyReport


class InsertionOnlyResult(NamedTuple):
    assignment: Assignment
    report: RekeyReport
    instance: RekeyInstance
    trace: DcaTrace


def subgradient(point: LiftedPoint, instance: RekeyInstance, t: float) -> SubgradientBundle:
    def sign(z):
        return np.where(np.asarray(z) >= 0.5, t, -t)

    return SubgradientBundle(
        alpha=sign(point.x),
        beta=sign(point.y),
        gamma=(1.0 - instance.depths_remaining) + sign(point.u),
        sigma=1.0 + sign(point.v),
    )


def h_value(instance: RekeyInstance, point: LiftedPoint, t: float) -> float:
    """Second DC component ``h`` (convex, polyhedral)."""
    return float(
        -((instance.depths_remaining - 1) * point.u).sum()
        + point.v.sum()
        - t * penalty_p(point)
    )


def dc_objective(instance: RekeyInstance, point: LiftedPoint, lam: float, t: float) -> float:
    return lam * spread_term(instance, point) - h_value(instance, point, t)


def initial_point(instance: RekeyInstance, rng: np.random.Generator) -> LiftedPoint:
    """Columns drawn uniformly on the simplex; u, v as large as linking allows."""
    l1, l2, m = instance.l1, instance.l2, instance.m
    if m == 0:
        return LiftedPoint(np.zeros((l1, 0)), np.zeros((l2, 0)), np.zeros(l1), np.zeros(l2))
    cols = rng.dirichlet(np.ones(l1 + l2), size=m).T
    x, y = cols[:l1], cols[l1:]
    return LiftedPoint(
        x=x,
        y=y,
        u=np.minimum(1.0, m * x.sum(axis=1)),
        v=np.minimum(1.0, y.sum(axis=1)),
    )


def repair_to_binary(point: LiftedPoint) -> Assignment:
    """Per joiner, keep the largest entry of its combined column (lowest index on ties)."""
    z = np.vstack([point.x, point.y])
    l1 = point.x.shape[0]
    m = z.shape[1]
    out = np.zeros(z.shape, dtype=np.int64)
    if m:
        out[np.argmax(z, axis=0), np.arange(m)] = 1
    return Assignment(out[:l1], out[l1:])


def _start_rng(seed: int, start: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, start]))


def run_dca(
    instance: RekeyInstance,
    config: SolverConfig,
    start: int = 0,
    x0: LiftedPoint | None = None,
    session: LpSession | None = None,
) -> DcaRun:
    """A single DCA run from one initial point.  ``config`` must be resolved."""
    began = time.perf_counter()
    lam, t, theta, eps = config.lam, config.t0, config.theta, config.epsilon
    if session is None:
        session = LpSession(build_constraints(instance))
    layout = session.lp.layout
    z = x0 if x0 is not None else initial_point(instance, _start_rng(config.seed, start))

    records: list[IterRecord] = []
    frozen = False
    converged = False
    recurred = False
    for l in range(1, config.max_iters + 1):
        g = subgradient(z, instance, t)
        sol = session.solve(lp_cost(layout, g, lam))
        z_new = sol.point
        f_prev = dc_objective(instance, z, lam, t)
        f_new = dc_objective(instance, z_new, lam, t)
        p_new = penalty_p(z_new)
        binary = p_new == 0.0
        records.append(IterRecord(l, f_new, f_prev, p_new, t, binary))
        stop = abs(f_new - f_prev) <= eps * (abs(f_prev) + 1)
        stationary = np.array_equal(z_new.flat(), z.flat())
        z = z_new
        if binary:
            frozen = True
        elif frozen:
            recurred = True
        else:
            t += theta
        if l >= config.min_iters and stop and (binary or stationary):
            converged = True
            break

    binary = penalty_p(z) == 0.0
    if binary:
        assignment = Assignment(np.rint(z.x), np.rint(z.y))
    elif config.repair:
        assignment = repair_to_binary(z)
    else:
        assignment = None
    return DcaRun(
        start=start,
        records=records,
        final_point=z,
        assignment=assignment,
        objective=objective(instance, assignment, lam) if assignment is not None else float("nan"),
        iterations=len(records),
        converged=converged,
        repaired=not binary,
        fractional_after_binary=recurred,
        seconds=time.perf_counter() - began,
    )


def _check_instance(instance: RekeyInstance) -> None:
    if instance.m > 0 and instance.l1 + instance.l2 == 0:
        raise InfeasibleInstanceError("joiners but no leaf positions to place them")


def solve_multistart(instance: RekeyInstance, config: SolverConfig) -> DcaTrace:
    _check_instance(instance)
    cfg = config.resolve(instance)
    began = time.perf_counter()
    base = build_constraints(instance)
    runs = []
    for s in range(cfg.starts):
        runs.append(run_dca(instance, cfg, start=s, session=LpSession(base)))
    best = 0
    for s, r in enumerate(runs):
        if r.objective < runs[best].objective:
            best = s
    return DcaTrace(runs=runs, best=best, seconds=time.perf_counter() - began)


def dcaep_plus(instance: RekeyInstance, config: SolverConfig = SolverConfig()) -> DcaResult:
    """Joint deletion/insertion plan by multi-start DCA."""
    trace = solve_multistart(instance, config)
    run = trace.best_run
    lam = config.resolve(instance).lam
    assignment = run.assignment
    after = apply_rekey(instance.tree, instance, assignment)
    report = RekeyReport(
        algorithm="dcaep+",
        exact_cost=exact_rekey_cost(instance, assignment),
        approx_cost=total_cost(instance, assignment),
        objective=objective(instance, assignment, lam),
        balance_coefficient=balance_coefficient(instance, assignment),
        tree_balance=tree_balance(after),
        forced_deletion_term=forced_deletion_term(instance),
        join_term=2 * instance.m,
        iterations=trace.iterations,
        seconds=trace.seconds,
        final_penalty=penalty_p(run.final_point),
        repaired=run.repaired,
        converged=run.converged,
    )
    return DcaResult(assignment, trace, report)


def dcaep_insertion_only(
    tree: KeyTree,
    departing: Sequence[int],
    m: int,
    config: SolverConfig = SolverConfig(),
) -> InsertionOnlyResult:
    """Prior scheme: delete members one by one, then batch-insert by DCA."""
    began = time.perf_counter()
    order = sorted(set(departing))
    RekeyInstance.build(tree, order, 0)
    pruned, depths = delete_sequentially(tree, order)
    deletion = sum(max(d - 1, 0) for d in depths)
    if not pruned.nodes:
        # everything left: joiners form a fresh complete tree
        return _fresh_tree_result(tree, m, deletion, config, began)
    instance = RekeyInstance.build(pruned, (), m)
    trace = solve_multistart(instance, config)
    run = trace.best_run
    lam = config.resolve(instance).lam
    assignment = run.assignment
    after = apply_rekey(pruned, instance, assignment)
    insertion = exact_rekey_cost(instance, assignment)
    report = RekeyReport(
        algorithm="dcaep",
        exact_cost=deletion + insertion,
        approx_cost=deletion + total_cost(instance, assignment),
        objective=objective(instance, assignment, lam),
        balance_coefficient=balance_coefficient(instance, assignment),
        tree_balance=tree_balance(after),
        deletion_cost=deletion,
        insertion_cost=insertion,
        forced_deletion_term=0,
        join_term=2 * m,
        iterations=trace.iterations,
        seconds=time.perf_counter() - began,
        final_penalty=penalty_p(run.final_point),
        repaired=run.repaired,
        converged=run.converged,
    )
    return InsertionOnlyResult(assignment, report, instance, trace)


def _fresh_tree_result(tree, m, deletion, config, began) -> InsertionOnlyResult:
    if m == 0:
        instance = RekeyInstance.build(KeyTree(), (), 0)
        insertion, bal = 0, 0
    else:
        instance = RekeyInstance.build(KeyTree([1]), (), m - 1)
        insertion = 2 * m - 1
        bal = tree_balance(KeyTree(range(1, 2 * m)))
    assignment = Assignment.from_counts([m - 1] * instance.l1, []) if m else Assignment.empty(instance)
    report = RekeyReport(
        algorithm="dcaep",
        exact_cost=deletion + insertion,
        approx_cost=deletion + insertion,
        objective=0.0,
        balance_coefficient=0.0,
        tree_balance=bal,
        deletion_cost=deletion,
        insertion_cost=insertion,
        forced_deletion_term=0,
        join_term=2 * m,
        iterations=0,
        seconds=time.perf_counter() - began,
    )
    return InsertionOnlyResult(assignment, report, instance, DcaTrace([], 0))
