"""Heuristic batch rekeying strategies: Marking, Batch Balanced and Rotation.

Each strategy produces a :class:`BaselinePlan`.  Plans are scored with the
same exact cost as the solver, so every algorithm is compared on one metric.
Ties between equally shallow (or deep) leaves always go to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .costmodel import Assignment, balance_coefficient, objective, total_cost
from .keytree import (
    KeyTree,
    RekeyInstance,
    _promote,
    apply_rekey,
    depth,
    exact_rekey_cost,
    find_leaves,
    graft_nodes,
    tree_balance,
)
from .report import RekeyReport


class InfeasiblePlanError(ValueError):
    pass


@dataclass(frozen=True)
class Graft:
    """Overflow joiners placed as a complete subtree below ``anchor``.

    With ``carry`` the member already at ``anchor`` moves into the new subtree.
    """

    anchor: int
    joiners: tuple[int, ...]
    carry: bool = True


@dataclass(frozen=True)
class BaselinePlan:
    algorithm: str
    replacements: dict = field(default_factory=dict)
    deletions: tuple[int, ...] = ()
    graft: Optional[Graft] = None
    rebalance: bool = False

    def counts(self, instance: RekeyInstance) -> tuple[np.ndarray, np.ndarray]:
        """Per-leaf joiner counts (below remaining leaves, into departed slots)."""
        self.check(instance)
        ins = np.zeros(instance.l1, dtype=np.int64)
        rep = np.zeros(instance.l2, dtype=np.int64)
        slot = {a: k for k, a in enumerate(instance.departing)}
        for a, js in self.replacements.items():
            rep[slot[a]] += len(js)
        if self.graft is not None:
            g = self.graft
            if g.anchor in slot:
                rep[slot[g.anchor]] += len(g.joiners)
            else:
                ins[instance.remaining.index(g.anchor)] += len(g.joiners)
        return ins, rep

    def check(self, instance: RekeyInstance) -> None:
        placed = [j for js in self.replacements.values() for j in js]
        if self.graft is not None:
            placed += list(self.graft.joiners)
        if sorted(placed) != list(range(instance.m)):
            raise InfeasiblePlanError("every joiner must be placed exactly once")
        handled = sorted(list(self.replacements) + list(self.deletions))
        if handled != list(instance.departing):
            raise InfeasiblePlanError("every departed slot must be replaced or deleted exactly once")
        if any(len(js) == 0 for js in self.replacements.values()):
            raise InfeasiblePlanError("a replacement needs at least one joiner")
        g = self.graft
        if g is not None:
            if g.anchor not in instance.departing and g.anchor not in instance.remaining:
                raise InfeasiblePlanError(f"graft anchor {g.anchor} is not a leaf")
            if g.anchor in self.deletions:
                raise InfeasiblePlanError("cannot graft at a deleted slot")
            if g.anchor in instance.departing and g.anchor not in self.replacements:
                raise InfeasiblePlanError("a graft at a departed slot must follow its replacement")
            if not g.joiners:
                raise InfeasiblePlanError("empty graft")


def _by_depth(nodes, deepest: bool = False) -> list[int]:
    key = (lambda t: (-depth(t), t)) if deepest else (lambda t: (depth(t), t))
    return sorted(nodes, key=key)


def _replace_shallowest(instance: RekeyInstance, algorithm: str) -> BaselinePlan:
    """J <= D: the J shallowest slots get one joiner each, the rest are deleted."""
    order = _by_depth(instance.departing)
    chosen = order[: instance.m]
    reps = {a: (j,) for j, a in enumerate(sorted(chosen))}
    dels = tuple(sorted(order[instance.m:]))
    return BaselinePlan(algorithm, reps, dels)


def _replace_all(instance: RekeyInstance) -> dict:
    return {a: (j,) for j, a in enumerate(instance.departing)}


def marking(instance: RekeyInstance) -> BaselinePlan:
    J, D = instance.m, instance.l2
    if J <= D:
        return _replace_shallowest(instance, "marking")
    if D == 0:
        anchor = _by_depth(instance.remaining)[0]
        return BaselinePlan("marking", graft=Graft(anchor, tuple(range(J))))
    reps = _replace_all(instance)
    anchor = _by_depth(instance.departing)[0]
    return BaselinePlan("marking", reps, graft=Graft(anchor, tuple(range(D, J))))


def batch_balanced(instance: RekeyInstance) -> BaselinePlan:
    J, D = instance.m, instance.l2
    if J <= D:
        return _replace_shallowest(instance, "merging")
    # After replacement every original leaf is occupied; the shallowest one
    # yields the lowest subtree for a fixed number of overflow joiners.
    anchor = _by_depth(instance.tree.leaves)[0]
    return BaselinePlan("merging", _replace_all(instance), graft=Graft(anchor, tuple(range(D, J))))


def _rotation_anchor(tree: KeyTree, extra: int) -> int:
    height = tree.height
    grow = int(np.ceil(np.log2(extra + 1)))
    leaves = tree.leaves
    sides = []
    for root in (2, 3):
        side = [t for t in leaves if t > 1 and t >> (depth(t) - 1) == root]
        if side:
            sides.append(_by_depth(side)[0])
    fits = [t for t in sides if depth(t) + grow <= height]
    if fits:
        return _by_depth(fits)[0]
    return _by_depth(leaves)[0]


def rotation(instance: RekeyInstance) -> BaselinePlan:
    J, D = instance.m, instance.l2
    if J <= D:
        return _replace_shallowest(instance, "rotation")
    anchor = _rotation_anchor(instance.tree, J - D)
    return BaselinePlan(
        "rotation", _replace_all(instance), graft=Graft(anchor, tuple(range(D, J))), rebalance=True
    )


def rebalance(tree: KeyTree, max_moves: int) -> tuple[KeyTree, int, int]:
    """Move deepest leaves under the shallowest one until balance <= 1.

    Each move deletes the deepest leaf (sibling promotion, ``d_a - 1`` keys)
    and splits the shallowest leaf to host it (``d_s + 1`` keys).
    Returns (tree, key updates, moves).
    """
    nodes = set(tree.members)
    cost = moves = 0
    while moves < max_moves:
        leaves = find_leaves(KeyTree(nodes))
        deep = _by_depth(leaves, deepest=True)[0]
        shallow = _by_depth(leaves)[0]
        if depth(deep) - depth(shallow) <= 1:
            break
        cost += depth(deep) - 1
        _promote(nodes, deep)
        shallow = _by_depth(find_leaves(KeyTree(nodes)))[0]
        cost += depth(shallow) + 1
        nodes.update(graft_nodes(shallow, 2))
        moves += 1
    return KeyTree(nodes), cost, moves


STRATEGIES = {"marking": marking, "merging": batch_balanced, "rotation": rotation}


def evaluate_plan(instance: RekeyInstance, plan: BaselinePlan, lam: float | None = None) -> RekeyReport:
    """Score a plan under the unified exact cost."""
    ins, rep = plan.counts(instance)
    assignment = Assignment.from_counts(ins, rep)
    lam = instance.default_lambda() if lam is None else lam
    after = apply_rekey(instance.tree, instance, assignment)
    extra = 0
    if plan.rebalance and after.nodes:
        after, extra, _ = rebalance(after, instance.l1 + instance.l2)
    return RekeyReport(
        algorithm=plan.algorithm,
        exact_cost=exact_rekey_cost(instance, assignment) + extra,
        approx_cost=total_cost(instance, assignment) + extra,
        objective=objective(instance, assignment, lam),
        balance_coefficient=balance_coefficient(instance, assignment),
        tree_balance=tree_balance(after) if after.nodes else 0,
        rebalance_cost=extra,
    )
