"""Full binary key trees in heap-index form.

A tree is the set of its node indices: the root is 1 and the children of
``t`` are ``2t`` and ``2t + 1``.  The depth of a node is ``floor(log2 t)``.
All trees here are *full*: every node has zero or two children.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .costmodel import Assignment


class InfeasibleTreeError(ValueError):
    """No full binary tree satisfies the requested shape."""


def depth(index: int) -> int:
    if index < 1:
        raise ValueError(f"node index must be >= 1, got {index}")
    return int(index).bit_length() - 1


@dataclass(frozen=True)
class KeyTree:
    nodes: tuple[int, ...]

    def __init__(self, nodes: Iterable[int] = ()):
        object.__setattr__(self, "nodes", tuple(sorted(set(int(n) for n in nodes))))
        self._check()

    def _check(self) -> None:
        members = self.members
        if not members:
            return
        if 1 not in members:
            raise ValueError("nonempty tree must contain the root 1")
        for t in self.nodes:
            if t < 1:
                raise ValueError(f"invalid node index {t}")
            if t > 1 and t >> 1 not in members:
                raise ValueError(f"node {t} has no parent in the tree")
            if (2 * t in members) != (2 * t + 1 in members):
                raise ValueError(f"node {t} has exactly one child")

    @cached_property
    def members(self) -> frozenset[int]:
        return frozenset(self.nodes)

    @cached_property
    def leaves(self) -> tuple[int, ...]:
        return tuple(find_leaves(self))

    @cached_property
    def height(self) -> int:
        return max((depth(t) for t in self.leaves), default=0)

    def __contains__(self, index: int) -> bool:
        return index in self.members

    def __len__(self) -> int:
        return len(self.nodes)

    def to_json(self) -> str:
        return json.dumps({"nodes": list(self.nodes)})

    @classmethod
    def from_json(cls, text: str) -> "KeyTree":
        return cls(json.loads(text)["nodes"])

    @classmethod
    def complete(cls, height: int) -> "KeyTree":
        return cls(range(1, 2 ** (height + 1)))


def find_leaves(tree: KeyTree) -> list[int]:
    members = tree.members
    return [t for t in tree.nodes if 2 * t not in members and 2 * t + 1 not in members]


def tree_balance(tree: KeyTree) -> int:
    """Depth of the deepest leaf minus depth of the shallowest."""
    if not tree.nodes:
        raise ValueError("balance of an empty tree is undefined")
    depths = [depth(t) for t in tree.leaves]
    return max(depths) - min(depths)


def subtree(nodes: set[int] | frozenset[int], root: int) -> list[int]:
    out = []
    stack = [root]
    while stack:
        t = stack.pop()
        if t in nodes:
            out.append(t)
            stack.append(2 * t)
            stack.append(2 * t + 1)
    return out


def graft_nodes(at: int, n_leaves: int) -> list[int]:
    """Nodes of a left-filled complete subtree with ``n_leaves`` leaves rooted at ``at``.

    In relative heap numbering that subtree is exactly ``1 .. 2n - 1``.
    """
    if n_leaves < 1:
        raise ValueError("a grafted subtree needs at least one leaf")
    out = []
    for r in range(1, 2 * n_leaves):
        k = r.bit_length() - 1
        out.append((at << k) + (r - (1 << k)))
    return out


def graft(tree: KeyTree, at: int, n_leaves: int) -> KeyTree:
    if at not in tree.members or at not in set(tree.leaves):
        raise ValueError(f"can only graft below a leaf, {at} is not a leaf")
    return KeyTree(tree.members.union(graft_nodes(at, n_leaves)))


def _promote(nodes: set[int], leaf: int) -> dict[int, int]:
    """Remove ``leaf`` in place, lifting its sibling's subtree onto the parent.

    Returns the index remapping of every moved node.
    """
    nodes.discard(leaf)
    if leaf == 1:
        nodes.clear()
        return {}
    parent, sibling = leaf >> 1, leaf ^ 1
    moved = subtree(nodes, sibling)
    shift = depth(sibling)
    remap = {}
    for t in moved:
        k = depth(t) - shift
        remap[t] = t - ((sibling - parent) << k)
    nodes.difference_update(moved)
    nodes.update(remap.values())
    return remap


def delete_leaf(tree: KeyTree, leaf: int) -> tuple[KeyTree, dict[int, int]]:
    """Delete a leaf with sibling promotion; returns the new tree and the remap."""
    if leaf not in set(tree.leaves):
        raise ValueError(f"{leaf} is not a leaf of the tree")
    nodes = set(tree.members)
    remap = _promote(nodes, leaf)
    return KeyTree(nodes), remap


def delete_sequentially(tree: KeyTree, leaves: Sequence[int]) -> tuple[KeyTree, list[int]]:
    """Delete leaves one at a time (in the given order), tracking renumbering.

    Returns the final tree and the depth of each leaf at the moment it was removed.
    """
    nodes = set(tree.members)
    leafset = set(tree.leaves)
    for a in leaves:
        if a not in leafset:
            raise ValueError(f"{a} is not a leaf of the tree")
    pending = list(leaves)
    depths = []
    for n, _ in enumerate(leaves):
        cur = pending[n]
        depths.append(depth(cur))
        remap = _promote(nodes, cur)
        for q in range(n + 1, len(pending)):
            pending[q] = remap.get(pending[q], pending[q])
    return KeyTree(nodes), depths


@dataclass(frozen=True)
class RekeyInstance:
    """One batch: a tree, its departing leaves ``A`` and ``m`` joiners."""

    tree: KeyTree
    departing: tuple[int, ...]
    remaining: tuple[int, ...]
    join_count: int
    depths_remaining: np.ndarray = field(repr=False, compare=False)
    depths_departing: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def build(cls, tree: KeyTree, departing: Iterable[int] = (), join_count: int = 0) -> "RekeyInstance":
        dep = tuple(sorted(set(int(a) for a in departing)))
        leaves = tree.leaves
        leafset = set(leaves)
        bad = [a for a in dep if a not in leafset]
        if bad:
            raise ValueError(f"departing nodes {bad} are not leaves")
        if len(tree) > 1 and 1 in dep:
            raise ValueError("the root cannot depart")
        if join_count < 0:
            raise ValueError("join count must be nonnegative")
        if join_count > 0 and not leaves:
            raise ValueError("cannot place joiners in an empty tree")
        depset = set(dep)
        rem = tuple(t for t in leaves if t not in depset)
        return cls(
            tree=tree,
            departing=dep,
            remaining=rem,
            join_count=int(join_count),
            depths_remaining=np.array([depth(t) for t in rem], dtype=np.int64),
            depths_departing=np.array([depth(t) for t in dep], dtype=np.int64),
        )

    @property
    def l1(self) -> int:
        return len(self.remaining)

    @property
    def l2(self) -> int:
        return len(self.departing)

    @property
    def m(self) -> int:
        return self.join_count

    @property
    def max_leaf_index(self) -> int:
        return max(self.tree.leaves, default=1)

    def default_lambda(self) -> float:
        return 0.1 / self.max_leaf_index


def _departure_path(a: int) -> range:
    # strict ancestors of a, parent excluded: a>>2, a>>3, ..., 1
    return range(2, depth(a) + 1)


def path_multiplicity(instance: RekeyInstance, assignment: "Assignment") -> Counter:
    """How many touched positions need each ancestor key."""
    ins, rep = assignment.insert_counts, assignment.replace_counts
    counts: Counter = Counter()
    for t, mi in zip(instance.remaining, ins):
        if mi > 0:
            counts.update(t >> s for s in range(1, depth(t) + 1))
    for a in instance.departing:
        counts.update(a >> s for s in _departure_path(a))
    return counts


def exact_rekey_cost(instance: RekeyInstance, assignment: "Assignment") -> int:
    """Approximate cost with keys shared by several update paths counted once."""
    from .costmodel import per_node_departure_cost, per_node_insertion_cost

    assignment.check(instance)
    approx = sum(
        per_node_insertion_cost(depth(t), int(mi))
        for t, mi in zip(instance.remaining, assignment.insert_counts)
    ) + sum(
        per_node_departure_cost(depth(a), int(mk))
        for a, mk in zip(instance.departing, assignment.replace_counts)
    )
    overlap = sum(c - 1 for c in path_multiplicity(instance, assignment).values())
    return int(approx - overlap)


def apply_rekey(tree: KeyTree, instance: RekeyInstance, assignment: "Assignment") -> KeyTree:
    """Tree after inserting joiners and removing departed members.

    Grafts and replacements happen first (they never renumber anything), then
    unreplaced departures are removed in ascending index order with sibling
    promotion.
    """
    if tree != instance.tree:
        raise ValueError("instance was built for a different tree")
    assignment.check(instance)
    nodes = set(tree.members)
    for t, mi in zip(instance.remaining, assignment.insert_counts):
        if mi > 0:
            nodes.update(graft_nodes(t, int(mi) + 1))
    pending = []
    for a, mk in zip(instance.departing, assignment.replace_counts):
        if mk > 0:
            nodes.update(graft_nodes(a, int(mk)))
        else:
            pending.append(a)
    for n in range(len(pending)):
        remap = _promote(nodes, pending[n])
        for q in range(n + 1, len(pending)):
            pending[q] = remap.get(pending[q], pending[q])
    return KeyTree(nodes)


def _leaf_bounds(height: int, balance: int) -> tuple[int, int]:
    shallow = height - balance
    if balance == 0:
        return 2**height, 2**height
    lo = 2**shallow + balance
    hi = 2**height - 2 ** (height - shallow) + 1
    return lo, hi


def leaf_count_range(height: int, balance: int) -> tuple[int, int]:
    """Fewest and most leaves a tree with this height and balance can have."""
    _validate_shape(height, balance)
    return _leaf_bounds(height, balance)


def _validate_shape(height: int, balance: int) -> None:
    if height < 1:
        raise InfeasibleTreeError(f"height must be >= 1, got {height}")
    if not 0 <= balance <= height - 1:
        raise InfeasibleTreeError(
            f"balance must lie in [0, height - 1] = [0, {height - 1}], got {balance}"
        )


def generate_random_tree(
    height: int,
    balance: int,
    seed: int,
    leaves: int | None = None,
    fill: float = 0.75,
) -> KeyTree:
    """Random full binary tree with exact height and leaf-depth spread.

    Start from the complete tree down to the shallowest allowed depth, keep one
    leaf there, grow a random path to full height, then split uniformly chosen
    leaves (never the kept one, never at full height) until the leaf target is
    met.  ``leaves`` defaults to the fraction ``fill`` of the feasible range.
    """
    _validate_shape(height, balance)
    lo, hi = _leaf_bounds(height, balance)
    if leaves is None:
        leaves = lo + int(round(fill * (hi - lo)))
    if not lo <= leaves <= hi:
        raise InfeasibleTreeError(
            f"height {height} with balance {balance} admits {lo}..{hi} leaves, not {leaves}"
        )
    if balance == 0:
        return KeyTree.complete(height)

    rng = np.random.default_rng(seed)
    shallow = height - balance
    nodes = set(range(1, 2 ** (shallow + 1)))
    level = list(range(2**shallow, 2 ** (shallow + 1)))
    keep, start = rng.choice(len(level), size=2, replace=False)
    keep, t = level[keep], level[start]
    while depth(t) < height:
        nodes.update((2 * t, 2 * t + 1))
        t = 2 * t + int(rng.integers(2))

    leafset = [u for u in nodes if 2 * u not in nodes]
    splittable = sorted(u for u in leafset if u != keep and depth(u) < height)
    count = len(leafset)
    while count < leaves:
        k = int(rng.integers(len(splittable)))
        u = splittable[k]
        splittable[k] = splittable[-1]
        splittable.pop()
        nodes.update((2 * u, 2 * u + 1))
        if depth(u) + 1 < height:
            splittable.extend((2 * u, 2 * u + 1))
        count += 1
    return KeyTree(nodes)
