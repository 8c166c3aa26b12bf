import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lkhrekey.costmodel import Assignment, total_cost
from lkhrekey.keytree import (
    InfeasibleTreeError,
    KeyTree,
    RekeyInstance,
    apply_rekey,
    delete_sequentially,
    depth,
    exact_rekey_cost,
    find_leaves,
    generate_random_tree,
    graft_nodes,
    leaf_count_range,
    tree_balance,
)

import oracles

COMPLETE2 = KeyTree.complete(2)


def test_find_leaves_examples():
    assert find_leaves(KeyTree([1])) == [1]
    assert find_leaves(COMPLETE2) == [4, 5, 6, 7]
    assert find_leaves(KeyTree([1, 2, 3, 6, 7])) == [2, 6, 7]
    assert find_leaves(KeyTree()) == []


def test_depth_examples():
    assert depth(1) == 0
    assert depth(7) == 2
    assert depth(1024) == 10
    with pytest.raises(ValueError):
        depth(0)


@given(st.integers(min_value=1, max_value=2**40))
def test_depth_monotone(t):
    assert depth(2 * t) == depth(t) + 1
    assert depth(2 * t + 1) == depth(t) + 1


@pytest.mark.parametrize("nodes", [[2, 3], [1, 2], [1, 2, 3, 4], [1, 3, 2, 6, 7, 12]])
def test_invalid_trees_rejected(nodes):
    with pytest.raises(ValueError):
        KeyTree(nodes)


def test_json_round_trip():
    tree = generate_random_tree(6, 3, seed=4)
    text = tree.to_json()
    assert KeyTree.from_json(text) == tree
    assert KeyTree.from_json(text).to_json() == text


def test_tree_balance_examples():
    assert tree_balance(COMPLETE2) == 0
    assert tree_balance(KeyTree([1, 2, 3, 6, 7])) == 1
    assert tree_balance(KeyTree([1])) == 0


def test_generate_examples():
    for seed in range(5):
        assert generate_random_tree(2, 0, seed) == COMPLETE2
    t = generate_random_tree(2, 1, seed=0)
    assert len(t) == 5
    assert t in (KeyTree([1, 2, 3, 4, 5]), KeyTree([1, 2, 3, 6, 7]))
    big = generate_random_tree(8, 5, seed=11)
    depths = {depth(l) for l in big.leaves}
    assert min(depths) == 3 and max(depths) == 8


def test_generate_deterministic():
    assert generate_random_tree(7, 4, seed=3) == generate_random_tree(7, 4, seed=3)
    assert generate_random_tree(7, 4, seed=3) != generate_random_tree(7, 4, seed=4)


@pytest.mark.parametrize("height,balance", [(0, 0), (3, 3), (3, -1), (1, 1)])
def test_generate_infeasible(height, balance):
    with pytest.raises(InfeasibleTreeError):
        generate_random_tree(height, balance, seed=0)


def test_generate_leaf_count_out_of_range():
    lo, hi = leaf_count_range(5, 2)
    with pytest.raises(InfeasibleTreeError):
        generate_random_tree(5, 2, seed=0, leaves=hi + 1)
    for n in (lo, hi):
        assert len(generate_random_tree(5, 2, seed=1, leaves=n).leaves) == n


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.data())
def test_generated_shape(height, data):
    balance = data.draw(st.integers(0, height - 1))
    seed = data.draw(st.integers(0, 10**6))
    tree = generate_random_tree(height, balance, seed)
    leaves = find_leaves(tree)
    assert leaves == sorted(set(leaves)) and leaves
    assert all(2 * t not in tree for t in leaves)
    assert tree.height == height
    assert tree_balance(tree) == balance


def test_graft_nodes_shape():
    assert sorted(graft_nodes(5, 2)) == [5, 10, 11]
    sub = KeyTree(graft_nodes(1, 5))
    assert len(sub.leaves) == 5
    assert tree_balance(sub) <= 1


def test_apply_rekey_examples():
    inst = RekeyInstance.build(COMPLETE2, [4], 1)
    assert apply_rekey(COMPLETE2, inst, Assignment([[0], [0], [0]], [[1]])) == COMPLETE2

    inst = RekeyInstance.build(COMPLETE2, [4], 0)
    assert apply_rekey(COMPLETE2, inst, Assignment.empty(inst)) == KeyTree([1, 2, 3, 6, 7])

    inst = RekeyInstance.build(COMPLETE2, [], 1)
    out = apply_rekey(COMPLETE2, inst, Assignment([[0], [1], [0], [0]], np.zeros((0, 1))))
    assert out == KeyTree([1, 2, 3, 4, 5, 6, 7, 10, 11])


def test_sequential_deletion_example():
    tree, depths = delete_sequentially(COMPLETE2, [4, 5])
    assert depths == [2, 1]
    assert tree == KeyTree([1, 2, 3])


def test_instance_validation():
    with pytest.raises(ValueError):
        RekeyInstance.build(COMPLETE2, [2], 0)
    with pytest.raises(ValueError):
        RekeyInstance.build(COMPLETE2, [1], 0)
    with pytest.raises(ValueError):
        RekeyInstance.build(COMPLETE2, [], -1)
    inst = RekeyInstance.build(COMPLETE2, [6, 4], 3)
    assert inst.departing == (4, 6) and inst.remaining == (5, 7)
    assert inst.l1 + inst.l2 == 4
    assert list(inst.depths_departing) == [2, 2]


def test_exact_cost_examples():
    inst = RekeyInstance.build(COMPLETE2, [4], 1)
    assert exact_rekey_cost(inst, Assignment([[0], [0], [0]], [[1]])) == 2
    inst = RekeyInstance.build(COMPLETE2, [], 0)
    assert exact_rekey_cost(inst, Assignment.empty(inst)) == 0
    inst = RekeyInstance.build(COMPLETE2, [4, 5], 2)
    a = Assignment(np.zeros((2, 2)), np.eye(2))
    assert total_cost(inst, a) == 4
    assert exact_rekey_cost(inst, a) == 3


def _random_instance(rng, max_height=6, max_m=8):
    h = int(rng.integers(1, max_height + 1))
    tree = generate_random_tree(h, int(rng.integers(0, h)), int(rng.integers(1 << 30)))
    leaves = tree.leaves
    D = int(rng.integers(0, len(leaves)))
    dep = rng.choice(leaves, size=D, replace=False).tolist()
    m = int(rng.integers(0, max_m + 1))
    inst = RekeyInstance.build(tree, dep, m)
    cnt = np.bincount(rng.integers(0, inst.l1 + inst.l2, size=m), minlength=inst.l1 + inst.l2)
    return tree, inst, Assignment.from_counts(cnt[: inst.l1], cnt[inst.l1:])


def test_exact_cost_matches_union_oracle():
    rng = np.random.default_rng(5)
    for _ in range(300):
        tree, inst, a = _random_instance(rng)
        ins, rep = a.insert_counts, a.replace_counts
        want = oracles.exact_by_union(inst.remaining, inst.departing, ins, rep)
        assert exact_rekey_cost(inst, a) == want
        assert exact_rekey_cost(inst, a) <= total_cost(inst, a)


def test_exact_equals_approx_for_single_touch():
    rng = np.random.default_rng(6)
    for _ in range(100):
        tree = generate_random_tree(5, 2, int(rng.integers(1000)))
        leaves = tree.leaves
        a = int(rng.choice(leaves))
        inst = RekeyInstance.build(tree, [a], 2)
        assn = Assignment.from_counts([0] * inst.l1, [2])
        assert exact_rekey_cost(inst, assn) == total_cost(inst, assn)


def test_apply_rekey_property():
    rng = np.random.default_rng(7)
    for _ in range(200):
        tree, inst, a = _random_instance(rng)
        out = apply_rekey(tree, inst, a)  # the constructor checks fullness and closure
        if out.nodes:
            assert len(out.leaves) == inst.l1 + inst.m
            assert tree_balance(out) >= 0


def test_full_replacement_keeps_balance():
    tree = KeyTree.complete(4)
    leaves = tree.leaves
    some = RekeyInstance.build(tree, leaves[::3], len(leaves[::3]))
    a = Assignment.from_counts([0] * some.l1, [1] * some.l2)
    assert tree_balance(apply_rekey(tree, some, a)) == tree_balance(tree)
    every = RekeyInstance.build(tree, leaves, 2 * len(leaves))
    a = Assignment.from_counts([], [2] * every.l2)
    assert tree_balance(apply_rekey(tree, every, a)) == tree_balance(tree)
