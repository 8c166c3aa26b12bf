import json

import numpy as np
import pytest

from lkhrekey.costmodel import Assignment, LiftedPoint, lift, penalty_p, total_cost
from lkhrekey.dca import (
    SolverConfig,
    dcaep_insertion_only,
    dcaep_plus,
    h_value,
    initial_point,
    repair_to_binary,
    run_dca,
    subgradient,
)
from lkhrekey.keytree import KeyTree, RekeyInstance, generate_random_tree

COMPLETE2 = KeyTree.complete(2)


def _point(x, y, u, v):
    return LiftedPoint(np.array(x, float), np.array(y, float), np.array(u, float), np.array(v, float))


def test_subgradient_examples():
    inst = RekeyInstance.build(KeyTree.complete(3), [8], 1)
    z = _point([[0.5]] + [[0.0]] * 6, [[0.5]], [0.0] * 7, [1.0])
    g = subgradient(z, inst, 10.0)
    assert g.alpha[0, 0] == 10.0 and g.alpha[1, 0] == -10.0
    assert g.gamma[0] == (1 - 3) - 10
    assert g.sigma[0] == 11.0
    assert g.beta[0, 0] == 10.0


def test_subgradient_values_in_allowed_sets():
    rng = np.random.default_rng(0)
    inst = RekeyInstance.build(KeyTree.complete(3), [9, 14], 3)
    t = 4.5
    for _ in range(50):
        z = _point(rng.random((6, 3)), rng.random((2, 3)), rng.random(6), rng.random(2))
        g = subgradient(z, inst, t)
        assert set(np.unique(g.alpha)) <= {t, -t}
        assert set(np.unique(g.beta)) <= {t, -t}
        d = inst.depths_remaining
        assert np.all(np.isin(g.gamma - (1 - d), [t, -t]))
        assert set(np.unique(g.sigma)) <= {1 + t, 1 - t}


def test_repair_examples():
    z = _point([[0.4], [0.35]], [[0.25]], [1, 1], [0])
    a = repair_to_binary(z)
    assert a.x[:, 0].tolist() == [1, 0] and a.y[0, 0] == 0
    tie = repair_to_binary(_point([[0.5]], [[0.5]], [1], [1]))
    assert tie.x[0, 0] == 1 and tie.y[0, 0] == 0
    b = Assignment([[0, 1], [0, 0]], [[1, 0]])
    assert repair_to_binary(lift(b)) == b


@pytest.mark.parametrize("seed", range(8))
def test_replace_example_any_seed(seed):
    inst = RekeyInstance.build(COMPLETE2, [4], 1)
    res = dcaep_plus(inst, SolverConfig(lam=0.1, seed=seed))
    assert res.assignment.y.tolist() == [[1]]
    assert res.report.objective == pytest.approx(-0.7, abs=1e-12)
    assert res.report.exact_cost == 2


def test_no_joiners():
    tree = generate_random_tree(5, 2, seed=3)
    dep = list(tree.leaves[::4])
    inst = RekeyInstance.build(tree, dep, 0)
    res = dcaep_plus(inst, SolverConfig(starts=3))
    assert res.assignment.m == 0
    assert res.report.approx_cost == int((inst.depths_departing - 1).sum())
    assert all(run.iterations == 1 for run in res.trace.runs)


def test_insertion_only_examples():
    r = dcaep_insertion_only(COMPLETE2, [4], 0).report
    assert (r.deletion_cost, r.insertion_cost) == (1, 0)
    r = dcaep_insertion_only(COMPLETE2, [4, 5], 0).report
    assert r.deletion_cost == 1
    cfg = SolverConfig(lam=0.1, seed=2)
    a = dcaep_insertion_only(COMPLETE2, [], 1, cfg)
    b = dcaep_plus(RekeyInstance.build(COMPLETE2, [], 1), cfg)
    assert a.assignment == b.assignment
    assert a.report.exact_cost == b.report.exact_cost
    assert a.report.deletion_cost == 0


def test_insertion_only_everyone_leaves():
    tree = KeyTree([1, 2, 3])
    r = dcaep_insertion_only(tree, [2, 3], 3).report
    assert r.deletion_cost == 0
    assert r.insertion_cost == 5


def test_empty_instance_with_joiners_rejected():
    with pytest.raises(ValueError):
        RekeyInstance.build(KeyTree(), [], 2)


def _random_instance(rng, h_max=5, m_max=6):
    h = int(rng.integers(2, h_max + 1))
    tree = generate_random_tree(h, int(rng.integers(0, h)), int(rng.integers(1 << 30)))
    D = int(rng.integers(0, len(tree.leaves)))
    dep = rng.choice(tree.leaves, size=D, replace=False).tolist()
    return RekeyInstance.build(tree, dep, int(rng.integers(0, m_max + 1)))


def test_descent_and_feasible_output():
    rng = np.random.default_rng(11)
    for _ in range(25):
        inst = _random_instance(rng)
        res = dcaep_plus(inst, SolverConfig(starts=2, seed=int(rng.integers(100))))
        for run in res.trace.runs:
            for r in run.records:
                assert r.f <= r.f_prev + 1e-9
        a = res.assignment
        a.check(inst)
        rep = res.report
        assert 0 <= rep.exact_cost <= rep.approx_cost == total_cost(inst, a)
        assert rep.final_penalty == 0 or rep.repaired


def test_penalty_soundness_without_repair():
    rng = np.random.default_rng(12)
    for _ in range(25):
        inst = _random_instance(rng)
        cfg = SolverConfig(repair=False, seed=int(rng.integers(100))).resolve(inst)
        run = run_dca(inst, cfg, start=0)
        if penalty_p(run.final_point) == 0:
            z = run.final_point
            Assignment((z.x >= 0.5).astype(int), (z.y >= 0.5).astype(int)).check(inst)
        else:
            assert run.assignment is None


def test_multistart_deterministic():
    tree = generate_random_tree(5, 2, seed=9)
    inst = RekeyInstance.build(tree, list(tree.leaves[:5]), 7)
    a = dcaep_plus(inst, SolverConfig(seed=5, starts=4))
    b = dcaep_plus(inst, SolverConfig(seed=5, starts=4))
    assert a.assignment == b.assignment
    assert a.trace.to_jsonl() == b.trace.to_jsonl()
    assert [r.final_point.flat().tobytes() for r in a.trace.runs] == [
        r.final_point.flat().tobytes() for r in b.trace.runs
    ]


def test_trace_jsonl_fields():
    inst = RekeyInstance.build(COMPLETE2, [5], 2)
    res = dcaep_plus(inst, SolverConfig(starts=2))
    lines = res.trace.to_jsonl().splitlines()
    assert len(lines) == sum(r.iterations for r in res.trace.runs)
    rec = json.loads(lines[0])
    assert set(rec) == {"start", "l", "f", "p", "t", "is_binary"}


def test_iteration_cap_flags_nonconvergence():
    tree = generate_random_tree(6, 3, seed=1)
    inst = RekeyInstance.build(tree, list(tree.leaves[:6]), 12)
    res = dcaep_plus(inst, SolverConfig(max_iters=1, starts=2, epsilon=1e-12, seed=3))
    res.assignment.check(inst)
    assert all(r.iterations == 1 for r in res.trace.runs)
    assert not all(r.converged for r in res.trace.runs)


def test_config_validation_and_defaults():
    with pytest.raises(ValueError):
        SolverConfig(lam=0.0)
    with pytest.raises(ValueError):
        SolverConfig(starts=0)
    inst = RekeyInstance.build(COMPLETE2, [4], 1)
    cfg = SolverConfig().resolve(inst)
    assert cfg.lam == pytest.approx(0.1 / 7)
    assert cfg.t0 == pytest.approx(2 * (2 + cfg.lam * 7))
    assert cfg.theta == pytest.approx(cfg.t0 / 2)
    assert cfg.epsilon == 1e-5


def test_initial_point_in_delta():
    rng = np.random.default_rng(0)
    inst = RekeyInstance.build(KeyTree.complete(3), [8, 13], 5)
    for _ in range(20):
        assert initial_point(inst, rng).in_delta(inst)


def test_h_is_convex_piece():
    # h is the negative of a concave function plus linear terms: check midpoint convexity
    rng = np.random.default_rng(3)
    inst = RekeyInstance.build(KeyTree.complete(3), [8, 13], 2)
    for _ in range(200):
        a = _point(rng.random((6, 2)), rng.random((2, 2)), rng.random(6), rng.random(2))
        b = _point(rng.random((6, 2)), rng.random((2, 2)), rng.random(6), rng.random(2))
        mid = _point((a.x + b.x) / 2, (a.y + b.y) / 2, (a.u + b.u) / 2, (a.v + b.v) / 2)
        assert h_value(inst, mid, 3.0) <= (h_value(inst, a, 3.0) + h_value(inst, b, 3.0)) / 2 + 1e-9
