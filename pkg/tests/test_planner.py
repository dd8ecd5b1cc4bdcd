import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpnet import neuralnet as nn
from mpnet.geometry import (
    ContractViolation,
    Obstacle,
    Workspace,
    path_cost,
    path_feasible,
    point_in_free_space,
    segment_collision_free,
)
from mpnet.models import EncoderModel, PlannerModel, encoder_specs
from mpnet.planner import (
    Counters,
    MpnetConfig,
    MpnetModels,
    lazy_states_contraction,
    mpnet_plan,
    neural_planner_bidir,
    replan,
)
from mpnet.pointcloud import Bounds
from mpnet.rrtstar import GoalRegion, RrtConfig

B = Bounds(np.array([-10.0, -10.0]), np.array([10.0, 10.0]))
M = 4
EMPTY = Workspace(2, "simple2d", (-10.0, -10.0), (10.0, 10.0), (), "empty")
BLOCK = Workspace(2, "simple2d", (-10.0, -10.0), (10.0, 10.0), (Obstacle((-1.0, -3.0), (1.0, 3.0)),), "block")
Z = np.zeros(M)


def linear_planner(a_t: float, a_goal: float, bias: float = 0.0) -> PlannerModel:
    """Stub network predicting ``a_t * x_t + a_goal * x_goal`` in normalised space."""
    spec = [nn.LayerSpec(M + 4, 2, "identity", 0.0)]
    p = nn.init_params(spec, 0, zeros=True)
    p.weights[0][:, M : M + 2] = a_t * np.eye(2)
    p.weights[0][:, M + 2 :] = a_goal * np.eye(2)
    p.biases[0][:] = bias
    return PlannerModel(p, B, M, 0.0)


MIDPOINT = linear_planner(0.5, 0.5)
STUCK = linear_planner(1.0, 0.0)


def models(pl):
    enc = EncoderModel(nn.init_params(encoder_specs(2 * 5, M, (4, 4, 4)), 0), B, 5)
    return MpnetModels(enc, pl)


def cfg(mode="NR", **kw):
    hybrid = RrtConfig(max_iters=5000, stop_on_first=True, snap_to_center=True)
    return MpnetConfig(mode=mode, hybrid=hybrid, **kw)


def rng(seed=0):
    return np.random.default_rng(seed)


# lazy states contraction

def test_lsc_collinear_and_short_paths():
    p = [np.array([-2.0, 0.0]), np.array([0.0, 0.0]), np.array([2.0, 0.0])]
    out = lazy_states_contraction(p, EMPTY)
    assert len(out) == 2 and np.array_equal(out[0], p[0]) and np.array_equal(out[1], p[2])
    two = p[:2]
    assert [s.tolist() for s in lazy_states_contraction(two, EMPTY)] == [s.tolist() for s in two]


def test_lsc_keeps_detour_around_box():
    p = [np.array([-3.0, 0.0]), np.array([-3.0, 4.0]), np.array([3.0, 4.0]), np.array([3.0, 0.0])]
    out = lazy_states_contraction(p, BLOCK)
    assert 2 < len(out) <= len(p)
    assert path_feasible(out, BLOCK)
    assert path_cost(out) <= path_cost(p)


def feasible_walk(pts, w):
    states = [np.array(pts[0])]
    for q in pts[1:]:
        q = np.array(q)
        if segment_collision_free(states[-1], q, w):
            states.append(q)
    return states


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.floats(-9.5, 9.5), st.floats(-9.5, 9.5)), min_size=1, max_size=8))
def test_lsc_laws(pts):
    pts = [p for p in pts if point_in_free_space(np.array(p), BLOCK)]
    if not pts:
        return
    path = feasible_walk(pts, BLOCK)
    out = lazy_states_contraction(path, BLOCK)
    idx = [next(i for i, s in enumerate(path) if s is o) for o in out]
    assert idx == sorted(idx) and len(set(idx)) == len(idx)
    assert out[0] is path[0] and out[-1] is path[-1]
    assert len(out) <= len(path)
    assert path_cost(out) <= path_cost(path) + 1e-9
    assert path_feasible(out, BLOCK)
    again = lazy_states_contraction(out, BLOCK)
    assert len(again) == len(out) and all(a is b for a, b in zip(again, out))


def test_lsc_empty_path_rejected():
    with pytest.raises(ContractViolation):
        lazy_states_contraction([], EMPTY)


# bidirectional generation

def test_midpoint_stub_connects_in_one_iteration():
    c = Counters()
    path = neural_planner_bidir([-5.0, -5.0], [5.0, 5.0], Z, MIDPOINT, EMPTY, cfg(), rng(), counters=c)
    assert path is not None
    assert c.pnet_calls == 1
    assert np.array_equal(path[0], [-5.0, -5.0]) and np.array_equal(path[-1], [5.0, 5.0])


def test_stuck_stub_gives_up_after_budget_and_alternates():
    c = Counters()
    trace = []
    path = neural_planner_bidir([-5.0, 0.0], [5.0, 0.0], Z, STUCK, BLOCK, cfg(bidir_iters=17), rng(), counters=c, trace=trace)
    assert path is None
    assert c.pnet_calls == 17
    assert trace == ["start" if i % 2 == 0 else "goal" for i in range(17)]
    assert c.extensions_start == 9 and c.extensions_goal == 8


def test_nonfinite_outputs_are_counted_and_skipped():
    bad = linear_planner(0.5, 0.5, bias=np.nan)
    c = Counters()
    path = neural_planner_bidir([-5.0, 0.0], [5.0, 0.0], Z, bad, BLOCK, cfg(bidir_iters=6), rng(), counters=c)
    assert path is None
    assert c.nonfinite_outputs == 6 and c.pnet_calls == 6


# replanning

def test_replan_leaves_feasible_path_alone():
    p = [np.array([-5.0, -5.0]), np.array([-5.0, 5.0]), np.array([5.0, 5.0])]
    out = replan(p, Z, STUCK, BLOCK, cfg(), 3, rng())
    assert [s.tolist() for s in out] == [s.tolist() for s in p]


def test_replan_nr_depth_zero_fails_on_blocked_segment():
    p = [np.array([-5.0, 0.0]), np.array([5.0, 0.0])]
    assert replan(p, Z, MIDPOINT, BLOCK, cfg(), 0, rng()) is None


def test_replan_hr_repairs_blocked_segment():
    p = [np.array([-5.0, 0.0]), np.array([5.0, 0.0])]
    c = Counters()
    out = replan(p, Z, STUCK, BLOCK, cfg("HR"), 2, rng(), counters=c)
    assert out is not None
    assert path_feasible(out, BLOCK)
    assert np.array_equal(out[0], p[0]) and np.array_equal(out[-1], p[1])
    assert c.fallback_used >= 1


def test_replan_negative_depth_rejected():
    with pytest.raises(ContractViolation):
        replan([np.zeros(2)], Z, STUCK, EMPTY, cfg(), -1, rng())


# top-level query

def test_start_inside_goal_is_immediate():
    res = mpnet_plan(EMPTY, None, [1.0, 1.0], GoalRegion(np.array([1.5, 1.0]), 1.0), models(STUCK), cfg(), latent=Z)
    assert res.succeeded and len(res.path) == 1 and res.counters.pnet_calls == 0


def test_nr_failure_and_hr_success_with_stuck_model():
    goal = GoalRegion(np.array([5.0, 0.0]), 1.0)
    nr = mpnet_plan(BLOCK, None, [-5.0, 0.0], goal, models(STUCK), cfg("NR"), rng(), latent=Z)
    assert not nr.succeeded and nr.path is None and nr.counters.fallback_used == 0
    hr = mpnet_plan(BLOCK, None, [-5.0, 0.0], goal, models(STUCK), cfg("HR"), rng(), latent=Z)
    assert hr.succeeded and hr.counters.fallback_used >= 1
    assert path_feasible(hr.path, BLOCK) and np.array_equal(hr.path[0], [-5.0, 0.0])
    assert goal.contains(hr.path[-1])
    doc = json.loads(json.dumps(hr.to_dict()))
    assert doc["succeeded"] and doc["counters"]["fallback_used"] >= 1 and doc["time_us"] >= 0


def test_midpoint_model_solves_open_problem():
    res = mpnet_plan(EMPTY, None, [-5.0, -5.0], GoalRegion(np.array([5.0, 5.0]), 1.0), models(MIDPOINT), cfg(), rng(), latent=Z)
    assert res.succeeded and len(res.path) == 2
    assert res.cost == pytest.approx(math.hypot(10, 10))


def test_dimension_mismatch_is_rejected_before_planning():
    w3 = Workspace(3, "complex3d", (-10.0,) * 3, (10.0,) * 3, (), "w3")
    with pytest.raises(ContractViolation):
        mpnet_plan(w3, None, [0.0, 0.0, 0.0], GoalRegion(np.array([5.0, 5.0, 5.0])), models(MIDPOINT), cfg(), latent=Z)
    with pytest.raises(ContractViolation):
        mpnet_plan(BLOCK, None, [0.0, 0.0], GoalRegion(np.array([5.0, 5.0])), models(MIDPOINT), cfg(), latent=Z)


def test_hybrid_dominates_neural_on_fixed_problems():
    r = np.random.default_rng(1)
    probs = []
    while len(probs) < 6:
        a, b = r.uniform(-9, 9, (2, 2))
        if point_in_free_space(a, BLOCK) and point_in_free_space(b, BLOCK) and np.linalg.norm(a - b) > 3:
            probs.append((a, b))
    wins = {"NR": 0, "HR": 0}
    for mode in wins:
        for i, (a, b) in enumerate(probs):
            res = mpnet_plan(BLOCK, None, a, GoalRegion(b, 1.0), models(STUCK), cfg(mode), rng(i), latent=Z)
            wins[mode] += res.succeeded
    assert wins["HR"] >= wins["NR"]
    assert wins["HR"] == len(probs)


def test_config_validation():
    with pytest.raises(ContractViolation):
        MpnetConfig(bidir_iters=0)
    with pytest.raises(ContractViolation):
        MpnetConfig(replan_depth=0)
    with pytest.raises(ContractViolation):
        MpnetConfig(mode="XX")
