from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import trapezoid

from config import PlannerConfig
from context.behaviors import BehaviorKind, TargetRole, TargetState, make_option
from context.sampling import fail_safe_option, generate_behavior_options
from context.situation import find_context, select_and_update_context
from errors import Infeasible, NonpositiveDuration
from planner.planner import MotionPlanner, check_constraints, plan, planning_state, trajectory_cost
from planner.quintic import LongitudinalState, solve_min_jerk_segment
from planner.trajectory import LongitudinalTrajectory, assemble_candidate
from risk.model import ObjectPrediction

REST = LongitudinalState(0.0, 0.0, 0.0)


def _single(x0, xf, dt):
    return LongitudinalTrajectory(segments=(solve_min_jerk_segment(x0, xf, dt),))


def _least_norm_jerk_cost(D: float, T: float, n: int = 2000) -> float:
    """Zero-order-hold jerk on n steps, minimum-norm solution of the terminal conditions."""
    h = T / n
    r = T - h * np.arange(1, n + 1)  # time left after each interval
    A = np.vstack((h * r ** 2 / 2 + h ** 2 * r / 2 + h ** 3 / 6,
                   h * r + h ** 2 / 2,
                   np.full(n, h)))
    u, *_ = np.linalg.lstsq(A, np.array([D, 0.0, 0.0]), rcond=None)
    return 0.5 * h * float(np.sum(u ** 2))


def test_rest_to_rest_closed_form():
    seg = solve_min_jerk_segment(REST, LongitudinalState(100.0, 0.0, 0.0), 10.0)
    tau = np.linspace(0.0, 1.0, 11)
    s, v, a = seg.evaluate(10.0 * tau)
    assert np.allclose(s, 100.0 * (10 * tau ** 3 - 15 * tau ** 4 + 6 * tau ** 5))
    assert seg.jerk_cost() == pytest.approx(36.0)
    assert v[5] == pytest.approx(18.75)
    traj = LongitudinalTrajectory(segments=(seg,))
    assert traj.max_abs_jerk() == pytest.approx(6.0)
    _, _, _, a_fine = traj.sample(0.001)
    assert np.max(np.abs(a_fine)) == pytest.approx(10.0 * 100.0 / (np.sqrt(3.0) * 100.0), rel=1e-3)


def test_closed_form_matches_discretized_optimum():
    assert _least_norm_jerk_cost(100.0, 10.0) == pytest.approx(36.0, rel=5e-3)


def test_trivial_segments():
    cruise = solve_min_jerk_segment(LongitudinalState(0.0, 5.0, 0.0), LongitudinalState(20.0, 5.0, 0.0), 4.0)
    assert np.allclose(cruise.coeffs[3:], 0.0)
    assert cruise.jerk_cost() == pytest.approx(0.0)
    still = solve_min_jerk_segment(REST, REST, 1.0)
    assert np.allclose(still.coeffs, 0.0)
    assert still.jerk_cost() == 0.0


def test_boundary_states_are_met():
    x0, xf = LongitudinalState(3.0, 2.0, -0.5), LongitudinalState(40.0, 6.0, 0.3)
    seg = solve_min_jerk_segment(x0, xf, 7.0)
    assert seg.start_state() == x0
    end = seg.end_state()
    assert (end.s, end.v, end.a) == pytest.approx(xf.as_tuple())


def test_nonpositive_duration():
    with pytest.raises(NonpositiveDuration):
        solve_min_jerk_segment(REST, REST, 0.0)
    with pytest.raises(NonpositiveDuration):
        solve_min_jerk_segment(REST, REST, -1.0)
    with pytest.raises(ValueError):
        TargetState(10.0, 0.0, 0.0, 0.0)


def test_fail_safe_candidate_never_reverses(straight_route):
    x0 = LongitudinalState(0.0, 8.0, 0.0)
    option = make_option(straight_route, BehaviorKind.FAIL_SAFE,
                         [TargetState(8.0, 0.0, 0.0, 2.5, TargetRole.STOP)], x0)
    traj = assemble_candidate(x0, option)
    assert len(traj.segments) == 1
    _, _, v, _ = traj.sample(0.01)
    assert np.all(v >= -1e-9)
    assert traj.in_safe_set


def test_three_target_joints(straight_route):
    x0 = LongitudinalState(40.0, 8.0, 0.0)
    targets = [TargetState(90.0, 5.0, 0.0, 7.0, TargetRole.PNR),
               TargetState(100.0, 4.2, 0.0, 9.2, TargetRole.CURVE_EXIT),
               TargetState(110.0, 6.0, 0.0, 11.2, TargetRole.PGA)]
    option = make_option(straight_route, BehaviorKind.MERGE_DYNAMIC, targets, x0)
    traj = assemble_candidate(x0, option)
    assert len(traj.segments) == 3
    for seg, target in zip(traj.segments, targets):
        end = seg.end_state()
        assert (end.s, end.v, end.a) == pytest.approx(target.state.as_tuple(), abs=1e-9)
    for seg, target in zip(traj.segments[1:], targets):
        assert seg.start_state() == target.state
    assert traj.t_pnr == 7.0
    assert traj.t_pga == 11.2
    assert traj.duration == pytest.approx(11.2)


def test_committed_merge_is_annotated_from_now(straight_route):
    x0 = LongitudinalState(100.0, 3.0, 0.0)
    option = make_option(straight_route, BehaviorKind.MERGE_DYNAMIC,
                         [TargetState(110.0, 4.0, 0.0, 3.0, TargetRole.PGA)], x0)
    traj = assemble_candidate(x0, option)
    assert traj.t_pnr == 0.0
    assert traj.t_pga == 3.0


def test_trajectory_holds_final_state():
    traj = _single(LongitudinalState(0.0, 5.0, 0.0), LongitudinalState(10.0, 5.0, 0.0), 2.0)
    s, v, a = traj.evaluate(3.0)
    assert s[0] == pytest.approx(15.0)
    assert v[0] == pytest.approx(5.0)
    assert a[0] == 0.0
    assert traj.time_at_position(5.0) == pytest.approx(1.0, abs=1e-3)


def test_constraint_scan(straight_contexts):
    ctx = find_context(straight_contexts, 10.0)
    rest_to_rest = _single(REST, LongitudinalState(100.0, 0.0, 0.0), 10.0)
    assert not check_constraints(rest_to_rest, ctx)
    cruise = _single(LongitudinalState(0.0, 5.0, 0.0), LongitudinalState(50.0, 5.0, 0.0), 10.0)
    assert check_constraints(cruise, ctx)


def test_constraint_scan_rejects_reversing(straight_contexts):
    ctx = find_context(straight_contexts, 10.0)
    dip = _single(LongitudinalState(0.0, 1.0, 0.0), LongitudinalState(0.2, 0.0, 0.0), 1.0)
    _, _, v, _ = dip.sample(0.01)
    assert v.min() < -0.1
    assert not check_constraints(dip, ctx)


def test_trajectory_cost():
    rest_to_rest = _single(REST, LongitudinalState(100.0, 0.0, 0.0), 10.0)
    assert trajectory_cost(rest_to_rest, 0.0, PlannerConfig(w_tf=0.01)) == pytest.approx(37.0)
    still = _single(REST, REST, 2.0)
    assert trajectory_cost(still, 0.03, PlannerConfig(w_tf=0.0)) == pytest.approx(0.03)

    seg = solve_min_jerk_segment(REST, LongitudinalState(10.0, 0.0, 0.0), 5.0)
    seg2 = solve_min_jerk_segment(LongitudinalState(10.0, 0.0, 0.0), LongitudinalState(20.0, 0.0, 0.0), 5.0)
    double = LongitudinalTrajectory(segments=(seg, seg2))
    single = LongitudinalTrajectory(segments=(seg,))
    cfg = PlannerConfig(w_tf=0.05)
    assert trajectory_cost(double, 0.01, cfg) == pytest.approx(2 * trajectory_cost(single, 0.0, cfg) + 0.01)


def test_planner_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(w_t=2.0)
    with pytest.raises(ValueError):
        PlannerConfig(scan_step=0.0)


def test_empty_road_selects_a_merge(straight_contexts):
    planner = MotionPlanner(straight_contexts)
    result = planner.step(LongitudinalState(60.0, 8.33, 0.0), [])
    assert result.behavior.kind == BehaviorKind.MERGE_DYNAMIC
    assert result.p_risk == 0.0
    assert result.behavior.final.s_f == pytest.approx(110.0)
    assert all(r["kind"] != "fail_safe" for r in result.records)
    assert planner.previous is result.behavior


def test_dense_traffic_stops_at_the_yield_line(straight_contexts):
    traffic = [ObjectPrediction(f"m{i}", "main", 101.0 - 6.0 * i, 8.33) for i in range(60)]
    result = MotionPlanner(straight_contexts).step(LongitudinalState(60.0, 8.33, 0.0), traffic)
    assert result.behavior.kind == BehaviorKind.GENTLE_STOP
    end = result.trajectory.state_at(result.trajectory.duration)
    assert end.s == pytest.approx(100.0)
    assert end.v == pytest.approx(0.0, abs=1e-9)
    assert end.a == pytest.approx(0.0, abs=1e-9)


def test_merge_from_standstill_at_the_yield_line(straight_contexts):
    x0 = LongitudinalState(100.0, 0.0, 0.0)
    result = MotionPlanner(straight_contexts).step(x0, [])
    assert result.behavior.kind == BehaviorKind.MERGE_DYNAMIC
    start = result.trajectory.state_at(0.0)
    assert start.as_tuple() == pytest.approx(x0.as_tuple(), abs=1e-12)


def test_fail_safe_ignores_the_risk_bound(straight_contexts):
    ctx = find_context(straight_contexts, 60.0)
    x0 = LongitudinalState(60.0, 8.33, 0.0)
    only_fail_safe = replace(ctx, behaviors=(fail_safe_option(ctx, x0),))
    result = plan(only_fail_safe, x0, [], p_rel=0.5)
    assert result.behavior.kind == BehaviorKind.FAIL_SAFE
    assert result.p_risk == pytest.approx(0.5)


def test_no_options_is_infeasible(straight_contexts):
    ctx = replace(find_context(straight_contexts, 60.0), behaviors=())
    with pytest.raises(Infeasible):
        plan(ctx, LongitudinalState(60.0, 8.33, 0.0), [])


def test_random_rest_to_rest_segments_match_the_discretized_optimum():
    rng = np.random.default_rng(7)
    for D, T in zip(rng.uniform(1.0, 150.0, 6), rng.uniform(2.0, 12.0, 6)):
        seg = solve_min_jerk_segment(REST, LongitudinalState(float(D), 0.0, 0.0), float(T))
        assert seg.jerk_cost() == pytest.approx(360.0 * D ** 2 / T ** 5)
        assert seg.jerk_cost() == pytest.approx(_least_norm_jerk_cost(float(D), float(T)), rel=5e-3)


def test_quintic_beats_admissible_perturbations():
    x0, xf, T = LongitudinalState(3.0, 6.0, -0.5), LongitudinalState(60.0, 4.0, 0.3), 8.0
    seg = solve_min_jerk_segment(x0, xf, T)
    tau = np.linspace(0.0, T, 4001)
    jerk = seg.jerk(tau)
    # third derivative of tau^3 (T - tau)^3, which vanishes with s, v and a at both ends
    bump = 6 * T ** 3 - 72 * T ** 2 * tau + 180 * T * tau ** 2 - 120 * tau ** 3
    base = 0.5 * trapezoid(jerk ** 2, tau)
    assert base == pytest.approx(seg.jerk_cost(), rel=1e-4)
    for eps in (-1e-3, 1e-4, 1e-3):
        assert 0.5 * trapezoid((jerk + eps * bump) ** 2, tau) > base


def test_planning_state_drops_braking_at_standstill():
    assert planning_state(LongitudinalState(95.005, 0.126, -0.442), 0.3).a == 0.0
    assert planning_state(LongitudinalState(95.0, 0.01, -1.0)).a == 0.0
    assert planning_state(LongitudinalState(60.0, 8.33, -2.0), 0.3).a == -2.0
    assert planning_state(LongitudinalState(60.0, -0.1, 0.0)).v == 0.0


def test_creeping_with_residual_braking_still_plans(straight_contexts):
    result = MotionPlanner(straight_contexts).step(LongitudinalState(99.0, 0.126, -0.44), [])
    _, s, v, _ = result.trajectory.sample(0.05)
    assert np.all(np.isfinite(s)) and np.all(np.isfinite(v))
    assert np.min(s) >= 99.0 - 1e-9
    assert result.trajectory.duration <= 10.0 + 1e-9


def test_braking_before_the_pnr_never_passes_the_yield_line(straight_contexts):
    traffic = [ObjectPrediction(f"m{i}", "main", 101.0 - 6.0 * i, 8.33) for i in range(60)]
    result = MotionPlanner(straight_contexts).step(LongitudinalState(90.33, 8.33, 0.0), traffic)
    assert result.behavior.kind in (BehaviorKind.GENTLE_STOP, BehaviorKind.FAIL_SAFE)
    _, s, _, _ = result.trajectory.sample(0.01)
    assert np.max(s) <= 100.0 + 1e-6
    assert result.trajectory.state_at(result.trajectory.duration).v == pytest.approx(0.0, abs=1e-9)


def _pilot_entry(pilot_contexts):
    ctx = next(c for c in pilot_contexts if c.is_merge)
    lo = ctx.interval[0]
    return LongitudinalState(lo, float(ctx.approach_profile(lo)), 0.0)


def test_pilot_empty_road_merges_from_the_context_entry(pilot_contexts):
    result = MotionPlanner(pilot_contexts).step(_pilot_entry(pilot_contexts), [])
    assert result.behavior.kind == BehaviorKind.MERGE_DYNAMIC
    assert all(r["kind"] != "fail_safe" for r in result.records)


def test_pilot_empty_road_approach_follows_the_lane(pilot_contexts):
    result = MotionPlanner(pilot_contexts).step(LongitudinalState(60.0, 8.33, 0.0), [])
    assert result.behavior.kind == BehaviorKind.LANE_FOLLOW
    assert all(r["kind"] != "fail_safe" for r in result.records)
    boundary = result.behavior.final
    assert boundary.v_f < 8.33


def test_selection_is_the_cheapest_valid_candidate(straight_contexts):
    x0 = LongitudinalState(60.0, 8.33, 0.0)
    objects = [ObjectPrediction("B", "main", 10.0, 8.33)]
    ctx = select_and_update_context(straight_contexts, x0, objects)
    ctx = replace(ctx, behaviors=tuple(generate_behavior_options(ctx, x0, objects)))

    greedy = plan(ctx, x0, objects)
    same_class = [r["cost"] for r in greedy.records
                  if r["valid"] and r["importance"] == greedy.behavior.importance]
    assert greedy.cost == pytest.approx(min(same_class))

    full = plan(ctx, x0, objects, cfg=PlannerConfig(early_exit=False))
    assert len(full.records) == len(ctx.behaviors)
    assert full.cost <= greedy.cost + 1e-12
    same_class = [r["cost"] for r in full.records
                  if r["valid"] and r["importance"] == greedy.behavior.importance]
    assert min(same_class) == pytest.approx(greedy.cost)


def test_replanning_along_the_plan_keeps_merging(pilot_contexts):
    planner = MotionPlanner(pilot_contexts)
    first = planner.step(_pilot_entry(pilot_contexts), [])
    for t in (0.1, 0.2, 0.3):
        x = first.trajectory.state_at(t)
        result = planner.step(x, [])
        assert result.behavior.kind == BehaviorKind.MERGE_DYNAMIC
        assert result.trajectory.state_at(0.0).as_tuple() == pytest.approx(x.as_tuple(), abs=1e-9)
        assert result.behavior.final.s_f == pytest.approx(first.behavior.final.s_f)
