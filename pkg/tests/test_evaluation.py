import math
from pathlib import Path

import numpy as np
import pytest
from shapely.geometry import Point

from env.scenario import load_scenario
from errors import Unfinished
from evaluation.maneuvers import RunLog, categorize_maneuver, crossing_time, standstill_interval, summarize_run
from evaluation.metrics import d_lane, jerk_stats
from geometry.path import build_path
from geometry.shapes import BoundingBox, bbox_corners, lane_polygon
from planner.quintic import LongitudinalState, solve_min_jerk_segment

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def _log(t, s, **actors) -> RunLog:
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    v = np.gradient(s, t)
    zeros = np.zeros_like(t)
    return RunLog(t=t, x=zeros, y=zeros, phi=zeros, v=v, a=np.gradient(v, t), delta=zeros, s=s,
                  d_lane=np.full_like(t, 0.8), behavior=["merge_dynamic"] * len(t), p_risk=zeros,
                  actors={k: np.asarray(a, dtype=float) for k, a in actors.items()})


T = np.arange(0.0, 20.0 + 1e-9, 0.1)


def _scenario(name):
    return load_scenario(SCENARIOS / f"{name}.json")


def test_d_lane_on_a_straight_lane():
    left = build_path([(0.0, 1.75), (100.0, 1.75)], 0.25)
    right = build_path([(0.0, -1.75), (100.0, -1.75)], 0.25)
    assert d_lane(BoundingBox((50.0, 0.0), 0.0, 4.5, 1.8), left, right) == pytest.approx(0.85)
    assert d_lane(BoundingBox((50.0, 0.85), 0.0, 4.5, 1.8), left, right) == pytest.approx(0.0, abs=1e-9)
    assert d_lane(BoundingBox((50.0, 1.05), 0.0, 4.5, 1.8), left, right) == pytest.approx(-0.2)


def test_d_lane_is_invariant_to_rigid_motion():
    theta, shift = math.radians(30.0), np.array([12.0, -7.0])
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])

    def moved(points):
        return [tuple(rot @ np.asarray(p) + shift) for p in points]

    left = build_path(moved([(0.0, 1.75), (100.0, 1.75)]), 0.25)
    right = build_path(moved([(0.0, -1.75), (100.0, -1.75)]), 0.25)
    (center,) = moved([(50.0, 0.3)])
    box = BoundingBox(center, theta, 4.5, 1.8)
    assert d_lane(box, left, right) == pytest.approx(0.55, abs=1e-6)


def test_jerk_of_constant_acceleration_is_zero():
    t = np.arange(0.0, 5.0, 0.05)
    assert jerk_stats(t, np.full_like(t, 1.2)) == pytest.approx((0.0, 0.0), abs=1e-9)
    assert jerk_stats([0.0, 0.1], [0.0, 1.0]) == (0.0, 0.0)


def test_jerk_of_a_quintic_merge():
    seg = solve_min_jerk_segment(LongitudinalState(0.0, 0.0, 0.0), LongitudinalState(100.0, 0.0, 0.0), 10.0)
    t = np.arange(0.0, 10.0 + 1e-9, 0.01)
    _, _, a = seg.evaluate(t)
    smoothed, raw = jerk_stats(t, a)
    assert raw == pytest.approx(6.0, rel=1e-2)
    assert smoothed <= raw


def test_crossing_time_interpolates():
    t = np.array([0.0, 1.0, 2.0])
    assert crossing_time(t, np.array([0.0, 10.0, 20.0]), 15.0) == pytest.approx(1.5)
    assert crossing_time(t, np.array([0.0, 10.0, 20.0]), 25.0) is None
    assert crossing_time(t, np.array([np.nan, 30.0, 40.0]), 15.0) == 1.0


def test_no_traffic(pilot):
    record = categorize_maneuver(_log(T, 30.0 + 6.0 * T), pilot)
    assert record.category == "no_traffic"
    assert record.t_f == pytest.approx(15.0)
    assert record.t_conflict == pytest.approx((105.385 - 30.0) / 6.0)


def test_merge_before():
    # the main-road actor reaches the merge point after the ego
    log = _log(T, 30.0 + 6.0 * T, late=20.0 + 6.0 * T)
    record = categorize_maneuver(log, _scenario("merge_before"))
    assert record.category == "merge_before"
    assert record.passed_after == ("late",)


def test_merge_behind():
    log = _log(T, 30.0 + 6.0 * T, lead=60.0 + 6.0 * T)
    assert categorize_maneuver(log, _scenario("merge_behind")).category == "merge_behind"


def test_actors_outside_the_interaction_window_do_not_count():
    log = _log(T, 30.0 + 6.0 * T, lead=200.0 + 6.0 * T)
    assert categorize_maneuver(log, _scenario("merge_behind")).category == "no_traffic"


def test_upstream_actor_is_extrapolated():
    t = np.arange(0.0, 16.0 + 1e-9, 0.1)
    log = _log(t, 30.0 + 6.0 * t, late=6.0 * t)
    assert categorize_maneuver(log, _scenario("merge_before")).category == "merge_before"


def test_gap_merge_classes():
    scenario = _scenario("merge_gap")
    slow = _log(T, 30.0 + 6.0 * T, front=60.0 + 6.0 * T, back=20.0 + 6.0 * T)
    assert categorize_maneuver(slow, scenario).category == "merge_gap_class2"

    t = np.arange(0.0, 6.0 + 1e-9, 0.05)
    fast = _log(t, 30.0 + 20.0 * t, front=60.0 + 20.0 * t, back=20.0 + 20.0 * t)
    assert categorize_maneuver(fast, scenario).category == "merge_gap_class1"


def test_stop_then_merge(pilot):
    s = np.where(T < 65.0 / 6.0, 30.0 + 6.0 * T, 95.0)
    s = np.where(T > 13.0, 95.0 + 6.0 * (T - 13.0), s)
    log = _log(T, s)
    still = standstill_interval(log, 95.0)
    assert still is not None
    assert still[1] - still[0] >= 0.3
    assert categorize_maneuver(log, pilot).category == "stop_then_merge"


def test_short_log_is_unfinished(pilot):
    with pytest.raises(Unfinished):
        categorize_maneuver(_log(T, 30.0 + 2.0 * T), pilot)


def test_summarize_run(pilot):
    metrics = summarize_run(_log(T, 30.0 + 6.0 * T), pilot, planned_jerk=0.4)
    assert metrics["category"] == "no_traffic"
    assert metrics["t_f"] == pytest.approx(15.0)
    assert metrics["min_d_lane"] == pytest.approx(0.8)
    assert not metrics["lane_margin_flag"]
    assert metrics["comfortable"]
    assert metrics["marks"] == {"yield line": pytest.approx(95.0), "PGA": 120.0}

    unfinished = summarize_run(_log(T, 30.0 + 2.0 * T), pilot)
    assert unfinished["category"] is None


def test_run_log_csv(tmp_path):
    log = _log(T[:5], 30.0 + 6.0 * T[:5], a1=[np.nan, 1.0, 2.0, 3.0, 4.0])
    log.to_csv(tmp_path / "trajectory.csv")
    again = RunLog.from_csv(tmp_path / "trajectory.csv")
    assert len(again) == 5
    assert np.isnan(again.actors["a1"][0])
    assert again.behavior[0] == "merge_dynamic"


def test_d_lane_sign_matches_the_lane_polygon():
    left = build_path([(0.0, 1.75), (100.0, 1.75)], 0.25)
    right = build_path([(0.0, -1.75), (100.0, -1.75)], 0.25)
    lane = lane_polygon(left, right)
    rng = np.random.default_rng(3)
    inside_count = 0
    for _ in range(200):
        box = BoundingBox((rng.uniform(10.0, 90.0), rng.uniform(-2.0, 2.0)), rng.uniform(-0.3, 0.3), 4.5, 1.8)
        inside = all(lane.contains(Point(c)) for c in bbox_corners(box))
        inside_count += inside
        assert (d_lane(box, left, right) > 0) == inside
    assert 0 < inside_count < 200
