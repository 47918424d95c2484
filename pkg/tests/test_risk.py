import itertools

import numpy as np
import pytest
from scipy.stats import norm

from config import RiskConfig
from errors import MissingAnnotation
from planner.quintic import LongitudinalState, solve_min_jerk_segment
from planner.trajectory import LongitudinalTrajectory
from risk.model import (
    ObjectPrediction, ObjectSource, ReliabilityEstimate, aggregate_risk, combine_object_risks,
    make_virtual_eos_object, mix_reliability, object_interval_risk, reliability, with_virtual_object,
)


def _cruise(v=5.0, duration=10.0, t_pnr=None, t_pga=None):
    seg = solve_min_jerk_segment(LongitudinalState(0.0, v, 0.0), LongitudinalState(v * duration, v, 0.0), duration)
    return LongitudinalTrajectory(segments=(seg,), t_pnr=t_pnr, t_pga=t_pga)


def test_reliability_tail_mass():
    assert reliability(ReliabilityEstimate(1.0, 1.0, 0.9)) == pytest.approx(0.1)
    assert reliability(ReliabilityEstimate(3.0, 7.0, 0.0)) == pytest.approx(1.0)
    assert reliability(ReliabilityEstimate(8.0, 2.0, 0.5)) == pytest.approx(0.98046875, abs=1e-9)


def test_reliability_estimate_validation():
    with pytest.raises(ValueError):
        ReliabilityEstimate(0.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        ReliabilityEstimate(1.0, float("inf"), 0.5)
    with pytest.raises(ValueError):
        ReliabilityEstimate(1.0, 1.0, 1.0)


def test_reliability_schedule_lookup():
    schedule = [(0.0, 50.0, 1.0), (5.0, 2.0, 2.0)]
    assert ReliabilityEstimate.from_schedule(schedule, 0.9, 4.9).beta_a == 50.0
    assert ReliabilityEstimate.from_schedule(schedule, 0.9, 5.0).beta_a == 2.0


def test_object_on_ego_position():
    """Band of +-2 sigma around the object mean."""
    cfg = RiskConfig(s_minus_0=1.0, s_plus_0=1.0, headway=0.0)
    obj = ObjectPrediction("o", "main", 0.0, 5.0, sigma0=0.5, sigma_rate=0.0)
    p = object_interval_risk(_cruise(), obj, cfg, 3.0)
    assert p == pytest.approx(norm.cdf(2.0) - norm.cdf(-2.0), abs=1e-6)
    assert p == pytest.approx(0.9545, abs=1e-4)


def test_far_object_and_band_edge():
    cfg = RiskConfig(s_minus_0=5.0, s_plus_0=5.0, headway=0.0)
    far = ObjectPrediction("far", "main", 50.0, 5.0, sigma0=0.5, sigma_rate=0.0)
    assert object_interval_risk(_cruise(), far, cfg, 2.0) == pytest.approx(0.0, abs=1e-12)
    edge = ObjectPrediction("edge", "main", 5.0, 5.0, sigma0=0.1, sigma_rate=0.0)
    assert object_interval_risk(_cruise(), edge, cfg, 2.0) == pytest.approx(0.5, abs=1e-6)


def test_interval_risk_matches_sampling():
    cfg = RiskConfig()
    obj = ObjectPrediction("o", "main", 12.0, 3.0, sigma0=1.0, sigma_rate=0.5)
    traj = _cruise()
    t = 4.0
    p = object_interval_risk(traj, obj, cfg, t)

    rng = np.random.default_rng(3)
    s_ego, v_ego, _ = traj.evaluate(t)
    samples = rng.normal(float(obj.mu(t)), float(obj.sigma(t)), 200_000)
    s_minus = cfg.s_minus_0 + cfg.headway * max(0.0, obj.v - float(v_ego[0]))
    s_plus = cfg.s_plus_0 + cfg.headway * max(0.0, float(v_ego[0]) - obj.v)
    inside = (samples >= s_ego[0] - s_minus) & (samples <= s_ego[0] + s_plus)
    assert p == pytest.approx(inside.mean(), abs=0.005)


def test_combination_rule():
    assert combine_object_risks([]) == 0.0
    assert combine_object_risks([0.1, 0.2]) == pytest.approx(0.28)
    assert mix_reliability(0.28, 0.9) == pytest.approx(0.352)
    assert mix_reliability(0.28, 1.0) == 0.28


def test_combination_is_order_invariant():
    values = [0.05, 0.3, 0.12, 0.0, 0.7]
    expected = 1.0 - np.prod([1.0 - v for v in values])
    for perm in itertools.permutations(values):
        assert combine_object_risks(perm) == pytest.approx(expected)


def test_safe_set_trajectory_has_no_object_risk():
    traj = _cruise(t_pnr=10.0, t_pga=10.0)
    obj = ObjectPrediction("o", "main", 0.0, 5.0)
    assert aggregate_risk(traj, [], p_rel=1.0) == 0.0
    assert aggregate_risk(traj, [obj], p_rel=1.0) == 0.0
    assert aggregate_risk(traj, [obj], p_rel=0.9) == pytest.approx(0.1)


def test_passage_window_risk():
    cfg = RiskConfig()
    traj = _cruise(t_pnr=2.0, t_pga=6.0)
    near = ObjectPrediction("near", "main", 20.0, 5.0, sigma0=0.5, sigma_rate=0.0)
    p = aggregate_risk(traj, [near], cfg)
    # object sits 20 m ahead of the ego at equal speed: outside the 2 m band
    assert p == pytest.approx(0.0, abs=1e-9)
    close = ObjectPrediction("close", "main", 1.0, 5.0, sigma0=0.5, sigma_rate=0.0)
    assert aggregate_risk(traj, [close], cfg) > 0.9
    assert aggregate_risk(traj, [near, close], cfg) >= aggregate_risk(traj, [close], cfg)


def test_missing_annotation():
    with pytest.raises(MissingAnnotation):
        aggregate_risk(_cruise(), [])


def test_virtual_end_of_sight_object():
    cfg = RiskConfig(eos_position=20.0, conflict_position=105.0, eos_speed=8.33, eos_lane="main")
    virtual = make_virtual_eos_object(cfg, [])
    assert virtual is not None
    assert virtual.source == ObjectSource.VIRTUAL
    arrival = (cfg.conflict_position - float(virtual.mu(0.0))) / virtual.v
    assert arrival == pytest.approx(85.0 / 8.33)
    assert arrival == pytest.approx(10.2, abs=0.05)

    seen = ObjectPrediction("real", "main", 60.0, 8.33)
    assert make_virtual_eos_object(cfg, [seen]) is None
    assert len(with_virtual_object(cfg, [seen])) == 1
    elsewhere = ObjectPrediction("other", "opposite", 60.0, 8.33)
    assert len(with_virtual_object(cfg, [elsewhere])) == 2
    assert make_virtual_eos_object(RiskConfig(), []) is None


def test_standing_virtual_object_never_reaches_the_merge():
    cfg = RiskConfig(eos_position=20.0, conflict_position=105.0, eos_speed=0.0)
    virtual = make_virtual_eos_object(cfg, [])
    seg = solve_min_jerk_segment(LongitudinalState(90.0, 5.0, 0.0), LongitudinalState(140.0, 5.0, 0.0), 10.0)
    traj = LongitudinalTrajectory(segments=(seg,), t_pnr=0.0, t_pga=6.0)
    assert aggregate_risk(traj, [virtual], cfg) == pytest.approx(0.0, abs=1e-9)


def test_residual_risk_stays_a_probability():
    rng = np.random.default_rng(11)
    traj = _cruise(v=5.0, duration=10.0, t_pnr=1.0, t_pga=6.0)
    for _ in range(100):
        objects = [ObjectPrediction(f"o{k}", "main", rng.uniform(-20.0, 80.0), rng.uniform(0.0, 12.0),
                                    sigma0=rng.uniform(0.05, 3.0), sigma_rate=rng.uniform(0.0, 1.0))
                   for k in range(int(rng.integers(0, 6)))]
        p = aggregate_risk(traj, objects, RiskConfig(), p_rel=float(rng.uniform(0.0, 1.0)))
        assert 0.0 <= p <= 1.0
        for obj in objects:
            assert 0.0 <= object_interval_risk(traj, obj, RiskConfig(), float(rng.uniform(0.0, 10.0))) <= 1.0
