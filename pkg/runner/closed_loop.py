"""
One closed-loop run: world -> perception -> context -> planner -> tracking.

The planner runs at ``cycles_hz``; between two planning cycles the tracker's
controls are applied for every simulation step.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from config import CONFIG, RunConfig
from context.situation import find_context, precompute_contexts
from env.junction_env import JunctionEnv
from env.perception import merge_object_lists, sense
from env.scenario import Scenario, build_map_rules
from env.world import WorldState
from errors import NoContext, SolverStall
from evaluation.maneuvers import RunLog, summarize_run
from evaluation.metrics import d_lane
from geometry.path import offset_path
from geometry.shapes import BoundingBox
from planner.planner import MotionPlanner, PlanResult
from planner.quintic import LongitudinalState
from risk.model import ReliabilityEstimate, reliability
from tracking.tracker import LateralTracker, TrackResult

logger = logging.getLogger(__name__)

# distance past the PGA after which a merge run is complete
PGA_RUNOUT = 5.0


@dataclass
class Cycle:
    t: float
    ego: LongitudinalState
    result: PlanResult
    p_rel: float
    plan_ms: float
    track_ms: float
    tracker_fallback: bool = False


@dataclass
class RunOutcome:
    log: RunLog
    cycles: List[Cycle]
    metrics: dict
    seed: int
    v0: float
    frames: List[np.ndarray] = field(default_factory=list)


class _Frames:
    """Column buffers behind RunLog."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.rows: List[Tuple] = []
        self.actors = {a.id: [] for a in scenario.actors}
        half = CONFIG.evaluation.lane_width / 2.0
        self.left = offset_path(scenario.ego_path, half)
        self.right = offset_path(scenario.ego_path, -half)

    def add(self, world: WorldState, behavior: str, p_risk: float):
        ego = world.ego
        box = BoundingBox((ego.x, ego.y), ego.phi, CONFIG.vehicle.length, CONFIG.vehicle.width)
        self.rows.append((world.t, ego.x, ego.y, ego.phi, ego.v, ego.a, ego.delta, world.ego_s,
                          d_lane(box, self.left, self.right), behavior, p_risk))
        for actor in world.actors:
            lane = self.scenario.lane(actor.spec.lane)
            self.actors[actor.id].append(float(lane.to_ego(actor.s)) if actor.active else math.nan)

    def to_log(self) -> RunLog:
        cols = list(zip(*self.rows))
        arrays = [np.asarray(c, dtype=float) for c in cols[:9]]
        return RunLog(*arrays, behavior=list(cols[9]), p_risk=np.asarray(cols[10], dtype=float),
                      actors={k: np.asarray(v, dtype=float) for k, v in self.actors.items()})


def _fallback_controls(previous: Optional[TrackResult], offset: int, plan_jerk: float) -> TrackResult:
    """Continue the last solution where it left off; plain feedforward if there is none."""
    n = CONFIG.tracker.points
    if previous is not None and offset < n:
        jerk = np.concatenate((previous.jerk[offset:], np.full(offset, previous.jerk[-1])))
        rate = np.concatenate((previous.steering_rate[offset:], np.zeros(offset)))
    else:
        jerk, rate = np.full(n, plan_jerk), np.zeros(n)
    return TrackResult(states=[], jerk=jerk, steering_rate=rate, cost=math.nan, iterations=0, violation=math.nan)


def run_closed_loop(scenario: Scenario, run_cfg: Optional[RunConfig] = None, seed: Optional[int] = None,
                    render: bool = False) -> RunOutcome:
    """
    Simulate one run until the ego passes the PGA, reaches the end of its route,
    or the duration elapses.

    Raises:
        Infeasible: the planner found no valid candidate in some cycle.
    """
    run_cfg = run_cfg or RunConfig()
    seed = scenario.seed if seed is None else seed
    duration = run_cfg.duration or scenario.duration
    steps_per_cycle = max(1, int(round(1.0 / (run_cfg.cycles_hz * run_cfg.sim_dt))))
    cycle_dt = steps_per_cycle * run_cfg.sim_dt

    env = JunctionEnv(scenario, dt=run_cfg.sim_dt, render_mode="rgb_array" if render else None)
    env.reset(seed=seed)
    rng = np.random.default_rng(seed)
    contexts = precompute_contexts(scenario.ego_path, build_map_rules(scenario))
    planner = MotionPlanner(contexts)
    tracker = LateralTracker(scenario.ego_path)
    j = scenario.junction
    s_end = min(scenario.ego_path.total_length - CONFIG.vehicle.length / 2.0,
                j.pga + PGA_RUNOUT if j is not None else math.inf)

    frames = _Frames(scenario)
    frames.add(env.world, "", math.nan)
    images = [env.render()] if render else []
    cycles: List[Cycle] = []
    previous_track: Optional[TrackResult] = None
    v0 = env.world.ego.v
    logger.info("run %s seed=%d v0=%.3f m/s", scenario.name, seed, v0)

    done = False
    while not done and env.world.t < duration - 1e-9 and env.world.ego_s < s_end:
        world = env.world
        ego = LongitudinalState(world.ego_s, world.ego.v, world.ego.a)
        try:
            ctx = find_context(contexts, ego.s)
        except NoContext:
            logger.info("ego left the last context at s=%.2f m", ego.s)
            break
        l_ego, l_ext = sense(world, scenario, rng)
        objects = merge_object_lists(l_ego, l_ext, ctx, scenario.perception, s_ref=ego.s)
        p_rel = reliability(ReliabilityEstimate.from_schedule(
            scenario.reliability_schedule, scenario.reliability_alpha, world.t))

        start = time.perf_counter()
        result = planner.step(ego, objects, p_rel)
        plan_ms = 1e3 * (time.perf_counter() - start)

        start = time.perf_counter()
        fallback = False
        try:
            track = tracker.track(result.trajectory, world.ego, elapsed=cycle_dt if cycles else 0.0)
        except SolverStall as exc:
            logger.warning("tracking stalled at t=%.2f s (%s), reusing the previous controls", world.t, exc)
            track = _fallback_controls(previous_track, steps_per_cycle,
                                       float(result.trajectory.jerk(0.0)[0]))
            tracker.reset()
            fallback = True
        track_ms = 1e3 * (time.perf_counter() - start)
        previous_track = track
        cycles.append(Cycle(world.t, ego, result, p_rel, plan_ms, track_ms, fallback))

        for k in range(steps_per_cycle):
            idx = min(int(round(k * run_cfg.sim_dt / tracker.h)), len(track.jerk) - 1)
            _, _, terminated, truncated, _ = env.step((track.jerk[idx], track.steering_rate[idx]))
            frames.add(env.world, result.behavior.kind.value, result.p_risk)
            if render:
                images.append(env.render())
            if terminated or truncated:
                done = True
                break

    log = frames.to_log()
    planned_jerk = max((c.result.trajectory.max_abs_jerk() for c in cycles), default=0.0)
    metrics = summarize_run(log, scenario, planned_jerk=planned_jerk)
    metrics.update(seed=seed, v0=v0, fail_safe_cycles=sum(c.result.behavior.kind.value == "fail_safe"
                                                           for c in cycles),
                   tracker_fallbacks=sum(c.tracker_fallback for c in cycles))
    env.close()
    return RunOutcome(log=log, cycles=cycles, metrics=metrics, seed=seed, v0=v0, frames=images)
