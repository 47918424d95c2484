"""
Candidate evaluation and selection.

Options are tried in descending importance. Each is assembled into a
piecewise-quintic trajectory, checked against the kinematic constraints and
the residual-risk bound, and the cheapest valid candidate of the best
importance class wins.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from config import CONFIG, PlannerConfig, SamplerConfig
from context.behaviors import BehaviorKind, BehaviorOption
from context.sampling import generate_behavior_options
from context.situation import SituationContext, active_context, select_and_update_context
from errors import Infeasible, MergePlannerError
from planner.quintic import LongitudinalState
from planner.trajectory import LongitudinalTrajectory, assemble_candidate
from risk.model import ObjectPrediction, aggregate_risk, with_virtual_object

logger = logging.getLogger(__name__)


def check_constraints(traj: LongitudinalTrajectory, ctx: SituationContext,
                      cfg: Optional[PlannerConfig] = None) -> bool:
    """
    Scan the trajectory for a_min <= a <= a_max and 0 <= v <= v_max(s, t).

    An initial state already outside a bound (overspeed, hard braking) is
    tolerated up to its own value.
    """
    cfg = cfg or CONFIG.planner
    c = ctx.constraints
    t = np.arange(0.0, traj.duration + 0.5 * cfg.scan_step, cfg.scan_step)
    t[-1] = min(t[-1], traj.duration)
    s, v, a = traj.evaluate(t)

    a_lo = min(c.a_min, a[0]) - cfg.accel_tolerance
    a_hi = max(c.a_max, a[0]) + cfg.accel_tolerance
    if np.any(a < a_lo) or np.any(a > a_hi):
        return False
    if np.any(v < -cfg.accel_tolerance):
        return False
    v_max = np.asarray(c.v_max_profile(s, t), dtype=float)
    overspeed = max(0.0, v[0] - v_max[0])
    return bool(np.all(v <= v_max + cfg.speed_tolerance + overspeed))


def trajectory_cost(traj: LongitudinalTrajectory, p_risk: float,
                    cfg: Optional[PlannerConfig] = None) -> float:
    """Jerk integral plus duration penalty per segment, plus the residual risk."""
    cfg = cfg or CONFIG.planner
    total = sum(seg.jerk_cost() + cfg.w_tf * seg.duration ** 2 for seg in traj.segments)
    return float(total + p_risk)


@dataclass
class PlanResult:
    trajectory: LongitudinalTrajectory
    behavior: BehaviorOption
    cost: float
    p_risk: float
    context_index: int = 0
    evaluated: int = 0
    records: List[dict] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "context": self.context_index,
            "behavior": self.behavior.to_record(),
            "trajectory": self.trajectory.to_record(),
            "cost": self.cost,
            "p_risk": self.p_risk,
            "evaluated": self.evaluated,
            "candidates": self.records,
        }


def _earlier_arrival(a: LongitudinalTrajectory, b: LongitudinalTrajectory) -> bool:
    ta = a.t_pga if a.t_pga is not None else a.duration
    tb = b.t_pga if b.t_pga is not None else b.duration
    return ta < tb


def plan(ctx: SituationContext, x0: LongitudinalState, objects: Sequence[ObjectPrediction],
         p_rel: float = 1.0, cfg: Optional[PlannerConfig] = None) -> PlanResult:
    """
    Select the cheapest valid candidate among the context's behavior options.

    The search stops at the first drop in importance once a valid candidate
    exists. fail_safe options are exempt from the risk bound.

    Raises:
        Infeasible: not even the fail-safe option satisfies the constraints.
    """
    cfg = cfg or CONFIG.planner
    risk_cfg = ctx.assumptions.risk_params
    best = None  # (cost, trajectory, option, p_risk)
    records = []
    previous_importance = None

    for k, option in enumerate(ctx.behaviors):
        if (cfg.early_exit and best is not None and previous_importance is not None
                and option.importance < previous_importance):
            logger.debug("early exit before option %d (importance %d)", k, option.importance)
            break
        previous_importance = option.importance

        record = {"index": k, "kind": option.kind.value, "importance": option.importance}
        try:
            traj = assemble_candidate(x0, option)
            p_risk = aggregate_risk(traj, objects, risk_cfg, p_rel)
        except MergePlannerError as exc:
            record.update(valid=False, reason=type(exc).__name__)
            records.append(record)
            continue

        feasible = check_constraints(traj, ctx, cfg)
        safe = option.kind == BehaviorKind.FAIL_SAFE or p_risk <= ctx.constraints.p_risk_max
        cost = trajectory_cost(traj, p_risk, cfg)
        record.update(valid=feasible and safe, cost=cost, p_risk=p_risk,
                      reason=None if feasible and safe else ("constraints" if not feasible else "risk"),
                      behavior=option.to_record(), trajectory=traj.to_record())
        records.append(record)
        if not (feasible and safe):
            continue
        if (best is None or cost < best[0] - 1e-12
                or (abs(cost - best[0]) <= 1e-12 and _earlier_arrival(traj, best[1]))):
            best = (cost, traj, option, p_risk)

    if best is None:
        raise Infeasible(f"no valid candidate among {len(records)} options at s={x0.s:.2f}")
    cost, traj, option, p_risk = best
    logger.debug("selected %s (cost %.4f, p_risk %.4g) from %d candidates",
                 option.kind.value, cost, p_risk, len(records))
    return PlanResult(trajectory=traj, behavior=option, cost=cost, p_risk=p_risk,
                      context_index=ctx.index, evaluated=len(records), records=records)


def planning_state(ego: LongitudinalState, standstill_horizon: float = 0.0) -> LongitudinalState:
    """
    Clamp the measured state into the planner's domain: no reversing, and no
    braking once the measured deceleration would stop the ego within
    standstill_horizon.
    """
    v = max(ego.v, 0.0)
    a = ego.a
    if a < 0 and (v < 0.05 or v <= -a * standstill_horizon):
        a = 0.0
    return LongitudinalState(ego.s, v, a)


class MotionPlanner:
    """
    Per-run planning loop: context selection, option sampling and selection.

    The winning option of each cycle is carried into the next one, where it is
    time-shifted and re-evaluated next to the fresh samples.
    """

    def __init__(self, contexts: Sequence[SituationContext], planner_cfg: Optional[PlannerConfig] = None,
                 sampler: Optional[SamplerConfig] = None):
        self.contexts = list(contexts)
        self.cfg = planner_cfg or CONFIG.planner
        self.sampler = sampler or CONFIG.sampler
        self.previous: Optional[BehaviorOption] = None
        self.previous_context: Optional[int] = None
        self.last_context: Optional[SituationContext] = None

    def reset(self):
        self.previous = None
        self.previous_context = None
        self.last_context = None

    def step(self, ego: LongitudinalState, objects: Sequence[ObjectPrediction],
             p_rel: float = 1.0) -> PlanResult:
        x0 = planning_state(ego, self.cfg.standstill_horizon)
        carried = ()
        same = self.previous_context == active_context(self.contexts, x0, self.sampler).index
        if self.previous is not None and same:
            carried = (self.previous,)
        ctx = select_and_update_context(self.contexts, x0, objects, carried=carried, sampler=self.sampler)

        relevant = [o for o in objects if ctx.assumptions.is_relevant(o)]
        if ctx.is_merge:
            relevant = with_virtual_object(ctx.assumptions.risk_params, relevant)
        options = generate_behavior_options(ctx, x0, relevant, self.sampler)
        ctx = replace(ctx, behaviors=tuple(options))
        result = plan(ctx, x0, relevant, p_rel, self.cfg)

        keep = result.behavior.kind != BehaviorKind.FAIL_SAFE
        self.previous = result.behavior if keep else None
        self.previous_context = ctx.index
        self.last_context = ctx
        if result.behavior.kind == BehaviorKind.FAIL_SAFE:
            logger.warning("fail-safe selected at s=%.2f m, v=%.2f m/s", x0.s, x0.v)
        return result
