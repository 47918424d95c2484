"""
Situation contexts: route intervals with constant rules and assumptions.

Contexts are pre-computed once per route and refreshed every planning cycle
(lead-vehicle speed limit, carried-over behaviors, rule violators).
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from shapely.geometry import Polygon

from config import CONFIG, RiskConfig, SamplerConfig, VehicleParams
from context.behaviors import BehaviorOption, TargetRole
from context.sampling import generate_behavior_options, nominal_merge_time, pnr_position
from context.profiles import (
    SpeedLimit, SpeedProfile, base_profile, braking_envelope, curve_regions, dynamic_speed_limit,
    legal_limit, static_profile,
)
from errors import InconsistentRules, MergePlannerError, NoContext
from geometry.path import PathRef
from planner.quintic import LongitudinalState
from planner.trajectory import assemble_candidate
from risk.model import ObjectPrediction

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    v_sl: SpeedLimit
    a_min: float
    a_max: float
    a_perp_max: float
    v_max_profile: Callable  # v_max(s, t=None)
    s_stop: Optional[float]  # None where no yield rule applies
    T_pred: float
    p_risk_max: float

    def __post_init__(self):
        if not self.a_min < 0 < self.a_max:
            raise ValueError("need a_min < 0 < a_max")
        if self.a_perp_max <= 0 or self.T_pred <= 0:
            raise ValueError("a_perp_max and T_pred must be > 0")
        if not 0.0 <= self.p_risk_max <= 1.0:
            raise ValueError("p_risk_max must lie in [0, 1]")
        profile = base_profile(self.v_max_profile)
        if profile is not None:
            legal = legal_limit(self.v_sl, profile.edges[:-1])
            if np.any(profile.values > legal + 1e-9):
                raise ValueError("v_max profile exceeds the legal limit")


@dataclass(frozen=True, eq=False)
class RegularizingAssumptions:
    priority_lane_polygons: Tuple[Polygon, ...] = ()
    fov_polygons: Tuple[Polygon, ...] = ()
    rational_driver: Mapping[str, bool] = field(default_factory=dict)
    relevant_lanes: FrozenSet[str] = frozenset({"ego", "main"})
    ego_lane: str = "ego"
    target_lanes: FrozenSet[str] = frozenset({"main"})
    violators: FrozenSet[str] = frozenset()
    risk_params: RiskConfig = field(default_factory=RiskConfig)
    curve_constant_speed: bool = True

    def __post_init__(self):
        for poly in tuple(self.priority_lane_polygons) + tuple(self.fov_polygons):
            if not poly.is_valid:
                raise ValueError("assumption polygons must be simple")

    def is_relevant(self, obj: ObjectPrediction) -> bool:
        """Objects on irrelevant lanes count only once they break the rules."""
        if obj.lane in self.relevant_lanes:
            return True
        if obj.id in self.violators:
            return True
        return not self.rational_driver.get(obj.lane, True)


@dataclass(frozen=True)
class JunctionRule:
    """Yield junction; positions refer to the vehicle front on the ego route."""
    yield_line: float
    pga: float
    conflict: float
    target_lane: str = "main"


@dataclass(frozen=True, eq=False)
class MapRules:
    v_sl: SpeedLimit = 8.33
    a_min: float = -4.0
    a_max: float = 2.0
    a_perp_max: float = 1.45
    T_pred: float = 10.0
    p_risk_max: float = 0.05
    junctions: Tuple[JunctionRule, ...] = ()
    assumptions: RegularizingAssumptions = field(default_factory=RegularizingAssumptions)


@dataclass(frozen=True, eq=False)
class SituationContext:
    interval: Tuple[float, float]
    constraints: ConstraintSet
    assumptions: RegularizingAssumptions
    behaviors: Tuple[BehaviorOption, ...]
    path: PathRef
    s_pga: Optional[float] = None
    s_conflict: Optional[float] = None  # merge point of the nearest junction
    curve_exit: Optional[Tuple[float, float]] = None  # (s, curve speed)
    approach_profile: Optional[SpeedProfile] = None  # comfortable braking envelope of the static profile
    lead: Optional[ObjectPrediction] = None
    index: int = 0

    def __post_init__(self):
        if not self.interval[0] < self.interval[1]:
            raise ValueError("context interval must be non-empty")

    @property
    def is_merge(self) -> bool:
        return self.constraints.s_stop is not None

    @property
    def static_profile(self) -> SpeedProfile:
        return base_profile(self.constraints.v_max_profile)


def _validate_rules(route: PathRef, rules: MapRules, vehicle: VehicleParams):
    last_pga = -np.inf
    for i, j in enumerate(sorted(rules.junctions, key=lambda r: r.pga)):
        for name in ("yield_line", "pga", "conflict"):
            value = getattr(j, name)
            if not 0.0 <= value <= route.total_length:
                raise InconsistentRules(f"junction {i}: {name}={value} lies outside the route")
        if not j.yield_line < j.pga:
            raise InconsistentRules(f"junction {i}: yield line must precede the PGA")
        if j.yield_line - vehicle.length / 2.0 <= last_pga:
            raise InconsistentRules(f"junction {i}: overlaps the previous junction")
        last_pga = j.pga


def _merge_start(profile: SpeedProfile, route: PathRef, s_pga: float, T_pred: float) -> float:
    """First position from which s_pga is reached within T_pred at the profile speed."""
    elapsed = 0.0
    s = route.s[route.s <= s_pga][::-1]
    prev = s_pga
    for sk in s:
        elapsed += (prev - sk) / max(float(profile(sk)), 1e-6)
        if elapsed > T_pred:
            return float(prev)
        prev = sk
    return 0.0


def _curve_exit(route: PathRef, profile: SpeedProfile, s_pga: float,
                sampler: SamplerConfig) -> Optional[Tuple[float, float]]:
    regions = [r for r in curve_regions(route) if r[1] <= s_pga]
    if not regions:
        return None
    lo, hi, kmax = regions[-1]
    mask = (route.s >= lo) & (route.s <= hi) & (np.abs(route.kappa) >= sampler.curve_exit_ratio * kmax)
    s_exit = float(route.s[mask][-1])
    return s_exit, float(profile(s_exit))


def _constraints(rules: MapRules, profile: SpeedProfile, s_stop: Optional[float]) -> ConstraintSet:
    return ConstraintSet(
        v_sl=rules.v_sl,
        a_min=rules.a_min,
        a_max=rules.a_max,
        a_perp_max=rules.a_perp_max,
        v_max_profile=profile,
        s_stop=s_stop,
        T_pred=rules.T_pred,
        p_risk_max=rules.p_risk_max,
    )


def _first_reachable(ctx: SituationContext, lo: float, approach: SpeedProfile,
                     sampler: SamplerConfig) -> float:
    """First route sample from lo on where a nominal merge reaches s_pga in time."""
    horizon = ctx.constraints.T_pred - sampler.gap_margin
    route = ctx.path
    for s in route.s[(route.s >= lo) & (route.s < ctx.constraints.s_stop - 1.0)]:
        entry = LongitudinalState(float(s), float(approach(s)), 0.0)
        t = nominal_merge_time(ctx, entry, sampler)
        if t is not None and t <= horizon:
            return float(s)
    return ctx.constraints.s_stop - 1.0


def precompute_contexts(route: PathRef, map_rules: MapRules, vehicle: Optional[VehicleParams] = None,
                        sampler: Optional[SamplerConfig] = None) -> List[SituationContext]:
    """
    Split the route into intervals with constant constraints and assumptions.

    A merge context ends at its PGA and starts where the PGA becomes reachable
    within T_pred at the speed-limit profile, moved on until a nominal merge
    from the comfortable approach speed arrives there in time. The rest of the
    route is covered by lane-following contexts, which hand the ego over at the
    approach speed. Each context carries the behaviors generated for a nominal
    entry.
    """
    vehicle = vehicle or CONFIG.vehicle
    sampler = sampler or CONFIG.sampler
    _validate_rules(route, map_rules, vehicle)
    profile = static_profile(route, map_rules.v_sl, map_rules.a_perp_max,
                             map_rules.assumptions.curve_constant_speed)
    approach = braking_envelope(profile, route, sampler.approach_decel)
    junctions = sorted(map_rules.junctions, key=lambda r: r.pga)

    def context(lo, hi, j, k=0):
        nearest = j or next((r for r in junctions if r.pga > lo), junctions[-1] if junctions else None)
        return SituationContext(
            interval=(lo, hi),
            constraints=_constraints(map_rules, profile, (j.yield_line - vehicle.length / 2.0) if j else None),
            assumptions=map_rules.assumptions,
            behaviors=(),
            path=route,
            s_pga=j.pga if j else None,
            s_conflict=nearest.conflict if nearest else None,
            curve_exit=_curve_exit(route, profile, j.pga, sampler) if j else None,
            approach_profile=approach,
            index=k,
        )

    spans = []  # (lo, hi, junction or None)
    cursor = 0.0
    for j in junctions:
        s_stop = j.yield_line - vehicle.length / 2.0
        lo = _merge_start(profile, route, j.pga, map_rules.T_pred)
        lo = max(cursor, min(lo, s_stop - 1.0))
        lo = max(lo, _first_reachable(context(lo, j.pga, j), lo, approach, sampler))
        if lo > cursor:
            spans.append((cursor, lo, None))
        spans.append((lo, j.pga, j))
        cursor = j.pga
    if cursor < route.total_length:
        spans.append((cursor, route.total_length, None))

    contexts = []
    for k, (lo, hi, j) in enumerate(spans):
        ctx = context(lo, hi, j, k)
        entry = LongitudinalState(lo, min(float(profile(lo)), float(approach(lo))), 0.0)
        options = generate_behavior_options(ctx, entry, [], sampler)
        ctx = replace(ctx, behaviors=tuple(o for o in options if _boundary_consistent(o, ctx)))
        contexts.append(ctx)
        logger.debug("context %d [%.1f, %.1f) merge=%s with %d behaviors",
                     k, lo, hi, ctx.is_merge, len(ctx.behaviors))
    return contexts


def _boundary_consistent(option: BehaviorOption, ctx: SituationContext) -> bool:
    """A target placed on a context boundary must respect v_max on both sides."""
    profile = ctx.static_profile
    for target in option.targets:
        for edge in ctx.interval:
            if abs(target.s_f - edge) < 1e-6:
                limit = min(float(profile(edge - 1e-6)), float(profile(edge)))
                if target.v_f > limit + 1e-9:
                    return False
    return True


def find_context(contexts: Sequence[SituationContext], s: float) -> SituationContext:
    for ctx in contexts:
        lo, hi = ctx.interval
        if lo <= s < hi:
            return ctx
    if contexts and abs(s - contexts[-1].interval[1]) < 1e-9:
        return contexts[-1]
    raise NoContext(f"s={s:.3f} is outside every context")


def rule_violators(objects: Sequence[ObjectPrediction], v_sl: SpeedLimit, s_ref: float,
                   sampler: SamplerConfig) -> FrozenSet[str]:
    limit = float(legal_limit(v_sl, s_ref))
    return frozenset(o.id for o in objects
                     if o.v > sampler.violation_speed_factor * limit or o.v < sampler.wrong_way_speed)


def find_lead(ctx: SituationContext, ego: LongitudinalState,
              objects: Sequence[ObjectPrediction]) -> Optional[ObjectPrediction]:
    """Nearest object ahead on the ego route (own lane, or a target lane past the merge point)."""
    a = ctx.assumptions
    best = None
    for obj in objects:
        s_now = float(obj.mu(0.0))
        if s_now <= ego.s:
            continue
        on_route = obj.lane == a.ego_lane or (
            obj.lane in a.target_lanes and ctx.s_conflict is not None and s_now >= ctx.s_conflict)
        if on_route and (best is None or s_now < float(best.mu(0.0))):
            best = obj
    return best


def _update_option(option: BehaviorOption, ego: LongitudinalState, ctx: SituationContext,
                   sampler: SamplerConfig) -> Optional[BehaviorOption]:
    shift = 0.0
    if option.origin is not None:
        try:
            shift = assemble_candidate(option.origin, option).time_at_position(ego.s)
        except MergePlannerError as exc:
            logger.debug("dropping carried %s option: %s", option.kind.value, exc)
            return None
    c = ctx.constraints
    targets = []
    for target in option.targets:
        # targets due within min_leg_time are dropped, not squeezed
        if target.t_f - shift < sampler.min_leg_time or target.s_f < ego.s - 0.05:
            continue
        target = target.shifted(shift)
        if target.role == TargetRole.PNR and c.s_stop is not None:
            target = replace(target, s_f=pnr_position(ctx, ego, target.v_f))
        if target.role == TargetRole.PGA:
            limit = float(np.asarray(c.v_max_profile(target.s_f, target.t_f)).reshape(-1)[0])
            target = replace(target, v_f=min(target.v_f, limit))
        targets.append(target)
    if not targets or targets[-1].t_f > c.T_pred + 1e-9:
        return None
    if any(b.s_f < a.s_f for a, b in zip(targets, targets[1:])):
        return None
    return replace(option, targets=tuple(targets), origin=ego)


def active_context(contexts: Sequence[SituationContext], ego: LongitudinalState,
                   sampler: Optional[SamplerConfig] = None) -> SituationContext:
    """
    Context the ego plans in: the one containing it, or the next one once the
    interval end is less than one minimum leg ahead.

    Raises:
        NoContext: the ego position is outside all intervals.
    """
    sampler = sampler or CONFIG.sampler
    ctx = find_context(contexts, ego.s)
    k = next(i for i, other in enumerate(contexts) if other is ctx)
    if k + 1 < len(contexts) and ego.s + max(ego.v, 0.0) * sampler.min_leg_time >= ctx.interval[1]:
        return contexts[k + 1]
    return ctx


def select_and_update_context(contexts: Sequence[SituationContext], ego: LongitudinalState,
                              objects: Sequence[ObjectPrediction], *,
                              carried: Sequence[BehaviorOption] = (),
                              sampler: Optional[SamplerConfig] = None) -> SituationContext:
    """
    Pick the active context (see active_context) and refresh it for this cycle.

    Applies the lead-vehicle speed limit, flags rule violators, time-shifts the
    pre-computed and carried-over behaviors so the ego lies on them, drops passed
    targets and invalid options, and recomputes PNR / PGA targets.

    Raises:
        NoContext: the ego position is outside all intervals.
    """
    sampler = sampler or CONFIG.sampler
    ctx = active_context(contexts, ego, sampler)
    c = ctx.constraints

    violators = rule_violators(objects, c.v_sl, ego.s, sampler)
    assumptions = replace(ctx.assumptions, violators=violators)
    relevant = [o for o in objects if assumptions.is_relevant(o)]

    lead = find_lead(ctx, ego, relevant)
    profile = ctx.static_profile
    if lead is not None:
        risk = assumptions.risk_params
        s_plus = lambda t, v=lead.v: risk.s_plus_0 + risk.headway * v + 0.0 * np.asarray(t)
        v_max = dynamic_speed_limit(profile, lead, s_plus)
        logger.debug("lead %s at %.1f m, %.2f m/s", lead.id, float(lead.mu(0.0)), lead.v)
    else:
        v_max = profile
    ctx = replace(ctx, constraints=replace(c, v_max_profile=v_max), assumptions=assumptions, lead=lead)

    updated, seen = [], set()
    for option in tuple(ctx.behaviors) + tuple(carried):
        fresh = _update_option(option, ego, ctx, sampler)
        if fresh is None or fresh.signature() in seen:
            continue
        if _violates_limit(fresh, ctx):
            continue
        seen.add(fresh.signature())
        updated.append(fresh)
    return replace(ctx, behaviors=tuple(updated))


def _violates_limit(option: BehaviorOption, ctx: SituationContext) -> bool:
    v_max = ctx.constraints.v_max_profile
    for t in option.targets:
        limit = float(np.asarray(v_max(t.s_f, t.t_f)).reshape(-1)[0])
        if t.v_f > limit + CONFIG.planner.speed_tolerance:
            return True
    return False
