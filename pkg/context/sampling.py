"""Behavior-option sampling for one planning cycle."""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import CONFIG, RiskConfig, SamplerConfig
from context.behaviors import BehaviorKind, BehaviorOption, TargetRole, TargetState, make_option
from context.profiles import SpeedProfile, base_profile, compute_pnr
from errors import Infeasible
from planner.quintic import LongitudinalState
from risk.model import ObjectPrediction, safety_distances

logger = logging.getLogger(__name__)

Window = Tuple[float, float]


def _limit(v_max, s: float, t: Optional[float] = None) -> float:
    return float(np.asarray(v_max(s, t)).reshape(-1)[0])


def leg_time(s_a: float, v_a: float, s_b: float, v_b: float, creep_speed: float) -> Optional[float]:
    """Nominal duration of a leg driven with the mean of its end speeds."""
    ds = s_b - s_a
    if ds <= 0:
        return None
    return 2.0 * ds / max(v_a + v_b, creep_speed)


def stop_time(ds: float, v0: float, a0: float, creep_speed: float) -> float:
    """Duration T with ds = T (v0/2 + a0 T/12), the smooth stop covering ds."""
    fallback = 2.0 * max(ds, 0.0) / max(v0, creep_speed)
    if abs(a0) < 1e-6:
        return fallback
    disc = v0 * v0 / 4.0 + a0 * ds / 3.0
    if disc < 0:
        return fallback
    T = (-v0 / 2.0 + math.sqrt(disc)) / (a0 / 6.0)
    return T if T > 0 else fallback


def free_windows(objects: Sequence[ObjectPrediction], s_probe: float, v_probe: float,
                 risk: RiskConfig, horizon: float, sampler: Optional[SamplerConfig] = None) -> List[Window]:
    """
    Time intervals in [0, horizon] during which no object's widened safety band covers s_probe.

    An object blocks time t if s_probe lies within
    [mu(t) - s_plus - k sigma(t), mu(t) + s_minus + k sigma(t)].
    """
    sampler = sampler or CONFIG.sampler
    t = np.arange(0.0, horizon + 0.5 * sampler.gap_scan_step, sampler.gap_scan_step)
    blocked = np.zeros_like(t, dtype=bool)
    for obj in objects:
        mu, sigma = obj.mu(t), obj.sigma(t)
        s_minus, s_plus = safety_distances(v_probe, obj.v, risk)
        widen = sampler.gap_sigma * sigma
        blocked |= (mu >= s_probe - s_plus - widen) & (mu <= s_probe + s_minus + widen)

    windows, start = [], None
    for k, is_blocked in enumerate(blocked):
        if not is_blocked and start is None:
            start = t[k]
        if is_blocked and start is not None:
            windows.append((float(start), float(t[k - 1])))
            start = None
    if start is not None:
        windows.append((float(start), float(t[-1])))
    return windows


def time_samples(windows: Sequence[Window], sampler: SamplerConfig, t_min: float = 0.0,
                 nominal: Optional[float] = None) -> List[float]:
    """Arrival times spread inside each window, edges kept gap_margin away."""
    samples = []
    for a, b in windows:
        lo, hi = a + sampler.gap_margin, b - sampler.gap_margin
        if hi < lo:
            continue
        if sampler.times_per_gap == 1:
            samples.append(0.5 * (lo + hi))
        else:
            samples.extend(np.linspace(lo, hi, sampler.times_per_gap).tolist())
    if sampler.include_nominal_time and nominal is not None:
        if any(a <= nominal <= b for a, b in windows):
            samples.append(nominal)
    return sorted({round(float(t), 6) for t in samples if t >= t_min})


def slow_cell_entry(profile, ego: LongitudinalState, s: float) -> Optional[Tuple[float, float]]:
    """
    Start and speed of the profile cell holding s while the ego, still upstream
    of that cell, drives faster than the cell allows; None otherwise.
    """
    if not isinstance(profile, SpeedProfile):
        return None
    idx = int(np.clip(np.searchsorted(profile.edges, s, side="right") - 1, 0, len(profile.values) - 1))
    edge, v_cell = float(profile.edges[idx]), float(profile.values[idx])
    if ego.s < edge and max(ego.v, 0.0) > v_cell + 1e-6:
        return edge, v_cell
    return None


def pnr_position(ctx, ego: LongitudinalState, v: float) -> float:
    """
    Position of the PNR target for speed v.

    When the yield line lies in a slower cell the ego has not entered yet, the
    target moves back to the cell entry; braking at a_min from there still
    stops before s_stop.
    """
    c = ctx.constraints
    s = compute_pnr(v, c.a_min, c.s_stop)
    entry = slow_cell_entry(base_profile(c.v_max_profile), ego, c.s_stop)
    if entry is not None and v <= entry[1] + 1e-9:
        s = min(s, entry[0])
    return s


def fail_safe_option(ctx, ego: LongitudinalState, origin: Optional[LongitudinalState] = None,
                     sampler: Optional[SamplerConfig] = None) -> BehaviorOption:
    """
    Constant braking at a_min to standstill.

    The plan steps onto a_min at once and so stops within v0^2 / (2 |a_min|),
    the distance the PNR is built on. An ego that is practically standing
    holds its position instead.

    Raises:
        Infeasible: the ego state is not finite.
    """
    sampler = sampler or CONFIG.sampler
    c = ctx.constraints
    if not (math.isfinite(ego.s) and math.isfinite(ego.v)):
        raise Infeasible(f"no fail-safe stop from s={ego.s}, v={ego.v}")
    v0 = max(ego.v, 0.0)
    T = v0 / abs(c.a_min)
    if T < 1e-3:
        target = TargetState(ego.s + 0.5 * v0 * sampler.hold_time, 0.0, 0.0, sampler.hold_time, TargetRole.STOP)
        return make_option(ctx.path, BehaviorKind.FAIL_SAFE, [target], origin or ego, a_start=0.0)
    target = TargetState(ego.s + 0.5 * v0 * T, 0.0, c.a_min, T, TargetRole.STOP)
    return make_option(ctx.path, BehaviorKind.FAIL_SAFE, [target], origin or ego, a_start=c.a_min)


def _merge_plans(ctx, ego, sampler) -> List[tuple]:
    """(s1, v1, curve, v3, d1, d2, d3) for every PNR speed that still lies ahead."""
    c = ctx.constraints
    profile = base_profile(c.v_max_profile) or c.v_max_profile
    s_pga = ctx.s_pga
    v_yield = _limit(profile, c.s_stop)
    if sampler.v_pnr_max is not None:
        v_yield = min(v_yield, sampler.v_pnr_max)
    v_grid = np.arange(sampler.v_pnr_min, v_yield + 1e-9, sampler.v_pnr_step).tolist()
    if not v_grid or v_grid[-1] < v_yield - 1e-6:
        v_grid.append(v_yield)

    plans = []
    for v1 in v_grid:
        s1 = pnr_position(ctx, ego, v1)
        if s1 <= ego.s + 0.1:
            continue
        curve = ctx.curve_exit if ctx.curve_exit and ctx.curve_exit[0] > s1 + 0.5 else None
        s_last, v_last = (curve if curve else (s1, v1))
        v3 = min(_limit(profile, s_pga),
                 math.sqrt(v_last ** 2 + 2.0 * sampler.pga_accel * max(s_pga - s_last, 0.0)))
        d2 = leg_time(s1, v1, curve[0], curve[1], sampler.creep_speed) if curve else 0.0
        d3 = leg_time(s_last, v_last, s_pga, v3, sampler.creep_speed)
        d1 = leg_time(ego.s, ego.v, s1, v1, sampler.creep_speed)
        if d3 is None or d1 is None or d2 is None:
            continue
        plans.append((s1, v1, curve, v3, d1, d2, d3))
    return plans


def nominal_merge_time(ctx, ego: LongitudinalState, sampler: Optional[SamplerConfig] = None) -> Optional[float]:
    """Earliest nominal PGA arrival over the sampled PNR speeds; None if no PNR lies ahead."""
    sampler = sampler or CONFIG.sampler
    times = [d1 + d2 + d3 for *_, d1, d2, d3 in _merge_plans(ctx, ego, sampler)]
    return min(times) if times else None


def _merge_options(ctx, ego, objects, sampler) -> List[BehaviorOption]:
    c = ctx.constraints
    s_pga = ctx.s_pga
    risk = ctx.assumptions.risk_params
    options, windows_cache = [], {}

    def windows_for(v3):
        key = round(v3, 3)
        if key not in windows_cache:
            windows_cache[key] = free_windows(objects, s_pga, v3, risk, c.T_pred, sampler)
        return windows_cache[key]

    for s1, v1, curve, v3, d1, d2, d3 in _merge_plans(ctx, ego, sampler):
        t_min = d2 + d3 + sampler.min_leg_time
        for t3 in time_samples(windows_for(v3), sampler, t_min, d1 + d2 + d3):
            if t3 > c.T_pred + 1e-9:
                continue
            t1 = t3 - d3 - d2
            targets = [TargetState(s1, v1, 0.0, t1, TargetRole.PNR)]
            if curve:
                targets.append(TargetState(curve[0], curve[1], 0.0, t1 + d2, TargetRole.CURVE_EXIT))
            targets.append(TargetState(s_pga, v3, 0.0, t3, TargetRole.PGA))
            options.append(make_option(ctx.path, BehaviorKind.MERGE_DYNAMIC, targets, ego))
    return options


def _committed_options(ctx, ego, sampler) -> List[BehaviorOption]:
    """Merges that no longer pass a PNR: the ego is already past or at it."""
    c = ctx.constraints
    profile = base_profile(c.v_max_profile) or c.v_max_profile
    s_pga = ctx.s_pga
    v0 = max(ego.v, 0.0)
    sequences = []
    curve = ctx.curve_exit if ctx.curve_exit and ctx.curve_exit[0] > ego.s + 0.5 else None
    if curve:
        v3 = min(_limit(profile, s_pga),
                 math.sqrt(curve[1] ** 2 + 2.0 * sampler.pga_accel * max(s_pga - curve[0], 0.0)))
        d2 = leg_time(ego.s, v0, curve[0], curve[1], sampler.creep_speed)
        d3 = leg_time(curve[0], curve[1], s_pga, v3, sampler.creep_speed)
        if d2 is not None and d3 is not None:
            sequences.append([(curve[0], curve[1], d2, TargetRole.CURVE_EXIT), (s_pga, v3, d3, TargetRole.PGA)])
    v3 = min(_limit(profile, s_pga), math.sqrt(v0 ** 2 + 2.0 * sampler.pga_accel * max(s_pga - ego.s, 0.0)))
    d = leg_time(ego.s, v0, s_pga, v3, sampler.creep_speed)
    if d is not None:
        sequences.append([(s_pga, v3, d, TargetRole.PGA)])

    options = []
    for legs in sequences:
        for factor in sampler.committed_time_factors:
            if any(factor * dt < sampler.min_leg_time for _, _, dt, _ in legs):
                continue
            t, targets = 0.0, []
            for s_f, v_f, dt, role in legs:
                t += factor * dt
                targets.append(TargetState(s_f, v_f, 0.0, t, role))
            if t <= c.T_pred + 1e-9:
                options.append(make_option(ctx.path, BehaviorKind.MERGE_DYNAMIC, targets, ego))
    return options


def _gentle_stop_options(ctx, ego, sampler) -> List[BehaviorOption]:
    c = ctx.constraints
    s_stop = c.s_stop
    if ego.s > s_stop + 1e-6 or ego.s > compute_pnr(max(ego.v, 0.0), c.a_min, s_stop) + 1e-6:
        return []
    ds = s_stop - ego.s
    v0 = max(ego.v, 0.0)
    if v0 < 0.3 and ds < 0.5:
        target = TargetState(s_stop, 0.0, 0.0, sampler.hold_time, TargetRole.STOP)
        return [make_option(ctx.path, BehaviorKind.GENTLE_STOP, [target], ego)]

    entry = slow_cell_entry(base_profile(c.v_max_profile), ego, s_stop)
    options = []
    if entry is None:
        T_nom = max(stop_time(ds, v0, ego.a, sampler.creep_speed), sampler.hold_time)
        for factor in sampler.stop_time_factors:
            T = min(factor * T_nom, c.T_pred)
            options.append(make_option(ctx.path, BehaviorKind.GENTLE_STOP,
                                       [TargetState(s_stop, 0.0, 0.0, T, TargetRole.STOP)], ego))
        return options

    # slow down to the cell speed at its entry, then stop inside the cell
    edge, v_cell = entry
    d_a = leg_time(ego.s, v0, edge, v_cell, sampler.creep_speed)
    d_b = max(stop_time(s_stop - edge, v_cell, 0.0, sampler.creep_speed), sampler.hold_time)
    for factor in sampler.stop_time_factors:
        t_a, t_b = factor * d_a, factor * (d_a + d_b)
        if t_a < sampler.min_leg_time or t_b > c.T_pred + 1e-9:
            continue
        targets = [TargetState(edge, v_cell, 0.0, t_a, TargetRole.CURVE_ENTRY),
                   TargetState(s_stop, 0.0, 0.0, t_b, TargetRole.STOP)]
        options.append(make_option(ctx.path, BehaviorKind.GENTLE_STOP, targets, ego))
    return options


def _follow_targets(ctx, ego, sampler) -> List[TargetState]:
    lead, risk = ctx.lead, ctx.assumptions.risk_params
    s_plus = risk.s_plus_0 + risk.headway * lead.v
    targets = []
    for t1 in sampler.follow_times:
        if t1 > ctx.constraints.T_pred - sampler.min_leg_time:
            continue
        s_f = float(lead.mu(t1)) - s_plus
        if s_f > ego.s + 0.1:
            targets.append(TargetState(s_f, max(lead.v, 0.0), 0.0, t1, TargetRole.FOLLOW))
    return targets


def _follow_options(ctx, ego, sampler) -> List[BehaviorOption]:
    c = ctx.constraints
    profile = base_profile(c.v_max_profile) or c.v_max_profile
    options = []
    for follow in _follow_targets(ctx, ego, sampler):
        if follow.s_f < ctx.s_pga:
            v3 = min(_limit(profile, ctx.s_pga), follow.v_f) if follow.v_f > 0 else sampler.creep_speed
            d = leg_time(follow.s_f, follow.v_f, ctx.s_pga, v3, sampler.creep_speed)
            if d is not None and sampler.min_leg_time <= d and follow.t_f + d <= c.T_pred:
                pga = TargetState(ctx.s_pga, v3, 0.0, follow.t_f + d, TargetRole.PGA)
                options.append(make_option(ctx.path, BehaviorKind.FOLLOW_THEN_MERGE, [follow, pga], ego))
        if follow.s_f < c.s_stop and follow.s_f <= compute_pnr(follow.v_f, c.a_min, c.s_stop):
            d = max(stop_time(c.s_stop - follow.s_f, follow.v_f, 0.0, sampler.creep_speed), sampler.min_leg_time)
            if follow.t_f + d <= c.T_pred:
                stop = TargetState(c.s_stop, 0.0, 0.0, follow.t_f + d, TargetRole.STOP)
                options.append(make_option(ctx.path, BehaviorKind.FOLLOW_THEN_STOP, [follow, stop], ego))
    return options


def _lane_follow_options(ctx, ego, sampler) -> List[BehaviorOption]:
    c = ctx.constraints
    profile = base_profile(c.v_max_profile) or c.v_max_profile
    if ctx.lead is not None:
        return [make_option(ctx.path, BehaviorKind.LANE_FOLLOW, [t], ego)
                for t in _follow_targets(ctx, ego, sampler)]

    s_end = ctx.interval[1]
    v_boundary = min(_limit(profile, s_end - 1e-6), _limit(profile, s_end))
    if ctx.approach_profile is not None:
        v_boundary = min(v_boundary, _limit(ctx.approach_profile, s_end))
    options = []
    for v_f in sorted({round(v_boundary, 6), round(min(max(ego.v, 0.0), v_boundary), 6)}, reverse=True):
        T = leg_time(ego.s, max(ego.v, 0.0), s_end, v_f, sampler.creep_speed)
        if T is not None and sampler.min_leg_time <= T <= c.T_pred:
            target = TargetState(s_end, v_f, 0.0, T, TargetRole.BOUNDARY)
        else:
            T = 0.8 * c.T_pred
            s_f = ego.s + 0.5 * (max(ego.v, 0.0) + v_f) * T
            if s_f >= s_end or v_f <= 0:
                continue
            target = TargetState(s_f, v_f, 0.0, T, TargetRole.BOUNDARY)
        options.append(make_option(ctx.path, BehaviorKind.LANE_FOLLOW, [target], ego))
    return options


def generate_behavior_options(ctx, ego: LongitudinalState, objects: Sequence[ObjectPrediction],
                              sampler: Optional[SamplerConfig] = None) -> List[BehaviorOption]:
    """
    Sample the behavior options of the current cycle.

    Merge contexts yield merge_dynamic options (PNR sampled over velocity, arrival
    at the PGA sampled inside traffic gaps) and gentle stops at the yield line, or
    the follow_then_merge / follow_then_stop families when a lead vehicle is
    present. Lane contexts yield lane_follow options. Options already held by the
    context (updated carry-overs) are kept, one fail_safe option is always
    appended, and the list is sorted by descending importance.
    """
    sampler = sampler or CONFIG.sampler
    c = ctx.constraints
    fresh: List[BehaviorOption] = []
    if ctx.is_merge:
        if ctx.lead is not None:
            fresh += _follow_options(ctx, ego, sampler)
        if not fresh:
            if ego.s >= compute_pnr(max(ego.v, 0.0), c.a_min, c.s_stop) - sampler.committed_margin:
                fresh += _committed_options(ctx, ego, sampler)
            fresh += _merge_options(ctx, ego, objects, sampler)
            fresh += _gentle_stop_options(ctx, ego, sampler)
    else:
        fresh += _lane_follow_options(ctx, ego, sampler)

    options, seen = [], set()
    for option in fresh + list(ctx.behaviors):
        if option.kind == BehaviorKind.FAIL_SAFE or option.signature() in seen:
            continue
        seen.add(option.signature())
        options.append(option)
    options.append(fail_safe_option(ctx, ego, sampler=sampler))
    options.sort(key=lambda o: -o.importance)
    logger.debug("generated %d behavior options (%d fresh)", len(options), len(fresh))
    return options
