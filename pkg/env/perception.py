"""
Synthetic ego and external object lists.

The ego sensor sees actors inside its field of view with a free line of
sight; the external (infrastructure) sensor sees everything inside its fixed
field of view, delivered with a small latency. Both lists are merged by
nearest-neighbor association before the planner uses them.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from shapely import affinity
from shapely.geometry import LineString, Point, Polygon

from config import CONFIG, PerceptionConfig, SamplerConfig
from context.situation import SituationContext, rule_violators
from env.actors import ActorState
from env.scenario import Scenario
from risk.model import ObjectPrediction, ObjectSource

logger = logging.getLogger(__name__)


def ego_fov_polygon(scenario: Scenario, x: float, y: float, phi: float) -> Polygon:
    """Ego field of view placed at the vehicle pose."""
    fov = affinity.rotate(scenario.ego_fov, phi, origin=(0.0, 0.0), use_radians=True)
    return affinity.translate(fov, x, y)


def line_of_sight(origin: Tuple[float, float], target: Tuple[float, float],
                  occluders: Sequence[Polygon]) -> bool:
    ray = LineString([origin, target])
    return not any(ray.intersects(poly) for poly in occluders)


def actor_position(scenario: Scenario, actor: ActorState) -> Tuple[float, float]:
    x, y = scenario.lane(actor.spec.lane).path.position(actor.s)
    return float(x), float(y)


def _prediction(scenario: Scenario, actor: ActorState, s_lane: float, source: ObjectSource,
                t0: float = 0.0) -> ObjectPrediction:
    pred = scenario.prediction
    lane = scenario.lane(actor.spec.lane)
    return ObjectPrediction(id=actor.id, lane=lane.id, s=float(lane.to_ego(s_lane)), v=actor.v,
                            sigma0=pred.sigma0, sigma_rate=pred.sigma_rate, horizon=pred.horizon,
                            source=source, t0=t0, length=actor.spec.length)


def sense(world, scenario: Scenario,
          rng: Optional[np.random.Generator] = None) -> Tuple[List[ObjectPrediction], List[ObjectPrediction]]:
    """
    Object lists (L_ego, L_ext) for the current world state.

    External measurements refer to the true state ``latency_ext`` seconds ago
    (t0 = -latency); their constant-velocity mean is re-anchored to that time.
    """
    noise = scenario.perception.position_noise
    ego = world.ego
    origin = (ego.x, ego.y)
    fov = ego_fov_polygon(scenario, ego.x, ego.y, ego.phi)
    latency = scenario.latency_ext

    l_ego, l_ext = [], []
    for actor in world.actors:
        if not actor.active:
            continue
        xy = actor_position(scenario, actor)
        if fov.contains(Point(xy)) and line_of_sight(origin, xy, scenario.occlusion_polygons):
            s = actor.s + (rng.normal(0.0, noise) if rng is not None and noise > 0 else 0.0)
            l_ego.append(_prediction(scenario, actor, s, ObjectSource.EGO))
        if scenario.ext_fov is not None and scenario.ext_fov.contains(Point(xy)):
            s = actor.s - actor.v * latency
            if rng is not None and noise > 0:
                s += rng.normal(0.0, noise)
            l_ext.append(_prediction(scenario, actor, s, ObjectSource.EXTERNAL, t0=-latency))
    return l_ego, l_ext


def _nearest(obj: ObjectPrediction, candidates: Sequence[ObjectPrediction], radius: float):
    best, best_d = None, math.inf
    s = float(obj.mu(0.0))
    for other in candidates:
        if other.lane != obj.lane:
            continue
        d = abs(float(other.mu(0.0)) - s)
        if d <= radius and d < best_d:
            best, best_d = other, d
    return best, best_d


def merge_object_lists(l_ego: Sequence[ObjectPrediction], l_ext: Sequence[ObjectPrediction],
                       ctx: SituationContext, cfg: Optional[PerceptionConfig] = None,
                       sampler: Optional[SamplerConfig] = None,
                       s_ref: Optional[float] = None) -> List[ObjectPrediction]:
    """
    Use ego and external object lists in parallel.

    Each external object is associated with the nearest ego object on the same
    lane within ``assoc_radius``. A pair further apart than ``assoc_gate``
    is a discrepancy, and then only the ego list is trusted. Otherwise the
    ego-sourced track wins for associated pairs and the unmatched external
    objects are added. Objects on irrelevant lanes are removed at the end.
    """
    cfg = cfg or CONFIG.perception
    sampler = sampler or CONFIG.sampler
    merged = list(l_ego)
    extra = []
    discrepancy = False
    for obj in l_ext:
        match, dist = _nearest(obj, l_ego, cfg.assoc_radius)
        if match is None:
            extra.append(obj)
        elif dist > cfg.assoc_gate:
            discrepancy = True
            logger.warning("object lists disagree on %s/%s by %.2f m, using the ego list only",
                           match.id, obj.id, dist)
            break
    if not discrepancy:
        seen = {o.id for o in merged}
        merged += [o for o in extra if o.id not in seen]

    s_ref = ctx.interval[0] if s_ref is None else s_ref
    violators = rule_violators(merged, ctx.constraints.v_sl, s_ref, sampler)
    assumptions = ctx.assumptions
    return [o for o in merged if assumptions.is_relevant(o) or o.id in violators]
