"""Deterministic world stepping: ego single-track model plus lane actors."""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from config import CONFIG, VehicleParams
from env.actors import IDM, ActorState, LaneOccupant, initial_actors, step_actors
from env.scenario import Scenario
from geometry.path import project_to_frenet
from tracking.bicycle import VehicleState, bicycle_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WorldState:
    t: float
    ego: VehicleState
    ego_s: float  # progress along the ego route
    actors: Tuple[ActorState, ...]


def initial_world(scenario: Scenario, v0: Optional[float] = None, params: Optional[VehicleParams] = None,
                  rng: Optional[np.random.Generator] = None) -> WorldState:
    """Ego placed on its route at s0, steering matched to the local curvature."""
    params = params or CONFIG.vehicle
    path = scenario.ego_path
    s0 = scenario.ego_s0
    v = scenario.ego_v0 if v0 is None else max(0.0, v0)
    x, y = path.position(s0)
    q = 1.0 + (v / params.v_char) ** 2
    delta = float(np.clip(params.l * q * path.curvature_at(s0), -params.delta_max, params.delta_max))
    ego = VehicleState(float(x), float(y), float(path.heading_at(s0)), v, 0.0, delta)
    return WorldState(t=0.0, ego=ego, ego_s=s0, actors=initial_actors(scenario.actors, rng))


def _ego_occupant(scenario: Scenario, ego_s: float, ego: VehicleState, ds: float,
                  params: VehicleParams) -> Optional[LaneOccupant]:
    """The ego as a leader for main-lane traffic once it is past the merge point."""
    j = scenario.junction
    if j is None or ego_s < j.conflict - params.length / 2.0:
        return None
    lane = scenario.lane(j.target_lane)
    return LaneOccupant(lane=lane.id, s=float(lane.from_ego(ego_s)), v=ego.v, length=params.length,
                        displacement=ds)


def step_world(world: WorldState, controls: Tuple[float, float], dt: float, scenario: Scenario,
               params: Optional[VehicleParams] = None, idm: Optional[IDM] = None) -> WorldState:
    """
    Advance the world by dt with ego controls (jerk, steering rate).

    The ego does not reverse: once its speed reaches zero, speed and
    deceleration are held at zero.
    """
    params = params or CONFIG.vehicle
    ego = bicycle_step(world.ego, controls, dt, params)
    if ego.v < 0.0:
        ego = replace(ego, v=0.0, a=max(ego.a, 0.0))
    ego_s = project_to_frenet(scenario.ego_path, (ego.x, ego.y), CONFIG.corridor).s
    occupant = _ego_occupant(scenario, ego_s, ego, ego_s - world.ego_s, params)
    actors = step_actors(world.actors, dt, (occupant,) if occupant is not None else (), idm)
    return WorldState(t=world.t + dt, ego=ego, ego_s=ego_s, actors=actors)
