"""Main-road traffic: constant-speed and IDM car-following actors on fixed lanes."""
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from env.scenario import ActorSpec

logger = logging.getLogger(__name__)


class IDM:
    """
    Intelligent Driver Model.

    Args:
        s0: Minimum net gap to the leader (m).
        T: Safe time headway (s).
        a: Maximum acceleration (m/s^2).
        b: Comfortable deceleration (m/s^2).
        delta: Acceleration exponent.
    """

    def __init__(self, s0: float = 2.0, T: float = 1.6, a: float = 0.73, b: float = 1.67, delta: int = 4):
        self.s0 = s0
        self.T = T
        self.a = a
        self.b = b
        self.delta = delta

    def desired_gap(self, speed: float, delta_v: float) -> float:
        return self.s0 + max(0.0, speed * self.T + speed * delta_v / (2.0 * math.sqrt(self.a * self.b)))

    def get_acceleration(self, speed: float, v0: float, delta_v: float = 0.0,
                         gap: Optional[float] = None) -> float:
        """
        Args:
            speed: Own speed.
            v0: Desired speed.
            delta_v: Own speed minus leader speed.
            gap: Net distance to the leader, None on a free road.
        """
        free = 1.0 - (speed / v0) ** self.delta if v0 > 0 else -1.0
        if gap is None:
            return self.a * free
        s_star = self.desired_gap(speed, delta_v)
        return self.a * (free - (s_star / max(gap, 0.1)) ** 2)


@dataclass(frozen=True)
class ActorState:
    spec: ActorSpec
    s: float  # lane coordinate of the center
    v: float
    a: float = 0.0
    active: bool = True

    @property
    def id(self) -> str:
        return self.spec.id


@dataclass(frozen=True)
class LaneOccupant:
    """Anything else an actor may have to follow, e.g. the ego after merging."""
    lane: str
    s: float
    v: float
    length: float
    displacement: float = 0.0  # distance covered during the current step


def initial_actors(specs: Iterable[ActorSpec], rng: Optional[np.random.Generator] = None) -> Tuple[ActorState, ...]:
    """Actors at their start positions, perturbed by s0_jitter when an RNG is given."""
    states = []
    for spec in specs:
        s = spec.s0
        if rng is not None and spec.s0_jitter > 0:
            s += float(rng.normal(0.0, spec.s0_jitter))
        states.append(ActorState(spec=spec, s=s, v=spec.v0))
    return tuple(states)


def _leader(actor: ActorState, others: Sequence, lane: str):
    best = None
    for other in others:
        if other is actor or other.lane != lane or other.s <= actor.s:
            continue
        if best is None or other.s < best.s:
            best = other
    return best


def step_actors(actors: Sequence[ActorState], dt: float, occupants: Sequence[LaneOccupant] = (),
                idm: Optional[IDM] = None) -> Tuple[ActorState, ...]:
    """
    Advance all actors by dt.

    Actors are processed front to back so every follower sees its leader's
    new position; a follower never closes in further than the minimum gap.
    Actors past their turn-off point become inactive and stay so.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    idm = idm or IDM()
    moved: Dict[int, LaneOccupant] = {}
    order = sorted(range(len(actors)), key=lambda i: -actors[i].s)
    result: List[Optional[ActorState]] = [None] * len(actors)

    for i in order:
        actor = actors[i]
        spec = actor.spec
        if not actor.active:
            result[i] = actor
            continue
        others = list(moved.values()) + list(occupants)
        leader = _leader(actor, others, spec.lane) if spec.behavior == "idm_follow" else None

        if leader is None:
            acc = idm.get_acceleration(actor.v, spec.v_desired) if spec.behavior == "idm_follow" else 0.0
        else:
            gap = leader.s - actor.s - (leader.length + spec.length) / 2.0
            acc = idm.get_acceleration(actor.v, spec.v_desired, actor.v - leader.v, gap)
        v_next = max(0.0, actor.v + acc * dt)
        ds = 0.5 * (actor.v + v_next) * dt
        if leader is not None:
            gap_before = leader.s - leader.displacement - actor.s - (leader.length + spec.length) / 2.0
            ds_max = max(0.0, gap_before - idm.s0) + leader.displacement
            if ds > ds_max:
                ds = ds_max
                v_next = min(v_next, leader.v)
        s_next = actor.s + ds
        active = spec.turn_off_at is None or s_next < spec.turn_off_at
        if not active:
            logger.debug("actor %s turned off at %.1f m", spec.id, s_next)
        new = replace(actor, s=s_next, v=v_next, a=(v_next - actor.v) / dt, active=active)
        result[i] = new
        if active:
            moved[i] = LaneOccupant(lane=spec.lane, s=s_next, v=v_next, length=spec.length, displacement=ds)
    return tuple(result)
