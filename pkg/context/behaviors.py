"""Target states and behavior options, the sampling atoms of the planner."""
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple

from geometry.path import PathRef
from planner.quintic import LongitudinalState


class TargetRole(str, Enum):
    PNR = "pnr"
    CURVE_ENTRY = "curve_entry"
    CURVE_EXIT = "curve_exit"
    PGA = "pga"
    STOP = "stop"
    FOLLOW = "follow"
    BOUNDARY = "boundary"


class BehaviorKind(str, Enum):
    MERGE_DYNAMIC = "merge_dynamic"
    FOLLOW_THEN_MERGE = "follow_then_merge"
    FOLLOW_THEN_STOP = "follow_then_stop"
    GENTLE_STOP = "gentle_stop"
    FAIL_SAFE = "fail_safe"
    LANE_FOLLOW = "lane_follow"

    @property
    def leaves_safe_set(self) -> bool:
        """True for behaviors that pass the yield line and need PNR/PGA times."""
        return self in (BehaviorKind.MERGE_DYNAMIC, BehaviorKind.FOLLOW_THEN_MERGE)

    @property
    def default_importance(self) -> int:
        return IMPORTANCE[self]


IMPORTANCE = {
    BehaviorKind.MERGE_DYNAMIC: 2,
    BehaviorKind.FOLLOW_THEN_MERGE: 2,
    BehaviorKind.LANE_FOLLOW: 2,
    BehaviorKind.GENTLE_STOP: 1,
    BehaviorKind.FOLLOW_THEN_STOP: 1,
    BehaviorKind.FAIL_SAFE: 0,
}


@dataclass(frozen=True)
class TargetState:
    s_f: float
    v_f: float
    a_f: float
    t_f: float  # s, relative to the option's origin
    role: Optional[TargetRole] = None

    def __post_init__(self):
        if self.v_f < 0:
            raise ValueError(f"target velocity must be >= 0, got {self.v_f}")
        if not self.t_f > 0:
            raise ValueError(f"target time must be > 0, got {self.t_f}")

    @property
    def state(self) -> LongitudinalState:
        return LongitudinalState(self.s_f, self.v_f, self.a_f)

    def shifted(self, dt: float) -> "TargetState":
        return replace(self, t_f=self.t_f - dt)


@dataclass(frozen=True)
class BehaviorOption:
    """
    Reference path, up to three timed targets and an importance weight.

    ``origin`` is the longitudinal state the target times are measured from;
    the context update uses it to shift times when the option is carried over
    to a later cycle. ``a_start`` replaces the measured acceleration at the
    start of the first segment (a step onto full braking); None keeps it.
    """
    path: PathRef
    targets: Tuple[TargetState, ...]
    importance: int
    kind: BehaviorKind
    origin: Optional[LongitudinalState] = None
    a_start: Optional[float] = None

    def __post_init__(self):
        if not 1 <= len(self.targets) <= 3:
            raise ValueError("a behavior option needs 1 to 3 targets")
        times = [t.t_f for t in self.targets]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("target times must be strictly increasing")
        if self.importance < 0:
            raise ValueError("importance must be >= 0")

    @property
    def final(self) -> TargetState:
        return self.targets[-1]

    @property
    def duration(self) -> float:
        return self.targets[-1].t_f

    def target(self, role: TargetRole) -> Optional[TargetState]:
        for t in self.targets:
            if t.role == role:
                return t
        return None

    def signature(self) -> tuple:
        """Rounded identity used to drop duplicate samples."""
        return (self.kind.value,) + tuple(
            (round(t.s_f, 3), round(t.v_f, 3), round(t.a_f, 3), round(t.t_f, 3)) for t in self.targets)

    def to_record(self) -> dict:
        return {
            "kind": self.kind.value,
            "importance": self.importance,
            "a_start": self.a_start,
            "targets": [
                {"s": t.s_f, "v": t.v_f, "a": t.a_f, "t": t.t_f,
                 "role": t.role.value if t.role else None}
                for t in self.targets
            ],
        }


def make_option(path: PathRef, kind: BehaviorKind, targets, origin: LongitudinalState,
                a_start: Optional[float] = None) -> BehaviorOption:
    return BehaviorOption(path=path, targets=tuple(targets), importance=kind.default_importance,
                          kind=kind, origin=origin, a_start=a_start)
