"""Piecewise-quintic candidate trajectories."""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from context.behaviors import BehaviorOption, TargetRole
from planner.quintic import LongitudinalState, TrajectorySegment, solve_min_jerk_segment


@dataclass(frozen=True, eq=False)
class LongitudinalTrajectory:
    """
    C2-concatenated segments plus the passageway annotation.

    ``t_pnr == t_pga`` marks a trajectory that never leaves the safe set.
    Past the last segment the final state is held (position grows with the
    final velocity, acceleration zero).
    """
    segments: Tuple[TrajectorySegment, ...]
    t_pnr: Optional[float] = None
    t_pga: Optional[float] = None
    behavior: Optional[BehaviorOption] = None
    _starts: np.ndarray = field(init=False, repr=False)
    _coeffs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        durations = np.array([seg.duration for seg in self.segments])
        object.__setattr__(self, "_starts", np.concatenate(([0.0], np.cumsum(durations)[:-1])))
        object.__setattr__(self, "_coeffs", np.array([seg.coeffs for seg in self.segments]))

    @property
    def duration(self) -> float:
        return float(self._starts[-1] + self.segments[-1].duration)

    @property
    def in_safe_set(self) -> bool:
        return self.t_pnr is not None and self.t_pnr == self.t_pga

    def _locate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self._starts, t, side="right") - 1, 0, len(self.segments) - 1)
        tau = t - self._starts[idx]
        return t, idx, tau

    def evaluate(self, t):
        """Arrays (s, v, a) at times t."""
        t, idx, tau = self._locate(t)
        last = len(self.segments) - 1
        end = self.segments[last].duration
        beyond = (idx == last) & (tau > end)
        extra = np.where(beyond, tau - end, 0.0)
        tau = np.where(beyond, end, np.maximum(tau, 0.0))
        c = self._coeffs[idx]
        s = c[:, 0] + tau * (c[:, 1] + tau * (c[:, 2] + tau * (c[:, 3] + tau * (c[:, 4] + tau * c[:, 5]))))
        v = c[:, 1] + tau * (2 * c[:, 2] + tau * (3 * c[:, 3] + tau * (4 * c[:, 4] + tau * 5 * c[:, 5])))
        a = 2 * c[:, 2] + tau * (6 * c[:, 3] + tau * (12 * c[:, 4] + tau * 20 * c[:, 5]))
        s = s + v * extra
        a = np.where(beyond, 0.0, a)
        return s, v, a

    def jerk(self, t):
        t, idx, tau = self._locate(t)
        c = self._coeffs[idx]
        u = 6 * c[:, 3] + tau * (24 * c[:, 4] + tau * 60 * c[:, 5])
        return np.where(t > self.duration, 0.0, u)

    def state_at(self, t: float) -> LongitudinalState:
        s, v, a = self.evaluate(t)
        return LongitudinalState(float(s[0]), float(v[0]), float(a[0]))

    def time_at_position(self, s_query: float, step: float = 0.01) -> float:
        """First time the trajectory reaches s_query (0 if it starts beyond it)."""
        t = np.arange(0.0, self.duration + step, step)
        s, _, _ = self.evaluate(t)
        hit = np.nonzero(s >= s_query)[0]
        if len(hit) == 0:
            return float(self.duration)
        k = int(hit[0])
        if k == 0:
            return 0.0
        ds = s[k] - s[k - 1]
        frac = (s_query - s[k - 1]) / ds if ds > 0 else 1.0
        return float(t[k - 1] + frac * step)

    def sample(self, step: float):
        t = np.arange(0.0, self.duration + 0.5 * step, step)
        s, v, a = self.evaluate(t)
        return t, s, v, a

    def max_abs_jerk(self) -> float:
        """Largest |u| over the trajectory; the extremum of a quadratic is at an end or its vertex."""
        best = 0.0
        for seg in self.segments:
            _, _, _, c3, c4, c5 = seg.coeffs
            taus = [0.0, seg.duration]
            if abs(c5) > 1e-12:
                vertex = -24 * c4 / (120 * c5)
                if 0.0 < vertex < seg.duration:
                    taus.append(vertex)
            best = max(best, float(np.max(np.abs(seg.jerk(np.array(taus))))))
        return best

    def to_record(self) -> dict:
        return {
            "segments": [{"coeffs": list(seg.coeffs), "duration": seg.duration} for seg in self.segments],
            "t_pnr": self.t_pnr,
            "t_pga": self.t_pga,
        }


def assemble_candidate(x0: LongitudinalState, option: BehaviorOption) -> LongitudinalTrajectory:
    """
    One minimum-jerk segment per target, chained from x0.

    Every segment starts from the previous target state itself, so joints are
    exact. An option with ``a_start`` begins from x0 with that acceleration.
    Raises NonpositiveDuration when a passed target was not pruned.
    """
    segments = []
    state, t_prev = x0, 0.0
    if option.a_start is not None:
        state = LongitudinalState(x0.s, x0.v, option.a_start)
    t_pnr = t_pga = None
    for target in option.targets:
        segments.append(solve_min_jerk_segment(state, target.state, target.t_f - t_prev))
        if target.role == TargetRole.PNR:
            t_pnr = target.t_f
        elif target.role == TargetRole.PGA:
            t_pga = target.t_f
        state, t_prev = target.state, target.t_f

    if option.kind.leaves_safe_set:
        if t_pga is not None and t_pnr is None:
            # the PNR already lies behind: the whole remaining passage counts
            t_pnr = 0.0
    else:
        t_pnr = t_pga = option.duration
    return LongitudinalTrajectory(segments=tuple(segments), t_pnr=t_pnr, t_pga=t_pga, behavior=option)
