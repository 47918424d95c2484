"""Closed-form minimum-jerk segments (time weight fixed to 1)."""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from errors import NonpositiveDuration


@dataclass(frozen=True)
class LongitudinalState:
    s: float  # m along the reference path
    v: float  # m/s
    a: float  # m/s^2

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.s, self.v, self.a)


@dataclass(frozen=True)
class TrajectorySegment:
    """
    Quintic s(tau) = sum(coeffs[k] * tau**k) over local time tau in [0, duration].
    """
    coeffs: Tuple[float, float, float, float, float, float]
    duration: float

    def evaluate(self, tau):
        """Position, velocity, acceleration at local time(s) tau."""
        c0, c1, c2, c3, c4, c5 = self.coeffs
        tau = np.asarray(tau, dtype=float)
        s = c0 + tau * (c1 + tau * (c2 + tau * (c3 + tau * (c4 + tau * c5))))
        v = c1 + tau * (2 * c2 + tau * (3 * c3 + tau * (4 * c4 + tau * 5 * c5)))
        a = 2 * c2 + tau * (6 * c3 + tau * (12 * c4 + tau * 20 * c5))
        return s, v, a

    def jerk(self, tau):
        _, _, _, c3, c4, c5 = self.coeffs
        tau = np.asarray(tau, dtype=float)
        return 6 * c3 + tau * (24 * c4 + tau * 60 * c5)

    def start_state(self) -> LongitudinalState:
        return LongitudinalState(self.coeffs[0], self.coeffs[1], 2 * self.coeffs[2])

    def end_state(self) -> LongitudinalState:
        s, v, a = self.evaluate(self.duration)
        return LongitudinalState(float(s), float(v), float(a))

    def jerk_cost(self) -> float:
        """1/2 * integral of u^2 over the segment, exact for the quadratic jerk."""
        _, _, _, c3, c4, c5 = self.coeffs
        A, B, C = 6 * c3, 24 * c4, 60 * c5
        T = self.duration
        integral = (A * A * T + A * B * T ** 2 + (B * B + 2 * A * C) * T ** 3 / 3.0
                    + B * C * T ** 4 / 2.0 + C * C * T ** 5 / 5.0)
        return 0.5 * integral


def solve_min_jerk_segment(x0: LongitudinalState, xf: LongitudinalState,
                           dt: float) -> TrajectorySegment:
    """
    Unique quintic meeting position, velocity and acceleration at both ends.

    With a unit time weight the Lagrangian is u^2 / 2, whose optimum under six
    boundary conditions is a fifth-order polynomial.

    Raises:
        NonpositiveDuration: dt <= 0.
    """
    if not dt > 0:
        raise NonpositiveDuration(f"segment duration must be > 0, got {dt}")
    T = float(dt)
    ds = xf.s - (x0.s + x0.v * T + 0.5 * x0.a * T * T)
    dv = xf.v - (x0.v + x0.a * T)
    da = xf.a - x0.a
    c3 = (10 * ds - 4 * dv * T + 0.5 * da * T * T) / T ** 3
    c4 = (-15 * ds + 7 * dv * T - da * T * T) / T ** 4
    c5 = (6 * ds - 3 * dv * T + 0.5 * da * T * T) / T ** 5
    return TrajectorySegment(coeffs=(x0.s, x0.v, 0.5 * x0.a, c3, c4, c5), duration=T)
