"""
Receding-horizon lateral tracking by direct single shooting.

Decision variables are the jerk per interval and the steering angle at every
grid point after the first; steering rates follow by differencing. The
steering knots are boxed so the reference speed cannot exceed the lateral
acceleration bound, violations that remain are penalized quadratically.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize

from config import CONFIG, TrackerConfig, VehicleParams
from errors import SolverStall
from geometry.path import PathRef
from planner.trajectory import LongitudinalTrajectory
from tracking.bicycle import A, DELTA, PHI, V, X, Y, VehicleState, lateral_accel, rk4_step

logger = logging.getLogger(__name__)


def _wrap(angle):
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


@dataclass
class TrackResult:
    states: List[VehicleState]  # horizon rollout, first entry is the initial state
    jerk: np.ndarray
    steering_rate: np.ndarray
    cost: float
    iterations: int
    violation: float  # max relative lateral-acceleration excess
    a_perp: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def controls(self, k: int = 0):
        return float(self.jerk[k]), float(self.steering_rate[k])


@dataclass
class _Reference:
    t: np.ndarray
    v: np.ndarray
    a: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    kappa: np.ndarray
    jerk: np.ndarray  # at the interval starts
    bound: np.ndarray  # steering box per knot


class LateralTracker:
    """
    Tracks a longitudinal plan along a fixed path with a single-track model.

    Usage:
        tracker = LateralTracker(path)
        result = tracker.track(plan, state)
        u, ddelta = result.controls(0)

    The previous solution warm-starts the next call, shifted by the time that
    elapsed in between.
    """

    def __init__(self, path: PathRef, cfg: Optional[TrackerConfig] = None,
                 params: Optional[VehicleParams] = None):
        self.path = path
        self.cfg = cfg or CONFIG.tracker
        self.params = params or CONFIG.vehicle
        self.N = self.cfg.points
        self.h = self.cfg.step
        self._warm: Optional[np.ndarray] = None
        self._ref: Optional[_Reference] = None
        self._z0: Optional[np.ndarray] = None

    def reset(self):
        self._warm = None

    def _reference(self, plan: LongitudinalTrajectory, t_offset: float) -> _Reference:
        p = self.params
        t = t_offset + self.h * np.arange(1, self.N + 1)
        s, v, a = plan.evaluate(t)
        x, y = self.path.position(s)
        jerk = plan.jerk(t_offset + self.h * np.arange(self.N))
        # the box uses the faster of plan and current speed
        v_r = np.maximum(np.maximum(v, self._z0[V]), 0.5)
        q = 1.0 + (v_r / p.v_char) ** 2
        bound = np.minimum(p.delta_max, self.cfg.a_perp_max * p.l * q / v_r ** 2)
        return _Reference(t=t, v=v, a=a, x=x, y=y, heading=self.path.heading_at(s),
                          kappa=self.path.curvature_at(s), jerk=jerk, bound=bound)

    def prepare(self, plan: LongitudinalTrajectory, state: VehicleState, t_offset: float = 0.0):
        """Fix the initial state and the horizon reference for cost evaluations."""
        self._z0 = state.as_array()
        self._ref = self._reference(plan, t_offset)

    def _split(self, decision: np.ndarray):
        u = decision[:self.N]
        knots = np.concatenate(([self._z0[DELTA]], decision[self.N:]))
        return u, np.diff(knots) / self.h

    def rollout(self, decision: np.ndarray, with_jacobians: bool = False):
        u, omega = self._split(decision)
        zs = [self._z0]
        jacobians = []
        for k in range(self.N):
            out = rk4_step(zs[-1], (u[k], omega[k]), self.h, self.params, with_jacobians)
            if with_jacobians:
                out, A_z, B_c = out
                jacobians.append((A_z, B_c))
            zs.append(out)
        return np.array(zs), jacobians

    def cost_and_gradient(self, decision: np.ndarray):
        """Discretized tracking cost and its gradient by the adjoint of the RK4 rollout."""
        cfg, p, ref = self.cfg, self.params, self._ref
        u, omega = self._split(decision)
        zs, jacobians = self.rollout(decision, with_jacobians=True)
        z = zs[1:]
        phi, v, acc, delta = z[:, PHI], z[:, V], z[:, A], z[:, DELTA]

        nx, ny = -np.sin(ref.heading), np.cos(ref.heading)
        e = nx * (z[:, X] - ref.x) + ny * (z[:, Y] - ref.y)
        dphi = _wrap(phi - ref.heading)
        q = 1.0 + (v / p.v_char) ** 2
        a_perp = delta * v ** 2 / (p.l * q)
        excess = np.maximum(0.0, a_perp ** 2 - cfg.a_perp_max ** 2)
        rate_excess = np.maximum(0.0, np.abs(omega) - p.ddelta_max)

        cost = float(np.sum(cfg.w_v * (v - ref.v) ** 2 + cfg.w_a * (acc - ref.a) ** 2
                            + cfg.w_dperp * e ** 2 + cfg.w_phi * dphi ** 2 + cfg.penalty * excess ** 2)
                     + np.sum(cfg.w_ddelta * omega ** 2 + cfg.penalty * rate_excess ** 2))

        d_pen = cfg.penalty * 2.0 * excess * 2.0 * a_perp
        dl = np.zeros_like(z)
        dl[:, X] = 2.0 * cfg.w_dperp * e * nx
        dl[:, Y] = 2.0 * cfg.w_dperp * e * ny
        dl[:, PHI] = 2.0 * cfg.w_phi * dphi
        dl[:, V] = 2.0 * cfg.w_v * (v - ref.v) + d_pen * delta * 2.0 * v / (p.l * q * q)
        dl[:, A] = 2.0 * cfg.w_a * (acc - ref.a)
        dl[:, DELTA] = d_pen * v ** 2 / (p.l * q)

        grad_c = np.zeros((self.N, 2))
        lam = np.zeros(6)
        for k in reversed(range(self.N)):
            lam = lam + dl[k]
            A_z, B_c = jacobians[k]
            grad_c[k] = B_c.T @ lam
            lam = A_z.T @ lam

        g_omega = grad_c[:, 1] + 2.0 * cfg.w_ddelta * omega \
            + cfg.penalty * 2.0 * rate_excess * np.sign(omega)
        g_knots = g_omega / self.h
        g_knots[:-1] -= g_omega[1:] / self.h
        return cost, np.concatenate((grad_c[:, 0], g_knots))

    def _feedforward(self) -> np.ndarray:
        ref, p = self._ref, self.params
        q = 1.0 + (ref.v / p.v_char) ** 2
        knots = np.clip(p.l * q * ref.kappa, -ref.bound, ref.bound)
        return np.concatenate((ref.jerk, knots))

    def _initial_guess(self, shift: int) -> np.ndarray:
        guess = self._feedforward()
        if self._warm is None or shift >= self.N:
            return guess
        n = self.N
        warm_u, warm_d = self._warm[:n], self._warm[n:]
        guess[:n - shift] = warm_u[shift:]
        guess[n:2 * n - shift] = warm_d[shift:]
        return guess

    def track(self, plan: LongitudinalTrajectory, state: VehicleState, t_offset: float = 0.0,
              elapsed: float = 0.0) -> TrackResult:
        """
        Optimize controls over the horizon and return the rollout.

        Raises:
            SolverStall: the solver converged while the lateral-acceleration
                bound is still violated beyond tolerance.
        """
        cfg = self.cfg
        self.prepare(plan, state, t_offset)
        bounds = [(None, None)] * self.N + [(-b, b) for b in self._ref.bound]
        guess = self._initial_guess(int(round(elapsed / self.h)))
        guess[self.N:] = np.clip(guess[self.N:], -self._ref.bound, self._ref.bound)

        res = minimize(self.cost_and_gradient, guess, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": cfg.max_iterations, "ftol": cfg.tolerance,
                                "gtol": cfg.gradient_tolerance})
        zs, _ = self.rollout(res.x)
        states = [VehicleState.from_array(z) for z in zs]
        a_perp = np.array([lateral_accel(s, self.params) for s in states[1:]])
        violation = float(np.max(np.maximum(0.0, np.abs(a_perp) - cfg.a_perp_max)) / cfg.a_perp_max)

        if violation > cfg.violation_tolerance:
            if res.status != 1:  # converged or line search failed, not the iteration cap
                raise SolverStall(f"lateral acceleration exceeds the bound by {violation:.1%}: {res.message}")
            logger.warning("iteration cap reached with lateral acceleration %.1f%% over the bound",
                           100 * violation)

        self._warm = res.x.copy()
        u, omega = self._split(res.x)
        return TrackResult(states=states, jerk=u.copy(), steering_rate=omega.copy(), cost=float(res.fun),
                           iterations=int(res.nit), violation=violation, a_perp=a_perp)


def track(ref_long: LongitudinalTrajectory, path: PathRef, state: VehicleState,
          cfg: Optional[TrackerConfig] = None, params: Optional[VehicleParams] = None) -> List[VehicleState]:
    """One-shot tracking without warm start; returns the horizon rollout."""
    return LateralTracker(path, cfg, params).track(ref_long, state).states
