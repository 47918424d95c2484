"""Kinematic single-track model with understeer correction."""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from config import CONFIG, VehicleParams

# state vector layout
X, Y, PHI, V, A, DELTA = range(6)


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    phi: float  # heading, rad
    v: float
    a: float
    delta: float  # steering angle, rad

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi, self.v, self.a, self.delta], dtype=float)

    @staticmethod
    def from_array(z) -> "VehicleState":
        return VehicleState(*(float(value) for value in z))


def _q(v, params: VehicleParams):
    return 1.0 + (v / params.v_char) ** 2


def lateral_accel(state: VehicleState, params: VehicleParams = None) -> float:
    """delta v^2 / (l (1 + (v / v_char)^2))."""
    params = params or CONFIG.vehicle
    return float(state.delta * state.v ** 2 / (params.l * _q(state.v, params)))


def derivatives(z: np.ndarray, controls: Tuple[float, float], params: VehicleParams) -> np.ndarray:
    u, ddelta = controls
    _, _, phi, v, a, delta = z
    return np.array([
        v * np.cos(phi),
        v * np.sin(phi),
        v * delta / (params.l * _q(v, params)),
        a,
        u,
        ddelta,
    ])


def state_jacobian(z: np.ndarray, params: VehicleParams) -> np.ndarray:
    """d f / d z."""
    _, _, phi, v, _, delta = z
    q = _q(v, params)
    J = np.zeros((6, 6))
    J[X, PHI] = -v * np.sin(phi)
    J[X, V] = np.cos(phi)
    J[Y, PHI] = v * np.cos(phi)
    J[Y, V] = np.sin(phi)
    J[PHI, V] = delta * (1.0 - (v / params.v_char) ** 2) / (params.l * q * q)
    J[PHI, DELTA] = v / (params.l * q)
    J[V, A] = 1.0
    return J


# d f / d (u, ddelta); constant
CONTROL_JACOBIAN = np.zeros((6, 2))
CONTROL_JACOBIAN[A, 0] = 1.0
CONTROL_JACOBIAN[DELTA, 1] = 1.0


def rk4_step(z: np.ndarray, controls: Tuple[float, float], dt: float, params: VehicleParams,
             with_jacobians: bool = False):
    """
    One classical Runge-Kutta step with piecewise-constant controls.

    With ``with_jacobians`` also returns (d z+/d z, d z+/d controls), chained
    through the four stages.
    """
    k1 = derivatives(z, controls, params)
    z2 = z + 0.5 * dt * k1
    k2 = derivatives(z2, controls, params)
    z3 = z + 0.5 * dt * k2
    k3 = derivatives(z3, controls, params)
    z4 = z + dt * k3
    k4 = derivatives(z4, controls, params)
    z_next = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not with_jacobians:
        return z_next

    eye = np.eye(6)
    B = CONTROL_JACOBIAN
    K1 = state_jacobian(z, params)
    C1 = B
    F2 = state_jacobian(z2, params)
    K2 = F2 @ (eye + 0.5 * dt * K1)
    C2 = F2 @ (0.5 * dt * C1) + B
    F3 = state_jacobian(z3, params)
    K3 = F3 @ (eye + 0.5 * dt * K2)
    C3 = F3 @ (0.5 * dt * C2) + B
    F4 = state_jacobian(z4, params)
    K4 = F4 @ (eye + dt * K3)
    C4 = F4 @ (dt * C3) + B
    A_z = eye + dt / 6.0 * (K1 + 2 * K2 + 2 * K3 + K4)
    B_c = dt / 6.0 * (C1 + 2 * C2 + 2 * C3 + C4)
    return z_next, A_z, B_c


def bicycle_step(state: VehicleState, controls: Tuple[float, float], dt: float,
                 params: VehicleParams = None) -> VehicleState:
    """Advance by dt with jerk and steering-rate controls; steering is clamped to +-delta_max."""
    params = params or CONFIG.vehicle
    if not dt > 0:
        raise ValueError("dt must be > 0")
    z = rk4_step(state.as_array(), controls, dt, params)
    z[DELTA] = np.clip(z[DELTA], -params.delta_max, params.delta_max)
    return VehicleState.from_array(z)
