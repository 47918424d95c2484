"""Speed-limit profiles along the route and the point of no return."""
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from geometry.path import PathRef

# Legal limit: a constant or [(s_start, v), ...] sorted by s_start
SpeedLimit = Union[float, Sequence[Tuple[float, float]]]

STRAIGHT_KAPPA = 1e-3


def legal_limit(v_sl: SpeedLimit, s):
    """Evaluate a constant or stepwise legal limit at s."""
    s = np.asarray(s, dtype=float)
    if np.isscalar(v_sl) or isinstance(v_sl, (int, float)):
        return np.full_like(s, float(v_sl))
    starts = np.array([float(p[0]) for p in v_sl])
    values = np.array([float(p[1]) for p in v_sl])
    idx = np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(values) - 1)
    return values[idx]


@dataclass(frozen=True, eq=False)
class SpeedProfile:
    """Piecewise-constant v_max(s): ``values[i]`` holds on [edges[i], edges[i+1])."""
    edges: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.edges) != len(self.values) + 1:
            raise ValueError("need one more edge than values")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("profile edges must be strictly increasing")

    def __call__(self, s, t=None):
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self.edges, s, side="right") - 1, 0, len(self.values) - 1)
        return self.values[idx]

    @property
    def cells(self):
        return list(zip(self.edges[:-1].tolist(), self.edges[1:].tolist(), self.values.tolist()))

    def time_to_cover(self, s_from: float, s_to: float) -> float:
        """Travel time from s_from to s_to driving exactly at the profile speed."""
        total = 0.0
        for lo, hi, v in self.cells:
            a, b = max(lo, s_from), min(hi, s_to)
            if b > a:
                total += (b - a) / max(v, 1e-6)
        return total


def _compress(edges: np.ndarray, values: np.ndarray) -> SpeedProfile:
    keep = np.concatenate(([True], np.abs(np.diff(values)) > 1e-12))
    new_values = values[keep]
    new_edges = np.concatenate((edges[:-1][keep], [edges[-1]]))
    return SpeedProfile(edges=new_edges, values=new_values)


def _sample_cells(path: PathRef) -> np.ndarray:
    mids = 0.5 * (path.s[1:] + path.s[:-1])
    return np.concatenate(([path.s[0]], mids, [path.s[-1]]))


def speed_limit_profile(path: PathRef, v_sl: SpeedLimit, a_perp_max: float) -> SpeedProfile:
    """v_max(s) = min(v_sl(s), sqrt(a_perp_max / |kappa(s)|)), one cell per path sample."""
    if a_perp_max <= 0:
        raise ValueError("a_perp_max must be > 0")
    kappa = np.abs(path.kappa)
    with np.errstate(divide="ignore"):
        curve = np.where(kappa > 1e-12, np.sqrt(a_perp_max / np.maximum(kappa, 1e-12)), np.inf)
    values = np.minimum(legal_limit(v_sl, path.s), curve)
    return _compress(_sample_cells(path), values)


def segmentwise_constant_approximation(v_max: SpeedProfile, path: PathRef,
                                       straight_kappa: float = STRAIGHT_KAPPA) -> SpeedProfile:
    """
    Replace every curve by one constant: the speed at its tightest radius.

    Curves are runs of samples with |kappa| > straight_kappa; a run is split where
    the curvature changes sign.
    """
    values = np.asarray(v_max(path.s), dtype=float).copy()
    curved = np.abs(path.kappa) > straight_kappa
    sign = np.sign(path.kappa)
    start = None
    for i in range(len(values) + 1):
        boundary = (i == len(values) or not curved[i]
                    or (start is not None and sign[i] != sign[start]))
        if start is not None and boundary:
            values[start:i] = values[start:i].min()
            start = None
        if i < len(values) and curved[i] and start is None:
            start = i
    return _compress(_sample_cells(path), values)


def curve_regions(path: PathRef, straight_kappa: float = STRAIGHT_KAPPA):
    """(s_start, s_end, max |kappa|) for each curve run, in route order."""
    regions = []
    curved = np.abs(path.kappa) > straight_kappa
    sign = np.sign(path.kappa)
    start = None
    for i in range(len(path.s) + 1):
        boundary = (i == len(path.s) or not curved[i]
                    or (start is not None and sign[i] != sign[start]))
        if start is not None and boundary:
            regions.append((float(path.s[start]), float(path.s[i - 1]),
                            float(np.abs(path.kappa[start:i]).max())))
            start = None
        if i < len(path.s) and curved[i] and start is None:
            start = i
    return regions


class DynamicSpeedLimit:
    """
    Static profile capped at the lead vehicle's speed beyond its safety distance.

    For every t the profile is unchanged for s < s_pred(t) - s_plus(t) and limited
    to min(static, v_pred(t)) from there on.
    """

    def __init__(self, static: Callable, lead, s_plus: Callable[[np.ndarray], np.ndarray]):
        self.static = static
        self.lead = lead
        self.s_plus = s_plus

    def __call__(self, s, t=None):
        s = np.asarray(s, dtype=float)
        base = np.asarray(self.static(s), dtype=float)
        if t is None:
            t = np.zeros_like(s)
        t = np.broadcast_to(np.asarray(t, dtype=float), s.shape)
        boundary = self.lead.mu(t) - self.s_plus(t)
        capped = np.minimum(base, self.lead.v_pred(t))
        return np.where(s < boundary, base, capped)


def dynamic_speed_limit(v_max: Callable, lead, s_plus: Callable) -> Callable:
    if lead is None:
        return v_max
    return DynamicSpeedLimit(v_max, lead, s_plus)


def compute_pnr(v: float, a_min: float, s_stop: float) -> float:
    """Last position from which braking at a_min still stops at s_stop."""
    if a_min >= 0:
        raise ValueError("a_min must be < 0")
    return s_stop - v * v / (2.0 * abs(a_min))


def braking_envelope(profile: Callable, path: PathRef, decel: float) -> SpeedProfile:
    """Highest speed at each s from which every later profile value is reachable at decel."""
    values = np.asarray(profile(path.s), dtype=float).copy()
    for i in range(len(values) - 2, -1, -1):
        ds = path.s[i + 1] - path.s[i]
        values[i] = min(values[i], np.sqrt(values[i + 1] ** 2 + 2.0 * decel * ds))
    return _compress(_sample_cells(path), values)


def static_profile(path: PathRef, v_sl: SpeedLimit, a_perp_max: float,
                   curve_constant_speed: bool = True) -> SpeedProfile:
    profile = speed_limit_profile(path, v_sl, a_perp_max)
    if curve_constant_speed:
        profile = segmentwise_constant_approximation(profile, path)
    return profile


def base_profile(v_max: Callable) -> Optional[SpeedProfile]:
    """Underlying static profile of a possibly dynamic limit."""
    while isinstance(v_max, DynamicSpeedLimit):
        v_max = v_max.static
    return v_max if isinstance(v_max, SpeedProfile) else None
