"""
Hybrid set-based / probabilistic residual risk.

A candidate that never leaves the safe set carries only the perception term
``1 - p_rel``. A candidate that passes the yield line accumulates, for every
object, the worst probability of violating the safety distances between its
point of no return and its point of guaranteed arrival.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.special import ndtr

from config import CONFIG, RiskConfig
from errors import MissingAnnotation

logger = logging.getLogger(__name__)


class ObjectSource(str, Enum):
    EGO = "ego"
    EXTERNAL = "external"
    VIRTUAL = "virtual"


@dataclass(frozen=True)
class ReliabilityEstimate:
    beta_a: float
    beta_b: float
    alpha: float

    def __post_init__(self):
        for name in ("beta_a", "beta_b"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")

    @staticmethod
    def from_schedule(schedule: Sequence[Tuple[float, float, float]], alpha: float,
                      t: float) -> "ReliabilityEstimate":
        """Last (t_i, a, b) entry with t_i <= t; the first entry before that."""
        entry = schedule[0]
        for item in schedule:
            if item[0] <= t:
                entry = item
        return ReliabilityEstimate(beta_a=entry[1], beta_b=entry[2], alpha=alpha)


@dataclass(frozen=True)
class ObjectPrediction:
    """
    Constant-velocity prediction along one lane, in the ego path coordinate.

    ``t0`` is the time the measured state refers to relative to now (negative for
    delayed external data); mean and spread are anchored there.
    """
    id: str
    lane: str
    s: float
    v: float
    sigma0: float = 0.5
    sigma_rate: float = 0.3
    horizon: float = 10.0
    source: ObjectSource = ObjectSource.EGO
    t0: float = 0.0
    length: float = 4.5

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be > 0")
        if self.sigma_rate < 0:
            raise ValueError("sigma_rate must be >= 0")

    def mu(self, t):
        return self.s + self.v * (np.asarray(t, dtype=float) - self.t0)

    def sigma(self, t):
        return self.sigma0 + self.sigma_rate * np.maximum(np.asarray(t, dtype=float) - self.t0, 0.0)

    def v_pred(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.v)


def reliability(est: ReliabilityEstimate) -> float:
    """Tail mass of Beta(a, b) above the confidence level alpha."""
    return float(stats.beta.sf(est.alpha, est.beta_a, est.beta_b))


def safety_distances(v_ego, v_obj, cfg: RiskConfig):
    """Margins behind (s_minus) and ahead (s_plus) of the ego, growing with closing speed."""
    v_ego = np.asarray(v_ego, dtype=float)
    s_minus = cfg.s_minus_0 + cfg.headway * np.maximum(0.0, v_obj - v_ego)
    s_plus = cfg.s_plus_0 + cfg.headway * np.maximum(0.0, v_ego - v_obj)
    return s_minus, s_plus


def _interval_probability(s_ego, v_ego, obj: ObjectPrediction, cfg: RiskConfig, t):
    mu = obj.mu(t)
    sigma = obj.sigma(t)
    s_minus, s_plus = safety_distances(v_ego, obj.v, cfg)
    return ndtr((s_ego + s_plus - mu) / sigma) - ndtr((s_ego - s_minus - mu) / sigma)


def object_interval_risk(traj, obj: ObjectPrediction, cfg: RiskConfig, t: float) -> float:
    """Probability that the object sits inside the ego's safety band at time t."""
    s, v, _ = traj.evaluate(t)
    return float(np.clip(_interval_probability(s, v, obj, cfg, t)[0], 0.0, 1.0))


def combine_object_risks(p_tilde: Iterable[float]) -> float:
    """p_{i+1} = p_i + (1 - p_i) * p~_{i+1}, starting from zero."""
    p = 0.0
    for p_i in p_tilde:
        p = p + (1.0 - p) * float(p_i)
    return p


def mix_reliability(p: float, p_rel: float) -> float:
    if p_rel == 1.0:
        return float(p)
    return float(min(1.0, max(0.0, (1.0 - p_rel) + p_rel * p)))


def aggregate_risk(traj, objects: Sequence[ObjectPrediction], cfg: Optional[RiskConfig] = None,
                   p_rel: float = 1.0) -> float:
    """
    Residual risk of a candidate.

    Raises:
        MissingAnnotation: the trajectory leaves the safe set without PNR/PGA times.
    """
    cfg = cfg or CONFIG.risk
    if traj.t_pnr is None or traj.t_pga is None:
        raise MissingAnnotation("trajectory leaves the safe set without PNR/PGA times")
    if traj.t_pnr >= traj.t_pga:
        return mix_reliability(0.0, p_rel)

    times = np.arange(traj.t_pnr, traj.t_pga, cfg.time_step)
    times = np.append(times, traj.t_pga)
    s, v, _ = traj.evaluate(times)
    p_tilde = []
    for obj in objects:
        p = _interval_probability(s, v, obj, cfg, times)
        p_tilde.append(float(np.clip(np.max(p), 0.0, 1.0)))
    return mix_reliability(combine_object_risks(p_tilde), p_rel)


def make_virtual_eos_object(cfg: RiskConfig, objects: Sequence[ObjectPrediction]) -> Optional[ObjectPrediction]:
    """
    Stand-in for an unseen vehicle entering the field of view at the end of sight.

    Returns None when the end of sight is unknown or a real object already occupies
    the approach between end of sight and the conflict point.
    """
    if cfg.eos_position is None:
        return None
    for obj in objects:
        if obj.source == ObjectSource.VIRTUAL or obj.lane != cfg.eos_lane:
            continue
        s_now = float(obj.mu(0.0))
        if s_now >= cfg.eos_position and (cfg.conflict_position is None or s_now <= cfg.conflict_position):
            return None
    return ObjectPrediction(
        id="virtual_eos",
        lane=cfg.eos_lane,
        s=cfg.eos_position,
        v=cfg.eos_speed,
        sigma0=cfg.virtual_sigma0,
        sigma_rate=cfg.virtual_sigma_rate,
        source=ObjectSource.VIRTUAL,
    )


def with_virtual_object(cfg: RiskConfig, objects: Sequence[ObjectPrediction]) -> List[ObjectPrediction]:
    virtual = make_virtual_eos_object(cfg, objects)
    return list(objects) + ([virtual] if virtual is not None else [])
