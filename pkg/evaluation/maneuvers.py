"""
Run logs and maneuver categorization.

A run is categorized from the order in which main-road users pass the
conflict point relative to the ego, and from standstill at the yield line.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from config import CONFIG, EvalConfig, VehicleParams
from context.profiles import braking_envelope, static_profile
from env.scenario import Scenario, build_map_rules
from errors import Unfinished
from evaluation.metrics import jerk_stats

logger = logging.getLogger(__name__)

# trajectory.csv column order; actor columns "actor:<id>" follow in scenario order
COLUMNS = ("t", "x", "y", "phi", "v", "a", "delta", "s", "d_lane", "behavior", "p_risk")
ACTOR_PREFIX = "actor:"


@dataclass
class RunLog:
    """Per-frame ego state and actor positions (ego route coordinate, NaN when gone)."""
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    v: np.ndarray
    a: np.ndarray
    delta: np.ndarray
    s: np.ndarray
    d_lane: np.ndarray
    behavior: List[str] = field(default_factory=list)
    p_risk: np.ndarray = field(default_factory=lambda: np.zeros(0))
    actors: Dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def to_frame(self) -> pd.DataFrame:
        data = {name: getattr(self, name) for name in COLUMNS}
        for actor_id, s in self.actors.items():
            data[ACTOR_PREFIX + actor_id] = s
        return pd.DataFrame(data)

    def to_csv(self, path: Union[str, Path]):
        self.to_frame().to_csv(path, index=False, float_format="%.6f", na_rep="nan")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "RunLog":
        missing = [c for c in COLUMNS if c not in frame.columns]
        if missing:
            raise ValueError(f"trajectory log lacks columns {missing}")
        cols = {name: frame[name].to_numpy(dtype=float) for name in COLUMNS if name != "behavior"}
        actors = {c[len(ACTOR_PREFIX):]: frame[c].to_numpy(dtype=float)
                  for c in frame.columns if c.startswith(ACTOR_PREFIX)}
        return cls(behavior=frame["behavior"].astype(str).tolist(), actors=actors, **cols)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "RunLog":
        return cls.from_frame(pd.read_csv(path))


@dataclass(frozen=True)
class ManeuverRecord:
    category: str
    t_f: float  # arrival at the PGA
    t_conflict: float
    passed_before: Tuple[str, ...] = ()
    passed_after: Tuple[str, ...] = ()
    standstill: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if not self.t_f > 0:
            raise ValueError("t_f must be > 0")


def crossing_time(t: np.ndarray, s: np.ndarray, s_mark: float) -> Optional[float]:
    """First time s reaches s_mark, linearly interpolated; None if it never does."""
    valid = ~np.isnan(s)
    hits = np.flatnonzero(valid & (s >= s_mark))
    if len(hits) == 0:
        return None
    k = int(hits[0])
    if k == 0 or not valid[k - 1] or s[k - 1] >= s_mark:
        return float(t[k])
    w = (s_mark - s[k - 1]) / (s[k] - s[k - 1])
    return float(t[k - 1] + w * (t[k] - t[k - 1]))


def _extrapolated_passage(t: np.ndarray, s: np.ndarray, s_mark: float) -> Optional[float]:
    """Constant-speed passage time for an actor still upstream at the end of the log."""
    valid = np.flatnonzero(~np.isnan(s))
    if len(valid) < 2 or valid[-1] != len(s) - 1:
        return None  # turned off before the end
    k0, k1 = valid[-2], valid[-1]
    v = (s[k1] - s[k0]) / (t[k1] - t[k0])
    if v <= 0.1:
        return None
    return float(t[k1] + (s_mark - s[k1]) / v)


def standstill_interval(log: RunLog, s_stop: float, cfg: Optional[EvalConfig] = None):
    """First (t_start, t_end) with v below the standstill speed near the yield line."""
    cfg = cfg or CONFIG.evaluation
    still = (log.v < cfg.standstill_speed) & (np.abs(log.s - s_stop) <= cfg.standstill_zone)
    start = None
    for k, flag in enumerate(still):
        if flag and start is None:
            start = k
        if (not flag or k == len(still) - 1) and start is not None:
            end = k if flag else k - 1
            if log.t[end] - log.t[start] >= cfg.standstill_duration - 1e-9:
                return float(log.t[start]), float(log.t[end])
            start = None
    return None


def _slowed_below_profile(log: RunLog, scenario: Scenario, s_stop: float, cfg: EvalConfig) -> bool:
    rules = build_map_rules(scenario)
    path = scenario.ego_path
    profile = static_profile(path, rules.v_sl, rules.a_perp_max, rules.assumptions.curve_constant_speed)
    envelope = braking_envelope(profile, path, cfg.profile_decel)
    window = (log.s >= s_stop - cfg.profile_window) & (log.s <= s_stop)
    if not np.any(window):
        return False
    reference = np.asarray(envelope(log.s[window]), dtype=float)
    return bool(np.any(log.v[window] < cfg.gap_profile_ratio * reference))


def categorize_maneuver(log: RunLog, scenario: Scenario, cfg: Optional[EvalConfig] = None,
                        vehicle: Optional[VehicleParams] = None) -> ManeuverRecord:
    """
    Assign one merging category to a finished run.

    Raises:
        Unfinished: the ego never reached the PGA.
    """
    cfg = cfg or CONFIG.evaluation
    j = scenario.junction
    if j is None:
        raise Unfinished(f"scenario {scenario.name} has no junction to categorize")
    t_f = crossing_time(log.t, log.s, j.pga)
    if t_f is None or t_f <= 0:
        raise Unfinished(f"run ended at s={log.s[-1]:.2f} m before the PGA at {j.pga:.2f} m")
    t_cross = crossing_time(log.t, log.s, j.conflict)

    before, after = [], []
    lanes = {a.id: a.lane for a in scenario.actors}
    for actor_id, s in log.actors.items():
        if lanes.get(actor_id) != j.target_lane:
            continue
        t_actor = crossing_time(log.t, s, j.conflict)
        if t_actor is None:
            t_actor = _extrapolated_passage(log.t, s, j.conflict)
        if t_actor is None or abs(t_actor - t_cross) > cfg.interaction_window:
            continue
        (before if t_actor < t_cross else after).append(actor_id)

    stop = standstill_interval(log, scenario.s_stop(vehicle), cfg)
    if stop is not None:
        category = "stop_then_merge"
    elif before and after:
        slowed = _slowed_below_profile(log, scenario, scenario.s_stop(vehicle), cfg)
        category = "merge_gap_class2" if slowed else "merge_gap_class1"
    elif before:
        category = "merge_behind"
    elif after:
        category = "merge_before"
    else:
        category = "no_traffic"
    logger.debug("%s: %s (t_f=%.2f s, before=%s, after=%s)", scenario.name, category, t_f, before, after)
    return ManeuverRecord(category=category, t_f=t_f, t_conflict=t_cross, passed_before=tuple(before),
                          passed_after=tuple(after), standstill=stop)


def summarize_run(log: RunLog, scenario: Scenario, cfg: Optional[EvalConfig] = None,
                  planned_jerk: Optional[float] = None) -> dict:
    """Metrics of one run as written to metrics.json."""
    cfg = cfg or CONFIG.evaluation
    smoothed, raw = jerk_stats(log.t, log.a, cfg.smoothing_window)
    d_min = float(np.nanmin(log.d_lane)) if len(log) else math.nan
    metrics = {
        "scenario": scenario.name,
        "min_d_lane": d_min,
        "lane_margin_flag": bool(d_min < cfg.min_lane_margin),
        "max_jerk_smoothed": smoothed,
        "max_jerk_raw": raw,
        "comfortable": bool(smoothed <= cfg.comfort_jerk),
        "planned_max_jerk": planned_jerk,
        "marks": {},
    }
    j = scenario.junction
    if j is not None:
        metrics["marks"] = {"yield line": scenario.s_stop(), "PGA": j.pga}
    try:
        record = categorize_maneuver(log, scenario, cfg)
        metrics.update(category=record.category, t_f=record.t_f, t_conflict=record.t_conflict,
                       standstill=list(record.standstill) if record.standstill else None)
    except Unfinished as exc:
        logger.warning("run not categorized: %s", exc)
        metrics.update(category=None, t_f=None, t_conflict=None, standstill=None)
    return metrics
