"""Write the artifacts of one closed-loop run."""
import json
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np

from evaluation.maneuvers import RunLog

logger = logging.getLogger(__name__)


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_json(path: Path, payload, indent: int = 2):
    with open(path, "w") as f:
        json.dump(_clean(payload), f, indent=indent, sort_keys=True)


class RunRecorder:
    """
    Collects per-cycle planner output and writes the run directory.

    Output:
        <out_dir>/
            trajectory.csv   # per simulation step, fixed column order
            candidates.json  # per planning cycle: winner and every evaluated option
            metrics.json     # category, t_f, min d_Lane, jerk maxima
            timing.json      # wall-clock planning / tracking time per cycle

    Every file except timing.json is reproducible for a fixed scenario and seed.
    """

    def __init__(self, out_dir, keep_candidate_trajectories: bool = False):
        self.output_dir = Path(out_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.keep_candidate_trajectories = keep_candidate_trajectories
        self.cycles: List[dict] = []
        self.timing: List[dict] = []

    def add_cycle(self, t: float, ego_s: float, result, plan_ms: float, track_ms: float,
                  tracker_fallback: bool = False):
        record = result.to_record()
        if not self.keep_candidate_trajectories:
            record["candidates"] = [{k: v for k, v in c.items() if k != "trajectory"}
                                    for c in record["candidates"]]
        record.update(t=round(t, 6), ego_s=ego_s, tracker_fallback=tracker_fallback)
        self.cycles.append(record)
        self.timing.append({"t": round(t, 6), "plan_ms": plan_ms, "track_ms": track_ms,
                            "options": result.evaluated})

    def timing_summary(self) -> dict:
        plan = np.array([c["plan_ms"] for c in self.timing]) if self.timing else np.zeros(1)
        track = np.array([c["track_ms"] for c in self.timing]) if self.timing else np.zeros(1)
        return {
            "plan_ms_median": float(np.median(plan)),
            "plan_ms_p95": float(np.percentile(plan, 95)),
            "plan_ms_max": float(np.max(plan)),
            "track_ms_median": float(np.median(track)),
            "track_ms_max": float(np.max(track)),
            "cycles": len(self.timing),
        }

    def save(self, log: RunLog, metrics: dict, meta: Optional[dict] = None):
        log.to_csv(self.output_dir / "trajectory.csv")
        write_json(self.output_dir / "candidates.json", {"meta": meta or {}, "cycles": self.cycles}, indent=None)
        write_json(self.output_dir / "metrics.json", dict(metrics, **(meta or {})))
        write_json(self.output_dir / "timing.json", {"summary": self.timing_summary(), "cycles": self.timing})
        logger.info("saved %d frames and %d planning cycles to %s", len(log), len(self.cycles), self.output_dir)
