"""Lane-keeping margin and comfort statistics."""
from typing import Tuple

import numpy as np
from scipy.ndimage import uniform_filter1d

from config import CONFIG
from geometry.path import PathRef, project_to_frenet
from geometry.shapes import BoundingBox, bbox_corners


def d_lane(ego_box: BoundingBox, left: PathRef, right: PathRef) -> float:
    """
    Smallest distance of a box corner to the lane boundaries, positive on the lane.

    Left corners (FL, RL) are measured against the left boundary, right corners
    (FR, RR) against the right one; both boundaries run in driving direction.

    Raises:
        OutOfCorridor: a corner is too far from a boundary to project.
    """
    fl, fr, rr, rl = bbox_corners(ego_box)
    d_fl = project_to_frenet(left, fl).d
    d_rl = project_to_frenet(left, rl).d
    d_fr = project_to_frenet(right, fr).d
    d_rr = project_to_frenet(right, rr).d
    return float(min(-d_fl, d_fr, d_rr, -d_rl))


def jerk_stats(t, a, smoothing_window: float = None) -> Tuple[float, float]:
    """
    Maximum |jerk| of an acceleration log, (smoothed, raw).

    Jerk is the central difference of the logged acceleration; the smoothed
    series is a centered moving average over ``smoothing_window`` seconds.
    """
    window = CONFIG.evaluation.smoothing_window if smoothing_window is None else smoothing_window
    t = np.asarray(t, dtype=float)
    a = np.asarray(a, dtype=float)
    if len(t) < 3:
        return 0.0, 0.0
    jerk = np.gradient(a, t)
    dt = float(np.median(np.diff(t)))
    size = max(1, int(round(window / dt)))
    smoothed = uniform_filter1d(jerk, size=size, mode="nearest")
    return float(np.max(np.abs(smoothed))), float(np.max(np.abs(jerk)))
