"""Reference paths with arc-length parametrization and Frenet projection."""
import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from errors import DegeneratePath, OutOfCorridor, ScenarioError

logger = logging.getLogger(__name__)

DEFAULT_CORRIDOR = 20.0


@dataclass(frozen=True)
class FrenetPose:
    s: float
    d: float  # positive left of the curve


@dataclass(frozen=True, eq=False)
class PathRef:
    """
    Densely sampled reference curve.

    Arrays share one index: arc length ``s`` (starting at 0), position ``x``/``y``,
    unwrapped tangent ``heading`` and curvature ``kappa``. Lookups between samples
    interpolate linearly.
    """
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    kappa: np.ndarray

    @property
    def total_length(self) -> float:
        return float(self.s[-1])

    @property
    def step(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def samples(self) -> List[Tuple[float, float, float, float, float]]:
        return list(zip(self.s.tolist(), self.x.tolist(), self.y.tolist(),
                        self.heading.tolist(), self.kappa.tolist()))

    def position(self, s):
        """(x, y) at arc length s; accepts scalars or arrays."""
        return np.interp(s, self.s, self.x), np.interp(s, self.s, self.y)

    def heading_at(self, s):
        return np.interp(s, self.s, self.heading)

    def curvature_at(self, s):
        return np.interp(s, self.s, self.kappa)


def build_path(waypoints: Sequence[Sequence[float]], resample_step: float) -> PathRef:
    """
    Resample a polyline at (approximately) constant arc-length spacing.

    Args:
        waypoints: Ordered (x, y) points, at least two.
        resample_step: Target spacing in meters.

    Returns:
        PathRef with heading from central differences and curvature from the
        derivative of the unwrapped heading over arc length.
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise DegeneratePath("need at least two (x, y) waypoints")
    if resample_step <= 0:
        raise DegeneratePath("resample_step must be > 0")

    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    if np.any(seg <= 1e-9):
        idx = int(np.argmin(seg))
        raise DegeneratePath(f"waypoints {idx} and {idx + 1} coincide")
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    total = float(cum[-1])
    if total < resample_step:
        raise DegeneratePath(f"path length {total:.3f} m is shorter than one step")

    n = max(2, int(round(total / resample_step)))
    s = np.linspace(0.0, total, n + 1)
    x = np.interp(s, cum, pts[:, 0])
    y = np.interp(s, cum, pts[:, 1])

    heading = np.unwrap(np.arctan2(np.gradient(y, s), np.gradient(x, s)))
    kappa = np.gradient(heading, s)
    kappa[0] = kappa[1]
    kappa[-1] = kappa[-2]
    return PathRef(s=s, x=x, y=y, heading=heading, kappa=kappa)


def compose_waypoints(start: Sequence[float], heading: float,
                      segments: Iterable[Mapping], spacing: float = 0.05) -> np.ndarray:
    """
    Expand turtle-style primitives into a dense polyline.

    Segments are ``{"line": length}`` or ``{"arc": {"radius": r, "angle": deg}}``
    where a positive angle turns left.
    """
    x, y = float(start[0]), float(start[1])
    h = float(heading)
    pts = [(x, y)]
    for i, seg in enumerate(segments):
        if "line" in seg:
            length = float(seg["line"])
            n = max(1, int(math.ceil(length / spacing)))
            for k in range(1, n + 1):
                d = length * k / n
                pts.append((x + d * math.cos(h), y + d * math.sin(h)))
            x, y = pts[-1]
        elif "arc" in seg:
            radius = float(seg["arc"]["radius"])
            angle = math.radians(float(seg["arc"]["angle"]))
            if radius <= 0:
                raise ScenarioError(f"segments[{i}].arc.radius", "must be > 0")
            side = 1.0 if angle > 0 else -1.0
            cx = x - side * radius * math.sin(h)
            cy = y + side * radius * math.cos(h)
            n = max(2, int(math.ceil(radius * abs(angle) / spacing)))
            for k in range(1, n + 1):
                hk = h + angle * k / n
                pts.append((cx + side * radius * math.sin(hk), cy - side * radius * math.cos(hk)))
            x, y = pts[-1]
            h += angle
        else:
            raise ScenarioError(f"segments[{i}]", "expected 'line' or 'arc'")
    return np.asarray(pts)


def load_path(doc: Mapping, field: str = "path") -> PathRef:
    """Build a path from ``{"waypoints": ...}`` or ``{"start", "heading", "segments"}``."""
    step = float(doc.get("resample_step", 0.25))
    if "waypoints" in doc:
        return build_path(doc["waypoints"], step)
    if "segments" in doc:
        if "start" not in doc:
            raise ScenarioError(f"{field}.start", "required with segments")
        heading = math.radians(float(doc.get("heading_deg", 0.0)))
        return build_path(compose_waypoints(doc["start"], heading, doc["segments"]), step)
    raise ScenarioError(field, "expected 'waypoints' or 'segments'")


def project_to_frenet(path: PathRef, point: Sequence[float],
                      corridor: float = DEFAULT_CORRIDOR) -> FrenetPose:
    """
    Foot point of ``point`` on the path and its signed lateral offset.

    The nearest sample is refined on its two adjacent polyline pieces; ties go to
    the smaller arc length.
    """
    px, py = float(point[0]), float(point[1])
    dist2 = (path.x - px) ** 2 + (path.y - py) ** 2
    i = int(np.argmin(dist2))

    best = None
    for j in (i - 1, i):
        if j < 0 or j + 1 >= len(path.s):
            continue
        ax, ay = path.x[j], path.y[j]
        ex, ey = path.x[j + 1] - ax, path.y[j + 1] - ay
        length2 = ex * ex + ey * ey
        t = min(1.0, max(0.0, ((px - ax) * ex + (py - ay) * ey) / length2))
        fx, fy = ax + t * ex, ay + t * ey
        dist = math.hypot(px - fx, py - fy)
        if best is None or dist < best[0] - 1e-12:
            norm = math.sqrt(length2)
            d = (ex * (py - fy) - ey * (px - fx)) / norm
            s = path.s[j] + t * (path.s[j + 1] - path.s[j])
            best = (dist, s, d)

    dist, s, d = best
    if dist > corridor:
        raise OutOfCorridor(f"point ({px:.2f}, {py:.2f}) is {dist:.2f} m from the path")
    return FrenetPose(s=float(s), d=float(d))


def frenet_to_cartesian(path: PathRef, s: float, d: float) -> Tuple[float, float]:
    x, y = path.position(s)
    h = path.heading_at(s)
    return float(x - d * np.sin(h)), float(y + d * np.cos(h))


def offset_path(path: PathRef, d: float) -> PathRef:
    """Parallel curve at lateral offset d (positive left), e.g. a lane boundary."""
    xs = path.x - d * np.sin(path.heading)
    ys = path.y + d * np.cos(path.heading)
    return build_path(np.column_stack((xs, ys)), path.step)
