"""Vehicle boxes and lane / field-of-view polygons."""
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from shapely.geometry import Polygon

from errors import ScenarioError
from geometry.path import PathRef

Point = Tuple[float, float]


@dataclass(frozen=True)
class BoundingBox:
    center: Point
    heading: float
    length: float
    width: float

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("bounding box needs positive length and width")


def bbox_corners(box: BoundingBox) -> List[Point]:
    """Corners in the order FL, FR, RR, RL (clockwise for heading 0, y up)."""
    c, s = math.cos(box.heading), math.sin(box.heading)
    hl, hw = box.length / 2.0, box.width / 2.0
    corners = []
    for dx, dy in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)):
        corners.append((box.center[0] + c * dx - s * dy,
                        box.center[1] + s * dx + c * dy))
    return corners


def box_polygon(box: BoundingBox) -> Polygon:
    return Polygon(bbox_corners(box))


def lane_polygon(left: PathRef, right: PathRef) -> Polygon:
    """Area between two boundaries that run in the same direction."""
    ring = np.vstack((np.column_stack((left.x, left.y)),
                      np.column_stack((right.x[::-1], right.y[::-1]))))
    return Polygon(ring)


def sector_polygon(range_m: float, half_angle: float, segments: int = 24) -> Polygon:
    """Field of view in the vehicle frame: apex at the origin, x pointing forward."""
    angles = np.linspace(-half_angle, half_angle, segments + 1)
    ring = [(0.0, 0.0)] + [(range_m * math.cos(a), range_m * math.sin(a)) for a in angles]
    return Polygon(ring)


def as_polygon(points: Sequence[Sequence[float]], field: str = "polygon") -> Polygon:
    if len(points) < 3:
        raise ScenarioError(field, "a polygon needs at least three vertices")
    poly = Polygon([(float(p[0]), float(p[1])) for p in points])
    if not poly.is_valid:
        raise ScenarioError(field, "polygon is not simple")
    return poly
