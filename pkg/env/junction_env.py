"""Gymnasium environment for the yield junction."""
import logging
from typing import Optional

import cv2
import gymnasium as gym
import numpy as np
from gymnasium import spaces

from config import CONFIG, VehicleParams
from env.perception import actor_position, ego_fov_polygon
from env.scenario import Scenario
from env.world import WorldState, initial_world, step_world
from geometry.shapes import BoundingBox, bbox_corners

logger = logging.getLogger(__name__)

# RGB
ROAD = (90, 90, 90)
OCCLUDER = (150, 110, 70)
EGO = (30, 120, 230)
ACTOR = (220, 60, 50)
FOV_EGO = (200, 220, 255)
FOV_EXT = (210, 250, 210)
MARKING = (250, 250, 250)


class JunctionEnv(gym.Env):
    """
    Closed-loop junction simulation behind the gymnasium API.

    Action Space (Box):
        [jerk m/s^3, steering rate rad/s], applied for one simulation step.

    Observation Space (Box):
        [x, y, heading, v, a, steering angle, route progress s].

    The full world (actors included) is available as ``env.world`` and in the
    ``info`` dict. An episode terminates when the ego reaches the end of its
    route and is truncated at the scenario duration.
    """

    metadata = {"render_modes": ["rgb_array"], "render_fps": 20}

    def __init__(self, scenario: Scenario, dt: Optional[float] = None,
                 params: Optional[VehicleParams] = None, render_mode: Optional[str] = None,
                 image_size: int = 480):
        super().__init__()
        self.scenario = scenario
        self.dt = dt or CONFIG.tracker.step
        self.params = params or CONFIG.vehicle
        self.render_mode = render_mode
        self.image_size = image_size

        self.action_space = spaces.Box(low=np.array([-20.0, -self.params.ddelta_max], dtype=np.float32),
                                       high=np.array([20.0, self.params.ddelta_max], dtype=np.float32),
                                       dtype=np.float32)
        self.observation_space = spaces.Box(low=-np.inf, high=np.inf, shape=(7,), dtype=np.float64)
        self.world: Optional[WorldState] = None
        self._view = self._view_window()

    def reset(self, seed=None, options=None):
        """
        Start a new episode. The ego speed and actor start positions are
        perturbed by their jitter settings, drawn from the environment RNG.
        """
        super().reset(seed=seed)
        v0 = self.scenario.ego_v0
        if self.scenario.v0_jitter > 0:
            v0 += float(self.np_random.normal(0.0, self.scenario.v0_jitter))
        self.world = initial_world(self.scenario, v0, self.params, self.np_random)
        logger.debug("reset %s with v0=%.3f m/s", self.scenario.name, self.world.ego.v)
        return self._observation(), {"world": self.world}

    def step(self, action):
        if self.world is None:
            raise RuntimeError("call reset() before step()")
        u, ddelta = (float(x) for x in np.asarray(action, dtype=float).reshape(2))
        self.world = step_world(self.world, (u, ddelta), self.dt, self.scenario, self.params)
        terminated = self.world.ego_s >= self.scenario.ego_path.total_length - self.params.length / 2.0
        truncated = self.world.t >= self.scenario.duration - 1e-9
        return self._observation(), 0.0, bool(terminated), bool(truncated), {"world": self.world}

    def _observation(self) -> np.ndarray:
        return np.append(self.world.ego.as_array(), self.world.ego_s)

    def _view_window(self):
        xs = [self.scenario.ego_path.x]
        ys = [self.scenario.ego_path.y]
        for lane in self.scenario.lanes.values():
            xs.append(lane.path.x)
            ys.append(lane.path.y)
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        margin = 5.0
        span = max(np.ptp(x), np.ptp(y)) + 2 * margin
        return float(x.min() - margin), float(y.min() - margin), self.image_size / span

    def _pixels(self, points) -> np.ndarray:
        x0, y0, scale = self._view
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        px = (pts[:, 0] - x0) * scale
        py = self.image_size - (pts[:, 1] - y0) * scale
        return np.round(np.column_stack((px, py))).astype(np.int32)

    def _fill(self, frame, polygon, color):
        cv2.fillPoly(frame, [self._pixels(np.asarray(polygon.exterior.coords))], color)

    def render(self):
        """Top-down RGB frame of lanes, fields of view, occluders and vehicles."""
        if self.world is None:
            return None
        frame = np.full((self.image_size, self.image_size, 3), 235, dtype=np.uint8)
        if self.scenario.ext_fov is not None:
            self._fill(frame, self.scenario.ext_fov, FOV_EXT)
        ego = self.world.ego
        self._fill(frame, ego_fov_polygon(self.scenario, ego.x, ego.y, ego.phi), FOV_EGO)

        lane_px = max(1, int(round(3.5 * self._view[2])))
        for path in [self.scenario.ego_path] + [lane.path for lane in self.scenario.lanes.values()]:
            pts = self._pixels(np.column_stack((path.x, path.y)))
            cv2.polylines(frame, [pts], False, ROAD, lane_px)
            cv2.polylines(frame, [pts], False, MARKING, 1)
        for poly in self.scenario.occlusion_polygons:
            self._fill(frame, poly, OCCLUDER)

        for actor in self.world.actors:
            if not actor.active:
                continue
            lane = self.scenario.lane(actor.spec.lane)
            box = BoundingBox(actor_position(self.scenario, actor), float(lane.path.heading_at(actor.s)),
                              actor.spec.length, actor.spec.width)
            cv2.fillPoly(frame, [self._pixels(bbox_corners(box))], ACTOR)
        box = BoundingBox((ego.x, ego.y), ego.phi, self.params.length, self.params.width)
        cv2.fillPoly(frame, [self._pixels(bbox_corners(box))], EGO)

        cv2.putText(frame, f"t={self.world.t:5.2f}s v={ego.v:4.1f}m/s", (8, 20),
                    cv2.FONT_HERSHEY_SIMPLEX, 0.5, (0, 0, 0), 1, cv2.LINE_AA)
        return frame

    def close(self):
        self.world = None
