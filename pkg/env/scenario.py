"""
Scenario JSON: junction geometry, traffic and perception setup.

Schema (all positions in meters, speeds in m/s)::

    {
      "name": "merge_behind", "seed": 7, "duration": 25.0,
      "ego": {"path": {...}, "s0": 30.0, "v0": 8.33, "v0_jitter": 0.05},
      "rules": {"v_sl": 8.33, "a_min": -4.0, ...},
      "junctions": [{"yield_line": 97.25, "pga": 120.0, "conflict": 105.39, "target_lane": "main"}],
      "lanes": {"main": {"path": {...}, "anchor": [162.5, 105.39], "relevant": true, "rational": true}},
      "occlusions": [[[x, y], ...]],
      "ego_fov": {"range": 60.0, "half_angle_deg": 100.0},
      "ext_fov": [[x, y], ...],
      "eos": {"lane": "main", "lane_s": 77.5, "speed": 8.33},
      "reliability": {"alpha": 0.9, "schedule": [[0.0, 50.0, 1.0]]},
      "actors": [{"id": "a1", "lane": "main", "s0": 60.0, "v0": 8.33, "behavior": "idm_follow"}],
      "expected_category": "merge_behind"
    }

A lane anchor ``[lane_s, ego_s]`` ties the lane coordinate to the ego route
coordinate; objects are handed to the planner in the ego coordinate.
"""
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

from shapely.geometry import Polygon

from config import CONFIG, PerceptionConfig, PredictionConfig, RiskConfig, VehicleParams
from context.situation import JunctionRule, MapRules, RegularizingAssumptions
from errors import DegeneratePath, ScenarioError
from geometry.path import PathRef, load_path
from geometry.shapes import as_polygon, sector_polygon

logger = logging.getLogger(__name__)

BEHAVIORS = ("constant_speed", "idm_follow")
CATEGORIES = ("no_traffic", "merge_before", "merge_behind", "merge_gap_class1",
              "merge_gap_class2", "stop_then_merge")


@dataclass(frozen=True)
class ActorSpec:
    id: str
    lane: str
    s0: float  # lane coordinate
    v0: float
    behavior: str = "constant_speed"
    turn_off_at: Optional[float] = None  # lane coordinate where the actor leaves
    length: float = 4.5
    width: float = 1.8
    desired_speed: Optional[float] = None  # IDM target, defaults to v0
    s0_jitter: float = 0.0  # std of the start position across repetitions

    def __post_init__(self):
        if self.v0 < 0:
            raise ValueError("v0 must be >= 0")
        if self.behavior not in BEHAVIORS:
            raise ValueError(f"behavior must be one of {BEHAVIORS}")
        if self.length <= 0 or self.width <= 0:
            raise ValueError("actor dimensions must be > 0")

    @property
    def v_desired(self) -> float:
        return self.v0 if self.desired_speed is None else self.desired_speed


@dataclass(frozen=True, eq=False)
class LaneSpec:
    id: str
    path: PathRef
    anchor: Tuple[float, float] = (0.0, 0.0)  # (lane s, ego route s) of the same point
    relevant: bool = True
    rational: bool = True

    def to_ego(self, s_lane):
        return s_lane - self.anchor[0] + self.anchor[1]

    def from_ego(self, s_ego):
        return s_ego - self.anchor[1] + self.anchor[0]


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    ego_path: PathRef
    ego_s0: float
    ego_v0: float
    lanes: Dict[str, LaneSpec]
    junctions: Tuple[JunctionRule, ...] = ()
    rules: Dict[str, Any] = field(default_factory=dict)
    occlusion_polygons: Tuple[Polygon, ...] = ()
    ego_fov: Polygon = field(default_factory=lambda: sector_polygon(60.0, math.radians(100.0)))
    ext_fov: Optional[Polygon] = None
    actors: Tuple[ActorSpec, ...] = ()
    latency_ext: float = 0.015
    seed: int = 0
    duration: float = 30.0
    v0_jitter: float = 0.0
    eos: Optional[Dict[str, Any]] = None
    reliability_alpha: float = 0.9
    reliability_schedule: Tuple[Tuple[float, float, float], ...] = ((0.0, 50.0, 1.0),)
    risk: RiskConfig = field(default_factory=RiskConfig)
    prediction: PredictionConfig = field(default_factory=PredictionConfig)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    expected_category: Optional[str] = None
    source: Optional[str] = None

    def __post_init__(self):
        if self.ego_fov is not None and not self.ego_fov.is_valid:
            raise ValueError("ego_fov must be simple")
        if self.ext_fov is not None and not self.ext_fov.is_valid:
            raise ValueError("ext_fov must be simple")
        for j in self.junctions:
            if not j.yield_line < j.pga:
                raise ValueError("yield line must lie before the PGA")

    @property
    def junction(self) -> Optional[JunctionRule]:
        return self.junctions[0] if self.junctions else None

    def s_stop(self, vehicle: Optional[VehicleParams] = None) -> Optional[float]:
        """Yield-line position of the vehicle center on the ego route."""
        vehicle = vehicle or CONFIG.vehicle
        j = self.junction
        return None if j is None else j.yield_line - vehicle.length / 2.0

    def lane(self, lane_id: str) -> LaneSpec:
        return self.lanes[lane_id]


def _number(doc: Mapping, key: str, where: str, default=None, positive=False, minimum=None) -> float:
    if key not in doc:
        if default is None:
            raise ScenarioError(f"{where}{key}", "required")
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"{where}{key}", f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ScenarioError(f"{where}{key}", "must be > 0")
    if minimum is not None and value < minimum:
        raise ScenarioError(f"{where}{key}", f"must be >= {minimum}")
    return float(value)


def _path(doc: Any, where: str) -> PathRef:
    if not isinstance(doc, Mapping):
        raise ScenarioError(where, "expected an object with waypoints or segments")
    try:
        return load_path(doc, where)
    except DegeneratePath as exc:
        raise ScenarioError(where, str(exc)) from exc


def _override(section, doc: Optional[Mapping], where: str):
    """Copy of a config section with the keys given in the scenario replaced."""
    if not doc:
        return section
    known = {f.name for f in fields(section)}
    for key in doc:
        if key not in known:
            raise ScenarioError(f"{where}.{key}", "unknown setting")
    try:
        return replace(section, **doc)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(where, str(exc)) from exc


def _actor(doc: Any, i: int, lanes: Mapping[str, LaneSpec]) -> ActorSpec:
    where = f"actors[{i}]."
    if not isinstance(doc, Mapping):
        raise ScenarioError(f"actors[{i}]", "expected an object")
    lane = doc.get("lane", "main")
    if lane not in lanes:
        raise ScenarioError(f"{where}lane", f"unknown lane {lane!r}")
    behavior = doc.get("behavior", "constant_speed")
    if behavior not in BEHAVIORS:
        raise ScenarioError(f"{where}behavior", f"expected one of {BEHAVIORS}")
    turn_off = doc.get("turn_off_at")
    return ActorSpec(
        id=str(doc.get("id", f"actor{i}")),
        lane=lane,
        s0=_number(doc, "s0", where),
        v0=_number(doc, "v0", where, minimum=0.0),
        behavior=behavior,
        turn_off_at=None if turn_off is None else _number(doc, "turn_off_at", where),
        length=_number(doc, "length", where, default=4.5, positive=True),
        width=_number(doc, "width", where, default=1.8, positive=True),
        desired_speed=_number(doc, "desired_speed", where, positive=True) if "desired_speed" in doc else None,
        s0_jitter=_number(doc, "s0_jitter", where, default=0.0, minimum=0.0),
    )


def parse_scenario(doc: Mapping, source: Optional[str] = None) -> Scenario:
    """
    Validate a scenario document.

    Raises:
        ScenarioError: naming the first offending field.
    """
    if not isinstance(doc, Mapping):
        raise ScenarioError("<root>", "expected a JSON object")
    ego = doc.get("ego")
    if not isinstance(ego, Mapping):
        raise ScenarioError("ego", "required object")
    ego_path = _path(ego.get("path"), "ego.path")

    lanes = {}
    for lane_id, lane_doc in (doc.get("lanes") or {}).items():
        where = f"lanes.{lane_id}"
        if not isinstance(lane_doc, Mapping):
            raise ScenarioError(where, "expected an object")
        anchor = lane_doc.get("anchor", (0.0, 0.0))
        if not (isinstance(anchor, Sequence) and len(anchor) == 2):
            raise ScenarioError(f"{where}.anchor", "expected [lane_s, ego_s]")
        lanes[lane_id] = LaneSpec(id=lane_id, path=_path(lane_doc.get("path"), f"{where}.path"),
                                  anchor=(float(anchor[0]), float(anchor[1])),
                                  relevant=bool(lane_doc.get("relevant", True)),
                                  rational=bool(lane_doc.get("rational", True)))

    junctions = []
    for i, j in enumerate(doc.get("junctions") or ()):
        where = f"junctions[{i}]."
        if not isinstance(j, Mapping):
            raise ScenarioError(f"junctions[{i}]", "expected an object")
        rule = JunctionRule(yield_line=_number(j, "yield_line", where), pga=_number(j, "pga", where),
                            conflict=_number(j, "conflict", where), target_lane=j.get("target_lane", "main"))
        if not rule.yield_line < rule.conflict <= rule.pga:
            raise ScenarioError(f"{where}pga", "need yield_line < conflict <= pga")
        if rule.pga > ego_path.total_length:
            raise ScenarioError(f"{where}pga", "beyond the end of the ego path")
        if rule.target_lane not in lanes:
            raise ScenarioError(f"{where}target_lane", f"unknown lane {rule.target_lane!r}")
        junctions.append(rule)

    occlusions = tuple(as_polygon(p, f"occlusions[{i}]") for i, p in enumerate(doc.get("occlusions") or ()))
    fov_doc = doc.get("ego_fov", {})
    if not isinstance(fov_doc, Mapping):
        raise ScenarioError("ego_fov", "expected {range, half_angle_deg}")
    ego_fov = sector_polygon(_number(fov_doc, "range", "ego_fov.", default=60.0, positive=True),
                             math.radians(_number(fov_doc, "half_angle_deg", "ego_fov.", default=100.0,
                                                  positive=True)))
    ext_fov = as_polygon(doc["ext_fov"], "ext_fov") if doc.get("ext_fov") else None

    eos = doc.get("eos")
    if eos is not None:
        if not isinstance(eos, Mapping) or eos.get("lane", "main") not in lanes:
            raise ScenarioError("eos.lane", "unknown lane")
        _number(eos, "lane_s", "eos.")

    rel = doc.get("reliability") or {}
    schedule = tuple(tuple(float(x) for x in entry) for entry in rel.get("schedule", ((0.0, 50.0, 1.0),)))
    if not schedule or any(len(e) != 3 or e[1] <= 0 or e[2] <= 0 for e in schedule):
        raise ScenarioError("reliability.schedule", "expected [[t, beta_a > 0, beta_b > 0], ...]")

    rules = dict(doc.get("rules") or {})
    unknown = set(rules) - {"v_sl", "a_min", "a_max", "a_perp_max", "T_pred", "p_risk_max"}
    if unknown:
        raise ScenarioError(f"rules.{sorted(unknown)[0]}", "unknown rule")

    category = doc.get("expected_category")
    if category is not None and category not in CATEGORIES:
        raise ScenarioError("expected_category", f"expected one of {CATEGORIES}")

    s0 = _number(ego, "s0", "ego.", default=0.0, minimum=0.0)
    if s0 >= ego_path.total_length:
        raise ScenarioError("ego.s0", "beyond the end of the ego path")
    try:
        return Scenario(
            name=str(doc.get("name", Path(source).stem if source else "scenario")),
            ego_path=ego_path,
            ego_s0=s0,
            ego_v0=_number(ego, "v0", "ego.", default=0.0, minimum=0.0),
            lanes=lanes,
            junctions=tuple(junctions),
            rules=rules,
            occlusion_polygons=occlusions,
            ego_fov=ego_fov,
            ext_fov=ext_fov,
            actors=tuple(_actor(a, i, lanes) for i, a in enumerate(doc.get("actors") or ())),
            latency_ext=_number(doc, "latency_ext", "", default=CONFIG.perception.latency_ext, minimum=0.0),
            seed=int(doc.get("seed", 0)),
            duration=_number(doc, "duration", "", default=30.0, positive=True),
            v0_jitter=_number(ego, "v0_jitter", "ego.", default=0.0, minimum=0.0),
            eos=dict(eos) if eos is not None else None,
            reliability_alpha=_number(rel, "alpha", "reliability.", default=0.9, minimum=0.0),
            reliability_schedule=schedule,
            risk=_override(CONFIG.risk, doc.get("risk"), "risk"),
            prediction=_override(CONFIG.prediction, doc.get("prediction"), "prediction"),
            perception=_override(CONFIG.perception, doc.get("perception"), "perception"),
            expected_category=category,
            source=source,
        )
    except ValueError as exc:
        raise ScenarioError("<root>", str(exc)) from exc


def load_scenario(path: Union[str, Path]) -> Scenario:
    """
    Load and validate a scenario file.

    Raises:
        ScenarioError: unreadable JSON or an invalid field.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError("<file>", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError("<json>", f"line {exc.lineno}: {exc.msg}") from exc
    scenario = parse_scenario(doc, str(path))
    logger.info("loaded scenario %s (%d actors, %d junctions)", scenario.name,
                len(scenario.actors), len(scenario.junctions))
    return scenario


def risk_config(scenario: Scenario) -> RiskConfig:
    """Risk parameters with the end of sight and merge point in ego coordinates."""
    risk = scenario.risk
    j = scenario.junction
    if j is not None:
        risk = replace(risk, conflict_position=j.conflict)
    if scenario.eos is not None:
        lane = scenario.lane(scenario.eos.get("lane", "main"))
        risk = replace(risk, eos_lane=lane.id, eos_position=float(lane.to_ego(scenario.eos["lane_s"])),
                       eos_speed=float(scenario.eos.get("speed", risk.eos_speed)))
    return risk


def build_map_rules(scenario: Scenario) -> MapRules:
    """Rules and regularizing assumptions consumed by precompute_contexts."""
    relevant = frozenset(["ego"] + [k for k, lane in scenario.lanes.items() if lane.relevant])
    fovs = tuple(p for p in (scenario.ext_fov,) if p is not None)
    assumptions = RegularizingAssumptions(
        fov_polygons=fovs,
        rational_driver={k: lane.rational for k, lane in scenario.lanes.items()},
        relevant_lanes=relevant,
        target_lanes=frozenset(j.target_lane for j in scenario.junctions) or frozenset({"main"}),
        risk_params=risk_config(scenario),
    )
    return MapRules(junctions=scenario.junctions, assumptions=assumptions, **scenario.rules)
