import json
from pathlib import Path

import pytest

from context.situation import JunctionRule, MapRules, precompute_contexts
from env.scenario import build_map_rules, load_scenario
from geometry.path import build_path

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


def _load_doc(name: str) -> dict:
    with open(SCENARIOS / f"{name}.json") as f:
        return json.load(f)


@pytest.fixture
def scenario_doc():
    """Loader for the raw JSON of a bundled scenario."""
    return _load_doc


@pytest.fixture
def straight_route():
    return build_path([(0.0, 0.0), (200.0, 0.0)], 0.25)


@pytest.fixture
def straight_rules():
    """Yield line with the vehicle center stopping at s = 100, merge point 102, PGA 110."""
    return MapRules(v_sl=8.33, junctions=(JunctionRule(yield_line=102.25, pga=110.0, conflict=102.0),))


@pytest.fixture
def straight_contexts(straight_route, straight_rules):
    return precompute_contexts(straight_route, straight_rules)


@pytest.fixture
def pilot():
    return load_scenario(SCENARIOS / "no_traffic.json")


@pytest.fixture
def pilot_contexts(pilot):
    return precompute_contexts(pilot.ego_path, build_map_rules(pilot))
