import copy
import math

import numpy as np
import pytest

from context.situation import find_context
from env.actors import ActorState, initial_actors, step_actors
from env.junction_env import JunctionEnv
from env.perception import actor_position, line_of_sight, merge_object_lists, sense
from env.scenario import ActorSpec, load_scenario, parse_scenario, risk_config
from env.world import WorldState, initial_world, step_world
from errors import ScenarioError
from risk.model import ObjectPrediction, ObjectSource
from tracking.bicycle import VehicleState


def _actor(lane="main", s=0.0, v=8.33, **kwargs):
    return ActorState(spec=ActorSpec(id=kwargs.pop("id", f"{lane}@{s}"), lane=lane, s0=s, v0=v, **kwargs), s=s, v=v)


def test_constant_speed_actor():
    (moved,) = step_actors([_actor(s=10.0)], 0.1)
    assert moved.s == pytest.approx(10.833)
    assert moved.v == pytest.approx(8.33)
    with pytest.raises(ValueError):
        step_actors([_actor()], 0.0)


def test_turned_off_actor_stays_inactive():
    actors = (_actor(s=59.5, turn_off_at=60.0),)
    actors = step_actors(actors, 0.1)
    assert not actors[0].active
    s_off = actors[0].s
    for _ in range(10):
        actors = step_actors(actors, 0.1)
    assert not actors[0].active
    assert actors[0].s == s_off


def test_idm_stops_behind_a_standing_leader():
    actors = (_actor(id="leader", s=100.0, v=0.0),
              _actor(id="follower", s=40.0, v=8.33, behavior="idm_follow"))
    for _ in range(600):
        actors = step_actors(actors, 0.1)
        leader, follower = actors
        assert leader.s - follower.s - 4.5 >= 2.0 - 1e-9
    assert follower.v < 0.1
    assert leader.s == 100.0


def test_initial_actor_jitter_uses_the_rng():
    spec = ActorSpec("a", "main", 50.0, 8.33, s0_jitter=2.0)
    (plain,) = initial_actors([spec])
    assert plain.s == 50.0
    first = initial_actors([spec], np.random.default_rng(4))
    again = initial_actors([spec], np.random.default_rng(4))
    assert first[0].s == again[0].s != 50.0


def test_pilot_scenario_geometry(pilot):
    assert pilot.ego_path.total_length == pytest.approx(85.75 + 12.5 * math.pi / 2 + 60.0, abs=0.1)
    assert pilot.s_stop() == pytest.approx(95.0)
    assert pilot.lane("main").to_ego(262.5) == pytest.approx(105.385)
    assert risk_config(pilot).eos_position == pytest.approx(20.385)
    assert not pilot.lane("opposite").relevant


def _world_with(pilot, *actors):
    ego = VehicleState(0.0, -15.0, math.pi / 2, 5.0, 0.0, 0.0)
    return WorldState(t=0.0, ego=ego, ego_s=85.0, actors=tuple(actors))


def test_occluded_actor_is_seen_only_by_the_external_sensor(pilot):
    l_ego, l_ext = sense(_world_with(pilot, _actor(s=220.0)), pilot)
    assert l_ego == []
    assert len(l_ext) == 1
    assert l_ext[0].source == ObjectSource.EXTERNAL


def test_visible_actor_is_on_both_lists(pilot):
    l_ego, l_ext = sense(_world_with(pilot, _actor(s=250.0)), pilot)
    assert len(l_ego) == 1 and len(l_ext) == 1
    assert l_ego[0].s == pytest.approx(pilot.lane("main").to_ego(250.0))


def test_far_actor_is_not_sensed(pilot):
    assert sense(_world_with(pilot, _actor(s=172.5)), pilot) == ([], [])


def test_external_latency_is_compensated(pilot):
    actor = _actor(s=220.0)
    _, (obj,) = sense(_world_with(pilot, actor), pilot)
    assert obj.t0 == pytest.approx(-pilot.latency_ext)
    assert float(obj.mu(0.0)) == pytest.approx(pilot.lane("main").to_ego(220.0))


def test_merge_prefers_the_ego_track(pilot_contexts):
    ctx = find_context(pilot_contexts, 85.0)
    ego_obj = ObjectPrediction("e1", "main", 60.0, 8.33, source=ObjectSource.EGO)
    ext_obj = ObjectPrediction("x1", "main", 60.3, 8.33, source=ObjectSource.EXTERNAL)
    merged = merge_object_lists([ego_obj], [ext_obj], ctx)
    assert [o.id for o in merged] == ["e1"]
    assert merged[0].source == ObjectSource.EGO


def test_unmatched_external_objects_are_added(pilot_contexts):
    ctx = find_context(pilot_contexts, 85.0)
    ego_obj = ObjectPrediction("e1", "main", 60.0, 8.33, source=ObjectSource.EGO)
    ext_obj = ObjectPrediction("x2", "main", 20.0, 8.33, source=ObjectSource.EXTERNAL)
    assert {o.id for o in merge_object_lists([ego_obj], [ext_obj], ctx)} == {"e1", "x2"}


def test_discrepancy_falls_back_to_the_ego_list(pilot_contexts):
    ctx = find_context(pilot_contexts, 85.0)
    ego_obj = ObjectPrediction("e1", "main", 60.0, 8.33, source=ObjectSource.EGO)
    ext = [ObjectPrediction("x1", "main", 65.0, 8.33, source=ObjectSource.EXTERNAL),
           ObjectPrediction("x2", "main", 20.0, 8.33, source=ObjectSource.EXTERNAL)]
    assert [o.id for o in merge_object_lists([ego_obj], ext, ctx)] == ["e1"]


def test_irrelevant_lane_is_dropped_unless_violating(pilot_contexts):
    ctx = find_context(pilot_contexts, 85.0)
    oncoming = ObjectPrediction("o1", "opposite", 140.0, 8.33, source=ObjectSource.EGO)
    assert merge_object_lists([oncoming], [], ctx) == []
    speeding = ObjectPrediction("o2", "opposite", 140.0, 15.0, source=ObjectSource.EGO)
    assert [o.id for o in merge_object_lists([speeding], [], ctx)] == ["o2"]


def test_scenario_errors_name_the_field(scenario_doc, tmp_path):
    doc = copy.deepcopy(scenario_doc("no_traffic"))
    doc["actors"][0]["v0"] = "fast"
    with pytest.raises(ScenarioError) as info:
        parse_scenario(doc)
    assert info.value.field == "actors[0].v0"

    doc = copy.deepcopy(scenario_doc("no_traffic"))
    doc["junctions"][0]["target_lane"] = "side"
    with pytest.raises(ScenarioError) as info:
        parse_scenario(doc)
    assert info.value.field == "junctions[0].target_lane"

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ScenarioError) as info:
        load_scenario(broken)
    assert info.value.field == "<json>"


def test_step_world_is_deterministic(pilot):
    def roll():
        world = initial_world(pilot)
        for k in range(40):
            world = step_world(world, (0.1 * math.sin(k), 0.0), 0.05, pilot)
        return world

    first, second = roll(), roll()
    assert first == second
    assert first.ego_s > pilot.ego_s0


def test_ego_never_reverses(pilot):
    world = initial_world(pilot, v0=1.0)
    for _ in range(100):
        world = step_world(world, (-5.0, 0.0), 0.05, pilot)
        assert world.ego.v >= 0.0


def test_gym_env_api(pilot):
    env = JunctionEnv(pilot, render_mode="rgb_array")
    obs, info = env.reset(seed=0)
    assert obs.shape == (7,)
    assert "world" in info
    obs, reward, terminated, truncated, info = env.step(np.array([0.0, 0.0]))
    assert obs.shape == (7,)
    assert not terminated and not truncated
    frame = env.render()
    assert frame.shape == (480, 480, 3)
    assert frame.dtype == np.uint8
    env.close()
    with pytest.raises(RuntimeError):
        env.step(np.zeros(2))


def test_occluded_actors_never_reach_the_ego_list(pilot, pilot_contexts):
    ctx = find_context(pilot_contexts, 85.0)
    rng = np.random.default_rng(5)
    hidden = 0
    for s in np.linspace(150.0, 300.0, 61):
        world = _world_with(pilot, _actor(s=float(s)))
        l_ego, l_ext = sense(world, pilot, rng)
        xy = actor_position(pilot, world.actors[0])
        if not line_of_sight((world.ego.x, world.ego.y), xy, pilot.occlusion_polygons):
            hidden += 1
            assert l_ego == []
        merged = merge_object_lists(l_ego, l_ext, ctx)
        assert all(any(m is o for m in merged) for o in l_ego)
        assert all(o.source == ObjectSource.EGO for o in merged if o.id in {e.id for e in l_ego})
    assert hidden > 0
