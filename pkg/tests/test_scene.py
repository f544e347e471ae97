import json
import math
from pathlib import Path

import pytest
import shapely.geometry as sg
from hypothesis import given, settings, strategies as st

from mgplan.dynamics import Action, State, Trajectory, propagate
from mgplan.errors import ParseError, ValidationError
from mgplan.geom import Polygon
from mgplan.scene import (RandomInstanceSpec, generate_scene, load_scene, loads_scene,
                          save_scene, validate_trajectory)

FIX = Path(__file__).parent / "fixtures"


def test_handmade_fixture_loads():
    sc = load_scene(FIX / "scene_handmade.json")
    assert len(sc.obstacles) == 2
    assert [g.id for g in sc.goals] == [0, 1, 2]
    assert sc.initial_state == State(4.0, 4.0, 0.0, 0.0, 0.0)


def test_generated_fixture_is_reproduced_byte_for_byte():
    golden = (FIX / "scene_generated_seed0.json").read_text()
    assert generate_scene(RandomInstanceSpec(seed=0)).dumps() == golden


@pytest.mark.parametrize("name", ["scene_handmade.json", "scene_generated_seed0.json"])
def test_round_trip_is_exact(name, tmp_path):
    sc = load_scene(FIX / name)
    out = tmp_path / "x.json"
    save_scene(sc, out)
    again = load_scene(out)
    assert again.to_dict() == sc.to_dict()
    assert out.read_text() == sc.dumps()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**63 - 1), st.integers(1, 8))
def test_generated_scenes_satisfy_invariants(seed, goals):
    sc = generate_scene(RandomInstanceSpec(seed=seed, goal_count=goals))
    sc.validate()
    assert len(sc.goals) == goals
    squares = [sg.Polygon(g.polygon().vertices) for g in sc.goals]
    obstacles = [sg.Polygon(o.vertices) for o in sc.obstacles]
    for i, a in enumerate(squares):
        assert not any(a.intersects(o) for o in obstacles)
        assert not any(a.intersects(b) for b in squares[i + 1:])
    assert loads_scene(sc.dumps()).to_dict() == sc.to_dict()


def test_generation_is_deterministic():
    spec = RandomInstanceSpec(seed=12345, goal_count=7)
    assert generate_scene(spec).dumps() == generate_scene(spec).dumps()
    assert generate_scene(spec).dumps() != generate_scene(RandomInstanceSpec(seed=1)).dumps()


def _doc():
    return json.loads((FIX / "scene_handmade.json").read_text())


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d["world"].pop("xmax"), "world"),
    (lambda d: d["goals"][1].__setitem__("center", [1]), "goals[1]"),
    (lambda d: d["obstacles"].__setitem__(0, "oops"), "obstacles[0]"),
    (lambda d: d.__setitem__("version", 99), "version"),
    (lambda d: d["initial_state"].__setitem__("v", "fast"), "initial_state"),
])
def test_parse_errors_name_the_field(mutate, where):
    d = _doc()
    mutate(d)
    with pytest.raises(ParseError) as e:
        loads_scene(json.dumps(d))
    assert e.value.where == where


def test_malformed_json_reports_line():
    with pytest.raises(ParseError, match="line 3"):
        loads_scene('{\n "format": "mgplan-scene",\n "version": ,\n}')


@pytest.mark.parametrize("mutate, msg", [
    (lambda d: d["obstacles"].__setitem__(0, [[15, 0], [15, 20], [18, 20], [18, 0]]),
     "obstacle 0"),
    (lambda d: d["goals"][0].__setitem__("center", [16.0, 10.0]), "overlaps obstacle"),
    (lambda d: d["initial_state"].__setitem__("x", 14.5), "collision"),
    (lambda d: d["goals"][2].__setitem__("id", 5), "ids"),
])
def test_semantic_validation(mutate, msg):
    d = _doc()
    mutate(d)
    with pytest.raises(ValidationError, match=msg):
        loads_scene(json.dumps(d))


def _drive(sc, steps):
    return propagate(sc.initial_state, [Action(1.0, 0.0)] * steps, sc.robot)


def test_validator_rejects_bad_trajectories():
    sc = load_scene(FIX / "scene_handmade.json")
    t = _drive(sc, 20)
    assert "goals not reached" in validate_trajectory(t, sc)
    moved = Trajectory([t.states[0]._replace(x=5.0)] + t.states[1:], t.actions)
    assert "initial state" in validate_trajectory(moved, sc)
    tampered = Trajectory(t.states[:5] + [t.states[5]._replace(y=t.states[5].y + 0.01)]
                          + t.states[6:], t.actions)
    assert "replay" in validate_trajectory(tampered, sc)
    big = Trajectory(t.states, [Action(5.0, 0.0)] + t.actions[1:])
    assert "bounds" in validate_trajectory(big, sc)
    crash = _drive(sc, 60)  # runs into the wall at x = 15
    assert "collision" in validate_trajectory(crash, sc)


def test_validator_accepts_goal_only_scene_reached_by_driving():
    sc = load_scene(FIX / "scene_handmade.json")
    t = _drive(sc, 20)
    end = t.states[-1]
    from mgplan.scene import GoalRegion
    one = sc.with_goals([GoalRegion(0, (end.x, end.y), 1.5)])
    assert validate_trajectory(t, one) is None


def test_spec_rejects_bad_values():
    with pytest.raises(ValueError):
        RandomInstanceSpec(goal_count=0)
    with pytest.raises(ValueError):
        RandomInstanceSpec(obstacle_size=(5, 1))
    spec = RandomInstanceSpec(seed=3, obstacle_count=4)
    assert RandomInstanceSpec.from_dict(spec.to_dict()) == spec
