import itertools
import math

import numpy as np
import pytest
import shapely.geometry as sg
from hypothesis import given, settings, strategies as st

from mgplan.dynamics import RobotModel, State
from mgplan.errors import ValidationError
from mgplan.geom import (Polygon, goal_reached, normalize_angle, place, point_in_polygon,
                         points_in_polygon, polygon_distance, polygons_overlap,
                         robot_rectangle, segments_intersect, state_in_collision)
from mgplan.scene import GoalRegion, Scene
from oracles import random_convex, winding_number

coord = st.floats(-50, 50, allow_nan=False)


def test_point_in_polygon_matches_winding_number():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        poly = Polygon(random_convex(rng, rng.uniform(-5, 5, 2), rng.uniform(0.5, 4)))
        p = rng.uniform(-9, 9, 2)
        assert point_in_polygon(p, poly) == (winding_number(p, poly.vertices) != 0)


def test_boundary_points_count_as_inside():
    sq = Polygon.rectangle(0, 0, 2, 2)
    for p in [(0, 0), (2, 2), (1, 0), (2, 1), (0, 1.5)]:
        assert point_in_polygon(p, sq)
    assert not point_in_polygon((2.0000001, 1), sq)


def test_vectorized_containment_agrees_with_scalar():
    rng = np.random.default_rng(2)
    poly = Polygon(random_convex(rng, (0, 0), 3, k=7))
    xs, ys = rng.uniform(-4, 4, (2, 500))
    vec = points_in_polygon(xs, ys, poly)
    assert list(vec) == [point_in_polygon((x, y), poly) for x, y in zip(xs, ys)]


def test_polygons_overlap_matches_shapely():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        a = random_convex(rng, rng.uniform(-3, 3, 2), rng.uniform(0.3, 3))
        b = random_convex(rng, rng.uniform(-3, 3, 2), rng.uniform(0.3, 3))
        want = sg.Polygon(a).intersects(sg.Polygon(b))
        assert polygons_overlap(Polygon(a), Polygon(b)) == want


def test_touching_and_contained_polygons_overlap():
    a = Polygon.rectangle(0, 0, 1, 1)
    assert polygons_overlap(a, Polygon.rectangle(1, 0, 2, 1))  # shared edge
    assert polygons_overlap(a, Polygon.rectangle(1, 1, 2, 2))  # shared corner
    assert polygons_overlap(a, Polygon.rectangle(0.2, 0.2, 0.4, 0.4))
    assert not polygons_overlap(a, Polygon.rectangle(1.01, 0, 2, 1))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_overlap_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    a = Polygon(random_convex(rng, rng.uniform(-2, 2, 2), 1.5))
    b = Polygon(random_convex(rng, rng.uniform(-2, 2, 2), 1.5))
    assert polygons_overlap(a, b) == polygons_overlap(b, a)


@settings(max_examples=200, deadline=None)
@given(coord, coord, st.floats(-10, 10))
def test_place_is_rigid(x, y, theta):
    shape = Polygon([(0, -0.5), (2, -0.5), (2.5, 0.2), (0, 0.5)])
    placed = place(shape, ((x, y), theta))
    for (i, p), (j, q) in itertools.combinations(enumerate(shape.vertices), 2):
        d0 = math.dist(p, q)
        d1 = math.dist(placed.vertices[i], placed.vertices[j])
        assert abs(d0 - d1) <= 1e-9


def test_place_rotates_about_reference_point():
    r = robot_rectangle(2.0, 1.0)
    placed = place(r, ((10.0, 5.0), math.pi / 2))
    got = [(round(v.x, 12), round(v.y, 12)) for v in placed.vertices]
    assert got == [(10.5, 5.0), (10.5, 7.0), (9.5, 7.0), (9.5, 5.0)]


def _scene(obstacles):
    return Scene((0.0, 0.0, 20.0, 20.0), obstacles, [], RobotModel(),
                 State(1.0, 1.0, 0.0, 0.0, 0.0))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations(range(6)))
def test_collision_independent_of_obstacle_order(seed, perm):
    rng = np.random.default_rng(seed)
    obs = [Polygon(random_convex(rng, rng.uniform(2, 18, 2), 2)) for _ in range(6)]
    s = State(*rng.uniform(1, 19, 2), rng.uniform(-3, 3), 0.0, 0.0)
    shape = RobotModel().shape
    a = state_in_collision(s, shape, _scene(obs))
    b = state_in_collision(s, shape, _scene([obs[i] for i in perm]))
    assert a == b


def test_collision_with_world_bounds():
    shape = RobotModel().shape
    sc = _scene([])
    assert not state_in_collision(State(5, 5, 0, 0, 0), shape, sc)
    assert state_in_collision(State(19, 5, 0, 0, 0), shape, sc)  # nose leaves the world
    assert state_in_collision(State(-0.1, 5, 0, 0, 0), shape, sc)


def test_collision_matches_shapely_on_random_poses():
    rng = np.random.default_rng(4)
    obs = [Polygon(random_convex(rng, rng.uniform(3, 17, 2), 2.5)) for _ in range(8)]
    sc = _scene(obs)
    shape = RobotModel().shape
    world = sg.box(0, 0, 20, 20)
    sh_obs = [sg.Polygon(o.vertices) for o in obs]
    for _ in range(500):
        s = State(*rng.uniform(0, 20, 2), rng.uniform(-math.pi, math.pi), 0.0, 0.0)
        body = sg.Polygon(place(shape, ((s.x, s.y), s.theta)).vertices)
        want = (not world.contains(body)) or any(body.intersects(o) for o in sh_obs)
        assert state_in_collision(s, shape, sc) == want


def test_goal_containment_includes_boundary():
    g = GoalRegion(0, (5.0, 5.0), 1.5)
    assert goal_reached(State(6.5, 5.0, 0, 0, 0), g)
    assert goal_reached(State(3.5, 3.5, 0, 0, 0), g)
    assert not goal_reached(State(6.6, 5.0, 0, 0, 0), g)


@pytest.mark.parametrize("verts, msg", [
    ([(0, 0), (1, 0)], "3"),
    ([(0, 0), (0, 1), (1, 0)], "counter"),  # clockwise
    ([(0, 0), (1, 0), (float("nan"), 1)], "finite"),
])
def test_polygon_validation(verts, msg):
    with pytest.raises(ValidationError, match=msg):
        Polygon(verts).validate()


def test_self_intersecting_polygon_rejected():
    with pytest.raises(ValidationError):
        Polygon([(0, 0), (2, 2), (2, 0), (0, 2), (-1, 1)]).validate()


def test_segments_intersect_cases():
    assert segments_intersect((0, 0), (2, 2), (0, 2), (2, 0))
    assert segments_intersect((0, 0), (1, 0), (1, 0), (2, 5))  # endpoint touch
    assert segments_intersect((0, 0), (2, 0), (1, 0), (3, 0))  # collinear overlap
    assert not segments_intersect((0, 0), (1, 0), (2, 0), (3, 0))


def test_polygon_distance_matches_shapely():
    rng = np.random.default_rng(5)
    for _ in range(200):
        a = random_convex(rng, rng.uniform(-5, 5, 2), 1.5)
        b = random_convex(rng, rng.uniform(-5, 5, 2), 1.5)
        want = sg.Polygon(a).distance(sg.Polygon(b))
        assert polygon_distance(Polygon(a), Polygon(b)) == pytest.approx(want, abs=1e-9)


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_normalize_angle_range_and_equivalence(a):
    w = normalize_angle(a)
    assert -math.pi <= w < math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-6)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-6)
