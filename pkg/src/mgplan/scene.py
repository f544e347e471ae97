"""World description (bounds, obstacles, goals), random instance generation
and the JSON scene file format."""
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .dynamics import RobotModel, State
from .errors import GenerationFailed, ParseError, SamplingFailed, ValidationError
from .geom import (Point2, Polygon, goal_reached, point_in_obstacles, polygon_distance,
                   polygons_overlap, state_in_collision)

FORMAT_NAME = "mgplan-scene"
FORMAT_VERSION = 1
DEFAULT_GOAL_HALF_SIDE = 1.5


@dataclass(frozen=True)
class GoalRegion:
    id: int
    center: Point2
    half_side: float = DEFAULT_GOAL_HALF_SIDE

    def polygon(self) -> Polygon:
        cx, cy = self.center
        h = self.half_side
        return Polygon.rectangle(cx - h, cy - h, cx + h, cy + h)


@dataclass
class Scene:
    bounds: Tuple[float, float, float, float]
    obstacles: List[Polygon]
    goals: List[GoalRegion]
    robot: RobotModel
    initial_state: State

    @property
    def diagonal(self) -> float:
        xmin, ymin, xmax, ymax = self.bounds
        return math.hypot(xmax - xmin, ymax - ymin)

    def with_goals(self, goals) -> "Scene":
        return replace(self, goals=list(goals))

    def validate(self) -> "Scene":
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise ValidationError("world bounds must have positive extent")
        for i, obs in enumerate(self.obstacles):
            try:
                obs.validate()
            except ValidationError as e:
                raise ValidationError(f"obstacle {i}: {e}") from None
        for k, g in enumerate(self.goals):
            if g.id != k:
                raise ValidationError(f"goal ids must be 0..n-1, found {g.id} at position {k}")
            if not g.half_side > 0:
                raise ValidationError(f"goal {g.id}: half_side must be > 0")
            sq = g.polygon()
            for i, obs in enumerate(self.obstacles):
                if polygons_overlap(sq, obs):
                    raise ValidationError(f"goal {g.id} overlaps obstacle {i}")
        if state_in_collision(self.initial_state, self.robot.shape, self):
            raise ValidationError("initial state is in collision")
        return self

    def to_dict(self) -> dict:
        xmin, ymin, xmax, ymax = self.bounds
        s = self.initial_state
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "world": {"xmin": xmin, "ymin": ymin, "xmax": xmax, "ymax": ymax},
            "robot": self.robot.to_dict(),
            "obstacles": [[[v.x, v.y] for v in obs.vertices] for obs in self.obstacles],
            "goals": [{"id": g.id, "center": [g.center.x, g.center.y],
                       "half_side": g.half_side} for g in self.goals],
            "initial_state": {"x": s.x, "y": s.y, "theta": s.theta, "psi": s.psi, "v": s.v},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def layout_fingerprint(self) -> str:
        """Hash of world, robot and obstacles; goals and start are excluded."""
        d = self.to_dict()
        key = json.dumps({k: d[k] for k in ("world", "robot", "obstacles")}, sort_keys=True)
        return hashlib.sha256(key.encode()).hexdigest()

    def fingerprint(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()


def _get(d, key, where, kind=None):
    if not isinstance(d, dict) or key not in d:
        raise ParseError(f"missing field '{key}'", where)
    v = d[key]
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(f"field '{key}' must be a number", where)
        return float(v)
    if kind is not None and not isinstance(v, kind):
        raise ParseError(f"field '{key}' has wrong type", where)
    return v


def _point(v, where) -> Point2:
    if (not isinstance(v, list) or len(v) != 2
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)):
        raise ParseError("expected [x, y]", where)
    return Point2(float(v[0]), float(v[1]))


def scene_from_dict(d) -> Scene:
    if not isinstance(d, dict):
        raise ParseError("top level must be an object")
    if d.get("format") != FORMAT_NAME:
        raise ParseError(f"unknown format {d.get('format')!r}", "format")
    if d.get("version") != FORMAT_VERSION:
        raise ParseError(f"unsupported version {d.get('version')!r}", "version")
    w = _get(d, "world", "world", dict)
    bounds = tuple(_get(w, k, "world", float) for k in ("xmin", "ymin", "xmax", "ymax"))
    rd = _get(d, "robot", "robot", dict)
    try:
        robot = RobotModel.from_dict(rd)
    except (TypeError, ValueError, KeyError) as e:
        raise ParseError(str(e), "robot") from None
    obstacles = []
    for i, o in enumerate(_get(d, "obstacles", "obstacles", list)):
        if not isinstance(o, list):
            raise ParseError("expected a vertex list", f"obstacles[{i}]")
        obstacles.append(Polygon([_point(v, f"obstacles[{i}]") for v in o]))
    goals = []
    for i, g in enumerate(_get(d, "goals", "goals", list)):
        where = f"goals[{i}]"
        gid = _get(g, "id", where, int)
        goals.append(GoalRegion(gid, _point(_get(g, "center", where), where),
                                _get(g, "half_side", where, float)))
    sd = _get(d, "initial_state", "initial_state", dict)
    init = State(*(_get(sd, k, "initial_state", float) for k in State._fields))
    return Scene(bounds, obstacles, goals, robot, init)


def loads_scene(text: str) -> Scene:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, f"line {e.lineno} column {e.colno}") from None
    return scene_from_dict(d).validate()


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_scene(fh.read())


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scene.dumps())


@dataclass(frozen=True)
class RandomInstanceSpec:
    goal_count: int = 5
    obstacle_count: int = 25
    obstacle_size: Tuple[float, float] = (8.0, 18.0)
    wall_fraction: float = 0.4
    goal_half_side: float = DEFAULT_GOAL_HALF_SIDE
    seed: int = 0
    world: Tuple[float, float, float, float] = (0.0, 0.0, 100.0, 100.0)
    # free space kept between obstacles, and between goals/start and obstacles
    clearance: float = 3.5
    max_attempts: int = 2000

    def __post_init__(self):
        if self.goal_count < 1:
            raise ValueError("goal_count must be >= 1")
        if self.obstacle_count < 0:
            raise ValueError("obstacle_count must be >= 0")
        lo, hi = self.obstacle_size
        if not 0 < lo <= hi:
            raise ValueError("obstacle_size must satisfy 0 < min <= max")

    @classmethod
    def from_dict(cls, d: dict) -> "RandomInstanceSpec":
        d = dict(d)
        for k in ("obstacle_size", "world"):
            if k in d:
                d[k] = tuple(float(x) for x in d[k])
        return cls(**d)

    def to_dict(self) -> dict:
        return {"goal_count": self.goal_count, "obstacle_count": self.obstacle_count,
                "obstacle_size": list(self.obstacle_size),
                "wall_fraction": self.wall_fraction,
                "goal_half_side": self.goal_half_side, "seed": self.seed,
                "world": list(self.world), "clearance": self.clearance,
                "max_attempts": self.max_attempts}


def _random_convex(rng, center, diameter) -> Polygon:
    """Convex hull of points drawn on a jittered circle; always CCW."""
    k = int(rng.integers(5, 9))
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, k))
    radii = 0.5 * diameter * rng.uniform(0.8, 1.0, k)
    pts = [(center[0] + r * math.cos(a), center[1] + r * math.sin(a))
           for a, r in zip(angles, radii)]
    return Polygon(_convex_hull(pts))


def _random_wall(rng, center, length) -> Polygon:
    """Rotated thin rectangle."""
    width = rng.uniform(1.5, 3.0)
    a = rng.uniform(0.0, math.pi)
    c, sn = math.cos(a), math.sin(a)
    hl, hw = 0.5 * length, 0.5 * width
    pts = [(center[0] + c * x - sn * y, center[1] + sn * x + c * y)
           for x, y in ((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw))]
    return Polygon(pts)


def _convex_hull(pts):
    pts = sorted(set(pts))
    if len(pts) < 3:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _footprint_clear(center, radius, obstacles, clearance) -> bool:
    probe = Polygon.rectangle(center[0] - radius, center[1] - radius,
                              center[0] + radius, center[1] + radius)
    return all(polygon_distance(probe, o) >= clearance for o in obstacles)


def _place_obstacles(spec: RandomInstanceSpec, rng) -> List[Polygon]:
    xmin, ymin, xmax, ymax = spec.world
    lo, hi = spec.obstacle_size
    obstacles: List[Polygon] = []
    attempts = 0
    while len(obstacles) < spec.obstacle_count:
        attempts += 1
        if attempts > spec.max_attempts:
            raise GenerationFailed(
                f"placed {len(obstacles)}/{spec.obstacle_count} obstacles "
                f"after {spec.max_attempts} attempts")
        c = (rng.uniform(xmin, xmax), rng.uniform(ymin, ymax))
        size = rng.uniform(lo, hi)
        if rng.uniform() < spec.wall_fraction:
            poly = _random_wall(rng, c, 1.5 * size)
        else:
            poly = _random_convex(rng, c, size)
        if len(poly) < 3 or poly.area() <= 0:
            continue
        if all(polygon_distance(poly, o) >= spec.clearance for o in obstacles):
            obstacles.append(poly)
    return obstacles


def _draw_free_point(rng, spec, obstacles, margin, radius, taken, min_sep):
    xmin, ymin, xmax, ymax = spec.world
    for _ in range(spec.max_attempts):
        c = Point2(rng.uniform(xmin + margin, xmax - margin),
                   rng.uniform(ymin + margin, ymax - margin))
        if any(math.hypot(c.x - t.x, c.y - t.y) < min_sep for t in taken):
            continue
        if point_in_obstacles(c, obstacles):
            continue
        if _footprint_clear(c, radius, obstacles, spec.clearance):
            return c
    return None


def place_goals(base: Scene, spec: RandomInstanceSpec, rng) -> Scene:
    """Draw ``spec.goal_count`` collision-free, pairwise disjoint goal squares.

    The result is accepted only when the roadmap connects the initial
    position with every goal center.
    """
    from .roadmap import Guide

    h = spec.goal_half_side
    margin = h + base.robot.shape.bbox[2] + 1.0
    start = Point2(base.initial_state.x, base.initial_state.y)
    for _ in range(max(1, spec.max_attempts // 50)):
        centers: List[Point2] = []
        for _k in range(spec.goal_count):
            c = _draw_free_point(rng, spec, base.obstacles, margin, h,
                                 [start] + centers, 4.0 * h)
            if c is None:
                raise GenerationFailed("no free room left for goal regions")
            centers.append(c)
        goals = [GoalRegion(i, c, h) for i, c in enumerate(centers)]
        scene = base.with_goals(goals)
        try:
            guide = Guide.build(scene, 300, int(rng.integers(2**63)),
                                extra_points=[start])
        except SamplingFailed as e:
            raise GenerationFailed(str(e)) from None
        s_idx = guide.samples.extra_indices[0]
        if all(guide.connected(s_idx, guide.samples.goal_center_indices[g.id])
               for g in goals):
            return scene.validate()
    raise GenerationFailed("could not place goals connected to the start")


def generate_layout(spec: RandomInstanceSpec, rng=None) -> Scene:
    """Obstacles, robot and a collision-free start state; no goals yet."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    obstacles = _place_obstacles(spec, rng)
    robot = RobotModel()
    margin = robot.shape.bbox[2] + 2.0
    start = _draw_free_point(rng, spec, obstacles, margin, robot.shape.bbox[2], [], 0.0)
    if start is None:
        raise GenerationFailed("no collision-free start position")
    theta = float(rng.uniform(-math.pi, math.pi))
    init = State(start.x, start.y, theta, 0.0, 0.0)
    scene = Scene(tuple(float(v) for v in spec.world), obstacles, [], robot, init)
    if state_in_collision(init, robot.shape, scene):
        raise GenerationFailed("start state in collision")
    return scene


def generate_scene(spec: RandomInstanceSpec) -> Scene:
    """Deterministic random instance: the seed fully determines the result."""
    rng = np.random.default_rng(spec.seed)
    base = generate_layout(spec, rng)
    return place_goals(base, spec, rng)


def goals_reached_by(states, goals) -> set:
    reached = set()
    for s in states:
        for g in goals:
            if g.id not in reached and goal_reached(s, g):
                reached.add(g.id)
    return reached


def validate_trajectory(traj, scene: Scene, tol: float = 1e-9) -> Optional[str]:
    """Independent check of a solution: start, replay, collisions and goals.

    Returns None when valid, otherwise a short reason.
    """
    from .dynamics import simulate

    states = traj.states
    if tuple(states[0]) != tuple(scene.initial_state):
        return "trajectory does not start at the initial state"
    s = states[0]
    for j, (a, expected) in enumerate(zip(traj.actions, states[1:]), start=1):
        if abs(a.acc) > scene.robot.acc_max + 1e-12 or \
                abs(a.steer_rate) > scene.robot.steer_rate_max + 1e-12:
            return f"action {j - 1} out of bounds"
        s = simulate(s, a, scene.robot)
        if any(abs(u - w) > tol for u, w in zip(s, expected)):
            return f"state {j} does not match replay"
    for j, st in enumerate(states):
        if state_in_collision(st, scene.robot.shape, scene):
            return f"state {j} in collision"
    missing = {g.id for g in scene.goals} - goals_reached_by(states, scene.goals)
    if missing:
        return f"goals not reached: {sorted(missing)}"
    return None
