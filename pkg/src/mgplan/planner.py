"""Multi-goal motion planning: a motion tree whose expansion is guided by
open TSP tours over the goals not yet reached.

Tree nodes are partitioned into groups keyed by (nearest sample in Phi,
reached-goal set). Each group gets one tour when it is created; groups are
scheduled by weight ``beta**nr_sel * gamma**|goals| / tour_cost``.
"""
import heapq
import math
import random
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .costmodel import CostModel, featurize_many, feature_guide
from .dynamics import Action, State, Trajectory, simulate, steer_controller
from .errors import IncompleteSolution, ValidationError
from .geom import goal_reached, state_in_collision
from .roadmap import Guide, sample_free
from .scene import GoalRegion, Scene
from .timing import PhaseTimer
from .tsp import Tour, solve_open_tour

WEIGHT_EPS = 1e-9


@dataclass(frozen=True)
class PlannerConfig:
    beta: float = 0.99
    gamma: float = 8.0
    alpha: float = 0.9
    phi_count: int = 500
    phi_seed: int = 0
    k_neighbors: int = 10
    target_samples: int = 6
    target_radius: float = 10.0
    extend_max_steps: int = 50
    reach_tolerance: float = 1.0
    t_max: float = 30.0
    seed: int = 0
    tsp_refine: bool = False
    debug: bool = False
    audit_every: int = 100

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must be in (0, 1)")
        if not self.gamma > 1.0:
            raise ValueError("gamma must be > 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.phi_count < 1 or self.target_samples < 1 or self.extend_max_steps < 1:
            raise ValueError("counts must be >= 1")
        if not (self.target_radius > 0 and self.t_max > 0 and self.reach_tolerance > 0):
            raise ValueError("radius, time limit and reach tolerance must be > 0")


# ---------------------------------------------------------------- cost providers

class CostProvider:
    """Estimated cost of going from point a to point b; 0 when a == b."""

    name = "base"
    needs_roadmap = False

    def bind(self, scene: Scene, guide: Guide) -> "CostProvider":
        return self

    def pair_costs(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cost(self, a, b) -> float:
        return float(self.pair_costs(np.array([a], dtype=float), np.array([b], dtype=float))[0])


class EuclideanCost(CostProvider):
    name = "ed"

    def pair_costs(self, A, B):
        A = np.asarray(A, dtype=float).reshape(-1, 2)
        B = np.asarray(B, dtype=float).reshape(-1, 2)
        return np.hypot(B[:, 0] - A[:, 0], B[:, 1] - A[:, 1])


class RoadmapCost(CostProvider):
    """Shortest-path distance in the roadmap over the planner's samples."""

    name = "rm"
    needs_roadmap = True

    def __init__(self, guide: Optional[Guide] = None):
        self.guide = guide

    def bind(self, scene, guide):
        return RoadmapCost(guide)

    def pair_costs(self, A, B):
        return self.guide.distances(A, B)


class LearnedCost(CostProvider):
    """Blend of normalized distance and runtime predictions."""

    name = "ml"

    def __init__(self, m_d: CostModel, m_t: CostModel, alpha: float = 0.9,
                 fguide: Optional[Guide] = None):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        self.m_d = m_d
        self.m_t = m_t
        self.alpha = alpha
        self.fguide = fguide

    def bind(self, scene, guide):
        fg = self.fguide
        if fg is None:
            fr = self.m_d.feature_roadmap
            fg = feature_guide(scene, fr["count"], fr["seed"])
        return LearnedCost(self.m_d, self.m_t, self.alpha, fg)

    def pair_costs(self, A, B):
        A = np.asarray(A, dtype=float).reshape(-1, 2)
        B = np.asarray(B, dtype=float).reshape(-1, 2)
        F = featurize_many(A, B, self.fguide)
        dn = self.m_d.normalize(self.m_d.predict_features(F))
        tn = self.m_t.normalize(self.m_t.predict_features(F))
        out = self.alpha * dn + (1.0 - self.alpha) * tn
        same = (A[:, 0] == B[:, 0]) & (A[:, 1] == B[:, 1])
        return np.where(same, 0.0, out)


# ---------------------------------------------------------------- tree and partition

@dataclass
class MotionTree:
    parent: List[int] = field(default_factory=list)
    states: List[State] = field(default_factory=list)
    actions: List[Optional[Action]] = field(default_factory=list)
    goals: List[int] = field(default_factory=list)  # bitmask over goal ids
    sample: List[int] = field(default_factory=list)

    def add(self, parent, s, a, goals, p) -> int:
        self.parent.append(parent)
        self.states.append(s)
        self.actions.append(a)
        self.goals.append(goals)
        self.sample.append(p)
        return len(self.states) - 1

    def __len__(self):
        return len(self.states)

    def path_to(self, node: int) -> List[int]:
        path = []
        while node >= 0:
            path.append(node)
            node = self.parent[node]
        return path[::-1]


@dataclass
class Group:
    key: tuple
    nodes: List[int]
    tour: Tour
    goal_order: tuple  # tour translated to goal ids
    created: int
    nr_sel: int = 0

    def weight(self, beta: float, gamma: float) -> float:
        n_goals = bin(self.key[1]).count("1")
        return beta ** self.nr_sel * gamma ** n_goals / max(self.tour.cost, WEIGHT_EPS)


class Partition:
    """Groups keyed by (sample index, goal bitmask) with max-weight scheduling."""

    def __init__(self, beta: float, gamma: float):
        self.beta = beta
        self.gamma = gamma
        self.groups: Dict[tuple, Group] = {}
        self.order: List[Group] = []
        self._heap = []

    def __len__(self):
        return len(self.order)

    def find(self, key) -> Optional[Group]:
        return self.groups.get(key)

    def add_group(self, group: Group) -> None:
        self.groups[group.key] = group
        self.order.append(group)
        self._push(group)

    def _push(self, group: Group) -> None:
        heapq.heappush(self._heap, (-group.weight(self.beta, self.gamma), group.created,
                                    group.nr_sel))

    def select(self) -> Group:
        """Pop the max-weight group (earliest created among ties) and bump nr_sel."""
        while True:
            _, created, nr_sel = heapq.heappop(self._heap)
            group = self.order[created]
            if group.nr_sel == nr_sel:
                break
        group.nr_sel += 1
        self._push(group)
        return group


def select_group(partition: Partition) -> Group:
    return partition.select()


def select_node(group: Group, rng: random.Random) -> int:
    return group.nodes[rng.randrange(len(group.nodes))]


def _disk_samples(center, radius, count, bounds, rng, max_tries=10):
    xmin, ymin, xmax, ymax = bounds
    out = []
    for _ in range(count):
        for attempt in range(max_tries):
            r = radius * math.sqrt(rng.random())
            a = 2.0 * math.pi * rng.random()
            x = center[0] + r * math.cos(a)
            y = center[1] + r * math.sin(a)
            if xmin <= x <= xmax and ymin <= y <= ymax:
                break
        else:
            x = min(max(x, xmin), xmax)
            y = min(max(y, ymin), ymax)
        out.append((x, y))
    return out


def select_target(node_pos, goal_pos, config: PlannerConfig, provider: CostProvider,
                  rng: random.Random, bounds) -> tuple:
    """Sample points near the node; return the one minimizing cost(node->p) + cost(p->goal)."""
    pts = _disk_samples(node_pos, config.target_radius, config.target_samples, bounds, rng)
    if len(pts) == 1:
        return pts[0]
    P = np.array(pts)
    k = len(pts)
    A = np.vstack([np.repeat([node_pos], k, axis=0), P])
    B = np.vstack([P, np.repeat([goal_pos], k, axis=0)])
    c = provider.pair_costs(A, B)
    total = c[:k] + c[k:]
    return pts[int(np.argmin(total))]


# ---------------------------------------------------------------- planner

@dataclass
class PlanResult:
    solved: bool
    trajectory: Optional[Trajectory]
    runtime: float
    iterations: int
    tree_size: int
    groups: int
    tsp_calls: int
    best_goals: int
    phases: Dict[str, float]
    audit_violations: int = 0
    audits: int = 0

    @property
    def status(self) -> str:
        return "solved" if self.solved else "timeout"

    @property
    def distance(self) -> Optional[float]:
        return self.trajectory.distance() if self.trajectory is not None else None


class Planner:
    """One planning run over a fixed scene; strictly single-threaded."""

    def __init__(self, scene: Scene, config: PlannerConfig, provider: CostProvider,
                 guide: Optional[Guide] = None, timer: Optional[PhaseTimer] = None):
        self.scene = scene
        self.config = config
        self.timer = timer if timer is not None else PhaseTimer()
        self.rng = random.Random(config.seed)
        self.goals = list(scene.goals)
        self.n_goals = len(self.goals)
        self.all_goals = (1 << self.n_goals) - 1
        self.goal_pts = np.array([[g.center[0], g.center[1]] for g in self.goals],
                                 dtype=float).reshape(-1, 2)
        with self.timer.phase("sampling"):
            if guide is None:
                if provider.needs_roadmap:
                    guide = Guide.build(scene, config.phi_count, config.phi_seed,
                                        config.k_neighbors)
                else:
                    guide = Guide.points_only(
                        sample_free(scene, config.phi_count, config.phi_seed))
            self.guide = guide
            # binding the learned provider builds its feature roadmap
            self.provider = provider.bind(scene, guide)
        self.points = guide.points
        self.tree = MotionTree()
        self.partition = Partition(config.beta, config.gamma)
        self.tsp_calls = 0
        self.grouped = 0  # nodes [0, grouped) have been assigned to groups
        self._goal_matrix = None
        self._row_cache: Dict[int, tuple] = {}

    # -- cost matrices
    def _costs(self, A, B):
        t0 = time.perf_counter()
        c = self.provider.pair_costs(A, B)
        self.timer.add("prediction", time.perf_counter() - t0)
        return c

    def cost_matrix(self, p: int, remaining: List[int]) -> np.ndarray:
        """Matrix over V = {Phi[p]} + remaining goals; diagonal is zero."""
        n = self.n_goals
        if self._goal_matrix is None:
            ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            gm = self._costs(self.goal_pts[ii.ravel()], self.goal_pts[jj.ravel()]).reshape(n, n)
            np.fill_diagonal(gm, 0.0)
            self._goal_matrix = gm
        row = self._row_cache.get(p)
        if row is None:
            src = np.repeat(self.points[p:p + 1], n, axis=0)
            c = self._costs(np.vstack([src, self.goal_pts]), np.vstack([self.goal_pts, src]))
            row = (c[:n], c[n:])
            self._row_cache[p] = row
        k = len(remaining)
        m = np.zeros((k + 1, k + 1))
        idx = np.array(remaining, dtype=int)
        if k:
            m[0, 1:] = row[0][idx]
            m[1:, 0] = row[1][idx]
            m[1:, 1:] = self._goal_matrix[np.ix_(idx, idx)]
            np.fill_diagonal(m, 0.0)
        return m

    # -- partition maintenance
    def update_groups(self, node: int) -> Group:
        key = (self.tree.sample[node], self.tree.goals[node])
        group = self.partition.find(key)
        if group is None:
            remaining = [g for g in range(self.n_goals) if not key[1] >> g & 1]
            m = self.cost_matrix(key[0], remaining)
            t0 = time.perf_counter()
            tour = solve_open_tour(m, refine=self.config.tsp_refine)
            self.timer.add("tsp", time.perf_counter() - t0)
            self.tsp_calls += 1
            order = tuple(remaining[i - 1] for i in tour.order)
            group = Group(key, [], tour, order, len(self.partition))
            self.partition.add_group(group)
        group.nodes.append(node)
        self.grouped = max(self.grouped, node + 1)
        return group

    def _newly_reached(self, s: State, mask: int) -> int:
        for g in self.goals:
            if not mask >> g.id & 1 and goal_reached(s, g):
                return mask | (1 << g.id)
        return mask

    def extend(self, node: int, target) -> List[int]:
        """Steer from ``node`` toward ``target`` until collision, arrival or the step cap."""
        tree = self.tree
        robot = self.scene.robot
        shape = robot.shape
        scene = self.scene
        tol2 = self.config.reach_tolerance ** 2
        tx, ty = target
        new = []
        cur = node
        s = tree.states[node]
        acc = 0.0
        for _ in range(self.config.extend_max_steps):
            t0 = time.perf_counter()
            a = steer_controller(s, target, robot)
            s_new = simulate(s, a, robot)
            hit = state_in_collision(s_new, shape, scene)
            acc += time.perf_counter() - t0
            if hit:
                break
            goals = self._newly_reached(s_new, tree.goals[cur])
            p = self.guide.nearest((s_new.x, s_new.y))
            cur = tree.add(cur, s_new, a, goals, p)
            new.append(cur)
            s = s_new
            if (s.x - tx) ** 2 + (s.y - ty) ** 2 <= tol2:
                break
        self.timer.add("collision+simulate", acc)
        return new

    def audit(self) -> int:
        """Count partition invariant violations."""
        bad = 0
        seen = [0] * self.grouped
        for group in self.partition.order:
            if not group.nodes:
                bad += 1
            remaining = {g for g in range(self.n_goals) if not group.key[1] >> g & 1}
            if set(group.goal_order) != remaining or len(group.goal_order) != len(remaining):
                bad += 1
            for n in group.nodes:
                seen[n] += 1
                if (self.tree.sample[n], self.tree.goals[n]) != group.key:
                    bad += 1
        bad += sum(1 for c in seen if c != 1)
        return bad

    def extract(self, node: int) -> Trajectory:
        if self.tree.goals[node] != self.all_goals:
            raise IncompleteSolution(f"node {node} has not reached every goal")
        path = self.tree.path_to(node)
        states = [self.tree.states[i] for i in path]
        actions = [self.tree.actions[i] for i in path[1:]]
        return Trajectory(states, actions)

    def run(self, t_start: Optional[float] = None) -> PlanResult:
        cfg = self.config
        t0 = t_start if t_start is not None else self.timer.start
        s0 = self.scene.initial_state
        if state_in_collision(s0, self.scene.robot.shape, self.scene):
            raise ValidationError("initial state is in collision")
        root_goals = 0
        for g in self.goals:
            if goal_reached(s0, g):
                root_goals |= 1 << g.id
        root = self.tree.add(-1, s0, None, root_goals, self.guide.nearest((s0.x, s0.y)))
        iterations = 0
        audits = violations = 0
        if root_goals == self.all_goals:
            return self._result(True, self.extract(root), iterations, audits, violations)
        self.update_groups(root)
        bounds = self.scene.bounds
        while time.perf_counter() - t0 < cfg.t_max:
            iterations += 1
            group = self.partition.select()
            node = select_node(group, self.rng)
            goal = self.goals[group.goal_order[0]]
            s = self.tree.states[node]
            target = select_target((s.x, s.y), goal.center, cfg, self.provider,
                                   self.rng, bounds)
            for n in self.extend(node, target):
                if self.tree.goals[n] == self.all_goals:
                    return self._result(True, self.extract(n), iterations, audits, violations)
                self.update_groups(n)
            if cfg.debug and iterations % cfg.audit_every == 0:
                audits += 1
                violations += self.audit()
        return self._result(False, None, iterations, audits, violations)

    def _result(self, solved, traj, iterations, audits, violations) -> PlanResult:
        if self.config.debug:
            audits += 1
            violations += self.audit()
        phases = self.timer.finish()
        best = max((bin(m).count("1") for m in self.tree.goals), default=0)
        return PlanResult(solved, traj, self.timer.total, iterations, len(self.tree),
                          len(self.partition), self.tsp_calls, best, phases,
                          violations, audits)


def plan(scene: Scene, config: PlannerConfig, cost_provider: CostProvider,
         guide: Optional[Guide] = None, timer: Optional[PhaseTimer] = None) -> PlanResult:
    """Plan a trajectory from the initial state that reaches every goal."""
    timer = timer if timer is not None else PhaseTimer()
    planner = Planner(scene, config, cost_provider, guide, timer)
    return planner.run()


def single_goal_scene(scene: Scene, start, goal, half_side: float) -> Scene:
    """Same layout with one goal square and the start state (p, 0, 0, 0)."""
    init = State(float(start[0]), float(start[1]), 0.0, 0.0, 0.0)
    return Scene(scene.bounds, scene.obstacles, [GoalRegion(0, tuple(goal), half_side)],
                 scene.robot, init)


def single_goal_mp(scene: Scene, start, goal, config: PlannerConfig,
                   guide: Optional[Guide] = None,
                   half_side: Optional[float] = None) -> PlanResult:
    """Single-goal planner used to generate training data: roadmap guidance, G = {goal}."""
    h = half_side if half_side is not None else (
        scene.goals[0].half_side if scene.goals else 1.5)
    sg = single_goal_scene(scene, start, goal, h)
    return plan(sg, config, RoadmapCost(), guide=guide)


def make_mp(scene: Scene, config: PlannerConfig, guide: Optional[Guide] = None,
            half_side: float = 1.5):
    """Adapter for dataset generation: ``mp(p, g, seed, time_limit) -> (ok, t, d)``."""
    if guide is None:
        guide = Guide.build(scene.with_goals([]), config.phi_count, config.phi_seed,
                            config.k_neighbors)

    def mp(p, g, seed, time_limit):
        cfg = PlannerConfig(**{**config.__dict__, "seed": seed, "t_max": time_limit})
        t0 = time.perf_counter()
        sg = single_goal_scene(scene, p, g, half_side)
        if state_in_collision(sg.initial_state, sg.robot.shape, sg):
            return False, time.perf_counter() - t0, None
        res = plan(sg, cfg, RoadmapCost(), guide=guide)
        return res.solved, res.runtime, res.distance

    return mp
