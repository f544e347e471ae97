"""Collision-free sample sets, PRM-style roadmaps and shortest-path distances.

Sample freeness and roadmap edges use a point-robot test against the
obstacles; the planner enforces the full robot footprint itself.
"""
import heapq
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .errors import SamplingFailed
from .geom import points_in_polygon

DEFAULT_K = 10
DEFAULT_ATTACH = 4


@dataclass
class SampleSet:
    """Free points Phi: ``count`` random samples, then goal centers, then extras."""

    points: np.ndarray
    goal_center_indices: Dict[int, int] = field(default_factory=dict)
    extra_indices: List[int] = field(default_factory=list)

    def __len__(self):
        return len(self.points)


@dataclass
class Roadmap:
    samples: SampleSet
    adjacency: List[List[Tuple[int, float]]]

    @property
    def n_vertices(self) -> int:
        return len(self.adjacency)

    def edges(self):
        for i, nbrs in enumerate(self.adjacency):
            for j, w in nbrs:
                if i < j:
                    yield i, j, w

    def to_csr(self) -> csr_matrix:
        rows, cols, data = [], [], []
        for i, nbrs in enumerate(self.adjacency):
            for j, w in nbrs:
                rows.append(i)
                cols.append(j)
                data.append(w)
        n = self.n_vertices
        return csr_matrix((data, (rows, cols)), shape=(n, n))


def free_mask(scene, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Point-robot freeness: inside world bounds and outside every obstacle."""
    xmin, ymin, xmax, ymax = scene.bounds
    ok = (xs >= xmin) & (xs <= xmax) & (ys >= ymin) & (ys <= ymax)
    for obs in scene.obstacles:
        ok &= ~points_in_polygon(xs, ys, obs)
    return ok


def sample_free(scene, count: int, seed: int, extra_points: Sequence = (),
                max_attempts: Optional[int] = None) -> SampleSet:
    """Rejection-sample ``count`` free points, then append goal centers and extras."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = scene.bounds
    budget = max_attempts if max_attempts is not None else max(10_000, 200 * count)
    found = []
    n_found = 0
    drawn = 0
    while n_found < count:
        if drawn >= budget:
            raise SamplingFailed(
                f"found {n_found}/{count} free samples after {drawn} attempts")
        batch = min(max(2 * (count - n_found), 64), budget - drawn)
        xs = rng.uniform(xmin, xmax, batch)
        ys = rng.uniform(ymin, ymax, batch)
        drawn += batch
        ok = free_mask(scene, xs, ys)
        pts = np.column_stack([xs[ok], ys[ok]])[: count - n_found]
        found.append(pts)
        n_found += len(pts)
    rows = [np.concatenate(found)]
    goal_idx = {}
    for g in scene.goals:
        goal_idx[g.id] = count + len(goal_idx)
        rows.append(np.array([[g.center[0], g.center[1]]], dtype=float))
    extra_idx = []
    for p in extra_points:
        extra_idx.append(count + len(goal_idx) + len(extra_idx))
        rows.append(np.array([[p[0], p[1]]], dtype=float))
    return SampleSet(np.concatenate(rows), goal_idx, extra_idx)


def nearest(samples, p) -> int:
    """Index of the Euclidean-nearest sample; ties go to the lowest index."""
    pts = samples.points if isinstance(samples, SampleSet) else samples
    d = (pts[:, 0] - p[0]) ** 2 + (pts[:, 1] - p[1]) ** 2
    return int(np.argmin(d))


def segments_free(scene, a: np.ndarray, b: np.ndarray, resolution: float) -> np.ndarray:
    """Check straight segments a[i]->b[i] by sampling points every ``resolution``."""
    if len(a) == 0:
        return np.zeros(0, dtype=bool)
    lengths = np.hypot(b[:, 0] - a[:, 0], b[:, 1] - a[:, 1])
    counts = np.ceil(lengths / resolution).astype(int) + 1
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    seg = np.repeat(np.arange(len(a)), counts)
    local = np.arange(counts.sum()) - np.repeat(starts, counts)
    t = local / np.maximum(np.repeat(counts, counts) - 1, 1)
    xs = a[seg, 0] + t * (b[seg, 0] - a[seg, 0])
    ys = a[seg, 1] + t * (b[seg, 1] - a[seg, 1])
    ok = free_mask(scene, xs, ys)
    return np.logical_and.reduceat(ok, starts)


def default_resolution(scene) -> float:
    return 0.5 * scene.robot.min_body_dim


def build_roadmap(scene, samples: SampleSet, k_neighbors: int = DEFAULT_K,
                  resolution: Optional[float] = None) -> Roadmap:
    """Connect every vertex to its k nearest neighbors through collision-free segments."""
    pts = samples.points
    n = len(pts)
    res = resolution if resolution is not None else default_resolution(scene)
    adjacency: List[List[Tuple[int, float]]] = [[] for _ in range(n)]
    if n < 2:
        return Roadmap(samples, adjacency)
    k = min(k_neighbors, n - 1)
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    nbr = np.argsort(d2, axis=1, kind="stable")[:, :k]
    ii = np.repeat(np.arange(n), k)
    jj = nbr.ravel()
    lo = np.minimum(ii, jj)
    hi = np.maximum(ii, jj)
    pairs = np.unique(np.column_stack([lo, hi]), axis=0)
    ok = segments_free(scene, pts[pairs[:, 0]], pts[pairs[:, 1]], res)
    for (i, j), free in zip(pairs.tolist(), ok.tolist()):
        if not free:
            continue
        w = math.hypot(pts[j, 0] - pts[i, 0], pts[j, 1] - pts[i, 1])
        adjacency[i].append((j, w))
        adjacency[j].append((i, w))
    return Roadmap(samples, adjacency)


def dijkstra_from(rm: Roadmap, source: int) -> List[float]:
    """Single-source shortest-path distances; unreachable vertices get ``inf``."""
    dist = [math.inf] * rm.n_vertices
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in rm.adjacency[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def shortest_path_dist(rm: Roadmap, from_index: int, to_index: int) -> Optional[float]:
    """Dijkstra distance between two vertices, or None when they are not connected."""
    if from_index == to_index:
        return 0.0
    dist = {from_index: 0.0}
    heap = [(0.0, from_index)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == to_index:
            return d
        if d > dist[u]:
            continue
        for v, w in rm.adjacency[u]:
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return None


def unreachable_sentinel(scene) -> float:
    xmin, ymin, xmax, ymax = scene.bounds
    return 10.0 * math.hypot(xmax - xmin, ymax - ymin)


class Guide:
    """Roadmap plus all-pairs distances, used for partitioning and distance estimates.

    Distances between arbitrary points attach each endpoint to its few
    nearest roadmap vertices and take the cheapest combination of
    |a - u| + D[u, v] + |v - b|; when the straight segment a-b is itself
    collision-free its length is used instead. Disconnected pairs get the
    unreachable sentinel.
    """

    def __init__(self, scene, samples: SampleSet, roadmap: Optional[Roadmap],
                 attach_k: int = DEFAULT_ATTACH, direct: bool = True):
        self.scene = scene
        self.attach_k = attach_k
        self.direct = direct and scene is not None
        self.resolution = default_resolution(scene) if scene is not None else None
        self.samples = samples
        self.roadmap = roadmap
        self.points = samples.points
        self.sentinel = unreachable_sentinel(scene) if scene is not None else math.inf
        self.dist = None
        if roadmap is not None:
            dist = _csgraph_dijkstra(roadmap.to_csr(), directed=False)
            dist[~np.isfinite(dist)] = self.sentinel
            self.dist = dist

    @classmethod
    def points_only(cls, samples: SampleSet) -> "Guide":
        """Nearest-sample queries only; distance queries need a roadmap."""
        return cls(None, samples, None)

    @classmethod
    def build(cls, scene, count: int, seed: int, k_neighbors: int = DEFAULT_K,
              extra_points: Sequence = ()) -> "Guide":
        samples = sample_free(scene, count, seed, extra_points=extra_points)
        return cls(scene, samples, build_roadmap(scene, samples, k_neighbors))

    def nearest(self, p) -> int:
        pts = self.points
        d = (pts[:, 0] - p[0]) ** 2 + (pts[:, 1] - p[1]) ** 2
        return int(np.argmin(d))

    def nearest_many(self, P: np.ndarray) -> np.ndarray:
        d = ((P[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d, axis=1)

    def connected(self, i: int, j: int) -> bool:
        return self.dist[i, j] < self.sentinel

    def _attach(self, P: np.ndarray):
        """Indices of and distances to the ``attach_k`` nearest vertices of each point."""
        d2 = ((P[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
        k = min(self.attach_k, len(self.points))
        if k < len(self.points):
            idx = np.argpartition(d2, k - 1, axis=1)[:, :k]
        else:
            idx = np.broadcast_to(np.arange(k), (len(P), k)).copy()
        return idx, np.sqrt(np.take_along_axis(d2, idx, axis=1))

    def distances(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Elementwise roadmap distance estimate between rows of A and B."""
        A = np.asarray(A, dtype=float).reshape(-1, 2)
        B = np.asarray(B, dtype=float).reshape(-1, 2)
        ia, da = self._attach(A)
        ib, db = self._attach(B)
        core = self.dist[ia[:, :, None], ib[:, None, :]]
        total = da[:, :, None] + core + db[:, None, :]
        total = np.where(core >= self.sentinel, np.inf, total)
        out = total.reshape(len(A), -1).min(axis=1)
        out = np.where(np.isfinite(out), out, self.sentinel)
        if self.direct:
            # a collision-free straight segment beats any detour through the graph
            eu = np.hypot(B[:, 0] - A[:, 0], B[:, 1] - A[:, 1])
            cand = eu < out
            if cand.any():
                ok = segments_free(self.scene, A[cand], B[cand], self.resolution)
                out[np.flatnonzero(cand)[ok]] = eu[cand][ok]
        same = (A[:, 0] == B[:, 0]) & (A[:, 1] == B[:, 1])
        return np.where(same, 0.0, out)

    def distance(self, a, b) -> float:
        return float(self.distances(np.array([a]), np.array([b]))[0])
