"""Single-goal training data, runtime/distance regressors and the blended
from-to cost used to fill TSP matrices.

A dataset record is ``(p, g, t, d, success_fraction)`` where ``t`` and ``d``
are trimmed means over repeated single-goal planner runs from ``p`` to a
goal square centered at ``g``.
"""
import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .dynamics import State
from .errors import ArityMismatch, MissingModel, ParseError, SamplingFailed
from .geom import state_in_collision
from .gbt import GbtModel, GbtParams, Tree, train_gbt
from .roadmap import Guide, sample_free
from .stats import trimmed_indices

FEATURE_ARITY = 6
MODEL_FORMAT = "mgplan-gbt"
MODEL_VERSION = 1
DATASET_FIELDS = ("px", "py", "gx", "gy", "t", "d", "success_fraction")
TARGETS = ("runtime", "distance")

# reference roadmap that defines the roadmap-distance feature
FEATURE_ROADMAP_COUNT = 500
FEATURE_ROADMAP_SEED = 0


@dataclass
class PlanningInstance:
    p: tuple
    g: tuple
    t: float
    d: float
    success_fraction: float


@dataclass
class PlanningDataset:
    fingerprint: str
    instances: List[PlanningInstance]
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.instances)

    def arrays(self):
        P = np.array([i.p for i in self.instances], dtype=float).reshape(-1, 2)
        G = np.array([i.g for i in self.instances], dtype=float).reshape(-1, 2)
        t = np.array([i.t for i in self.instances], dtype=float)
        d = np.array([i.d for i in self.instances], dtype=float)
        return P, G, t, d

    def target(self, name: str) -> np.ndarray:
        _, _, t, d = self.arrays()
        return t if name == "runtime" else d


def feature_guide(scene, count: int = FEATURE_ROADMAP_COUNT,
                  seed: int = FEATURE_ROADMAP_SEED) -> Guide:
    """The roadmap behind the distance feature; a pure function of the layout."""
    return Guide.build(scene.with_goals([]), count, seed)


def featurize_many(P: np.ndarray, G: np.ndarray, guide: Guide) -> np.ndarray:
    P = np.asarray(P, dtype=float).reshape(-1, 2)
    G = np.asarray(G, dtype=float).reshape(-1, 2)
    eu = np.hypot(G[:, 0] - P[:, 0], G[:, 1] - P[:, 1])
    rm = guide.distances(P, G)
    return np.column_stack([P, G, eu, rm])


def featurize(p, g, guide: Guide) -> np.ndarray:
    """[p.x, p.y, g.x, g.y, |g - p|, roadmap distance p -> g]."""
    return featurize_many(np.array([p]), np.array([g]), guide)[0]


def aggregate_runs(runs, time_limit: float, sentinel: float, trim: float = 0.2):
    """Trimmed means of (runtime, distance) over runs, trimming by runtime.

    ``runs`` holds ``(solved, runtime, distance)``. A failed run counts as
    ``time_limit`` for the runtime. The distance averages the kept runs that
    solved; only when none of them did is it the unreachable sentinel.
    """
    ts = [rt if ok else time_limit for ok, rt, _ in runs]
    keep = trimmed_indices(ts, trim)
    t = math.fsum(ts[i] for i in keep) / len(keep)
    solved = [runs[i][2] for i in keep if runs[i][0]]
    d = math.fsum(solved) / len(solved) if solved else sentinel
    succ = sum(1 for ok, _, _ in runs if ok) / len(runs)
    return t, d, succ


def sample_omega(scene, count: int, seed: int) -> np.ndarray:
    """Free points where the robot at heading 0 and rest is collision-free.

    Single-goal runs start from ``(p, 0, 0, 0)``, so points whose start
    footprint collides would only produce failed runs.
    """
    empty = scene.with_goals([])
    shape = scene.robot.shape
    out = []
    draw = 2 * count
    for attempt in range(20):
        pts = sample_free(empty, draw, int(np.random.SeedSequence([seed, attempt])
                                          .generate_state(1, np.uint64)[0])).points[:draw]
        for x, y in pts:
            if not state_in_collision(State(x, y, 0.0, 0.0, 0.0), shape, empty):
                out.append((x, y))
                if len(out) == count:
                    return np.array(out)
    raise SamplingFailed(f"found {len(out)}/{count} footprint-free sample points")


def _run_seed(seed: int, pair: int, run: int) -> int:
    return int(np.random.SeedSequence([seed, pair, run]).generate_state(1, np.uint64)[0])


def generate_dataset(scene, mp: Callable, omega_count: int, runs_per_pair: int = 20,
                     time_limit: float = 10.0, seed: int = 0, trim: float = 0.2,
                     max_pairs: Optional[int] = None, progress=None) -> PlanningDataset:
    """Run the single-goal planner ``mp`` on ordered pairs of free points.

    ``mp(start, goal, seed, time_limit)`` returns ``(solved, runtime, distance)``.
    When ``max_pairs`` is smaller than the number of ordered pairs, a seeded
    random subset is used and recorded in the dataset config.
    """
    if omega_count < 2:
        raise ValueError("omega_count must be >= 2")
    omega = sample_omega(scene, omega_count, seed)
    pairs = [(i, j) for i in range(omega_count) for j in range(omega_count) if i != j]
    total_pairs = len(pairs)
    if max_pairs is not None and max_pairs < total_pairs:
        rng = np.random.default_rng([seed, 1])
        pick = np.sort(rng.choice(total_pairs, size=max_pairs, replace=False))
        pairs = [pairs[k] for k in pick]
    sentinel = 10.0 * scene.diagonal
    instances = []
    for k, (i, j) in enumerate(pairs):
        p = (float(omega[i, 0]), float(omega[i, 1]))
        g = (float(omega[j, 0]), float(omega[j, 1]))
        runs = [mp(p, g, _run_seed(seed, k, r), time_limit) for r in range(runs_per_pair)]
        t, d, succ = aggregate_runs(runs, time_limit, sentinel, trim)
        instances.append(PlanningInstance(p, g, t, d, succ))
        if progress is not None:
            progress(k + 1, len(pairs))
    config = {"omega_count": omega_count, "runs_per_pair": runs_per_pair,
              "time_limit": time_limit, "trim": trim, "seed": seed,
              "pairs_total": total_pairs, "pairs_used": len(pairs),
              "omega": omega.tolist()}
    return PlanningDataset(scene.layout_fingerprint(), instances, config)


def save_dataset(ds: PlanningDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# " + json.dumps({"fingerprint": ds.fingerprint, "config": ds.config}) + "\n")
        w = csv.writer(fh)
        w.writerow(DATASET_FIELDS)
        for inst in ds.instances:
            w.writerow([repr(float(v)) for v in (inst.p[0], inst.p[1], inst.g[0], inst.g[1],
                                                 inst.t, inst.d, inst.success_fraction)])


def load_dataset(path) -> PlanningDataset:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ParseError("missing metadata line", "line 1")
    try:
        meta = json.loads(lines[0][2:])
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, "line 1") from None
    reader = csv.reader(io.StringIO("\n".join(lines[1:])))
    header = next(reader, None)
    if tuple(header or ()) != DATASET_FIELDS:
        raise ParseError(f"expected header {','.join(DATASET_FIELDS)}", "line 2")
    instances = []
    for lineno, row in enumerate(reader, start=3):
        if len(row) != len(DATASET_FIELDS):
            raise ParseError(f"expected {len(DATASET_FIELDS)} fields", f"line {lineno}")
        try:
            px, py, gx, gy, t, d, s = map(float, row)
        except ValueError:
            raise ParseError("non-numeric field", f"line {lineno}") from None
        instances.append(PlanningInstance((px, py), (gx, gy), t, d, s))
    return PlanningDataset(meta.get("fingerprint", ""), instances, meta.get("config", {}))


@dataclass
class CostModel:
    """A trained regressor plus the metadata needed to use it."""

    model: GbtModel
    target: str
    target_range: tuple
    fingerprint: str = ""
    feature_roadmap: dict = field(default_factory=lambda: {
        "count": FEATURE_ROADMAP_COUNT, "seed": FEATURE_ROADMAP_SEED})

    def predict_features(self, F: np.ndarray) -> np.ndarray:
        return self.model.predict(F)

    def predict(self, p, g, guide: Guide) -> float:
        return float(self.model.predict(featurize(p, g, guide)[None, :])[0])

    def normalize(self, values):
        lo, hi = self.target_range
        if hi <= lo:
            return np.zeros_like(values)
        return np.maximum((values - lo) / (hi - lo), 0.0)


def train_cost_model(ds: PlanningDataset, target: str, guide: Guide,
                     params: GbtParams = GbtParams()) -> CostModel:
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    P, G, t, d = ds.arrays()
    y = t if target == "runtime" else d
    X = featurize_many(P, G, guide)
    model = train_gbt(X, y, params)
    return CostModel(model, target, (float(y.min()), float(y.max())), ds.fingerprint)


def model_to_dict(cm: CostModel) -> dict:
    m = cm.model
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "target": cm.target,
        "arity": m.n_features,
        "normalization": list(cm.target_range),
        "fingerprint": cm.fingerprint,
        "feature_roadmap": cm.feature_roadmap,
        "learning_rate": m.learning_rate,
        "base_score": m.base_score,
        "max_leaves": m.max_leaves,
        "max_depth": m.max_depth,
        "degenerate": m.degenerate,
        "trees": [{"feature": t.feature, "threshold": t.threshold, "left": t.left,
                   "right": t.right, "value": t.value} for t in m.trees],
    }


def _check_tree(tree: Tree, where, arity, max_leaves, max_depth):
    n = len(tree.feature)
    if n == 0 or not all(len(a) == n for a in (tree.threshold, tree.left, tree.right,
                                                 tree.value)):
        raise ParseError("inconsistent node arrays", where)
    seen = set()
    stack = [(0, 0)]
    while stack:
        i, depth = stack.pop()
        if i in seen or not 0 <= i < n:
            raise ParseError("bad child index", where)
        seen.add(i)
        f = tree.feature[i]
        if f >= 0:
            if f >= arity:
                raise ParseError(f"feature index {f} out of range", where)
            stack.append((tree.left[i], depth + 1))
            stack.append((tree.right[i], depth + 1))
        elif depth > max_depth:
            raise ParseError("tree deeper than max_depth", where)
    if len(seen) != n:
        raise ParseError("unreachable nodes", where)
    if tree.n_leaves > max_leaves:
        raise ParseError("tree has more leaves than max_leaves", where)


def model_from_dict(d) -> CostModel:
    if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
        raise ParseError("not a model file", "format")
    if d.get("version") != MODEL_VERSION:
        raise ParseError(f"unsupported version {d.get('version')!r}", "version")
    arity = d.get("arity")
    if arity != FEATURE_ARITY:
        raise ArityMismatch(f"model arity {arity} != feature arity {FEATURE_ARITY}")
    try:
        trees = []
        for k, td in enumerate(d["trees"]):
            tree = Tree([int(x) for x in td["feature"]], [float(x) for x in td["threshold"]],
                        [int(x) for x in td["left"]], [int(x) for x in td["right"]],
                        [float(x) for x in td["value"]])
            _check_tree(tree, f"trees[{k}]", arity, int(d["max_leaves"]), int(d["max_depth"]))
            trees.append(tree)
        model = GbtModel(trees, float(d["learning_rate"]), float(d["base_score"]), arity,
                         int(d["max_leaves"]), int(d["max_depth"]), bool(d.get("degenerate")))
        lo, hi = d["normalization"]
        target = d["target"]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"corrupted model: {e}", "trees") from None
    if target not in TARGETS:
        raise ParseError(f"unknown target {target!r}", "target")
    return CostModel(model, target, (float(lo), float(hi)), d.get("fingerprint", ""),
                     d.get("feature_roadmap", {"count": FEATURE_ROADMAP_COUNT,
                                               "seed": FEATURE_ROADMAP_SEED}))


def save_model(cm: CostModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(cm), fh)
        fh.write("\n")


def load_model(path) -> CostModel:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, f"line {e.lineno} column {e.colno}") from None
    return model_from_dict(d)


@dataclass(frozen=True)
class CostModelConfig:
    alpha: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")


def blend(alpha: float, dist_norm, time_norm):
    return alpha * dist_norm + (1.0 - alpha) * time_norm


def from_to_cost(cfg: CostModelConfig, m_d: CostModel, m_t: CostModel, p, g,
                 guide: Guide) -> float:
    """alpha * normalized distance prediction + (1 - alpha) * normalized runtime prediction."""
    if p[0] == g[0] and p[1] == g[1]:
        return 0.0
    F = featurize(p, g, guide)[None, :]
    dn = m_d.normalize(m_d.predict_features(F))[0]
    tn = m_t.normalize(m_t.predict_features(F))[0]
    return float(blend(cfg.alpha, dn, tn))


def accuracy_table(cm: CostModel, ds: PlanningDataset, guide: Guide,
                   tolerances: Sequence[float] = (0.05, 0.1, 0.2, 0.3)) -> dict:
    """Percentage of instances whose prediction is within each relative tolerance."""
    P, G, t, d = ds.arrays()
    y = t if cm.target == "runtime" else d
    pred = cm.predict_features(featurize_many(P, G, guide))
    rel = np.abs(pred - y) / np.maximum(np.abs(y), 1e-12)
    return {tol: float(100.0 * np.mean(rel <= tol)) for tol in tolerances}


def split_dataset(ds: PlanningDataset, train_frac: float = 0.8, seed: int = 0):
    """Seeded random split into (train, test) datasets."""
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(ds))
    cut = int(round(train_frac * len(ds)))
    pick = lambda ii: PlanningDataset(ds.fingerprint, [ds.instances[i] for i in sorted(ii)],
                                      ds.config)
    return pick(idx[:cut]), pick(idx[cut:])



def model_path(models_dir, fingerprint: str, target: str) -> str:
    """Models are stored per layout: ``<dir>/<fingerprint[:16]>.<target>.json``."""
    return os.path.join(models_dir, f"{fingerprint[:16]}.{target}.json")


def load_models_for(scene, models_dir):
    """Return (distance model, runtime model) trained for this scene's layout."""
    fp = scene.layout_fingerprint()
    out = []
    for target in ("distance", "runtime"):
        path = model_path(models_dir, fp, target)
        if not os.path.exists(path):
            raise MissingModel(f"no {target} model for layout {fp[:16]} in {models_dir}")
        out.append(load_model(path))
    return tuple(out)
