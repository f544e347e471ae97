"""Experiment harness: instance batches, per-method runs, trimmed statistics,
runtime breakdown tables and SVG pictures of scenes and solutions.

Records are appended to a CSV file as soon as each run finishes, so an
interrupted experiment resumes where it stopped.
"""
import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .costmodel import (generate_dataset, load_models_for, model_path, save_dataset,
                        save_model, feature_guide, train_cost_model)
from .errors import MissingModel, ValidationError
from .gbt import GbtParams
from .planner import (EuclideanCost, LearnedCost, PlannerConfig, RoadmapCost, make_mp, plan)
from .scene import RandomInstanceSpec, Scene, generate_layout, load_scene, place_goals, save_scene
from .stats import trimmed_indices
from .timing import PHASES, PhaseTimer
from .trajfile import save_trajectory, trajectory_header

METHODS = ("ml", "ed", "rm")
PHASE_COLUMNS = tuple("t_" + p.replace("+", "_") for p in PHASES)
RECORD_FIELDS = ("method", "scene", "goal_count", "instance", "seed", "outcome",
                 "runtime", "distance") + PHASE_COLUMNS + ("iterations", "tree_size")


@dataclass(frozen=True)
class ExperimentSpec:
    scene_seeds: tuple = (0, 1, 2, 3)
    goal_counts: tuple = (5, 10, 15)
    instances_per_cell: int = 20
    methods: tuple = METHODS
    time_limit: float = 30.0
    trim: float = 0.2
    seed: int = 0
    alpha: float = 0.9
    # overrides for RandomInstanceSpec (obstacle count, sizes, ...)
    scene: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.instances_per_cell < 5:
            raise ValidationError("instances_per_cell must be >= 5")
        if not 0.0 <= self.trim < 0.4:
            raise ValidationError("trim must be in [0, 0.4)")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ValidationError(f"methods must be a nonempty subset of {METHODS}")
        if not self.scene_seeds or not self.goal_counts:
            raise ValidationError("need at least one scene seed and one goal count")
        if not self.time_limit > 0:
            raise ValidationError("time_limit must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        for k in ("scene_seeds", "goal_counts", "methods"):
            if k in d:
                d[k] = tuple(d[k])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        for k in ("scene_seeds", "goal_counts", "methods"):
            d[k] = list(d[k])
        return d


def load_spec(path) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentSpec.from_dict(json.load(fh))


@dataclass
class RunRecord:
    method: str
    scene: str
    goal_count: int
    instance: int
    seed: int
    outcome: str
    runtime: float
    distance: Optional[float]
    phases: Dict[str, float] = field(default_factory=dict)
    iterations: int = 0
    tree_size: int = 0

    @property
    def solved(self) -> bool:
        return self.outcome == "solved"

    @property
    def key(self):
        return (self.method, self.scene, self.goal_count, self.instance)

    def to_row(self) -> list:
        row = [self.method, self.scene, self.goal_count, self.instance, self.seed,
               self.outcome, repr(float(self.runtime)),
               "" if self.distance is None else repr(float(self.distance))]
        row += [repr(float(self.phases[p])) if p in self.phases else "" for p in PHASES]
        return row + [self.iterations, self.tree_size]

    @classmethod
    def from_row(cls, row: Sequence[str]) -> "RunRecord":
        d = dict(zip(RECORD_FIELDS, row))
        phases = {p: float(d[c]) for p, c in zip(PHASES, PHASE_COLUMNS) if d[c] != ""}
        return cls(d["method"], d["scene"], int(d["goal_count"]), int(d["instance"]),
                   int(d["seed"]), d["outcome"], float(d["runtime"]),
                   float(d["distance"]) if d["distance"] else None, phases,
                   int(d["iterations"]), int(d["tree_size"]))


def read_records(path) -> List[RunRecord]:
    if not os.path.exists(path):
        return []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != RECORD_FIELDS:
            raise ValidationError(f"{path}: unexpected records header")
        # a crash mid-write can leave a truncated last line
        return [RunRecord.from_row(r) for r in reader if len(r) == len(RECORD_FIELDS)]


def write_records(records: Sequence[RunRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow(r.to_row())


# ---------------------------------------------------------------- instances

@dataclass(frozen=True)
class Cell:
    index: int
    scene_seed: int
    goal_count: int
    instance: int
    seed: int

    @property
    def scene_id(self) -> str:
        return f"s{self.scene_seed}"

    @property
    def name(self) -> str:
        return f"s{self.scene_seed}-g{self.goal_count}-i{self.instance}"


def cell_seed(spec_seed: int, index: int) -> int:
    """Planner seed for a cell; shared by all methods run on that cell."""
    ss = np.random.SeedSequence([spec_seed, index])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def cells(spec: ExperimentSpec) -> List[Cell]:
    out = []
    for s in spec.scene_seeds:
        for gc in spec.goal_counts:
            for i in range(spec.instances_per_cell):
                k = len(out)
                out.append(Cell(k, s, gc, i, cell_seed(spec.seed, k)))
    return out


def instance_spec(spec: ExperimentSpec, scene_seed: int, goal_count: int = 1):
    return RandomInstanceSpec.from_dict({**spec.scene, "seed": scene_seed,
                                         "goal_count": goal_count})


def layout(spec: ExperimentSpec, scene_seed: int) -> Scene:
    """The obstacle layout and start shared by every instance of a scene seed."""
    return generate_layout(instance_spec(spec, scene_seed))


def make_instance(spec: ExperimentSpec, base: Scene, cell: Cell) -> Scene:
    rng = np.random.default_rng([spec.seed, cell.scene_seed, cell.goal_count, cell.instance])
    return place_goals(base, instance_spec(spec, cell.scene_seed, cell.goal_count), rng)


# ---------------------------------------------------------------- models

def train_models(base: Scene, models_dir, omega_count: int = 40, runs_per_pair: int = 10,
                 time_limit: float = 10.0, max_pairs: Optional[int] = None, seed: int = 0,
                 params: GbtParams = GbtParams(), dataset_path=None, progress=None):
    """Generate a single-goal dataset on ``base`` and train both regressors."""
    os.makedirs(models_dir, exist_ok=True)
    mp = make_mp(base, PlannerConfig())
    ds = generate_dataset(base, mp, omega_count, runs_per_pair, time_limit, seed,
                          max_pairs=max_pairs, progress=progress)
    if dataset_path is not None:
        save_dataset(ds, dataset_path)
    fg = feature_guide(base)
    out = {}
    for target in ("distance", "runtime"):
        cm = train_cost_model(ds, target, fg, params)
        save_model(cm, model_path(models_dir, ds.fingerprint, target))
        out[target] = cm
    return ds, out


def make_provider(method: str, scene: Scene, models_dir=None, alpha: float = 0.9):
    if method == "ed":
        return EuclideanCost()
    if method == "rm":
        return RoadmapCost()
    if method == "ml":
        if models_dir is None:
            raise MissingModel("ML guidance requested without a models directory")
        m_d, m_t = load_models_for(scene, models_dir)
        return LearnedCost(m_d, m_t, alpha)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------- runs

def run_instance(scene_path, method: str, cfg: PlannerConfig, models_dir=None,
                 alpha: float = 0.9, timer: Optional[PhaseTimer] = None):
    """Load, set up and plan; the clock starts before the scene file is read."""
    timer = timer if timer is not None else PhaseTimer()
    scene = load_scene(scene_path)
    provider = make_provider(method, scene, models_dir, alpha)
    return scene, plan(scene, cfg, provider, timer=timer)


def _run_cell(args):
    path, method, cfg, models_dir, alpha, cell, keep_phases, traj_dir = args
    scene, res = run_instance(path, method, cfg, models_dir, alpha)
    if traj_dir is not None and res.solved:
        save_trajectory(res.trajectory, trajectory_header(scene, cfg, method, True),
                        os.path.join(traj_dir, f"{cell.name}-{method}.traj"))
    return RunRecord(method, cell.scene_id, cell.goal_count, cell.instance, cell.seed,
                     res.status, res.runtime, res.distance,
                     dict(res.phases) if keep_phases else {}, res.iterations, res.tree_size)


def run_experiment(spec: ExperimentSpec, out_dir, models_dir=None, workers: int = 1,
                   phase_timing: bool = True, save_trajectories: bool = False,
                   svg: bool = False, progress=None) -> List[RunRecord]:
    """Run every (cell, method) pair; resumes from ``out_dir/records.csv``."""
    if workers > 1 and phase_timing:
        raise ValueError("parallel runs require phase timing to be disabled")
    os.makedirs(out_dir, exist_ok=True)
    inst_dir = os.path.join(out_dir, "instances")
    os.makedirs(inst_dir, exist_ok=True)
    traj_dir = os.path.join(out_dir, "trajectories") if (save_trajectories or svg) else None
    if traj_dir:
        os.makedirs(traj_dir, exist_ok=True)

    bases = {s: layout(spec, s) for s in spec.scene_seeds}
    if "ml" in spec.methods:
        for s, base in bases.items():
            if models_dir is None:
                raise MissingModel("ML guidance requested without a models directory")
            load_models_for(base, models_dir)

    all_cells = cells(spec)
    paths = {}
    for c in all_cells:
        path = os.path.join(inst_dir, c.name + ".json")
        if not os.path.exists(path):
            save_scene(make_instance(spec, bases[c.scene_seed], c), path)
        paths[c.index] = path

    rec_path = os.path.join(out_dir, "records.csv")
    done = {r.key: r for r in read_records(rec_path)}
    write_records(list(done.values()), rec_path)  # drops a truncated tail, if any
    todo = []
    for c in all_cells:
        for m in spec.methods:
            if (m, c.scene_id, c.goal_count, c.instance) not in done:
                cfg = PlannerConfig(alpha=spec.alpha, t_max=spec.time_limit, seed=c.seed)
                todo.append((paths[c.index], m, cfg, models_dir, spec.alpha, c,
                             phase_timing, traj_dir))

    with open(rec_path, "a", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)

        def commit(rec):
            done[rec.key] = rec
            w.writerow(rec.to_row())
            fh.flush()
            if progress is not None:
                progress(rec, len(done), len(all_cells) * len(spec.methods))

        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                for rec in ex.map(_run_cell, todo):
                    commit(rec)
        else:
            for args in todo:
                commit(_run_cell(args))

    records = [done[(m, c.scene_id, c.goal_count, c.instance)]
               for c in all_cells for m in spec.methods]
    if svg:
        svg_dir = os.path.join(out_dir, "svg")
        os.makedirs(svg_dir, exist_ok=True)
        from .trajfile import load_trajectory
        for c in all_cells:
            for m in spec.methods:
                tp = os.path.join(traj_dir, f"{c.name}-{m}.traj")
                if os.path.exists(tp):
                    traj, _ = load_trajectory(tp)
                    with open(os.path.join(svg_dir, f"{c.name}-{m}.svg"), "w") as fh:
                        fh.write(render_svg(load_scene(paths[c.index]), traj))
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(summary_table(records, spec.trim))
    if phase_timing:
        with open(os.path.join(out_dir, "breakdown.txt"), "w") as fh:
            fh.write(breakdown_table(records))
    return records


# ---------------------------------------------------------------- statistics

def trimmed_stats(records: Sequence[RunRecord], trim: float) -> dict:
    """Trimmed means by runtime; the success rate uses every record."""
    if not records:
        raise ValueError("no records")
    keep = [records[i] for i in trimmed_indices([r.runtime for r in records], trim)]
    dists = [r.distance for r in keep if r.distance is not None]
    return {
        "mean_runtime": math.fsum(r.runtime for r in keep) / len(keep),
        "mean_distance": math.fsum(dists) / len(dists) if dists else None,
        "success_rate": sum(r.solved for r in records) / len(records),
        "n": len(records),
        "kept": len(keep),
    }


def relative_increase(a: float, b: float) -> float:
    """(a - b) / b, e.g. how much slower method a is than method b."""
    if b == 0:
        raise ZeroDivisionError("relative increase over a zero baseline")
    return (a - b) / b


def group_records(records, keys=("scene", "goal_count", "method")):
    groups: Dict[tuple, List[RunRecord]] = {}
    for r in records:
        groups.setdefault(tuple(getattr(r, k) for k in keys), []).append(r)
    return groups


def summary_table(records: Sequence[RunRecord], trim: float) -> str:
    groups = group_records(records)
    lines = [f"{'scene':<6} {'goals':>5} {'method':<6} {'n':>4} {'success':>8} "
             f"{'runtime':>9} {'distance':>9} {'vs_ml':>7}"]
    for (scene, gc, method), recs in sorted(groups.items()):
        st = trimmed_stats(recs, trim)
        ml = groups.get((scene, gc, "ml"))
        rel = ""
        if ml is not None and method != "ml":
            base = trimmed_stats(ml, trim)["mean_runtime"]
            rel = f"{relative_increase(st['mean_runtime'], base):+.2f}" if base > 0 else ""
        dist = f"{st['mean_distance']:.2f}" if st["mean_distance"] is not None else "-"
        lines.append(f"{scene:<6} {gc:>5} {method:<6} {st['n']:>4} "
                     f"{100 * st['success_rate']:>7.1f}% {st['mean_runtime']:>9.3f} "
                     f"{dist:>9} {rel:>7}")
    return "\n".join(lines) + "\n"


def phase_shares(rec: RunRecord) -> Optional[Dict[str, float]]:
    if not rec.phases or rec.runtime <= 0:
        return None
    return {p: rec.phases.get(p, 0.0) / rec.runtime for p in PHASES}


def breakdown_table(records: Sequence[RunRecord]) -> str:
    """Mean percentage of runtime spent per phase, per method and goal count."""
    lines = [f"{'method':<6} {'goals':>5} " + " ".join(f"{p:>18}" for p in PHASES)]
    for (gc, method), recs in sorted(group_records(records, ("goal_count", "method")).items()):
        shares = [s for s in map(phase_shares, recs) if s is not None]
        if not shares:
            continue
        cols = " ".join(f"{100 * np.mean([s[p] for s in shares]):>17.1f}%" for p in PHASES)
        lines.append(f"{method:<6} {gc:>5} {cols}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- pictures

def _f(v: float) -> str:
    return f"{v:.3f}"


def render_svg(scene: Scene, trajectory=None, scale: float = 6.0) -> str:
    """Obstacles, labelled goal squares and an optional trajectory with its start."""
    xmin, ymin, xmax, ymax = scene.bounds
    w = (xmax - xmin) * scale
    h = (ymax - ymin) * scale

    def X(x):
        return _f((x - xmin) * scale)

    def Y(y):
        return _f((ymax - y) * scale)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(w)}" height="{_f(h)}" '
           f'viewBox="0 0 {_f(w)} {_f(h)}">',
           f'<rect class="world" x="0" y="0" width="{_f(w)}" height="{_f(h)}" '
           'fill="white" stroke="black"/>']
    for obs in scene.obstacles:
        pts = " ".join(f"{X(v.x)},{Y(v.y)}" for v in obs.vertices)
        out.append(f'<polygon class="obstacle" points="{pts}" fill="#888"/>')
    for g in scene.goals:
        cx, cy = g.center
        s = g.half_side
        out.append(f'<rect class="goal" x="{X(cx - s)}" y="{Y(cy + s)}" '
                   f'width="{_f(2 * s * scale)}" height="{_f(2 * s * scale)}" fill="#2a2"/>')
        out.append(f'<text x="{X(cx + s)}" y="{Y(cy + s)}" font-size="10">{g.id}</text>')
    if trajectory is not None:
        pts = " ".join(f"{X(s.x)},{Y(s.y)}" for s in trajectory.states)
        out.append(f'<polyline class="trajectory" points="{pts}" fill="none" '
                   'stroke="#22c" stroke-width="1.5"/>')
        s0 = trajectory.states[0]
        out.append(f'<circle class="start" cx="{X(s0.x)}" cy="{Y(s0.y)}" r="4" fill="#c22"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
