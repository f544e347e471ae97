"""Command-line entry point: ``mgplan <command> ...``."""
import argparse
import json
import sys
from dataclasses import replace

from . import bench
from .costmodel import (feature_guide, generate_dataset, load_dataset, model_path,
                        save_dataset, save_model, train_cost_model)
from .errors import MgplanError
from .planner import PlannerConfig, make_mp, plan
from .scene import RandomInstanceSpec, generate_scene, load_scene, save_scene
from .timing import PhaseTimer
from .trajfile import load_trajectory, save_trajectory, trajectory_header


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def cmd_gen_scene(a):
    d = {}
    if a.spec:
        with open(a.spec, "r", encoding="utf-8") as fh:
            d = json.load(fh)
    spec = RandomInstanceSpec.from_dict(d)
    if a.seed is not None:
        spec = replace(spec, seed=a.seed)
    save_scene(generate_scene(spec), a.out)


def _progress(k, n):
    print(f"\r{k}/{n} pairs", end="" if k < n else "\n", file=sys.stderr, flush=True)


def cmd_gen_dataset(a):
    scene = load_scene(a.scene)
    mp = make_mp(scene, PlannerConfig())
    ds = generate_dataset(scene, mp, a.omega, a.runs, a.time_limit, a.seed,
                          max_pairs=a.max_pairs, progress=None if a.quiet else _progress)
    save_dataset(ds, a.out)


def cmd_train(a):
    scene = load_scene(a.scene)
    ds = load_dataset(a.dataset)
    if ds.fingerprint and ds.fingerprint != scene.layout_fingerprint():
        raise MgplanError("dataset was generated on a different scene layout")
    cm = train_cost_model(ds, a.target, feature_guide(scene))
    out = a.out or model_path(a.models, scene.layout_fingerprint(), a.target)
    save_model(cm, out)
    print(out)


def cmd_plan(a):
    timer = PhaseTimer()
    scene = load_scene(a.scene)
    provider = bench.make_provider(a.cost, scene, a.models, a.alpha)
    cfg = PlannerConfig(alpha=a.alpha, seed=a.seed, t_max=a.time_limit, debug=a.debug)
    res = plan(scene, cfg, provider, timer=timer)
    print(f"{res.status} runtime={res.runtime:.3f}s iterations={res.iterations} "
          f"tree={res.tree_size} groups={res.groups}"
          + (f" distance={res.distance:.3f}" if res.solved else ""))
    if res.solved:
        save_trajectory(res.trajectory, trajectory_header(scene, cfg, a.cost, True), a.out)
        if a.svg:
            with open(a.svg, "w", encoding="utf-8") as fh:
                fh.write(bench.render_svg(scene, res.trajectory))
    return 0 if res.solved else 2


def cmd_bench(a):
    spec = bench.load_spec(a.spec)

    def progress(rec, k, n):
        if not a.quiet:
            print(f"[{k}/{n}] {rec.method} s={rec.scene} g={rec.goal_count} "
                  f"i={rec.instance} {rec.outcome} {rec.runtime:.2f}s", file=sys.stderr)

    bench.run_experiment(spec, a.out, a.models, workers=a.workers,
                         phase_timing=not a.no_phase_timing,
                         save_trajectories=a.trajectories, svg=a.svg, progress=progress)
    with open(f"{a.out}/summary.txt") as fh:
        print(fh.read(), end="")


def cmd_render(a):
    scene = load_scene(a.scene)
    traj = load_trajectory(a.traj)[0] if a.traj else None
    with open(a.out, "w", encoding="utf-8") as fh:
        fh.write(bench.render_svg(scene, traj))


def build_parser():
    p = argparse.ArgumentParser(prog="mgplan", description="Multi-goal kinodynamic planning")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-scene", help="generate a random scene file")
    s.add_argument("--spec", help="JSON file with generator settings")
    s.add_argument("--seed", type=_u64)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gen_scene)

    s = sub.add_parser("gen-dataset", help="run the single-goal planner between sample pairs")
    s.add_argument("--scene", required=True)
    s.add_argument("--omega", type=int, default=500, help="number of sample points")
    s.add_argument("--runs", type=int, default=20, help="runs per ordered pair")
    s.add_argument("--time-limit", type=float, default=10.0)
    s.add_argument("--max-pairs", type=int, help="random subset of ordered pairs")
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--quiet", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gen_dataset)

    s = sub.add_parser("train", help="fit a runtime or distance regressor")
    s.add_argument("--dataset", required=True)
    s.add_argument("--scene", required=True)
    s.add_argument("--target", choices=("runtime", "distance"), required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--out", help="model file")
    g.add_argument("--models", help="models directory (file named by layout)")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("plan", help="plan a multi-goal trajectory")
    s.add_argument("--scene", required=True)
    s.add_argument("--cost", choices=bench.METHODS, default="rm")
    s.add_argument("--models")
    s.add_argument("--alpha", type=float, default=0.9)
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--time-limit", type=float, default=30.0)
    s.add_argument("--debug", action="store_true", help="periodic partition audits")
    s.add_argument("--svg", help="also write a picture of the solution")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_plan)

    s = sub.add_parser("bench", help="run an experiment spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--models")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--no-phase-timing", action="store_true")
    s.add_argument("--sequential", action="store_true",
                   help="one run at a time (the default; overrides --workers)")
    s.add_argument("--trajectories", action="store_true")
    s.add_argument("--svg", action="store_true")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(fn=cmd_bench)

    s = sub.add_parser("render", help="draw a scene and optional trajectory as SVG")
    s.add_argument("--scene", required=True)
    s.add_argument("--traj")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_render)
    return p


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    if getattr(a, "sequential", False):
        a.workers = 1
    try:
        rc = a.fn(a)
    except (MgplanError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
