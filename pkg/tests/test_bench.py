import csv
import math
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from mgplan.bench import (ExperimentSpec, RunRecord, breakdown_table, read_records,
                          relative_increase, render_svg, run_experiment, summary_table,
                          trimmed_stats, write_records)
from mgplan.errors import MissingModel, ValidationError
from mgplan.scene import load_scene
from mgplan.trajfile import load_trajectory
from oracles import path_length

FIX = Path(__file__).parent / "fixtures"
SMALL = ExperimentSpec(scene_seeds=(0,), goal_counts=(3,), instances_per_cell=5,
                       methods=("ed", "rm"), time_limit=10.0)


def _rec(rt, solved=True, dist=1.0, method="rm"):
    return RunRecord(method, "s0", 5, 0, 0, "solved" if solved else "timeout", rt,
                     dist if solved else None)


def test_trimmed_stats_examples():
    recs = [_rec(float(t), dist=float(t) * 2) for t in range(1, 11)]
    st = trimmed_stats(recs, 0.2)
    assert st["mean_runtime"] == 5.5 and st["mean_distance"] == 11.0 and st["kept"] == 6
    five = [_rec(t) for t in (3.0, 1.0, 9.0, 4.0, 5.0)]
    assert trimmed_stats(five, 0.2)["mean_runtime"] == 4.0
    same = [_rec(2.5) for _ in range(7)]
    assert trimmed_stats(same, 0.2)["mean_runtime"] == 2.5


def test_success_rate_uses_all_records():
    recs = [_rec(30.0, solved=False)] * 2 + [_rec(1.0)] * 8
    st = trimmed_stats(recs, 0.2)
    assert st["success_rate"] == 0.8
    assert st["mean_runtime"] == 1.0  # both timeouts are trimmed away
    with pytest.raises(ValueError):
        trimmed_stats([], 0.2)


def test_relative_increase():
    assert relative_increase(6.3, 1.0) == pytest.approx(5.3)
    assert relative_increase(2.0, 2.0) == 0.0
    with pytest.raises(ZeroDivisionError):
        relative_increase(1.0, 0.0)


def test_spec_validation():
    with pytest.raises(ValidationError):
        ExperimentSpec(instances_per_cell=4)
    with pytest.raises(ValidationError):
        ExperimentSpec(trim=0.4)
    with pytest.raises(ValidationError):
        ExperimentSpec(methods=("dromos",))
    with pytest.raises(ValidationError):
        ExperimentSpec.from_dict({"bogus": 1})
    assert ExperimentSpec.from_dict(SMALL.to_dict()) == SMALL


def test_svg_is_well_formed_and_deterministic():
    sc = load_scene(FIX / "scene_handmade.json")
    doc = render_svg(sc)
    root = ET.fromstring(doc)
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}polygon")) == len(sc.obstacles)
    assert len(root.findall(f"{ns}rect[@class='goal']")) == len(sc.goals)
    assert render_svg(sc) == doc


def test_records_csv_round_trip(tmp_path):
    recs = [RunRecord("ml", "s1", 10, 3, 2**63 - 1, "solved", 0.1 + 0.2, 1 / 3,
                      {"sampling": 1e-7, "prediction": 0.0, "tsp": 0.5,
                       "collision+simulate": 2.0, "other": 1 / 7}, 12, 345),
            RunRecord("rm", "s1", 10, 4, 5, "timeout", 30.000001, None, {}, 9, 10)]
    path = tmp_path / "r.csv"
    write_records(recs, path)
    assert read_records(path) == recs
    st1 = trimmed_stats(recs, 0.0)
    st2 = trimmed_stats(read_records(path), 0.0)
    assert st1 == st2


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    return out, run_experiment(SMALL, out, save_trajectories=True, svg=True)


def test_experiment_cardinality_and_outputs(small_run):
    out, recs = small_run
    assert len(recs) == 10
    assert {r.method for r in recs} == {"ed", "rm"}
    for name in ("records.csv", "summary.txt", "breakdown.txt"):
        assert (out / name).exists()
    assert len(summary_table(recs, 0.2).splitlines()) == 3
    assert "collision+simulate" in breakdown_table(recs)
    for r in recs:
        assert (r.distance is not None) == r.solved
        assert sum(r.phases.values()) == pytest.approx(r.runtime, rel=0.05)


def test_distances_match_trajectory_files(small_run):
    out, recs = small_run
    for r in recs:
        if r.solved:
            traj, header = load_trajectory(out / "trajectories" /
                                           f"s0-g3-i{r.instance}-{r.method}.traj")
            assert abs(path_length(traj.states) - r.distance) <= 1e-9
            svg = (out / "svg" / f"s0-g3-i{r.instance}-{r.method}.svg").read_text()
            line = ET.fromstring(svg).find("{http://www.w3.org/2000/svg}polyline")
            assert len(line.get("points").split()) == len(traj.states)


def test_rerun_reproduces_outcomes(small_run, tmp_path):
    _, recs = small_run
    again = run_experiment(SMALL, tmp_path)
    assert [(r.key, r.outcome, r.distance) for r in again] == \
           [(r.key, r.outcome, r.distance) for r in recs]


def test_resume_after_crash(small_run, tmp_path):
    out, recs = small_run
    lines = (out / "records.csv").read_text().splitlines()
    # keep the header, 4 complete rows and a truncated fifth
    (tmp_path / "records.csv").write_text("\n".join(lines[:5]) + "\n" + lines[5][:12])
    for p in (out / "instances").iterdir():
        (tmp_path / "instances").mkdir(exist_ok=True)
        (tmp_path / "instances" / p.name).write_text(p.read_text())
    calls = []
    resumed = run_experiment(SMALL, tmp_path, progress=lambda r, k, n: calls.append(r.key))
    assert len(calls) == 6
    assert [(r.key, r.outcome, r.distance) for r in resumed] == \
           [(r.key, r.outcome, r.distance) for r in recs]


def test_ml_without_models_is_an_error(tmp_path):
    spec = ExperimentSpec(scene_seeds=(0,), goal_counts=(3,), instances_per_cell=5,
                          methods=("ml",))
    with pytest.raises(MissingModel):
        run_experiment(spec, tmp_path)
    with pytest.raises(MissingModel):
        run_experiment(spec, tmp_path / "x", models_dir=tmp_path / "empty")


def test_parallel_requires_timing_off(tmp_path):
    with pytest.raises(ValueError):
        run_experiment(SMALL, tmp_path, workers=2)
