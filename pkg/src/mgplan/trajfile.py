"""Trajectory files.

Line 1 is ``# `` followed by a JSON header (format, version, scene
fingerprint, planner config, provider, outcome). Line 2 is the CSV column
header; each following row is one step: the state components, then the
action that produced it (empty on the first row). Floats are written with
``repr`` so that reading a file back gives the exact same numbers.
"""
import csv
import io
import json
from typing import Optional, Tuple

from .dynamics import Action, State, Trajectory
from .errors import ParseError

FORMAT_NAME = "mgplan-trajectory"
FORMAT_VERSION = 1
COLUMNS = ("x", "y", "theta", "psi", "v", "acc", "steer_rate")


def dumps_trajectory(traj: Trajectory, header: dict) -> str:
    head = {"format": FORMAT_NAME, "version": FORMAT_VERSION, **header}
    buf = io.StringIO()
    buf.write("# " + json.dumps(head, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for i, s in enumerate(traj.states):
        a = traj.actions[i - 1] if i > 0 else None
        row = [repr(float(c)) for c in s]
        row += [repr(float(c)) for c in a] if a is not None else ["", ""]
        w.writerow(row)
    return buf.getvalue()


def save_trajectory(traj: Trajectory, header: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps_trajectory(traj, header))


def loads_trajectory(text: str) -> Tuple[Trajectory, dict]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ParseError("missing header line", "line 1")
    try:
        header = json.loads(lines[0][2:])
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, "line 1") from None
    if header.get("format") != FORMAT_NAME:
        raise ParseError(f"unknown format {header.get('format')!r}", "line 1")
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ParseError(f"expected columns {','.join(COLUMNS)}", "line 2")
    states, actions = [], []
    for lineno, row in enumerate(rows[1:], start=3):
        if len(row) != len(COLUMNS):
            raise ParseError(f"expected {len(COLUMNS)} fields", f"line {lineno}")
        try:
            states.append(State(*map(float, row[:5])))
            if lineno == 3:
                if row[5] or row[6]:
                    raise ParseError("first step must not carry an action", f"line {lineno}")
            else:
                actions.append(Action(float(row[5]), float(row[6])))
        except ValueError:
            raise ParseError("non-numeric field", f"line {lineno}") from None
    if not states:
        raise ParseError("no steps", "line 3")
    return Trajectory(states, actions), header


def load_trajectory(path) -> Tuple[Trajectory, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_trajectory(fh.read())


def trajectory_header(scene, config, provider_name: str,
                      solved: Optional[bool] = None) -> dict:
    h = {"scene_fingerprint": scene.fingerprint(), "config": dict(config.__dict__),
         "cost": provider_name}
    if solved is not None:
        h["solved"] = solved
    return h
