"""Kinematic bicycle model: state/action types, RK4 stepping and the
steer-to-target controller used when extending the motion tree."""
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence

from .geom import Polygon, normalize_angle, robot_rectangle


class State(NamedTuple):
    x: float
    y: float
    theta: float
    psi: float
    v: float


class Action(NamedTuple):
    acc: float
    steer_rate: float


def _default_shape():
    return robot_rectangle(2.0, 1.0)


@dataclass(frozen=True)
class RobotModel:
    shape: Polygon = field(default_factory=_default_shape)
    wheelbase: float = 2.0
    dt: float = 0.1
    v_max: float = 3.0
    psi_max: float = 0.7
    acc_max: float = 2.0
    steer_rate_max: float = 2.0
    # controller gains
    k_psi: float = 2.0
    k_v: float = 1.0
    v_cruise: float = 1.5

    def __post_init__(self):
        for name in ("wheelbase", "dt", "v_max", "psi_max", "acc_max",
                     "steer_rate_max", "v_cruise"):
            if not getattr(self, name) > 0:
                raise ValueError(f"RobotModel.{name} must be > 0")

    def to_dict(self) -> dict:
        return {
            "shape": [list(v) for v in self.shape.vertices],
            "wheelbase": self.wheelbase,
            "dt": self.dt,
            "v_max": self.v_max,
            "psi_max": self.psi_max,
            "acc_max": self.acc_max,
            "steer_rate_max": self.steer_rate_max,
            "k_psi": self.k_psi,
            "k_v": self.k_v,
            "v_cruise": self.v_cruise,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RobotModel":
        d = dict(d)
        d["shape"] = Polygon(d["shape"])
        return cls(**d)

    @property
    def min_body_dim(self) -> float:
        xmin, ymin, xmax, ymax = self.shape.bbox
        return min(xmax - xmin, ymax - ymin)


@dataclass
class Trajectory:
    states: List[State]
    actions: List[Action]

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise ValueError("trajectory needs exactly one more state than actions")

    def __len__(self):
        return len(self.states)

    def distance(self) -> float:
        """Path length as the sum of per-step displacements."""
        total = 0.0
        for a, b in zip(self.states, self.states[1:]):
            total += math.hypot(b.x - a.x, b.y - a.y)
        return total


def _clamp(x, lo, hi):
    return lo if x < lo else hi if x > hi else x


def _deriv(x, y, theta, psi, v, acc, steer_rate, inv_l):
    cpsi = math.cos(psi)
    return (v * math.cos(theta) * cpsi,
            v * math.sin(theta) * cpsi,
            v * math.sin(psi) * inv_l,
            steer_rate,
            acc)


def rk4_step(s, a, wheelbase: float, dt: float) -> tuple:
    """One unclamped RK4 step of the motion equations; returns a raw 5-tuple."""
    x, y, th, ps, v = s
    acc, w = a
    inv_l = 1.0 / wheelbase
    h2 = 0.5 * dt
    k1 = _deriv(x, y, th, ps, v, acc, w, inv_l)
    k2 = _deriv(x + h2 * k1[0], y + h2 * k1[1], th + h2 * k1[2], ps + h2 * k1[3],
                v + h2 * k1[4], acc, w, inv_l)
    k3 = _deriv(x + h2 * k2[0], y + h2 * k2[1], th + h2 * k2[2], ps + h2 * k2[3],
                v + h2 * k2[4], acc, w, inv_l)
    k4 = _deriv(x + dt * k3[0], y + dt * k3[1], th + dt * k3[2], ps + dt * k3[3],
                v + dt * k3[4], acc, w, inv_l)
    d6 = dt / 6.0
    return (x + d6 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y + d6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            th + d6 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
            ps + d6 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
            v + d6 * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4]))


def simulate(s: State, a: Action, model: RobotModel) -> State:
    """Integrate one time step with RK4, then clamp speed/steering and wrap heading."""
    x, y, th, ps, v = rk4_step(s, a, model.wheelbase, model.dt)
    return State(x, y, normalize_angle(th),
                 _clamp(ps, -model.psi_max, model.psi_max),
                 _clamp(v, -model.v_max, model.v_max))


def propagate(s0: State, actions: Sequence[Action], model: RobotModel) -> Trajectory:
    states = [s0]
    s = s0
    for a in actions:
        s = simulate(s, a, model)
        states.append(s)
    return Trajectory(states, list(actions))


def steer_controller(s: State, target, model: RobotModel) -> Action:
    """Proportional steer-toward-target controller.

    The steering rate drives psi toward the wrapped heading error, and the
    acceleration drives the speed toward ``model.v_cruise``.
    """
    desired = math.atan2(target[1] - s.y, target[0] - s.x)
    err = normalize_angle(desired - s.theta - s.psi)
    steer_rate = _clamp(model.k_psi * err, -model.steer_rate_max, model.steer_rate_max)
    acc = _clamp(model.k_v * (model.v_cruise - s.v), -model.acc_max, model.acc_max)
    return Action(acc, steer_rate)


def replay_matches(traj: Trajectory, model: RobotModel, tol: float = 1e-9) -> bool:
    """Check that re-simulating the actions reproduces the stored states."""
    s = traj.states[0]
    for a, expected in zip(traj.actions, traj.states[1:]):
        s = simulate(s, a, model)
        for u, w in zip(s, expected):
            if abs(u - w) > tol:
                return False
    return True
