import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mgplan.dynamics import (Action, RobotModel, State, Trajectory, propagate, replay_matches,
                             rk4_step, simulate, steer_controller)
from mgplan.errors import ValidationError
from oracles import euler_batch, euler_step, path_length

MODEL = RobotModel()


def _random_cases(rng, n):
    S = np.column_stack([rng.uniform(0, 100, n), rng.uniform(0, 100, n),
                         rng.uniform(-math.pi, math.pi, n),
                         rng.uniform(-MODEL.psi_max, MODEL.psi_max, n),
                         rng.uniform(-MODEL.v_max, MODEL.v_max, n)])
    A = np.column_stack([rng.uniform(-MODEL.acc_max, MODEL.acc_max, n),
                         rng.uniform(-MODEL.steer_rate_max, MODEL.steer_rate_max, n)])
    return S, A


def test_rk4_agrees_with_extrapolated_fine_euler():
    # Richardson-combined Euler (h and h/2) removes the oracle's first-order error
    rng = np.random.default_rng(11)
    S, A = _random_cases(rng, 40)
    e1 = euler_batch(S, A, MODEL.wheelbase, MODEL.dt, 1e-5)
    e2 = euler_batch(S, A, MODEL.wheelbase, MODEL.dt, 5e-6)
    ref = 2 * e2 - e1
    got = np.array([rk4_step(s, a, MODEL.wheelbase, MODEL.dt) for s, a in zip(S, A)])
    assert np.abs(got - ref).max() < 1e-6


def test_scalar_and_batch_euler_oracles_agree():
    s, a = (1.0, 2.0, 0.3, 0.2, 1.5), (0.5, -0.4)
    one = euler_step(s, a, 2.0, 0.1, 1e-4)
    many = euler_batch(np.array([s]), np.array([a]), 2.0, 0.1, 1e-4)[0]
    assert np.allclose(one, many, atol=1e-12)


def _rk4_horizon(s, a, dt, T=1.0):
    for _ in range(int(round(T / dt))):
        s = rk4_step(s, a, MODEL.wheelbase, dt)
    return np.array(s)


def test_fourth_order_convergence():
    s, a = (0.0, 0.0, 0.2, 0.1, 2.0), (0.8, 0.6)
    ref = _rk4_horizon(s, a, 1e-4)
    e1 = np.abs(_rk4_horizon(s, a, 0.1) - ref).max()
    e2 = np.abs(_rk4_horizon(s, a, 0.05) - ref).max()
    assert 12.0 < e1 / e2 < 20.0


def test_straight_line_motion_is_exact():
    s = simulate(State(1.0, 2.0, 0.0, 0.0, 1.5), Action(0.0, 0.0), MODEL)
    assert s == State(1.0 + 0.15, 2.0, 0.0, 0.0, 1.5)


def test_limits_are_enforced_after_integration():
    s = simulate(State(0, 0, 0, 0.69, 2.99), Action(2.0, 2.0), MODEL)
    assert s.psi == MODEL.psi_max
    assert s.v == MODEL.v_max
    s = simulate(State(0, 0, math.pi - 1e-3, 0.7, 3.0), Action(0.0, 0.0), MODEL)
    assert -math.pi <= s.theta < math.pi


@settings(max_examples=300, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-10, 10),
       st.floats(-0.7, 0.7), st.floats(-3, 3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_controller_respects_action_bounds(x, y, th, psi, v, tx, ty):
    a = steer_controller(State(x, y, th, psi, v), (tx, ty), MODEL)
    assert abs(a.acc) <= MODEL.acc_max
    assert abs(a.steer_rate) <= MODEL.steer_rate_max


def test_controller_reaches_a_point_ahead():
    s = State(0.0, 0.0, 0.0, 0.0, 0.0)
    target = (10.0, 5.0)
    for _ in range(200):
        s = simulate(s, steer_controller(s, target, MODEL), MODEL)
        if math.hypot(s.x - target[0], s.y - target[1]) < 1.0:
            break
    assert math.hypot(s.x - target[0], s.y - target[1]) < 1.0


def test_trajectory_length_invariant():
    with pytest.raises(ValueError):
        Trajectory([State(0, 0, 0, 0, 0)], [Action(0, 0)])


def test_propagate_replay_and_distance():
    rng = np.random.default_rng(2)
    acts = [Action(*rng.uniform(-2, 2, 2)) for _ in range(40)]
    traj = propagate(State(5, 5, 0, 0, 0), acts, MODEL)
    assert len(traj.states) == 41
    assert replay_matches(traj, MODEL)
    assert traj.distance() == pytest.approx(path_length(traj.states), abs=1e-12)
    bad = Trajectory(traj.states[:-1] + [traj.states[-1]._replace(x=traj.states[-1].x + 1e-6)],
                     traj.actions)
    assert not replay_matches(bad, MODEL)


def test_robot_model_round_trip_and_validation():
    m = RobotModel(wheelbase=2.5, v_cruise=1.0)
    assert RobotModel.from_dict(m.to_dict()) == m
    with pytest.raises((ValueError, ValidationError)):
        RobotModel(wheelbase=0.0)
