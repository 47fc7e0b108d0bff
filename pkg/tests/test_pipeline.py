import math

import numpy as np
import pytest

from flowservo.errors import ConfigError, DomainError
from flowservo.geometry import CameraModel, Pose, integrate_pose
from flowservo.pipeline import (NAIVE_FB, OURS, RADIAL_FB, Controller, ControllerParams, GoalGains, Mode, Outcome,
                                Termination, center_window, control_step, damp_forward, goal_controller, mode_select,
                                perceive, run_episode)
from flowservo.scene import Building, Scene, point_box_distance

CAM = CameraModel(64, 48, 32.0, 32.0)


def test_mode_select_examples():
    s = mode_select(np.zeros((48, 64)), 0.02)
    assert (s.mode, s.mask_coverage, s.center_coverage) == (Mode.GOAL, 0.0, 0.0)
    s = mode_select(np.ones((48, 64)), 0.02)
    assert (s.mode, s.mask_coverage, s.center_coverage) == (Mode.AVOID, 1.0, 1.0)
    mask = np.zeros((48, 64))
    rows, cols = center_window(48, 64)
    mask[rows, cols] = 1
    s = mode_select(mask, 0.05)
    assert s.mask_coverage == 0.25 and s.center_coverage == 1.0 and s.mode is Mode.AVOID
    with pytest.raises(DomainError):
        mode_select(mask, 1.0)


def test_mode_threshold_is_inclusive():
    mask = np.zeros((10, 10))
    mask[0, :2] = 1
    assert mode_select(mask, 0.02).mode is Mode.AVOID
    assert mode_select(mask, 0.03).mode is Mode.GOAL


def test_goal_controller_examples():
    g = GoalGains(k_yaw=1.0, k_z=0.5, yaw_rate_max=0.8)
    cmd = goal_controller(Pose((0, 0, 10)), (50, 0, 10), g, 3.0)
    assert np.allclose(cmd, [3.0, 0, 0, 0])
    cmd = goal_controller(Pose((0, 0, 10)), (-50, 0, 10), g, 3.0)
    assert cmd[0] == 0.0 and abs(cmd[3]) == pytest.approx(0.8)
    cmd = goal_controller(Pose((0, 0, 10)), (0, 50, 12), GoalGains(k_yaw=0.2), 3.0)
    assert cmd[3] == pytest.approx(0.2 * math.pi / 2)
    assert cmd[0] == pytest.approx(0.0, abs=1e-12) and cmd[2] == pytest.approx(1.0)


def test_damp_forward_examples():
    cmd = np.array([2.0, 0.5, -0.2, 0.1])
    assert np.array_equal(damp_forward(cmd, 0.0, 0.15, 0.5), cmd)
    assert np.array_equal(damp_forward(cmd, 1.0, 0.15, 0.5), [1.0, 0.5, -0.2, 0.1])
    for cov in (0.0, 0.3, 1.0):
        assert np.array_equal(damp_forward(cmd, cov, 0.15, 1.0), cmd)
    with pytest.raises(DomainError):
        damp_forward(cmd, 0.5, 0.15, 0.0)


def test_params_validation():
    with pytest.raises(ConfigError):
        ControllerParams(depth_mode="stereo")
    with pytest.raises(ConfigError):
        ControllerParams(tau_mask=0.0)
    with pytest.raises(ConfigError):
        Termination(dt=0)
    with pytest.raises(ConfigError):
        Controller("magic", CAM, ControllerParams(), (1, 0, 0))


def _left_wall_frame():
    # Building occupying the left half of the view, right in the flight path.
    scene = Scene([Building(3, (20, 0, 0), (40, 40, 60))])
    p0 = Pose((0, 0, 10))
    p1 = integrate_pose(p0, [3, 0, 0, 0], 0.1)
    f0 = perceive(scene, p0, CAM)
    f1 = perceive(scene, p1, CAM, f0)
    return scene, f1


def test_left_obstacle_pushes_right():
    scene, frame = _left_wall_frame()
    assert frame.boc == 3
    m = frame.mask
    assert m[:, : 32].mean() > 0.5 and m[:, 33:].sum() == 0
    ctl = Controller(OURS, CAM, ControllerParams(), (100, 0, 10), seed=0)
    cmd, log = control_step(ctl, frame)
    assert log.mode is Mode.AVOID and not log.fallback
    assert cmd[1] < 0


def test_baselines_turn_right_from_left_obstacle():
    _, frame = _left_wall_frame()
    for kind in (RADIAL_FB, NAIVE_FB):
        cmd, log = control_step(Controller(kind, CAM, ControllerParams(), (100, 0, 10)), frame)
        assert log.mode is Mode.AVOID and cmd[3] < 0 and cmd[1] == 0 and cmd[2] == 0


def test_damping_reduces_raw_forward():
    scene = Scene([Building(1, (20, -20, 0), (30, 20, 60))])
    p0 = Pose((0, 0, 10))
    f1 = perceive(scene, integrate_pose(p0, [3, 0, 0, 0], 0.1), CAM, perceive(scene, p0, CAM))
    ctl = Controller(OURS, CAM, ControllerParams(mu=0.5), (100, 0, 10))
    cmd, log = control_step(ctl, f1)
    assert log.center_coverage >= 0.15
    raw = ctl.prev_solution
    if raw[0] > 0:
        assert cmd[0] == pytest.approx(0.5 * raw[0]) and cmd[0] < raw[0]


def test_first_step_is_goal_reaching():
    scene = Scene([Building(1, (20, -20, 0), (30, 20, 60))])
    frame = perceive(scene, Pose((0, 0, 10)), CAM)
    cmd, log = control_step(Controller(OURS, CAM, ControllerParams(), (100, 0, 10)), frame)
    assert log.mode is Mode.GOAL and np.allclose(cmd, [3, 0, 0, 0])


def test_empty_scene_straight_line():
    term = Termination(goal_radius=5.0)
    for kind in (OURS, NAIVE_FB, RADIAL_FB):
        res = run_episode(Scene([]), Pose((0, 0, 10)), (20, 0, 10), CAM, kind, term=term)
        assert res.outcome is Outcome.SUCCESS
        assert all(p.mode is Mode.GOAL for p in res.trajectory)
        # Stops at the first sample inside the goal radius: within one step of 15 m.
        assert 15.0 <= res.traj_length < 15.0 + 3.0 * term.dt + 1e-9
        assert np.allclose(res.positions[:, 1:], [0, 10])


def test_immediate_collision_and_timeout():
    scene = Scene([Building(1, (-1, -1, 0), (1, 1, 20))])
    res = run_episode(scene, Pose((0, 0, 10)), (50, 0, 10), CAM, OURS)
    assert res.outcome is Outcome.COLLISION and res.traj_length == 0 and len(res.trajectory) == 1
    res = run_episode(Scene([]), Pose((0, 0, 10)), (50, 0, 10), CAM, OURS,
                      ControllerParams(v_max=0.0), Termination(t_max=1.0))
    assert res.outcome is Outcome.TIMEOUT and res.traj_length == 0


@pytest.fixture(scope="module")
def avoid_episode():
    scene = Scene([Building(1, (25, -8, 0), (35, 8, 40))])
    res = run_episode(scene, Pose((0, 0, 10)), (60, 0, 10), CAM, OURS, noise_sigma=0.5, seed=3,
                      term=Termination(t_max=40))
    return scene, res


def test_episode_invariants(avoid_episode):
    scene, res = avoid_episode
    pos = res.positions
    assert res.min_dist == pytest.approx(point_box_distance(pos, scene.buildings).min(), abs=1e-9)
    assert res.traj_length == pytest.approx(np.linalg.norm(np.diff(pos, axis=0), axis=1).sum(), abs=1e-9)
    assert any(p.mode is Mode.AVOID for p in res.trajectory)
    assert np.array_equal(res.trajectory[-1].command, np.zeros(4))
    if res.outcome is Outcome.SUCCESS:
        assert np.linalg.norm(pos[-1] - [60, 0, 10]) <= 5.0
        assert all(p.min_dist > 0.5 for p in res.trajectory)
    times = [p.t for p in res.trajectory]
    assert np.allclose(np.diff(times), 0.1)


def test_episode_determinism(avoid_episode):
    scene, res = avoid_episode
    again = run_episode(scene, Pose((0, 0, 10)), (60, 0, 10), CAM, OURS, noise_sigma=0.5, seed=3,
                        term=Termination(t_max=40))
    assert again.outcome == res.outcome
    assert np.array_equal(again.positions, res.positions)
    assert all(np.array_equal(a.command, b.command) for a, b in zip(again.trajectory, res.trajectory))
