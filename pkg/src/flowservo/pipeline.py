"""Closed-loop avoidance: perception, mode switching, control and episodes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .baselines import FlowBalanceConfig, naive_flow_balance_step, radial_flow_balance_step
from .errors import ConfigError, DomainError, OptimizationError
from .flowsynth import (DEPTH_MODES, EGOMOTION, RadialFlowParams, desired_flow, egomotion_depth, flowdepth,
                        radial_flow_field)
from .geometry import CMD_FWD, CameraModel, Pose, integrate_pose, wrap_angle
from .scene import (Scene, add_flow_noise, analytic_flow, render_depth_and_ids, render_obstacle_mask,
                    select_building_of_concern)
from .servo import CemConfig, predict_flow, servo_command

OURS = "ours"
NAIVE_FB = "naive-fb"
RADIAL_FB = "radial-fb"
CONTROLLERS = (OURS, NAIVE_FB, RADIAL_FB)


class Mode(str, Enum):
    GOAL = "GoalReaching"
    AVOID = "Avoidance"


class Outcome(str, Enum):
    SUCCESS = "Success"
    COLLISION = "Collision"
    TIMEOUT = "Timeout"


@dataclass
class ModeState:
    mode: Mode
    mask_coverage: float
    center_coverage: float


def center_window(height: int, width: int):
    """Slices of the central H/2 x W/2 patch."""
    h0, w0 = height // 4, width // 4
    return slice(h0, h0 + height // 2), slice(w0, w0 + width // 2)


def mode_select(mask: np.ndarray, tau_mask: float) -> ModeState:
    if not 0 < tau_mask < 1:
        raise DomainError(f"tau_mask must lie in (0, 1), got {tau_mask}")
    m = np.asarray(mask) != 0
    coverage = float(m.mean())
    rows, cols = center_window(*m.shape)
    center = float(m[rows, cols].mean())
    return ModeState(Mode.AVOID if coverage >= tau_mask else Mode.GOAL, coverage, center)


@dataclass
class GoalGains:
    k_yaw: float = 1.0
    k_z: float = 0.5
    yaw_rate_max: float = 0.8
    v_up_max: float = 1.5

    def __post_init__(self):
        if not (self.k_yaw > 0 and self.k_z > 0 and self.yaw_rate_max > 0 and self.v_up_max > 0):
            raise DomainError("goal controller gains and limits must be positive")


def goal_controller(pose: Pose, goal, gains: GoalGains, v_max: float) -> np.ndarray:
    """Turn toward the goal bearing, fly forward in proportion to alignment, hold altitude."""
    delta = np.asarray(goal, dtype=float) - pose.position
    bearing = math.atan2(delta[1], delta[0])
    err = wrap_angle(bearing - pose.yaw)
    yaw_rate = float(np.clip(gains.k_yaw * err, -gains.yaw_rate_max, gains.yaw_rate_max))
    v_fwd = v_max * max(0.0, math.cos(err))
    v_up = float(np.clip(gains.k_z * delta[2], -gains.v_up_max, gains.v_up_max))
    return np.array([v_fwd, 0.0, v_up, yaw_rate])


def damp_forward(cmd, center_coverage: float, tau_center: float, mu: float) -> np.ndarray:
    if not 0 < mu <= 1:
        raise DomainError(f"mu must lie in (0, 1], got {mu}")
    if not 0 < tau_center < 1:
        raise DomainError(f"tau_center must lie in (0, 1), got {tau_center}")
    out = np.array(cmd, dtype=float)
    if center_coverage >= tau_center:
        out[CMD_FWD] *= mu
    return out


@dataclass
class ControllerParams:
    lam: float = 10.0
    tau_mask: float = 0.02
    tau_center: float = 0.15
    mu: float = 0.5
    v_max: float = 3.0
    goal: GoalGains = field(default_factory=GoalGains)
    depth_mode: str = EGOMOTION
    kappa: float = 1.0       # egomotion depth regularizer, pixels
    z_prior: float = 30.0    # egomotion depth where parallax is weak, m
    depth_window: int = 5    # egomotion pooling window
    depth_memory: float = 0.8  # egomotion: fraction of information carried to the next step
    c_z: float = 30.0        # flowdepth scale
    eps: float = 1e-3
    smooth: int = 9          # flowdepth box filter width
    stride: int = 4
    cem: CemConfig = field(default_factory=CemConfig)
    flow_balance: FlowBalanceConfig = field(default_factory=FlowBalanceConfig)

    def __post_init__(self):
        if self.depth_mode not in DEPTH_MODES:
            raise ConfigError(f"depth_mode must be one of {', '.join(DEPTH_MODES)}")
        if not (self.kappa > 0 and self.z_prior > 0.5):
            raise ConfigError("kappa must be positive and z_prior above 0.5 m")
        if not (self.depth_window >= 1 and 0 <= self.depth_memory < 1):
            raise ConfigError("depth_window must be >= 1 and depth_memory in [0, 1)")
        if self.lam < 1:
            raise ConfigError("lam must be >= 1")
        if not (0 < self.tau_mask < 1 and 0 < self.tau_center < 1 and 0 < self.mu <= 1):
            raise ConfigError("tau_mask, tau_center must lie in (0, 1) and mu in (0, 1]")
        if self.v_max < 0:
            raise ConfigError("v_max must be non-negative")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")


@dataclass
class Termination:
    dt: float = 0.1
    t_max: float = 120.0
    goal_radius: float = 5.0
    collision_radius: float = 0.5

    def __post_init__(self):
        if not (self.dt > 0 and self.t_max > 0 and self.goal_radius > 0 and self.collision_radius >= 0):
            raise ConfigError("termination parameters must be positive")


@dataclass
class Frame:
    """What the vehicle perceives at one instant.

    Flow from the previous frame is computed on first access.
    """
    pose: Pose
    depth: np.ndarray
    ids: np.ndarray
    boc: Optional[int]
    mask: np.ndarray
    cam: Optional[CameraModel] = None
    prev: Optional["Frame"] = None
    noise_sigma: float = 0.0
    noise_seed: object = 0
    _flow: Optional[tuple] = None

    @property
    def has_flow(self) -> bool:
        return self.prev is not None or self._flow is not None

    def _ensure_flow(self):
        if self._flow is None and self.prev is not None:
            flow, valid = analytic_flow(self.prev.pose, self.pose, self.prev.depth, self.cam)
            self._flow = (add_flow_noise(flow, self.noise_sigma, self.noise_seed), valid)
        return self._flow or (None, None)

    @property
    def flow(self):
        return self._ensure_flow()[0]

    @property
    def flow_valid(self):
        return self._ensure_flow()[1]


def perceive(scene: Scene, pose: Pose, cam: CameraModel, prev: Optional[Frame] = None,
             noise_sigma: float = 0.0, noise_seed=0) -> Frame:
    depth, ids = render_depth_and_ids(scene, pose, cam)
    boc = select_building_of_concern(scene, pose, pose.forward)
    mask = render_obstacle_mask(ids, boc)
    if prev is not None:
        prev.prev = None  # only one frame of history is ever needed
    return Frame(pose, depth, ids, boc, mask, cam, prev, noise_sigma, noise_seed)


@dataclass
class StepLog:
    mode: Mode
    command: np.ndarray
    mask_coverage: float
    center_coverage: float
    loss: float = math.nan
    pixels: int = 0
    fallback: bool = False
    desired: Optional[np.ndarray] = None
    predicted: Optional[np.ndarray] = None


class Controller:
    """Stateful wrapper running one of the three controllers step by step.

    Every controller reaches for the goal while the mask is below the mode
    threshold and differs only in how it avoids once the mask fires.
    """

    def __init__(self, kind: str, cam: CameraModel, params: ControllerParams, goal, seed: int = 0,
                 keep_flows: bool = False):
        if kind not in CONTROLLERS:
            raise ConfigError(f"unknown controller {kind!r}; choose from {CONTROLLERS}")
        self.kind = kind
        self.cam = cam
        self.params = params
        self.goal = np.asarray(goal, dtype=float)
        self.seed = seed
        self.keep_flows = keep_flows
        self.radial = radial_flow_field(RadialFlowParams(cam.height, cam.width, params.lam))
        self.prev_command = np.zeros(4)
        self.prev_solution = None  # last undamped optimizer output
        self.inv_depth = None  # egomotion estimate carried between steps
        self.depth_weight = None
        self.step_index = 0

    def step(self, frame: Frame):
        cmd, log = control_step(self, frame)
        self.prev_command = cmd
        self.step_index += 1
        return cmd, log


def control_step(ctl: Controller, frame: Frame):
    """One control decision. Returns ``(command, StepLog)``."""
    p = ctl.params
    state = mode_select(frame.mask, p.tau_mask)
    depth = None
    if ctl.kind == OURS and frame.has_flow and p.depth_mode == EGOMOTION:
        # Runs in both modes so the estimate is warm when avoidance starts.
        # The flow was produced by the command issued on the previous step.
        depth = egomotion_depth(frame.flow, frame.flow_valid, ctl.cam, ctl.prev_command, p.cem.dt,
                                p.kappa, p.z_prior, window=p.depth_window, prior=ctl.inv_depth,
                                prior_weight=ctl.depth_weight)
        ctl.inv_depth = np.where(depth.valid, 1.0 / depth.depth, np.nan)
        ctl.depth_weight = p.depth_memory * depth.weight
    if not frame.has_flow or state.mode is Mode.GOAL:
        cmd = goal_controller(frame.pose, ctl.goal, p.goal, p.v_max)
        if ctl.kind != OURS:
            cmd[1:3] = 0.0  # baselines steer in yaw only
        return cmd, StepLog(Mode.GOAL, cmd, state.mask_coverage, state.center_coverage)

    if ctl.kind == NAIVE_FB:
        # A dense flow estimator reports every pixel, sky included.
        cmd = naive_flow_balance_step(frame.flow, None, p.flow_balance)
        return cmd, StepLog(Mode.AVOID, cmd, state.mask_coverage, state.center_coverage)
    if ctl.kind == RADIAL_FB:
        cmd = radial_flow_balance_step(frame.mask, ctl.radial, p.flow_balance)
        return cmd, StepLog(Mode.AVOID, cmd, state.mask_coverage, state.center_coverage)

    desired = desired_flow(ctl.radial, frame.mask)
    if depth is None:
        depth = flowdepth(frame.flow, frame.flow_valid, p.depth_mode, frame.depth, p.c_z, p.eps, p.smooth)
    warm = ctl.prev_solution if ctl.prev_solution is not None else ctl.prev_command
    cfg = replace(p.cem, init_mean=np.clip(warm, p.cem.lower, p.cem.upper),
                  seed=(ctl.seed, ctl.step_index))
    log = StepLog(Mode.AVOID, None, state.mask_coverage, state.center_coverage)
    try:
        raw, result, count = servo_command(desired, depth, ctl.cam, cfg, p.stride)
        log.loss, log.pixels = result.best_loss, count
        ctl.prev_solution = raw
    except (DomainError, OptimizationError):
        raw = warm  # damped once below, never compounded
        log.fallback = True
    cmd = damp_forward(raw, state.center_coverage, p.tau_center, p.mu)
    log.command = cmd
    if ctl.keep_flows:
        log.desired = desired
        log.predicted = predict_flow(depth, ctl.cam, np.repeat(raw[None], cfg.horizon, axis=0), cfg.dt)
    return cmd, log


@dataclass
class TrajectoryPoint:
    t: float
    pose: Pose
    command: np.ndarray
    mode: Mode
    mask_coverage: float
    center_coverage: float
    loss: float
    min_dist: float


@dataclass
class EpisodeResult:
    outcome: Outcome
    trajectory: list
    min_dist: float
    traj_length: float
    flows: list = field(default_factory=list)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.pose.position for p in self.trajectory])


def run_episode(scene: Scene, start: Pose, goal, cam: CameraModel, kind: str,
                params: Optional[ControllerParams] = None, term: Optional[Termination] = None,
                noise_sigma: float = 0.0, seed: int = 0, keep_flows: bool = False) -> EpisodeResult:
    """Fly one episode until the goal is reached, a building is hit, or time runs out.

    The last trajectory row is the terminal state and carries a zero command.
    """
    params = params or ControllerParams()
    term = term or Termination()
    if params.cem.dt != term.dt:
        # Prediction and egomotion depth must use the simulator's step.
        params = replace(params, cem=replace(params.cem, dt=term.dt))
    goal = np.asarray(goal, dtype=float).reshape(3)
    ctl = Controller(kind, cam, params, goal, seed, keep_flows)
    pose, frame = start, None
    t, step = 0.0, 0
    rows, flows = [], []
    mode = Mode.GOAL
    while True:
        dist = scene.min_distance(pose.position)
        outcome = None
        if dist <= term.collision_radius:
            outcome = Outcome.COLLISION
        elif np.linalg.norm(pose.position - goal) <= term.goal_radius:
            outcome = Outcome.SUCCESS
        elif t > term.t_max + 1e-9:
            outcome = Outcome.TIMEOUT
        if outcome is not None:
            rows.append(TrajectoryPoint(t, pose, np.zeros(4), mode, math.nan, math.nan, math.nan, dist))
            break
        frame = perceive(scene, pose, cam, frame, noise_sigma, (seed, step, 1))
        cmd, log = ctl.step(frame)
        mode = log.mode
        rows.append(TrajectoryPoint(t, pose, cmd, log.mode, log.mask_coverage, log.center_coverage,
                                    log.loss, dist))
        if keep_flows and log.desired is not None:
            flows.append((step, log.desired, log.predicted))
        pose = integrate_pose(pose, cmd, term.dt)
        step += 1
        t = step * term.dt
    positions = np.array([r.pose.position for r in rows])
    length = float(np.linalg.norm(np.diff(positions, axis=0), axis=1).sum()) if len(rows) > 1 else 0.0
    return EpisodeResult(outcome, rows, min(r.min_dist for r in rows), length, flows)
