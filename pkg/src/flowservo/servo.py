"""Flow-based visual servoing with a cross-entropy-method optimizer.

The predicted flow of a pixel under a camera twist comes from the classical
point-feature interaction matrix, frozen at the current depth estimate for the
whole horizon. The optimizer searches 4-DoF body commands whose predicted flow
best matches a desired flow field.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError, OptimizationError
from .flowsynth import DepthProxyMap
from .geometry import BODY_TO_CAMERA, CameraModel


def interaction_matrix_at(x: float, y: float, z: float) -> np.ndarray:
    """2x6 interaction matrix for twist order (vx, vy, vz, wx, wy, wz)."""
    if not z > 0:
        raise DomainError(f"depth must be positive, got {z}")
    return np.array([
        [-1.0 / z, 0.0, x / z, x * y, -(1.0 + x * x), y],
        [0.0, -1.0 / z, y / z, 1.0 + y * y, -x * y, -x],
    ])


def interaction_matrices(x, y, z) -> np.ndarray:
    """Vectorized form: arrays of shape (P,) give an array of shape (P, 2, 6)."""
    x, y, z = (np.asarray(a, dtype=float) for a in (x, y, z))
    if np.any(~(z > 0)):
        raise DomainError("all depths must be positive")
    inv = 1.0 / z
    zero = np.zeros_like(x)
    row1 = np.stack([-inv, zero, x * inv, x * y, -(1.0 + x * x), y], axis=-1)
    row2 = np.stack([zero, -inv, y * inv, 1.0 + y * y, -x * y, -x], axis=-1)
    return np.stack([row1, row2], axis=-2)


def command_flow_basis(depth: DepthProxyMap, cam: CameraModel, dt: float, stride: int = 1):
    """Per-pixel linear map from one 4-DoF command to its (row, col) pixel flow over ``dt``.

    Returns ``(basis, rows, cols)`` where ``basis`` has shape (P, 2, 4) and the
    index arrays locate the P valid pixels on the strided grid.
    """
    if stride < 1:
        raise DomainError("stride must be >= 1")
    sub_valid = np.zeros(cam.shape, dtype=bool)
    sub_valid[::stride, ::stride] = True
    sub_valid &= depth.valid
    rows, cols = np.nonzero(sub_valid)
    x = (cols - cam.cx) / cam.fx
    y = (rows - cam.cy) / cam.fy
    lmat = interaction_matrices(x, y, depth.depth[rows, cols])
    # (x_dot, y_dot) -> (row, col) pixels per step
    to_pixels = np.array([[0.0, cam.fy], [cam.fx, 0.0]]) * dt
    basis = np.einsum("ab,pbc,cd->pad", to_pixels, lmat, BODY_TO_CAMERA)
    return basis, rows, cols


def predict_flow(depth: DepthProxyMap, cam: CameraModel, commands, dt: float,
                 horizon: int | None = None) -> np.ndarray:
    """Summed pixel flow over a horizon of 4-DoF commands, shape (H, W, 2)."""
    commands = np.asarray(commands, dtype=float).reshape(-1, 4)
    if horizon is not None and len(commands) != horizon:
        raise DomainError(f"expected {horizon} commands, got {len(commands)}")
    if depth.depth.shape != cam.shape:
        raise DomainError("depth map does not match the camera")
    basis, rows, cols = command_flow_basis(depth, cam, dt)
    flow = np.zeros(cam.shape + (2,))
    flow[rows, cols] = basis @ commands.sum(axis=0)
    return flow


@dataclass
class LossReport:
    loss: float
    count: int


def flow_loss(predicted: np.ndarray, desired: np.ndarray, valid: np.ndarray, stride: int = 1) -> LossReport:
    """Mean endpoint error over valid pixels of the strided grid."""
    if predicted.shape != desired.shape or predicted.shape[:2] != valid.shape:
        raise DomainError("predicted, desired and validity grids differ in size")
    if stride < 1:
        raise DomainError("stride must be >= 1")
    sel = np.asarray(valid, dtype=bool)[::stride, ::stride]
    count = int(sel.sum())
    if count == 0:
        raise DomainError("no valid pixels to evaluate")
    diff = predicted[::stride, ::stride][sel] - desired[::stride, ::stride][sel]
    return LossReport(float(np.linalg.norm(diff, axis=-1).mean()), count)


def _vec4(values) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(4)


@dataclass
class CemConfig:
    population: int = 100
    elites: int = 10
    iterations: int = 5
    init_mean: np.ndarray = field(default_factory=lambda: np.zeros(4))
    init_std: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 0.5, 0.3]))
    lower: np.ndarray = field(default_factory=lambda: -np.array([3.0, 3.0, 1.5, 0.8]))
    upper: np.ndarray = field(default_factory=lambda: np.array([3.0, 3.0, 1.5, 0.8]))
    horizon: int = 3
    dt: float = 0.1
    seed: object = 0
    elite_retention: bool = True
    per_step: bool = False

    def __post_init__(self):
        for name in ("init_mean", "init_std", "lower", "upper"):
            setattr(self, name, _vec4(getattr(self, name)))
        if not 1 <= self.elites <= self.population:
            raise DomainError(f"need 1 <= elites <= population, got {self.elites}/{self.population}")
        if self.iterations < 1 or self.horizon < 1:
            raise DomainError("iterations and horizon must be >= 1")
        # lower == upper is allowed: it pins that component.
        if np.any(self.lower > self.upper):
            raise DomainError("lower bound exceeds upper bound")
        if np.any(self.init_std <= 0):
            raise DomainError("init_std must be positive")
        if not self.dt > 0:
            raise DomainError("dt must be positive")


class CemResult(NamedTuple):
    best: np.ndarray          # (horizon, 4) command sequence
    best_loss: float
    trace: list               # best loss of each iteration's population
    mean: np.ndarray          # final sampling mean, same shape as ``best``


def cem_optimize(loss_fn: Callable, cfg: CemConfig, batched: bool = False) -> CemResult:
    """Minimize ``loss_fn`` over command sequences of shape (horizon, 4).

    With ``batched=True`` the loss receives all samples at once, shape
    (N, horizon, 4), and returns N losses. Non-finite losses drop the sample.
    """
    t = cfg.horizon
    reps = t if cfg.per_step else 1
    mean = np.tile(cfg.init_mean, reps)
    std = np.tile(cfg.init_std, reps)
    lo = np.tile(cfg.lower, reps)
    hi = np.tile(cfg.upper, reps)
    mean = np.clip(mean, lo, hi)
    rng = np.random.default_rng(cfg.seed)

    def to_sequences(samples):
        if cfg.per_step:
            return samples.reshape(len(samples), t, 4)
        return np.repeat(samples[:, None, :], t, axis=1)

    best, best_loss = None, math.inf
    trace = []
    for it in range(cfg.iterations):
        samples = mean + std * rng.standard_normal((cfg.population, mean.size))
        if cfg.elite_retention and best is not None:
            samples[-1] = best
        samples = np.clip(samples, lo, hi)
        seqs = to_sequences(samples)
        if batched:
            losses = np.asarray(loss_fn(seqs), dtype=float).reshape(cfg.population)
        else:
            losses = np.array([float(loss_fn(s)) for s in seqs])
        finite = np.flatnonzero(np.isfinite(losses))
        if finite.size == 0:
            raise OptimizationError(f"all {cfg.population} samples had non-finite loss at iteration {it}")
        # Stable sort keeps ties in sample order.
        order = finite[np.argsort(losses[finite], kind="stable")]
        elites = samples[order[: cfg.elites]]
        if losses[order[0]] < best_loss:
            best_loss = float(losses[order[0]])
            best = samples[order[0]].copy()
        trace.append(float(losses[order[0]]))
        mean = elites.mean(axis=0)
        std = elites.std(axis=0)
    return CemResult(to_sequences(best[None])[0], best_loss, trace, to_sequences(mean[None])[0])


def servo_command(desired: np.ndarray, depth: DepthProxyMap, cam: CameraModel, cfg: CemConfig,
                  stride: int = 4) -> tuple:
    """Run CEM on the flow loss and return ``(command, CemResult, pixel_count)``.

    The first command of the best sequence is the one to execute.
    """
    basis, rows, cols = command_flow_basis(depth, cam, cfg.dt, stride)
    if len(rows) == 0:
        raise DomainError("no valid pixels to evaluate")
    flat = basis.reshape(-1, 4)
    target = desired[rows, cols].reshape(-1, 1)

    def batch_loss(seqs):
        resid = flat @ seqs.sum(axis=1).T - target      # (2P, N)
        resid *= resid
        return np.sqrt(resid[0::2] + resid[1::2]).mean(axis=0)

    result = cem_optimize(batch_loss, cfg, batched=True)
    return result.best[0].copy(), result, len(rows)
