"""Surrogate flow construction and the depth proxy used by the servo loop."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import DomainError

FLOWDEPTH = "flowdepth"
EGOMOTION = "egomotion"
TRUE_DEPTH = "true"
DEPTH_MODES = (FLOWDEPTH, EGOMOTION, TRUE_DEPTH)


@dataclass(frozen=True)
class RadialFlowParams:
    height: int
    width: int
    lam: float = 10.0

    def __post_init__(self):
        if self.lam < 1:
            raise DomainError(f"lambda must be >= 1, got {self.lam}")
        if self.height < 2 or self.width < 2:
            raise DomainError("radial flow needs at least a 2x2 image")


def radial_flow_field(params: RadialFlowParams) -> np.ndarray:
    """Outward flow with the horizontal component scaled by lambda.

    The normalizer is the unscaled radius, so horizontal magnitudes reach
    ``lam`` while vertical ones stay at 1. The exact center gets zero flow.
    """
    h, w = params.height, params.width
    di = np.arange(h, dtype=float)[:, None] - h / 2.0
    dj = np.arange(w, dtype=float)[None, :] - w / 2.0
    di, dj = np.broadcast_arrays(di, dj)
    norm = np.hypot(di, dj)
    safe = np.where(norm > 0, norm, 1.0)
    flow = np.stack([di / safe, params.lam * dj / safe], axis=-1)
    flow[norm == 0] = 0.0
    return flow


def desired_flow(radial: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if radial.shape[:2] != mask.shape:
        raise DomainError(f"radial flow {radial.shape[:2]} and mask {mask.shape} differ in size")
    return radial * (mask != 0)[..., None]


@dataclass
class DepthProxyMap:
    depth: np.ndarray
    valid: np.ndarray
    mode: str
    weight: Optional[np.ndarray] = None  # egomotion: information behind each estimate, px^2


def smooth_flow(flow: np.ndarray, valid: np.ndarray, window: int) -> np.ndarray:
    """Box-filter the flow over valid pixels only (normalized convolution)."""
    if window <= 1:
        return flow
    w = np.asarray(valid, dtype=float)
    num = uniform_filter(flow * w[..., None], size=(window, window, 1), mode="constant")
    den = uniform_filter(w, size=window, mode="constant")
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den[..., None]
    return np.where(w[..., None] > 0, out, 0.0)


def flowdepth(flow: np.ndarray, valid: np.ndarray, mode: str = FLOWDEPTH,
              true_depth: Optional[np.ndarray] = None, c_z: float = 1.0,
              eps: float = 1e-3, smooth: int = 1) -> DepthProxyMap:
    """Per-pixel depth for the interaction matrix.

    In ``flowdepth`` mode the depth is ``c_z / (|flow| + eps)``: large
    frame-to-frame motion means a near surface. ``smooth`` > 1 box-filters the
    flow over valid pixels first. In ``true`` mode the rendered depth is
    passed through.
    """
    if mode == TRUE_DEPTH:
        if true_depth is None:
            raise DomainError("true-depth mode requires a depth map")
        ok = np.isfinite(true_depth) & (true_depth > 0)
        return DepthProxyMap(np.where(ok, true_depth, np.inf), ok, TRUE_DEPTH)
    if mode != FLOWDEPTH:
        raise DomainError(f"unknown depth mode {mode!r} (egomotion depth needs egomotion_depth)")
    if not (c_z > 0 and eps > 0):
        raise DomainError("flowdepth constants must be positive")
    mag = np.linalg.norm(smooth_flow(flow, valid, smooth), axis=-1)
    ok = np.asarray(valid, dtype=bool) & np.isfinite(mag)
    z = np.where(ok, c_z / (np.where(ok, mag, 0.0) + eps), np.inf)
    return DepthProxyMap(z, ok, FLOWDEPTH)


def egomotion_depth(flow: np.ndarray, valid: np.ndarray, cam, command, dt: float,
                    kappa: float = 1.0, z_prior: float = 30.0, z_min: float = 0.5,
                    z_max: float = 1000.0, window: int = 1, prior: Optional[np.ndarray] = None,
                    prior_weight: Optional[np.ndarray] = None) -> DepthProxyMap:
    """Two-view depth from the flow and the command that produced it.

    With the executed 4-DoF ``command`` known, each pixel's flow is
    ``a / Z + b`` where ``a`` is the translational flow at unit depth and
    ``b`` the depth-free rotational flow. Inverse depth is the regularized
    least-squares fit ``(a.(f - b) + w0 * rho0) / (|a|^2 + w0)``, with the
    normal equations pooled over a ``window`` box of valid pixels. Pixels
    with little translational parallax (near the focus of expansion, or while
    hovering) fall back to the prior ``rho0``: ``1 / z_prior`` by default, or
    a previous inverse-depth image passed as ``prior`` together with the
    information ``prior_weight`` it carries. ``w0 = kappa^2 + prior_weight``,
    so ``kappa`` is in pixels. The returned ``weight`` is the information of
    the new estimate minus the ``kappa`` regularizer, ready to be decayed and
    fed back as the next ``prior_weight``.
    """
    from .geometry import BODY_TO_CAMERA
    from .servo import interaction_matrices

    if not (kappa > 0 and 0 < z_min < z_prior < z_max and dt > 0 and window >= 1):
        raise DomainError("need kappa > 0, dt > 0, window >= 1 and 0 < z_min < z_prior < z_max")
    if flow.shape[:2] != cam.shape:
        raise DomainError(f"flow {flow.shape[:2]} does not match camera {cam.shape}")
    x, y = cam.normalized_grid()
    lmat = interaction_matrices(x.ravel(), y.ravel(), np.ones(x.size))
    twist = BODY_TO_CAMERA @ np.asarray(command, dtype=float).reshape(4)
    to_pixels = np.array([[0.0, cam.fy], [cam.fx, 0.0]]) * dt
    a = (lmat[:, :, :3] @ twist[:3]) @ to_pixels.T
    b = (lmat[:, :, 3:] @ twist[3:]) @ to_pixels.T
    ok = np.asarray(valid, dtype=bool) & np.isfinite(flow).all(axis=-1)
    f = np.nan_to_num(flow.reshape(-1, 2)) - b
    num = np.where(ok.ravel(), (a * f).sum(-1), 0.0).reshape(cam.shape)
    den = np.where(ok.ravel(), (a * a).sum(-1), 0.0).reshape(cam.shape)
    if window > 1:
        num = uniform_filter(num, window, mode="constant") * window ** 2
        den = uniform_filter(den, window, mode="constant") * window ** 2
    rho0 = np.full(cam.shape, 1.0 / z_prior)
    w_prior = np.zeros(cam.shape)
    if prior is not None:
        prior = np.asarray(prior, dtype=float)
        if prior.shape != cam.shape:
            raise DomainError(f"prior {prior.shape} does not match camera {cam.shape}")
        known = np.isfinite(prior)
        rho0 = np.where(known, prior, rho0)
        if prior_weight is not None:
            w_prior = np.where(known, np.asarray(prior_weight, dtype=float), 0.0)
    w0 = kappa ** 2 + w_prior
    rho = np.clip((num + w0 * rho0) / (den + w0), 1.0 / z_max, 1.0 / z_min)
    return DepthProxyMap(np.where(ok, 1.0 / rho, np.inf), ok, EGOMOTION, den + w_prior)
