"""Reactive flow-balancing controllers used for comparison.

Both variants only steer in yaw and fly forward at a fixed speed. The naive
one balances frame-to-frame flow; the radial one balances the synthesized
desired flow instead.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .flowsynth import desired_flow


@dataclass
class FlowBalanceConfig:
    gain: float = 1.0
    forward_speed: float = 3.0
    yaw_rate_max: float = 0.8
    eps_denom: float = 1e-9

    def __post_init__(self):
        if not self.gain > 0:
            raise DomainError("flow balance gain must be positive")
        if not self.eps_denom > 0:
            raise DomainError("eps_denom must be positive")


def flow_balance_yaw_rate(flow: np.ndarray, valid, cfg: FlowBalanceConfig, clamp: bool = True) -> float:
    """Turn rate from the left/right flow-magnitude imbalance.

    Positive means turn right (away from a busier left half). ``valid=None``
    uses every pixel.
    """
    mag = np.linalg.norm(flow, axis=-1)
    if valid is not None:
        mag = np.where(valid, mag, 0.0)
    half = flow.shape[1] // 2
    w_left = float(mag[:, :half].sum())
    w_right = float(mag[:, half:].sum())
    rate = cfg.gain * (w_left - w_right) / (w_left + w_right + cfg.eps_denom)
    if clamp:
        rate = float(np.clip(rate, -cfg.yaw_rate_max, cfg.yaw_rate_max))
    return rate


def _yaw_command(turn_right: float, cfg: FlowBalanceConfig) -> np.ndarray:
    # Command yaw_rate is counter-clockwise positive.
    return np.array([cfg.forward_speed, 0.0, 0.0, -turn_right])


def naive_flow_balance_step(flow, valid, cfg: FlowBalanceConfig) -> np.ndarray:
    """Balance the observed frame-to-frame flow. ``flow=None`` (first frame) flies straight."""
    if flow is None:
        return _yaw_command(0.0, cfg)
    return _yaw_command(flow_balance_yaw_rate(flow, valid, cfg), cfg)


def radial_flow_balance_step(mask: np.ndarray, radial: np.ndarray, cfg: FlowBalanceConfig) -> np.ndarray:
    """Balance the desired flow, i.e. the radial field restricted to the mask."""
    return _yaw_command(flow_balance_yaw_rate(desired_flow(radial, mask), None, cfg), cfg)
