"""Frames, pinhole camera and kinematic pose integration.

World frame is x-east, y-north, z-up. The body frame is x-forward, y-left,
z-up, and the camera is rigidly mounted looking along body-forward with the
usual z-forward, x-right, y-down optical convention.

A 4-DoF command is a length-4 array ``(v_fwd, v_left, v_up, yaw_rate)`` in
the body frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

CMD_FWD, CMD_LEFT, CMD_UP, CMD_YAW = range(4)


def wrap_angle(angle):
    """Wrap to (-pi, pi]. Works elementwise on arrays."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        pos = np.array(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(pos)) or not math.isfinite(self.yaw):
            raise DomainError(f"non-finite pose: {pos}, yaw={self.yaw}")
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def forward(self) -> np.ndarray:
        return np.array([math.cos(self.yaw), math.sin(self.yaw), 0.0])

    def camera_axes(self) -> np.ndarray:
        """Rows are the camera x (right), y (down), z (forward) axes in world."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]])

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.position, other.position)) and self.yaw == other.yaw

    def __hash__(self):
        return hash((tuple(self.position), self.yaw))


@dataclass(frozen=True)
class Twist:
    linear: np.ndarray
    angular: np.ndarray
    frame: str = "camera"

    def __post_init__(self):
        lin = np.array(self.linear, dtype=float).reshape(3)
        ang = np.array(self.angular, dtype=float).reshape(3)
        if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(ang))):
            raise DomainError("non-finite twist")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "angular", ang)

    def as_vector(self) -> np.ndarray:
        """(vx, vy, vz, wx, wy, wz)"""
        return np.concatenate([self.linear, self.angular])


@dataclass(frozen=True)
class CameraModel:
    width: int = 256
    height: int = 192
    fx: float = 128.0
    fy: float = 128.0
    cx: float = field(default=None)
    cy: float = field(default=None)

    def __post_init__(self):
        if self.cx is None:
            object.__setattr__(self, "cx", self.width / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", self.height / 2.0)
        if self.width < 2 or self.height < 2:
            raise DomainError(f"camera must be at least 2x2, got {self.width}x{self.height}")
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DomainError("principal point outside the image")

    @property
    def shape(self):
        return (self.height, self.width)

    def normalized_grid(self):
        """(x, y) normalized coordinates of every pixel, each of shape (H, W)."""
        jj, ii = np.meshgrid(np.arange(self.width, dtype=float), np.arange(self.height, dtype=float))
        return (jj - self.cx) / self.fx, (ii - self.cy) / self.fy


def pixel_to_normalized(pixel, cam: CameraModel):
    i, j = pixel
    if not (0 <= i < cam.height and 0 <= j < cam.width):
        raise DomainError(f"pixel {pixel} outside {cam.height}x{cam.width} image")
    return (j - cam.cx) / cam.fx, (i - cam.cy) / cam.fy


def normalized_to_pixel(xy, cam: CameraModel):
    x, y = xy
    return y * cam.fy + cam.cy, x * cam.fx + cam.cx


def _check_command(cmd) -> np.ndarray:
    cmd = np.asarray(cmd, dtype=float).reshape(4)
    if not np.all(np.isfinite(cmd)):
        raise DomainError(f"non-finite command {cmd}")
    return cmd


def integrate_pose(pose: Pose, cmd, dt: float) -> Pose:
    """Advance the pose by a body-frame 4-DoF command held for ``dt`` seconds.

    Translation uses the yaw at the start of the interval.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise DomainError(f"dt must be positive, got {dt}")
    v_fwd, v_left, v_up, yaw_rate = _check_command(cmd)
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    delta = np.array([c * v_fwd - s * v_left, s * v_fwd + c * v_left, v_up]) * dt
    return Pose(pose.position + delta, pose.yaw + yaw_rate * dt)


def body_twist_to_camera_twist(cmd) -> Twist:
    v_fwd, v_left, v_up, yaw_rate = _check_command(cmd)
    return Twist((-v_left, -v_up, v_fwd), (0.0, -yaw_rate, 0.0), frame="camera")


# Linear map from a 4-DoF command to the 6-vector camera twist.
BODY_TO_CAMERA = np.array([
    [0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, -1.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, -1.0],
    [0.0, 0.0, 0.0, 0.0],
])


def world_to_camera(points, pose: Pose) -> np.ndarray:
    """Express world points (..., 3) in the camera frame of ``pose``."""
    return (np.asarray(points, dtype=float) - pose.position) @ pose.camera_axes().T
