"""Box-world simulator standing in for perception.

Buildings are axis-aligned boxes. The simulator renders z-depth and
building-id buffers by ray casting, picks the building the vehicle is headed
into (the "building of concern"), and produces exact frame-to-frame optical
flow by reprojection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .geometry import CameraModel, Pose

NO_BUILDING = -1


@dataclass(frozen=True)
class Building:
    id: int
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = np.array(self.min_corner, dtype=float).reshape(3)
        hi = np.array(self.max_corner, dtype=float).reshape(3)
        if self.id < 0:
            raise DomainError(f"building id must be non-negative, got {self.id}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DomainError(f"building {self.id} has non-finite corners")
        if np.any(hi <= lo):
            raise DomainError(f"building {self.id} has non-positive extent: {lo} .. {hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    def __eq__(self, other):
        if not isinstance(other, Building):
            return NotImplemented
        return (self.id == other.id and np.array_equal(self.min_corner, other.min_corner)
                and np.array_equal(self.max_corner, other.max_corner))

    def __hash__(self):
        return hash((self.id, tuple(self.min_corner), tuple(self.max_corner)))

    def distance(self, point) -> float:
        return float(point_box_distance(np.asarray(point, dtype=float)[None, :], [self])[0, 0])


@dataclass(frozen=True)
class Scene:
    buildings: tuple = ()
    detection_range: float = 120.0
    corridor_half_angle: float = math.radians(15.0)

    def __post_init__(self):
        object.__setattr__(self, "buildings", tuple(self.buildings))
        ids = [b.id for b in self.buildings]
        if len(set(ids)) != len(ids):
            raise DomainError(f"duplicate building ids in {ids}")
        if not self.detection_range > 0:
            raise DomainError("detection_range must be positive")
        if not 0 < self.corridor_half_angle < math.pi / 2:
            raise DomainError("corridor_half_angle must lie in (0, pi/2)")

    @property
    def lows(self) -> np.ndarray:
        return np.array([b.min_corner for b in self.buildings]).reshape(-1, 3)

    @property
    def highs(self) -> np.ndarray:
        return np.array([b.max_corner for b in self.buildings]).reshape(-1, 3)

    @property
    def ids(self) -> np.ndarray:
        return np.array([b.id for b in self.buildings], dtype=int)

    def min_distance(self, point) -> float:
        """Distance from a point to the closest building (inf for an empty scene)."""
        if not self.buildings:
            return math.inf
        return float(point_box_distance(np.asarray(point, dtype=float)[None, :], self.buildings).min())


def point_box_distance(points, buildings: Sequence[Building]) -> np.ndarray:
    """Euclidean distance of each point (P, 3) to each box, shape (P, B). Zero inside."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    lo = np.array([b.min_corner for b in buildings]).reshape(-1, 3)
    hi = np.array([b.max_corner for b in buildings]).reshape(-1, 3)
    p = points[:, None, :]
    gap = np.maximum(np.maximum(lo - p, 0.0), p - hi)
    return np.sqrt((gap ** 2).sum(axis=-1))


def _slab_hits(origin, directions, lo, hi):
    """Entry distances of rays (P, 3) against boxes (B, 3); inf on a miss. Shape (P, B)."""
    return _slab_hits_by_box(origin, directions, lo, hi).T


def _slab_hits_by_box(origin, directions, lo, hi):
    """Same as ``_slab_hits`` but shaped (B, P)."""
    # A tiny signed stand-in for zero components keeps parallel rays correct:
    # their slab interval becomes (-huge, huge) inside the slab and empty outside.
    d = np.where(directions == 0.0, 1e-300, directions)
    inv = np.ascontiguousarray((1.0 / d).T)  # (3, P): per-axis rows stay contiguous
    origin = np.asarray(origin, dtype=float)
    out = np.empty((len(lo), inv.shape[1]))
    with np.errstate(over="ignore", invalid="ignore"):
        for b in range(len(lo)):
            t1 = (lo[b] - origin)[:, None] * inv
            t2 = (hi[b] - origin)[:, None] * inv
            t_near = np.minimum(t1, t2)
            t_far = np.maximum(t1, t2, out=t1)
            near = np.maximum(np.maximum(t_near[0], t_near[1]), t_near[2])
            far = np.minimum(np.minimum(t_far[0], t_far[1]), t_far[2])
            hit = (near <= far) & (far >= 0.0)
            np.maximum(near, 0.0, out=near)
            near[~hit] = np.inf
            out[b] = near
    return out


def ray_box_intersect(origin, direction, box: Building) -> Optional[float]:
    origin = np.asarray(origin, dtype=float).reshape(3)
    direction = np.asarray(direction, dtype=float).reshape(3)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        raise DomainError("zero ray direction")
    if abs(norm - 1.0) > 1e-9:
        raise DomainError(f"ray direction must be unit length, got |d|={norm}")
    t = _slab_hits(origin, direction[None, :], box.min_corner[None, :], box.max_corner[None, :])[0, 0]
    return None if math.isinf(t) else float(t)


@lru_cache(maxsize=16)
def _camera_rays(cam: CameraModel):
    x, y = cam.normalized_grid()
    rays = np.stack([x, y, np.ones_like(x)], axis=-1)
    rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
    rays.setflags(write=False)
    return rays


def render_depth_and_ids(scene: Scene, pose: Pose, cam: CameraModel):
    """Ray-cast the scene from ``pose``.

    Returns ``(depth, ids)``: z-depth along the optical axis (inf where nothing
    is hit) and the id of the nearest building per pixel (``NO_BUILDING``).
    """
    h, w = cam.shape
    if not scene.buildings:
        return np.full((h, w), np.inf), np.full((h, w), NO_BUILDING, dtype=int)
    rays_cam = _camera_rays(cam).reshape(-1, 3)
    rays_world = rays_cam @ pose.camera_axes()
    t = _slab_hits_by_box(pose.position, rays_world, scene.lows, scene.highs)
    if len(t) == 1:
        nearest = np.zeros(t.shape[1], dtype=int)
        t_min = t[0]
    else:
        nearest = np.argmin(t, axis=0)
        t_min = np.take_along_axis(t, nearest[None], axis=0)[0]
    hit = np.isfinite(t_min)
    depth = (t_min * rays_cam[:, 2]).reshape(h, w)
    ids = np.where(hit, scene.ids[nearest], NO_BUILDING).reshape(h, w)
    return depth, ids


@lru_cache(maxsize=8)
def _cone_bundle(half_angle: float, rings: int = 12, per_ring: int = 8) -> np.ndarray:
    """Unit directions filling a cone about +z: a center ray plus concentric rings."""
    dirs = [np.array([0.0, 0.0, 1.0])]
    for k in range(1, rings + 1):
        polar = half_angle * k / rings
        n = per_ring * k
        az = 2.0 * np.pi * np.arange(n) / n
        dirs.append(np.stack([np.sin(polar) * np.cos(az), np.sin(polar) * np.sin(az),
                              np.full(n, np.cos(polar))], axis=-1))
    return np.vstack(dirs)


def select_building_of_concern(scene: Scene, pose: Pose, heading) -> Optional[int]:
    """Id of the nearest building hit inside the forward detection cone, or None."""
    heading = np.asarray(heading, dtype=float).reshape(3)
    if abs(np.linalg.norm(heading) - 1.0) > 1e-9:
        raise DomainError("heading must be a unit vector")
    if not scene.buildings:
        return None
    # Orthonormal frame with heading as the third axis.
    helper = np.array([0.0, 0.0, 1.0]) if abs(heading[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(helper, heading)
    u /= np.linalg.norm(u)
    v = np.cross(heading, u)
    bundle = _cone_bundle(scene.corridor_half_angle) @ np.stack([u, v, heading])
    t = _slab_hits_by_box(pose.position, bundle, scene.lows, scene.highs).min(axis=1)
    if not np.isfinite(t).any() or t.min() > scene.detection_range:
        return None
    return int(scene.ids[np.argmin(t)])


def render_obstacle_mask(ids: np.ndarray, boc: Optional[int]) -> np.ndarray:
    if boc is None:
        return np.zeros(ids.shape, dtype=np.uint8)
    return (ids == boc).astype(np.uint8)


def analytic_flow(pose_prev: Pose, pose_curr: Pose, depth_prev: np.ndarray, cam: CameraModel):
    """Exact flow from ``pose_prev`` to ``pose_curr`` by back-projection.

    Returns ``(flow, valid)`` with flow of shape (H, W, 2) in (row, col) pixel
    order. Sky pixels and points behind the new camera are invalid and carry
    zero flow.
    """
    if depth_prev.shape != cam.shape:
        raise DomainError(f"depth shape {depth_prev.shape} does not match camera {cam.shape}")
    x, y = cam.normalized_grid()
    flow = np.zeros(cam.shape + (2,))
    valid = np.isfinite(depth_prev)
    if not valid.any():
        return flow, valid
    z = depth_prev[valid]
    pts_cam = np.stack([x[valid] * z, y[valid] * z, z], axis=-1)
    world = pose_prev.position + pts_cam @ pose_prev.camera_axes()
    pc = (world - pose_curr.position) @ pose_curr.camera_axes().T
    ahead = pc[:, 2] > 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        x1 = pc[:, 0] / pc[:, 2]
        y1 = pc[:, 1] / pc[:, 2]
    d_row = np.where(ahead, (y1 - y[valid]) * cam.fy, 0.0)
    d_col = np.where(ahead, (x1 - x[valid]) * cam.fx, 0.0)
    flow[valid] = np.stack([d_row, d_col], axis=-1)
    valid = valid.copy()
    valid[valid] = ahead
    return flow, valid


def add_flow_noise(flow: np.ndarray, sigma: float, seed) -> np.ndarray:
    """Add i.i.d. Gaussian noise to every component. ``seed`` is an int or int sequence."""
    if sigma < 0:
        raise DomainError(f"noise sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return flow.copy()
    rng = np.random.default_rng(seed)
    return flow + rng.normal(0.0, sigma, size=flow.shape)
