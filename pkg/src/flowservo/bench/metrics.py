from __future__ import annotations

import numpy as np

from ..scene import Scene, point_box_distance


def compute_metrics(positions, scene: Scene):
    """Minimum distance to any building and path length of a sampled trajectory."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(positions) == 0:
        raise ValueError("empty trajectory")
    if scene.buildings:
        min_dist = float(point_box_distance(positions, scene.buildings).min())
    else:
        min_dist = float("inf")
    length = float(np.linalg.norm(np.diff(positions, axis=0), axis=1).sum())
    return min_dist, length
