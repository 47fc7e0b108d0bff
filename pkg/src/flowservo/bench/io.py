"""Trajectory CSV and Middlebury ``.flo`` readers and writers."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

FLO_MAGIC = 202021.25

CSV_HEADER = ["t", "x", "y", "z", "yaw", "v_fwd", "v_left", "v_up", "yaw_rate", "mode",
              "mask_coverage", "center_coverage", "loss", "min_dist_step"]


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def write_trajectory_csv(result, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for p in result.trajectory:
            x, y, z = p.pose.position
            nums = [p.t, x, y, z, p.pose.yaw, *p.command]
            w.writerow([_fmt(v) for v in nums] + [p.mode.value] +
                       [_fmt(v) for v in (p.mask_coverage, p.center_coverage, p.loss, p.min_dist)])


def read_trajectory_csv(path) -> list:
    """Rows as dicts with floats everywhere except ``mode``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (v if k == "mode" else float(v)) for k, v in row.items()} for row in rows]


def write_flo(flow: np.ndarray, path) -> None:
    """Write a (H, W, 2) flow in (row, col) order as a Middlebury file (col, row on disk)."""
    flow = np.asarray(flow)
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        np.array([FLO_MAGIC], dtype="<f4").tofile(fh)
        np.array([w, h], dtype="<i4").tofile(fh)
        flow[..., ::-1].astype("<f4").tofile(fh)


def read_flo(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = np.fromfile(fh, "<f4", count=1)
        if magic.size != 1 or magic[0] != np.float32(FLO_MAGIC):
            raise ValueError(f"{path}: not a .flo file")
        w, h = np.fromfile(fh, "<i4", count=2)
        data = np.fromfile(fh, "<f4", count=2 * w * h)
    if data.size != 2 * w * h:
        raise ValueError(f"{path}: truncated flow data")
    return data.reshape(h, w, 2)[..., ::-1].copy()
