"""Scenario files: strict JSON with documented defaults.

Example (every section except ``buildings``, ``start`` and ``goal`` is optional)::

    {
      "name": "head_on",
      "buildings": [{"id": 1, "min": [40, -15, 0], "max": [60, 15, 60]}],
      "start": {"position": [0, 0, 10], "yaw_deg": 0},
      "goal": [100, 0, 10],
      "camera": {"width": 256, "height": 192, "fx": 128, "fy": 128},
      "perception": {"detection_range": 120, "corridor_half_angle_deg": 15},
      "controller": {"lam": 10, "mu": 0.5, "cem": {"population": 100}},
      "noise_sigma": 0.0,
      "seed": 0,
      "termination": {"dt": 0.1, "t_max": 120}
    }
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..baselines import FlowBalanceConfig
from ..errors import ConfigError, DomainError
from ..geometry import CameraModel, Pose
from ..pipeline import ControllerParams, GoalGains, Termination
from ..scene import Building, Scene
from ..servo import CemConfig

_TOP_KEYS = {"name", "buildings", "start", "goal", "camera", "perception", "controller",
             "noise_sigma", "seed", "termination"}
_REQUIRED = ("name", "buildings", "start", "goal")
_CEM_KEYS = {"population", "elites", "iterations", "init_std", "lower", "upper", "horizon",
             "elite_retention", "per_step"}
_CONTROLLER_SCALARS = {"lam", "tau_mask", "tau_center", "mu", "v_max", "depth_mode", "kappa", "z_prior",
                       "depth_window", "depth_memory", "c_z", "eps", "smooth", "stride"}
_CONTROLLER_KEYS = _CONTROLLER_SCALARS | {"goal_gains", "cem", "flow_balance"}
_GAIN_KEYS = {f.name for f in fields(GoalGains)}
_FB_KEYS = {"gain", "yaw_rate_max", "eps_denom"}
_CAMERA_KEYS = {"width", "height", "fx", "fy", "cx", "cy"}
_PERCEPTION_KEYS = {"detection_range", "corridor_half_angle_deg"}
_TERM_KEYS = {f.name for f in fields(Termination)}


@dataclass
class ScenarioConfig:
    name: str
    buildings: list
    start: Pose
    goal: np.ndarray
    camera: CameraModel = field(default_factory=CameraModel)
    detection_range: float = 120.0
    corridor_half_angle_deg: float = 15.0
    controller: ControllerParams = field(default_factory=ControllerParams)
    noise_sigma: float = 0.0
    seed: int = 0
    termination: Termination = field(default_factory=Termination)

    @property
    def scene(self) -> Scene:
        return Scene(self.buildings, self.detection_range, math.radians(self.corridor_half_angle_deg))

    def to_dict(self) -> dict:
        c = self.controller
        return {
            "name": self.name,
            "buildings": [{"id": b.id, "min": b.min_corner.tolist(), "max": b.max_corner.tolist()}
                          for b in self.buildings],
            "start": {"position": self.start.position.tolist(), "yaw_deg": math.degrees(self.start.yaw)},
            "goal": self.goal.tolist(),
            "camera": {k: getattr(self.camera, k) for k in ("width", "height", "fx", "fy", "cx", "cy")},
            "perception": {"detection_range": self.detection_range,
                           "corridor_half_angle_deg": self.corridor_half_angle_deg},
            "controller": {
                **{k: getattr(c, k) for k in sorted(_CONTROLLER_SCALARS)},
                "goal_gains": {k: getattr(c.goal, k) for k in sorted(_GAIN_KEYS)},
                "cem": {k: (getattr(c.cem, k).tolist() if isinstance(getattr(c.cem, k), np.ndarray)
                            else getattr(c.cem, k)) for k in sorted(_CEM_KEYS)},
                "flow_balance": {k: getattr(c.flow_balance, k) for k in sorted(_FB_KEYS)},
            },
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "termination": {k: getattr(self.termination, k) for k in sorted(_TERM_KEYS)},
        }

    def __eq__(self, other):
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _line_of(text: str, key: str) -> int:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else 0


class _Reader:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, key: str, msg: str):
        line = _line_of(self.text, key)
        where = f"{self.source}:{line}" if line else self.source
        raise ConfigError(f"{where}: field '{key}': {msg}")

    def section(self, data, key, allowed):
        if not isinstance(data, dict):
            self.fail(key, "expected an object")
        unknown = sorted(set(data) - allowed)
        if unknown:
            self.fail(unknown[0], f"unknown key in '{key}' (allowed: {', '.join(sorted(allowed))})")
        return data

    def number(self, data, key, default=None, integer=False):
        if key not in data:
            return default
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
            self.fail(key, f"expected {'an integer' if integer else 'a number'}, got {v!r}")
        if not math.isfinite(v):
            self.fail(key, "must be finite")
        return v

    def vector(self, data, key, n, default=None):
        if key not in data:
            if default is None:
                self.fail(key, "missing required field")
            return default
        v = data[key]
        if (not isinstance(v, list) or len(v) != n
                or not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in v)):
            self.fail(key, f"expected a list of {n} numbers, got {v!r}")
        return np.array(v, dtype=float)


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    r = _Reader(text, source)
    r.section(data, "scenario", _TOP_KEYS)
    for key in _REQUIRED:
        if key not in data:
            r.fail(key, "missing required field")
    if not isinstance(data["name"], str) or not re.fullmatch(r"[A-Za-z0-9_.-]+", data["name"]):
        r.fail("name", "must be a non-empty string of letters, digits, '_', '-' or '.'")

    if not isinstance(data["buildings"], list):
        r.fail("buildings", "expected a list")
    buildings = []
    for b in data["buildings"]:
        r.section(b, "buildings", {"id", "min", "max"})
        if "id" not in b:
            r.fail("buildings", "every building needs an 'id'")
        bid = r.number(b, "id", integer=True)
        try:
            buildings.append(Building(bid, r.vector(b, "min", 3), r.vector(b, "max", 3)))
        except DomainError as exc:
            r.fail("buildings", str(exc))

    start = r.section(data["start"], "start", {"position", "yaw_deg"})
    start_pose = Pose(r.vector(start, "position", 3), math.radians(r.number(start, "yaw_deg", 0.0)))
    goal = r.vector(data, "goal", 3)

    cam_d = r.section(data.get("camera", {}), "camera", _CAMERA_KEYS)
    cam_kw = {k: r.number(cam_d, k, integer=k in ("width", "height")) for k in _CAMERA_KEYS if k in cam_d}
    try:
        camera = CameraModel(**cam_kw)
    except DomainError as exc:
        r.fail("camera", str(exc))

    per = r.section(data.get("perception", {}), "perception", _PERCEPTION_KEYS)
    detection_range = r.number(per, "detection_range", 120.0)
    half_angle = r.number(per, "corridor_half_angle_deg", 15.0)

    term_d = r.section(data.get("termination", {}), "termination", _TERM_KEYS)
    try:
        term = Termination(**{k: r.number(term_d, k) for k in term_d})
    except ConfigError as exc:
        r.fail("termination", str(exc))

    controller = _parse_controller(r, data.get("controller", {}), term.dt)
    noise = r.number(data, "noise_sigma", 0.0)
    if noise < 0:
        r.fail("noise_sigma", "must be non-negative")
    seed = r.number(data, "seed", 0, integer=True)
    if seed < 0:
        r.fail("seed", "must be non-negative")

    cfg = ScenarioConfig(data["name"], buildings, start_pose, goal, camera, detection_range,
                         half_angle, controller, noise, seed, term)
    try:
        scene = cfg.scene
    except DomainError as exc:
        r.fail("perception" if "range" in str(exc) or "angle" in str(exc) else "buildings", str(exc))
    for b in scene.buildings:
        if b.distance(start_pose.position) <= term.collision_radius:
            r.fail("start", f"start lies within the collision radius of building {b.id}")
    if np.linalg.norm(goal - start_pose.position) <= 0:
        r.fail("goal", "goal coincides with the start position")
    return cfg


def _parse_controller(r: _Reader, d, dt: float) -> ControllerParams:
    r.section(d, "controller", _CONTROLLER_KEYS)
    kw = {}
    for k in _CONTROLLER_SCALARS:
        if k not in d:
            continue
        if k == "depth_mode":
            kw[k] = d[k]
        else:
            kw[k] = r.number(d, k, integer=k in ("smooth", "stride", "depth_window"))
    gains_d = r.section(d.get("goal_gains", {}), "goal_gains", _GAIN_KEYS)
    cem_d = r.section(d.get("cem", {}), "cem", _CEM_KEYS)
    fb_d = r.section(d.get("flow_balance", {}), "flow_balance", _FB_KEYS)
    try:
        gains = GoalGains(**{k: r.number(gains_d, k) for k in gains_d})
        cem_kw = {}
        for k, v in cem_d.items():
            if k in ("init_std", "lower", "upper"):
                cem_kw[k] = r.vector(cem_d, k, 4)
            elif k in ("elite_retention", "per_step"):
                if not isinstance(v, bool):
                    r.fail(k, "expected true or false")
                cem_kw[k] = v
            else:
                cem_kw[k] = r.number(cem_d, k, integer=True)
        cem = CemConfig(dt=dt, **cem_kw)
        v_max = kw.get("v_max", ControllerParams.v_max)
        fb = FlowBalanceConfig(forward_speed=v_max, **{k: r.number(fb_d, k) for k in fb_d})
        return ControllerParams(goal=gains, cem=cem, flow_balance=fb, **kw)
    except (DomainError, ConfigError) as exc:
        r.fail("controller", str(exc))


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read scenario: {exc.strerror}") from None
    return parse_scenario(text, str(path))


def dump_scenario(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2) + "\n"
