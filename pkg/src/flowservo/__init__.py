"""Monocular obstacle avoidance by servoing toward a synthesized radial flow field."""
from .errors import ConfigError, DomainError, OptimizationError
from .geometry import CameraModel, Pose, integrate_pose
from .pipeline import CONTROLLERS, EpisodeResult, Outcome, run_episode
from .scene import Building, Scene

__version__ = "0.1.0"

__all__ = ["ConfigError", "DomainError", "OptimizationError", "CameraModel", "Pose", "integrate_pose",
           "CONTROLLERS", "EpisodeResult", "Outcome", "run_episode", "Building", "Scene"]
