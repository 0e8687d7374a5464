"""Planar kinematics of the tactile leg.

The body pose tracks the front-right hip pivot.  The foot sits ``hip_radius``
in front of the pivot at hip angle 0, and positive hip angles swing it
counter-clockwise (toward the left of the body).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnreachableTarget


def normalize_angle(deg: float) -> float:
    """Wrap an angle in degrees to [-180, 180)."""
    return (deg + 180.0) % 360.0 - 180.0


def as_rng(seed) -> np.random.Generator:
    """Accept an int seed, None, or an existing Generator."""
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float  # degrees, CCW positive

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "heading": self.heading}


@dataclass(frozen=True)
class RobotParams:
    hip_radius: float = 115.0
    foot_spacing: float = 230.0
    placement_noise_sigma: float = 1.5
    heading_drift_sigma: float = 1.0
    step_length: float = 40.0

    def __post_init__(self):
        if self.hip_radius <= 0:
            raise ValueError("hip_radius must be positive")
        if self.placement_noise_sigma < 0 or self.heading_drift_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        if self.step_length <= 0:
            raise ValueError("step_length must be positive")


@dataclass(frozen=True)
class ArcSpec:
    center_angle: float = 0.0
    half_extent: float = 15.0
    num_taps: int = 31

    def __post_init__(self):
        if self.num_taps < 3 or self.num_taps % 2 == 0:
            raise ValueError("num_taps must be odd and >= 3")
        if self.half_extent <= 0:
            raise ValueError("half_extent must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / (self.num_taps - 1)

    def angles(self) -> np.ndarray:
        offsets = (np.arange(self.num_taps) - (self.num_taps - 1) // 2) * self.spacing
        return self.center_angle + offsets


def _direction(deg: float) -> np.ndarray:
    rad = math.radians(deg)
    return np.array([math.cos(rad), math.sin(rad)])


def foot_position(pose: Pose2D, params: RobotParams, hip_angle: float) -> np.ndarray:
    return pose.position + params.hip_radius * _direction(pose.heading + hip_angle)


def arc_points(pose: Pose2D, params: RobotParams, arc: ArcSpec) -> list[tuple[float, np.ndarray]]:
    return [(float(a), foot_position(pose, params, a)) for a in arc.angles()]


def apply_actuation_noise(point, params: RobotParams, rng_seed) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    if params.placement_noise_sigma == 0:
        return point.copy()
    rng = as_rng(rng_seed)
    return point + rng.normal(0.0, params.placement_noise_sigma, size=2)


def turn_and_step(pose: Pose2D, params: RobotParams, target_foot, rng_seed, step_length: float | None = None) -> Pose2D:
    """Turn the body to face the planted foot, then walk one step.

    The new heading is the bearing from the hip pivot to ``target_foot``
    plus Gaussian drift.  ``step_length`` overrides ``params.step_length``
    (0 gives a pure turn).
    """
    offset = np.asarray(target_foot, dtype=float) - pose.position
    dist = float(np.hypot(*offset))
    if dist > 2.0 * params.hip_radius:
        raise UnreachableTarget(f"target {dist:.1f} mm from hip exceeds reach {2 * params.hip_radius:.1f} mm")
    heading = math.degrees(math.atan2(offset[1], offset[0])) if dist > 0 else pose.heading
    if params.heading_drift_sigma > 0:
        heading += as_rng(rng_seed).normal(0.0, params.heading_drift_sigma)
    length = params.step_length if step_length is None else step_length
    pos = pose.position + length * _direction(heading)
    return Pose2D(float(pos[0]), float(pos[1]), heading)
