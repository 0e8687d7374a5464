"""Phenomenological pin-array model of the hemispherical tactile tip.

Each pin is displaced radially (dome indentation, gated by how well the
ground under that pin is supported) and all pins share a tangential shear
toward the supported side when the foot straddles the edge.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import as_rng
from .terrain import Terrain, inward_normal, profile_height, signed_edge_distance, signed_edge_distances

# extra indentation per mm of surface height
HEIGHT_INDENT_GAIN = 0.5


@dataclass(frozen=True)
class PinLayout:
    rest_positions: np.ndarray  # (N, 2) sensor-plane mm
    ring_index: tuple[int, ...]

    def __post_init__(self):
        rest = np.asarray(self.rest_positions, dtype=float)
        if rest.ndim != 2 or rest.shape[1] != 2 or rest.shape[0] < 6:
            raise ValueError("layout needs at least 6 pins as an (N, 2) array")
        rest.setflags(write=False)
        object.__setattr__(self, "rest_positions", rest)
        if len(self.ring_index) != rest.shape[0]:
            raise ValueError("ring_index length must match pin count")

    @property
    def n_pins(self) -> int:
        return self.rest_positions.shape[0]

    @classmethod
    def concentric(cls, radii=(3.5, 7.5, 11.5), counts=(6, 10, 14), tip_radius: float = 13.5) -> "PinLayout":
        """Rings of evenly spaced pins, each ring rotated half a pitch from the last."""
        pts, rings = [], []
        phase = 0.0
        for k, (r, n) in enumerate(zip(radii, counts)):
            if r >= tip_radius:
                raise ValueError("pin ring outside the tip")
            for i in range(n):
                a = phase + 2 * math.pi * i / n
                pts.append((r * math.cos(a), r * math.sin(a)))
                rings.append(k)
            phase += math.pi / n
        return cls(np.array(pts), tuple(rings))


@dataclass(frozen=True)
class SensorParams:
    tip_radius: float = 13.5
    indent_depth: float = 2.0
    deflection_gain: float = 1.0
    edge_decay_length: float = 3.0
    shear_gain: float = 0.5
    pin_noise_sigma: float = 0.05

    def __post_init__(self):
        if self.tip_radius <= 0 or self.edge_decay_length <= 0:
            raise ValueError("tip_radius and edge_decay_length must be positive")
        if self.pin_noise_sigma < 0:
            raise ValueError("pin_noise_sigma must be non-negative")


@dataclass
class TapFrame:
    pin_positions: np.ndarray  # (N, 2), same order as the layout
    contact_flag: bool
    meta: dict = field(default_factory=dict)

    def feature(self) -> np.ndarray:
        return np.asarray(self.pin_positions, dtype=float).reshape(-1)

    def to_dict(self) -> dict:
        return {
            "pins": [[float(x), float(y)] for x, y in self.pin_positions],
            "contact": bool(self.contact_flag),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TapFrame":
        return cls(np.array(d["pins"], dtype=float).reshape(-1, 2), bool(d["contact"]), dict(d.get("meta", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _rotation(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s], [s, c]])


def pin_deflections(layout: PinLayout, params: SensorParams, terrain: Terrain, foot_center, yaw: float = 0.0):
    """Noise-free displacement of every pin from rest, plus the contact flag."""
    rest = layout.rest_positions
    foot_center = np.asarray(foot_center, dtype=float)
    s0 = signed_edge_distance(terrain, foot_center)
    if s0 <= -params.tip_radius:
        return np.zeros_like(rest), False

    rot = _rotation(yaw)
    world = foot_center + rest @ rot.T
    w = smoothstep(signed_edge_distances(terrain, world) / params.edge_decay_length)

    indent = params.indent_depth + HEIGHT_INDENT_GAIN * profile_height(terrain, foot_center)
    amp = params.deflection_gain * indent

    r = np.hypot(rest[:, 0], rest[:, 1])
    bulge = np.sqrt(np.maximum(0.0, 1.0 - (r / params.tip_radius) ** 2))
    outward = np.divide(rest, r[:, None], out=np.zeros_like(rest), where=r[:, None] > 0)
    radial = (amp * w * bulge)[:, None] * outward

    # shear fades with the supported fraction so contact onset stays continuous
    w_center = min(max(s0 / params.edge_decay_length + 0.5, 0.0), 1.0)
    shear_mag = params.shear_gain * indent * (1.0 - w_center) * float(w.mean())
    shear_dir = rot.T @ inward_normal(terrain, foot_center)
    return radial + shear_mag * shear_dir, True


def simulate_tap(layout: PinLayout, params: SensorParams, terrain: Terrain, foot_center, rng_seed=None,
                 yaw: float = 0.0, meta: dict | None = None) -> TapFrame:
    """Press the tip onto ``terrain`` at ``foot_center``.

    ``yaw`` is the sensor frame's rotation in the world (degrees).
    """
    deflection, contact = pin_deflections(layout, params, terrain, foot_center, yaw)
    pins = layout.rest_positions + deflection
    if params.pin_noise_sigma > 0:
        pins = pins + as_rng(rng_seed).normal(0.0, params.pin_noise_sigma, size=pins.shape)
    return TapFrame(pins, contact, dict(meta or {}))


def frame_distance_profile(layout: PinLayout, params: SensorParams, terrain: Terrain, arc_points,
                           rng_seed=None, heading: float = 0.0) -> list[TapFrame]:
    """One tap per ``(hip_angle, point)`` from :func:`geometry.arc_points`.

    The sensor yaws with the leg, so each tap's frame is rotated by
    ``heading + hip_angle``.
    """
    rng = as_rng(rng_seed)
    frames = []
    for k, (angle, point) in enumerate(arc_points):
        meta = {"hip_angle": float(angle), "world_point": [float(point[0]), float(point[1])], "timestamp": k}
        frames.append(simulate_tap(layout, params, terrain, point, rng, yaw=heading + angle, meta=meta))
    return frames
