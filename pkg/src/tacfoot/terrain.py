"""Support surfaces: the narrow beam and the round table.

Signed edge distance is positive on the support, negative past the tracked
edge.  A distance of exactly 0 counts as supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import Unsupported


@dataclass(frozen=True)
class BeamTerrain:
    """Straight beam whose centerline starts at ``origin`` and runs along ``direction``.

    The tracked edge is the right-hand side of the axis direction.
    ``height_profile`` holds ``(axial_mm, height_mm)`` knots, linearly
    interpolated and held constant past the ends.
    """

    width: float = 28.0
    origin: tuple[float, float] = (0.0, 0.0)
    direction: tuple[float, float] = (1.0, 0.0)
    length: float = 500.0
    height_profile: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.width <= 0 or self.length <= 0:
            raise ValueError("beam width and length must be positive")
        d = np.asarray(self.direction, dtype=float)
        n = float(np.hypot(*d))
        if n == 0:
            raise ValueError("beam direction must be non-zero")
        object.__setattr__(self, "direction", (float(d[0] / n), float(d[1] / n)))
        if self.height_profile is not None:
            knots = tuple(sorted((float(a), float(h)) for a, h in self.height_profile))
            object.__setattr__(self, "height_profile", knots)

    @property
    def normal(self) -> np.ndarray:
        # left-hand normal: points from the tracked edge into the beam
        dx, dy = self.direction
        return np.array([-dy, dx])

    def axial(self, point) -> float:
        rel = np.asarray(point, dtype=float) - np.asarray(self.origin)
        return float(rel @ np.asarray(self.direction))

    def lateral(self, point) -> float:
        rel = np.asarray(point, dtype=float) - np.asarray(self.origin)
        return float(rel @ self.normal)


@dataclass(frozen=True)
class TableTerrain:
    radius: float = 590.0
    center: tuple[float, float] = (0.0, 0.0)
    active_arc: tuple[float, float] = (-90.0, 90.0)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("table radius must be positive")

    def polar_angle(self, point) -> float:
        rel = np.asarray(point, dtype=float) - np.asarray(self.center)
        return math.degrees(math.atan2(rel[1], rel[0]))


Terrain = Union[BeamTerrain, TableTerrain]


def signed_edge_distance(terrain: Terrain, point) -> float:
    if isinstance(terrain, BeamTerrain):
        return terrain.lateral(point) + terrain.width / 2.0
    rel = np.asarray(point, dtype=float) - np.asarray(terrain.center)
    return terrain.radius - float(np.hypot(*rel))


def signed_edge_distances(terrain: Terrain, points: np.ndarray) -> np.ndarray:
    """Vectorized :func:`signed_edge_distance` over an (N, 2) array."""
    points = np.asarray(points, dtype=float)
    if isinstance(terrain, BeamTerrain):
        rel = points - np.asarray(terrain.origin)
        return rel @ terrain.normal + terrain.width / 2.0
    rel = points - np.asarray(terrain.center)
    return terrain.radius - np.hypot(rel[:, 0], rel[:, 1])


def inward_normal(terrain: Terrain, point) -> np.ndarray:
    """Unit vector pointing from the tracked edge into the support."""
    if isinstance(terrain, BeamTerrain):
        return terrain.normal
    rel = np.asarray(point, dtype=float) - np.asarray(terrain.center)
    n = float(np.hypot(*rel))
    if n == 0:
        return np.array([1.0, 0.0])
    return -rel / n


def is_supported(terrain: Terrain, foot_center, foot_radius: float = 0.0) -> bool:
    """Foot-center safety test; ``foot_radius`` is accepted for stricter callers."""
    if foot_radius < 0:
        raise ValueError("foot_radius must be non-negative")
    if signed_edge_distance(terrain, foot_center) < 0:
        return False
    if isinstance(terrain, BeamTerrain):
        if terrain.lateral(foot_center) > terrain.width / 2.0:
            return False
        return 0.0 <= terrain.axial(foot_center) <= terrain.length
    return True


def profile_height(terrain: Terrain, point) -> float:
    """Height offset at ``point`` without the support check."""
    if isinstance(terrain, BeamTerrain) and terrain.height_profile:
        xs, hs = zip(*terrain.height_profile)
        return float(np.interp(terrain.axial(point), xs, hs))
    return 0.0


def surface_height(terrain: Terrain, point) -> float:
    if not is_supported(terrain, point):
        raise Unsupported(f"point {tuple(np.round(point, 3))} is not on the support")
    return profile_height(terrain, point)


def edge_hip_angle(terrain: Terrain, foot_at, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Bisect the hip angle in [lo, hi] where ``foot_at(angle)`` crosses the edge.

    ``foot_at`` maps a hip angle to a world point.  The signed distance must
    change sign over the bracket.
    """
    f_lo = signed_edge_distance(terrain, foot_at(lo))
    f_hi = signed_edge_distance(terrain, foot_at(hi))
    # a bracket end within rounding of the edge is the answer
    if abs(f_lo) < 1e-9:
        return lo
    if abs(f_hi) < 1e-9:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise ValueError("edge not bracketed by the given hip angles")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = signed_edge_distance(terrain, foot_at(mid))
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
