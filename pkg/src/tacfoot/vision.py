"""Synthetic sensor-camera images and pin recovery by blob detection."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import OutOfFrame, TrackingLost
from .geometry import as_rng
from .sensor import TapFrame

SPOT_SIGMA_PX = 1.5
BACKGROUND_NOISE = 3.0  # intensity levels, std of the textured background
BACKGROUND_GRAIN_PX = 1.5  # spatial correlation of the background texture


@dataclass(frozen=True)
class Camera:
    width: int = 640
    height: int = 480
    mm_to_px: float = 3.0

    @property
    def center(self) -> tuple[float, float]:
        return (self.width / 2.0, self.height / 2.0)

    def to_px(self, pins_mm) -> np.ndarray:
        pins_mm = np.asarray(pins_mm, dtype=float)
        cx, cy = self.center
        return np.column_stack([cx + pins_mm[:, 0] * self.mm_to_px, cy - pins_mm[:, 1] * self.mm_to_px])

    def to_mm(self, pins_px) -> np.ndarray:
        pins_px = np.asarray(pins_px, dtype=float)
        cx, cy = self.center
        return np.column_stack([(pins_px[:, 0] - cx) / self.mm_to_px, (cy - pins_px[:, 1]) / self.mm_to_px])


@dataclass(frozen=True)
class DetectionParams:
    threshold: float = 128.0
    min_area: int = 6
    max_area: int = 400
    ambient_level: float = 0.0
    pin_brightness: float = 1.0

    def __post_init__(self):
        if not 0 <= self.threshold <= 255:
            raise ValueError("threshold must lie in [0, 255]")
        if self.min_area >= self.max_area:
            raise ValueError("min_area must be below max_area")


@dataclass(frozen=True)
class Blob:
    x: float
    y: float
    area: int


def render_image(frame: TapFrame, params: DetectionParams, camera: Camera = Camera(), rng_seed=None) -> np.ndarray:
    """Render a (height, width) uint8 image of the frame's pins."""
    rng = as_rng(rng_seed)
    centers = camera.to_px(frame.pin_positions)
    if (centers[:, 0] < 0).any() or (centers[:, 0] > camera.width - 1).any() or \
            (centers[:, 1] < 0).any() or (centers[:, 1] > camera.height - 1).any():
        raise OutOfFrame("pin projected outside the image; lower mm_to_px")

    texture = ndimage.gaussian_filter(rng.normal(size=(camera.height, camera.width)), BACKGROUND_GRAIN_PX)
    texture *= BACKGROUND_NOISE / texture.std()
    img = 255.0 * params.ambient_level * 0.15 + texture

    peak = 255.0 * min(max(params.pin_brightness + 0.3 * params.ambient_level, 0.0), 1.0)
    if peak > 0:
        half = int(np.ceil(5 * SPOT_SIGMA_PX))
        for cx, cy in centers:
            x0, x1 = max(int(cx) - half, 0), min(int(cx) + half + 2, camera.width)
            y0, y1 = max(int(cy) - half, 0), min(int(cy) + half + 2, camera.height)
            xs = np.arange(x0, x1) - cx
            ys = np.arange(y0, y1) - cy
            spot = np.exp(-(ys[:, None] ** 2 + xs[None, :] ** 2) / (2 * SPOT_SIGMA_PX ** 2))
            img[y0:y1, x0:x1] += peak * spot
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def detect_blobs(image: np.ndarray, params: DetectionParams) -> list[Blob]:
    """4-connected bright components inside the area gate, sorted by (y, x)."""
    mask = image > params.threshold
    labels, n = ndimage.label(mask)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    keep = [i for i in range(1, n + 1) if params.min_area <= areas[i] <= params.max_area]
    if not keep:
        return []
    com = ndimage.center_of_mass(image.astype(float), labels, keep)
    blobs = [Blob(float(c[1]), float(c[0]), int(areas[i])) for c, i in zip(com, keep)]
    return sorted(blobs, key=lambda b: (b.y, b.x))


def detect_pins(image: np.ndarray, params: DetectionParams) -> np.ndarray:
    """Intensity-weighted blob centroids as a (K, 2) array of (x, y) pixels."""
    blobs = detect_blobs(image, params)
    return np.array([[b.x, b.y] for b in blobs]).reshape(-1, 2)


def _greedy_mutual_nn(ref_px: np.ndarray, cents: np.ndarray, gate_px: float) -> np.ndarray:
    """Index of the centroid matched to each reference pin, -1 where unmatched."""
    assign = np.full(len(ref_px), -1)
    if not len(cents):
        return assign
    dist = np.linalg.norm(ref_px[:, None, :] - cents[None, :, :], axis=2)
    dist[dist > gate_px] = np.inf
    while np.isfinite(dist).any():
        best_c = dist.argmin(axis=1)
        best_r = dist.argmin(axis=0)
        pairs = [(r, c) for r, c in enumerate(best_c) if np.isfinite(dist[r, c]) and best_r[c] == r]
        if not pairs:
            break
        for r, c in pairs:
            assign[r] = c
            dist[r, :] = np.inf
            dist[:, c] = np.inf
    return assign


def match_pins(centroids, reference_mm, camera: Camera = Camera(), gate_px: float = 8.0,
               contact_flag: bool = True, meta: dict | None = None, min_fraction: float = 0.8,
               neighbours: int = 6) -> TapFrame:
    """Assign detected centroids to the ordered reference pins.

    Greedy mutual-nearest-neighbour rounds within ``gate_px``. A second round
    matches against a motion-predicted reference, each pin shifted by the
    median displacement of its matched neighbours, so neighbouring pins that
    move by more than half their spacing are not swapped. Reference pins left
    unmatched keep their reference position.
    """
    ref_px = camera.to_px(reference_mm)
    cents = np.asarray(centroids, dtype=float).reshape(-1, 2)
    assign = _greedy_mutual_nn(ref_px, cents, gate_px)
    hit = assign >= 0
    if hit.sum() >= 1 and neighbours > 0:
        disp = cents[assign[hit]] - ref_px[hit]
        gaps = np.linalg.norm(ref_px[:, None, :] - ref_px[hit][None, :, :], axis=2)
        near = np.argsort(gaps, axis=1)[:, :min(neighbours, int(hit.sum()))]
        predicted = ref_px + np.median(disp[near], axis=1)
        assign = _greedy_mutual_nn(predicted, cents, gate_px)
    out = ref_px.copy()
    matched = assign >= 0
    out[matched] = cents[assign[matched]]
    if matched.sum() < min_fraction * len(ref_px):
        raise TrackingLost(f"matched {int(matched.sum())}/{len(ref_px)} pins")
    return TapFrame(camera.to_mm(out), contact_flag, dict(meta or {}))


def write_pgm(image: np.ndarray, path) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+255\s", data)
    if m is None:
        raise ValueError("not an 8-bit binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    return np.frombuffer(data[m.end(): m.end() + w * h], dtype=np.uint8).reshape(h, w)


def write_centroids_csv(blobs: list[Blob], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_px", "y_px", "area"])
        for b in blobs:
            writer.writerow([f"{b.x:.4f}", f"{b.y:.4f}", b.area])
