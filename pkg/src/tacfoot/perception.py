"""Online tactile perception: dissimilarity, arc self-labelling and GP regression.

Features are raw flattened pin coordinates ``(x1, y1, ..., xN, yN)`` in mm;
labels are signed hip-angle displacements to the edge in degrees, with 0 on
the edge and positive toward the support.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist

from .errors import DegenerateArc, LengthMismatch, NoTransition, SingularKernel, Unfitted


def dissimilarity(a, b) -> float:
    """RMS over pins of the Euclidean distance between corresponding pins (mm)."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape or a.size % 2:
        raise LengthMismatch(f"feature lengths {a.size} and {b.size} differ or are odd")
    diff = (a - b).reshape(-1, 2)
    scale = float(np.abs(diff).max()) if diff.size else 0.0
    if scale == 0.0:
        return 0.0
    diff = diff / scale  # keeps tiny differences from underflowing to 0
    return scale * float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


@dataclass(frozen=True)
class ReferenceTap:
    feature: np.ndarray
    source: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"feature": [float(v) for v in self.feature], "source": self.source}

    @classmethod
    def from_dict(cls, d: dict) -> "ReferenceTap":
        return cls(np.asarray(d["feature"], dtype=float), dict(d.get("source", {})))


@dataclass(frozen=True)
class LabeledTap:
    feature: np.ndarray
    label: float


@dataclass(frozen=True)
class Alignment:
    taps: list[LabeledTap]
    profile: np.ndarray  # dissimilarity of every tap to the reference
    hip_angles: np.ndarray
    index: int  # argmin tap
    offset: float  # parabolic sub-sample shift, in spacings
    edge_angle: float  # hip angle of label 0
    boundary: bool  # argmin at an arc end
    flat: bool  # profile contrast below the floor; no edge inside the arc

    @property
    def bracketed(self) -> bool:
        return not (self.boundary or self.flat)

    @property
    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.taps])


def _as_arc(arc):
    angles = np.array([float(a) for a, _ in arc])
    feats = np.array([np.asarray(f, dtype=float).reshape(-1) for _, f in arc])
    return angles, feats


def align_arc(arc, ref: ReferenceTap, min_contrast: float = 0.1) -> Alignment:
    """Label an arc of ``(hip_angle, feature)`` pairs against the reference tap."""
    if len(arc) < 3:
        raise DegenerateArc("an arc needs at least 3 taps")
    angles, feats = _as_arc(arc)
    if np.any(np.diff(angles) <= 0):
        raise DegenerateArc("hip angles must be strictly increasing")

    d = np.array([dissimilarity(f, ref.feature) for f in feats])
    ties = np.flatnonzero(d <= d.min() + 1e-12 * max(d.max(), 1.0))
    # ties go to the tap nearest the arc's zero angle, then the lower index
    k = int(min(ties, key=lambda i: (abs(angles[i]), i)))

    delta = 0.0
    spacing = 0.0
    boundary = k == 0 or k == len(d) - 1
    if not boundary:
        spacing = 0.5 * (angles[k + 1] - angles[k - 1])
        curv = d[k - 1] - 2.0 * d[k] + d[k + 1]
        # an exact match cannot be bettered, so it is not refined
        if curv > 0 and d[k] > 0:
            delta = float(np.clip(0.5 * (d[k - 1] - d[k + 1]) / curv, -0.5, 0.5))
    edge = float(angles[k] + delta * spacing)
    taps = [LabeledTap(f, float(a - edge)) for a, f in zip(angles, feats)]
    flat = bool(d.max() - d.min() < min_contrast)
    return Alignment(taps, d, angles, k, delta, edge, boundary, flat)


def mean_deflection(feature, rest) -> float:
    pins = np.asarray(feature, dtype=float).reshape(-1, 2)
    return float(np.linalg.norm(pins - np.asarray(rest).reshape(-1, 2), axis=1).mean())


def select_reference(arc, rest, override: int | None = None, floor: float = 0.05,
                     source: dict | None = None) -> ReferenceTap:
    """Pick the tap halfway through the contact transition as the edge reference."""
    angles, feats = _as_arc(arc)
    src = dict(source or {})
    if override is not None:
        src["tap_index"] = int(override)
        return ReferenceTap(feats[override].copy(), src)
    m = np.array([mean_deflection(f, rest) for f in feats])
    if m.max() - m.min() < floor:
        raise NoTransition(f"mean deflection varies by only {m.max() - m.min():.4f} mm across the arc")
    k = int(np.argmin(np.abs(m - 0.5 * (m.max() + m.min()))))
    src["tap_index"] = k
    src["hip_angle"] = float(angles[k])
    return ReferenceTap(feats[k].copy(), src)


@dataclass(frozen=True)
class GPModel:
    """Squared-exponential GP on raw features with zero prior mean.

    ``fixed`` holds user-set ``(lengthscale, signal_var, noise_var)``;
    otherwise they are recomputed on every fit.
    """

    features: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0))
    noise_floor: float = 1e-2
    fixed: tuple[float, float, float] | None = None
    lengthscale: float = float("nan")
    signal_var: float = float("nan")
    noise_var: float = float("nan")
    jitter: float = 0.0
    _chol: np.ndarray | None = field(default=None, repr=False)
    _alpha: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_train(self) -> int:
        return int(self.labels.shape[0])

    @property
    def fitted(self) -> bool:
        return self._chol is not None

    def kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T
        return self.signal_var * np.exp(-np.maximum(sq, 0.0) / (2.0 * self.lengthscale ** 2))

    def to_dict(self) -> dict:
        return {
            "lengthscale": self.lengthscale,
            "signal_var": self.signal_var,
            "noise_var": self.noise_var,
            "noise_floor": self.noise_floor,
            "fixed": list(self.fixed) if self.fixed else None,
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
        }


def _hyperparameters(x: np.ndarray, y: np.ndarray, noise_floor: float) -> tuple[float, float, float]:
    dists = pdist(x) if len(x) > 1 else np.zeros(0)
    ell = float(np.median(dists)) if dists.size else 1.0
    if ell <= 0:
        ell = 1.0
    # second moment, not variance: the prior mean is pinned at 0
    sf2 = max(float(np.mean(y * y)), 1e-6)
    sn2 = max(1e-4 * sf2, noise_floor)
    return ell, sf2, sn2


def fit(model: GPModel) -> GPModel:
    x = np.asarray(model.features, dtype=float)
    y = np.asarray(model.labels, dtype=float)
    if y.shape[0] < 2:
        raise SingularKernel("need at least 2 labelled taps to fit")
    ell, sf2, sn2 = model.fixed if model.fixed else _hyperparameters(x, y, model.noise_floor)
    staged = replace(model, lengthscale=ell, signal_var=sf2, noise_var=sn2)
    k = staged.kernel(x, x) + sn2 * np.eye(len(y))

    jitter = 0.0
    while True:
        try:
            chol = linalg.cholesky(k + jitter * np.eye(len(y)), lower=True)
            break
        except linalg.LinAlgError:
            jitter = 1e-12 * sf2 if jitter == 0 else jitter * 10
            if jitter > 1e-6 * sf2 * (1 + 1e-9):
                raise SingularKernel("kernel factorization failed after jitter escalation") from None
    alpha = linalg.cho_solve((chol, True), y)
    return replace(staged, jitter=jitter, _chol=chol, _alpha=alpha)


def predict(model: GPModel, query) -> tuple[float, float]:
    """Posterior mean and standard deviation (degrees) of the edge displacement."""
    if not model.fitted:
        raise Unfitted("model has no training data")
    q = np.asarray(query, dtype=float).reshape(1, -1)
    if q.shape[1] != model.features.shape[1]:
        raise LengthMismatch(f"query length {q.shape[1]} != feature length {model.features.shape[1]}")
    ks = model.kernel(q, model.features)[0]
    mean = float(ks @ model._alpha)
    v = linalg.solve_triangular(model._chol, ks, lower=True)
    var = model.signal_var - float(v @ v)
    return mean, float(np.sqrt(max(var, 0.0)))


def update(model: GPModel, new: list[LabeledTap]) -> GPModel:
    """Append labelled taps and refit from scratch; nothing is forgotten."""
    if not new:
        return model
    feats = np.array([np.asarray(t.feature, dtype=float).reshape(-1) for t in new])
    labels = np.array([t.label for t in new], dtype=float)
    if model.n_train:
        feats = np.vstack([model.features, feats])
        labels = np.concatenate([model.labels, labels])
    return fit(replace(model, features=feats, labels=labels))


def from_taps(taps: list[LabeledTap], **kwargs) -> GPModel:
    return update(GPModel(**kwargs), taps)


def save_checkpoint(path, model: GPModel, reference: ReferenceTap | None = None) -> None:
    payload = {"model": model.to_dict(), "reference": reference.to_dict() if reference else None}
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_checkpoint(path) -> tuple[GPModel, ReferenceTap | None]:
    payload = json.loads(Path(path).read_text())
    m = payload["model"]
    model = GPModel(
        features=np.asarray(m["features"], dtype=float),
        labels=np.asarray(m["labels"], dtype=float),
        noise_floor=m["noise_floor"],
        fixed=tuple(m["fixed"]) if m["fixed"] else None,
    )
    if model.n_train >= 2:
        model = fit(model)
    ref = ReferenceTap.from_dict(payload["reference"]) if payload.get("reference") else None
    return model, ref
