"""Landmark frames, feature selection, and per-feature standardization.

A frame is one timestamped snapshot of tracked keypoints: 33 points for a
full body, 21 for a hand, each with normalized image coordinates (x, y)
and a relative depth z. Feature selection flattens a chosen subset of
landmarks into a vector using only x and y; depth is carried in the frame
but never enters a feature vector.

The built-in body spec keeps the nose (index 0) as a stable head anchor
and all torso/limb points (indices 11..32), dropping the remaining face
points (1..10). The hand spec uses all 21 points.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class PoseError(Exception):
    pass


class FrameSource(enum.Enum):
    BODY_POSE_33 = "pose"
    HAND_21 = "hand"

    @property
    def landmark_count(self) -> int:
        return 33 if self is FrameSource.BODY_POSE_33 else 21


@dataclass(frozen=True, slots=True)
class Landmark:
    x: float
    y: float
    z: float = 0.0
    visibility: float | None = None


@dataclass(frozen=True)
class LandmarkFrame:
    """One snapshot of landmarks. ``coords`` is an (n, 3) float array."""

    source: FrameSource
    timestamp_ms: int
    coords: np.ndarray
    visibility: np.ndarray | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.shape != (self.source.landmark_count, 3):
            raise PoseError(
                f"{self.source.name} frame needs {self.source.landmark_count} "
                f"landmarks of (x, y, z), got array of shape {coords.shape}"
            )
        object.__setattr__(self, "coords", coords)
        if self.visibility is not None:
            vis = np.asarray(self.visibility, dtype=np.float64)
            if vis.shape != (self.source.landmark_count,):
                raise PoseError(f"visibility shape {vis.shape} does not match frame")
            object.__setattr__(self, "visibility", vis)

    @classmethod
    def from_landmarks(cls, source: FrameSource, timestamp_ms: int,
                       landmarks: list[Landmark]) -> "LandmarkFrame":
        coords = np.array([(p.x, p.y, p.z) for p in landmarks], dtype=np.float64)
        vis = None
        if landmarks and landmarks[0].visibility is not None:
            vis = np.array([p.visibility for p in landmarks], dtype=np.float64)
        return cls(source, timestamp_ms, coords, vis)

    def landmark(self, index: int) -> Landmark:
        x, y, z = self.coords[index]
        v = None if self.visibility is None else float(self.visibility[index])
        return Landmark(float(x), float(y), float(z), v)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coords)))


_AXIS_COLUMNS = {"x": 0, "y": 1}


@dataclass(frozen=True)
class FeatureSpec:
    """Which landmarks and axes of a frame become the feature vector."""

    id: str
    source: FrameSource
    indices: tuple[int, ...]
    axes: tuple[str, ...] = ("x", "y")

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(self.indices))
        object.__setattr__(self, "axes", tuple(self.axes))
        if any(a not in _AXIS_COLUMNS for a in self.axes) or not self.axes:
            raise PoseError(f"axes must be a non-empty subset of (x, y): {self.axes}")
        if not all(i < j for i, j in zip(self.indices, self.indices[1:])):
            raise PoseError("landmark indices must be strictly increasing")
        if not self.indices or self.indices[0] < 0 or self.indices[-1] >= self.source.landmark_count:
            raise PoseError(f"indices out of range for {self.source.name}")

    @property
    def dimensionality(self) -> int:
        return len(self.indices) * len(self.axes)


POSE_V1 = FeatureSpec("pose-v1", FrameSource.BODY_POSE_33, (0,) + tuple(range(11, 33)))
HAND_V1 = FeatureSpec("hand-v1", FrameSource.HAND_21, tuple(range(21)))

_SPECS: dict[str, FeatureSpec] = {POSE_V1.id: POSE_V1, HAND_V1.id: HAND_V1}


def builtin_specs() -> list[FeatureSpec]:
    return [POSE_V1, HAND_V1]


def register_spec(spec: FeatureSpec) -> None:
    """Add a custom spec to the registry (id must be unused)."""
    if spec.id in _SPECS and _SPECS[spec.id] != spec:
        raise PoseError(f"spec id already registered: {spec.id}")
    _SPECS[spec.id] = spec


def get_spec(spec_id: str) -> FeatureSpec:
    try:
        return _SPECS[spec_id]
    except KeyError:
        raise PoseError(f"unknown feature spec: {spec_id!r}") from None


@dataclass(frozen=True)
class FeatureVector:
    spec_id: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.spec_id == other.spec_id and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.spec_id, self.values.tobytes()))


def select_features(frame: LandmarkFrame, spec: FeatureSpec) -> FeatureVector:
    """Flatten the spec's landmarks into a vector, x before y per landmark."""
    if frame.source is not spec.source:
        raise PoseError(
            f"frame source {frame.source.name} does not match spec "
            f"{spec.id!r} ({spec.source.name})"
        )
    cols = [_AXIS_COLUMNS[a] for a in spec.axes]
    values = frame.coords[np.ix_(spec.indices, cols)].ravel()
    if not np.all(np.isfinite(values)):
        raise PoseError(f"frame at t={frame.timestamp_ms} has non-finite coordinates")
    return FeatureVector(spec.id, values)


STD_FLOOR = 1e-8  # below this a feature is considered constant


@dataclass(frozen=True)
class Scaler:
    """Per-feature standardization parameters fitted on training data."""

    spec_id: str
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        stds = np.asarray(self.stds, dtype=np.float64)
        if means.shape != stds.shape or means.ndim != 1:
            raise PoseError("scaler means/stds must be 1-D arrays of equal length")
        if np.any(stds <= 0):
            raise PoseError("scaler stds must be strictly positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scaler):
            return NotImplemented
        return (self.spec_id == other.spec_id
                and np.array_equal(self.means, other.means)
                and np.array_equal(self.stds, other.stds))

    def __hash__(self):
        return hash((self.spec_id, self.means.tobytes(), self.stds.tobytes()))


def fit_scaler(vectors: list[FeatureVector]) -> Scaler:
    """Fit means and population stds; constant features get std 1.0."""
    if not vectors:
        raise PoseError("cannot fit a scaler on an empty sample set")
    spec_id = vectors[0].spec_id
    if any(v.spec_id != spec_id for v in vectors):
        raise PoseError("all vectors must share one feature spec")
    matrix = np.vstack([v.values for v in vectors])
    means = matrix.mean(axis=0)
    stds = matrix.std(axis=0)
    stds = np.where(stds < STD_FLOOR, 1.0, stds)
    return Scaler(spec_id, means, stds)


def apply_scaler(scaler: Scaler, v: FeatureVector) -> FeatureVector:
    if scaler.spec_id != v.spec_id:
        raise PoseError(f"scaler spec {scaler.spec_id!r} does not match vector spec {v.spec_id!r}")
    return FeatureVector(v.spec_id, (v.values - scaler.means) / scaler.stds)


def scale_matrix(scaler: Scaler, matrix: np.ndarray) -> np.ndarray:
    """Vectorized form of :func:`apply_scaler` for an (n, d) matrix."""
    return (np.asarray(matrix, dtype=np.float64) - scaler.means) / scaler.stds
