"""Labeled gesture samples: store, persistence, splitting, synthetic generation.

Datasets are JSON-lines files. Line 1 is a header object::

    {"format": "cuepose-dataset", "version": 1, "spec_id": ..., "classes": [...]}

and every further line is one sample ``{"c": class_id, "t": captured_at_ms,
"s": session_id, "v": [values...]}``. Values round-trip at full float64
precision. Class id 0 is reserved for the "other" class of incidental,
non-cue movement and is present in every dataset.

The synthetic generator stands in for live capture sessions: each gesture
class is a hand-authored 33-landmark prototype (raised right/left hand,
raised right/left leg) plus i.i.d. Gaussian coordinate noise, and an
optional "different user" transform (constant x offset plus limb-length
scaling about the hips). Generation is a pure function of its config.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .pose import (
    POSE_V1,
    FeatureVector,
    FrameSource,
    LandmarkFrame,
    get_spec,
    select_features,
)

DATASET_FORMAT = "cuepose-dataset"
DATASET_VERSION = 1

OTHER_CLASS_ID = 0


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class GestureClass:
    id: int
    name: str


@dataclass(frozen=True)
class GestureSample:
    features: FeatureVector
    class_id: int
    captured_at_ms: int
    session_id: str


class GestureDataset:
    """Mutable sample store; all samples share one feature spec."""

    def __init__(self, spec_id: str, classes: list[GestureClass],
                 samples: list[GestureSample] | None = None):
        ids = [c.id for c in classes]
        names = [c.name for c in classes]
        if len(set(ids)) != len(ids) or len(set(names)) != len(names):
            raise DatasetError("class ids and names must be unique")
        if OTHER_CLASS_ID not in ids:
            raise DatasetError('class id 0 ("other") is mandatory')
        if any(c.id < 0 for c in classes):
            raise DatasetError("class ids must be non-negative")
        self.spec_id = spec_id
        self.classes = sorted(classes, key=lambda c: c.id)
        self.samples: list[GestureSample] = []
        for s in samples or []:
            self.append_sample(s)

    def class_by_id(self, class_id: int) -> GestureClass:
        for c in self.classes:
            if c.id == class_id:
                return c
        raise DatasetError(f"unknown class id {class_id}")

    def class_by_name(self, name: str) -> GestureClass | None:
        for c in self.classes:
            if c.name == name:
                return c
        return None

    def add_class(self, name: str) -> GestureClass:
        """Register a new gesture class under the next free id."""
        existing = self.class_by_name(name)
        if existing is not None:
            return existing
        new = GestureClass(max(c.id for c in self.classes) + 1, name)
        self.classes.append(new)
        return new

    def append_sample(self, sample: GestureSample) -> None:
        if sample.features.spec_id != self.spec_id:
            raise DatasetError(
                f"sample spec {sample.features.spec_id!r} does not match "
                f"dataset spec {self.spec_id!r}"
            )
        if sample.class_id not in (c.id for c in self.classes):
            raise DatasetError(f"unknown class id {sample.class_id}")
        self.samples.append(sample)

    def counts(self) -> dict[int, int]:
        out = {c.id: 0 for c in self.classes}
        for s in self.samples:
            out[s.class_id] += 1
        return out

    def feature_matrix(self) -> np.ndarray:
        return np.vstack([s.features.values for s in self.samples])

    def labels(self) -> np.ndarray:
        return np.array([s.class_id for s in self.samples], dtype=np.int64)

    def copy(self) -> "GestureDataset":
        return GestureDataset(self.spec_id, list(self.classes), list(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GestureDataset):
            return NotImplemented
        return (self.spec_id == other.spec_id
                and self.classes == other.classes
                and self.samples == other.samples)

    def __repr__(self) -> str:
        return (f"GestureDataset(spec={self.spec_id!r}, "
                f"classes={len(self.classes)}, samples={len(self.samples)})")


def save(ds: GestureDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        header = {
            "format": DATASET_FORMAT,
            "version": DATASET_VERSION,
            "spec_id": ds.spec_id,
            "classes": [{"id": c.id, "name": c.name} for c in ds.classes],
        }
        f.write(json.dumps(header, separators=(",", ":")) + "\n")
        for s in ds.samples:
            row = {"c": s.class_id, "t": s.captured_at_ms, "s": s.session_id,
                   "v": s.features.values.tolist()}
            f.write(json.dumps(row, separators=(",", ":")) + "\n")


def load(path) -> GestureDataset:
    with open(path, "r", encoding="utf-8") as f:
        header_line = f.readline()
        if not header_line.strip():
            raise DatasetError(f"{path}: empty file")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:1: malformed header: {exc}") from None
        if header.get("format") != DATASET_FORMAT:
            raise DatasetError(f"{path}: not a {DATASET_FORMAT} file")
        if header.get("version") != DATASET_VERSION:
            raise DatasetError(
                f"{path}: version mismatch: got {header.get('version')}, "
                f"expected {DATASET_VERSION}"
            )
        spec = get_spec(header["spec_id"])  # unknown spec -> PoseError
        classes = [GestureClass(int(c["id"]), str(c["name"])) for c in header["classes"]]
        ds = GestureDataset(spec.id, classes)
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                values = np.asarray(row["v"], dtype=np.float64)
                if values.shape != (spec.dimensionality,):
                    raise DatasetError(
                        f"expected {spec.dimensionality} values, got {values.shape}"
                    )
                sample = GestureSample(FeatureVector(spec.id, values), int(row["c"]),
                                       int(row["t"]), str(row["s"]))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError, DatasetError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed sample line: {exc}") from None
            ds.append_sample(sample)
        return ds


def stratified_split(ds: GestureDataset, val_fraction: float,
                     seed: int) -> tuple[GestureDataset, GestureDataset]:
    """Per-class split into (train, val); deterministic for a fixed seed.

    Each class contributes round(count * val_fraction) samples (at least 1,
    at most count - 1) to the validation set.
    """
    if not 0 < val_fraction < 1:
        raise DatasetError(f"val_fraction must be in (0, 1), got {val_fraction}")
    counts = ds.counts()
    present = [cid for cid, n in counts.items() if n > 0]
    for cid in present:
        if counts[cid] < 2:
            raise DatasetError(
                f"class {ds.class_by_id(cid).name!r} (id {cid}) has "
                f"{counts[cid]} sample(s); need at least 2 to split"
            )
    rng = np.random.default_rng(seed)
    val_indices: set[int] = set()
    for cid in sorted(present):
        idxs = [i for i, s in enumerate(ds.samples) if s.class_id == cid]
        n = len(idxs)
        n_val = int(math.floor(n * val_fraction + 0.5))
        n_val = min(max(n_val, 1), n - 1)
        perm = rng.permutation(n)
        val_indices.update(idxs[j] for j in perm[:n_val])
    train = GestureDataset(ds.spec_id, list(ds.classes))
    val = GestureDataset(ds.spec_id, list(ds.classes))
    for i, s in enumerate(ds.samples):
        (val if i in val_indices else train).append_sample(s)
    return train, val


def take_per_class(ds: GestureDataset, per_class: int, seed: int) -> GestureDataset:
    """First ``per_class`` samples of every class in a seeded shuffle order."""
    counts = {cid: n for cid, n in ds.counts().items() if n > 0}
    short = [cid for cid, n in counts.items() if n < per_class]
    if short:
        raise DatasetError(
            f"requested {per_class} samples per class but class(es) "
            f"{sorted(short)} have fewer"
        )
    rng = np.random.default_rng(seed)
    keep: list[int] = []
    for cid in sorted(counts):
        idxs = [i for i, s in enumerate(ds.samples) if s.class_id == cid]
        perm = rng.permutation(len(idxs))
        keep.extend(idxs[j] for j in perm[:per_class])
    out = GestureDataset(ds.spec_id, list(ds.classes))
    for i in sorted(keep):
        out.append_sample(ds.samples[i])
    return out


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------

# Hand-authored 33-point body prototypes in normalized image coordinates
# (x right, y DOWN, z 0). Layout follows the standard 33-landmark body
# model: 0 nose, 1-10 face, 11/12 shoulders, 13/14 elbows, 15/16 wrists,
# 17-22 hand points, 23/24 hips, 25/26 knees, 27/28 ankles, 29/30 heels,
# 31/32 foot tips. Right side of the body is drawn at smaller x.

_NEUTRAL_POINTS = [
    (0.50, 0.30),                                      # 0 nose
    (0.52, 0.28), (0.53, 0.28), (0.54, 0.28),          # 1-3 left eye
    (0.48, 0.28), (0.47, 0.28), (0.46, 0.28),          # 4-6 right eye
    (0.56, 0.29), (0.44, 0.29),                        # 7-8 ears
    (0.52, 0.32), (0.48, 0.32),                        # 9-10 mouth
    (0.58, 0.42), (0.42, 0.42),                        # 11-12 shoulders
    (0.60, 0.54), (0.40, 0.54),                        # 13-14 elbows
    (0.61, 0.66), (0.39, 0.66),                        # 15-16 wrists
    (0.615, 0.69), (0.385, 0.69),                      # 17-18 pinkies
    (0.62, 0.69), (0.38, 0.69),                        # 19-20 index fingers
    (0.605, 0.68), (0.395, 0.68),                      # 21-22 thumbs
    (0.55, 0.62), (0.45, 0.62),                        # 23-24 hips
    (0.555, 0.78), (0.445, 0.78),                      # 25-26 knees
    (0.56, 0.92), (0.44, 0.92),                        # 27-28 ankles
    (0.555, 0.94), (0.445, 0.94),                      # 29-30 heels
    (0.57, 0.96), (0.43, 0.96),                        # 31-32 foot tips
]

NEUTRAL_PROTOTYPE = np.array([(x, y, 0.0) for x, y in _NEUTRAL_POINTS])

HIP_MID_Y = 0.62  # anchor for limb-length scaling of a shifted "user"


def _edited(edits: dict[int, tuple[float, float]]) -> np.ndarray:
    proto = NEUTRAL_PROTOTYPE.copy()
    for index, (x, y) in edits.items():
        proto[index, 0] = x
        proto[index, 1] = y
    return proto


# Each gesture moves its signature joints >= 0.3 in normalized coordinates
# away from every other prototype, so classes stay separable far above the
# generator's noise scale.
GESTURE_PROTOTYPES = {
    "right_hand_up": _edited({
        14: (0.41, 0.28), 16: (0.40, 0.14),
        18: (0.395, 0.11), 20: (0.40, 0.10), 22: (0.41, 0.12),
    }),
    "left_hand_up": _edited({
        13: (0.59, 0.28), 15: (0.60, 0.14),
        17: (0.605, 0.11), 19: (0.60, 0.10), 21: (0.59, 0.12),
    }),
    "right_leg_up": _edited({
        26: (0.43, 0.52), 28: (0.46, 0.58),
        30: (0.47, 0.60), 32: (0.45, 0.54),
    }),
    "left_leg_up": _edited({
        25: (0.57, 0.52), 27: (0.54, 0.58),
        29: (0.53, 0.60), 31: (0.55, 0.54),
    }),
}

DEFAULT_GESTURES = ("right_hand_up", "right_leg_up", "left_hand_up", "left_leg_up")


@dataclass(frozen=True)
class SyntheticConfig:
    """Inputs of the synthetic generator; generation is pure in this config.

    ``user_shift`` is either a scalar "different body" knob (x offset plus
    limb-length scaling about the hips, both by the given amount) or an
    explicit (33, 3) per-landmark offset array.
    """

    classes: tuple[tuple[str, np.ndarray], ...]
    samples_per_class: int
    noise_std: float = 0.02
    user_shift: float | np.ndarray = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_class < 1:
            raise DatasetError("samples_per_class must be >= 1")
        if self.noise_std < 0:
            raise DatasetError("noise_std must be >= 0")
        object.__setattr__(self, "classes", tuple(
            (name, np.asarray(proto, dtype=np.float64)) for name, proto in self.classes
        ))


def make_synthetic_config(n_classes: int = 4, samples_per_class: int = 60,
                          noise_std: float = 0.02, user_shift: float = 0.0,
                          seed: int = 0) -> SyntheticConfig:
    """Config over the built-in gesture prototypes (1..4 classes plus other)."""
    if not 1 <= n_classes <= len(DEFAULT_GESTURES):
        raise DatasetError(f"n_classes must be 1..{len(DEFAULT_GESTURES)}")
    classes = tuple((name, GESTURE_PROTOTYPES[name]) for name in DEFAULT_GESTURES[:n_classes])
    return SyntheticConfig(classes, samples_per_class, noise_std, user_shift, seed)


def _apply_user_shift(coords: np.ndarray, shift) -> np.ndarray:
    if isinstance(shift, np.ndarray):
        return coords + shift
    if shift == 0.0:
        return coords
    out = coords.copy()
    out[:, 0] += shift
    out[:, 1] = HIP_MID_Y + (out[:, 1] - HIP_MID_Y) * (1.0 + shift)
    return out


def generate_synthetic(config: SyntheticConfig) -> GestureDataset:
    """Generate a labeled dataset; class 0 "other" uses the neutral pose."""
    classes = [GestureClass(OTHER_CLASS_ID, "other")]
    classes += [GestureClass(i + 1, name) for i, (name, _) in enumerate(config.classes)]
    ds = GestureDataset(POSE_V1.id, classes)
    rng = np.random.default_rng(config.seed)
    prototypes = [(OTHER_CLASS_ID, NEUTRAL_PROTOTYPE)]
    prototypes += [(i + 1, proto) for i, (_, proto) in enumerate(config.classes)]
    t = 0
    for class_id, proto in prototypes:
        for _ in range(config.samples_per_class):
            coords = proto + rng.normal(0.0, config.noise_std, size=proto.shape)
            coords = _apply_user_shift(coords, config.user_shift)
            frame = LandmarkFrame(FrameSource.BODY_POSE_33, t, coords)
            ds.append_sample(GestureSample(select_features(frame, POSE_V1),
                                           class_id, t, "synthetic"))
            t += 1000
    return ds
