import numpy as np
import pytest

from cuepose.dataset import GESTURE_PROTOTYPES, NEUTRAL_PROTOTYPE, generate_synthetic, make_synthetic_config
from cuepose.mlp import TrainConfig, train


@pytest.fixture(scope="session")
def trained_gestures():
    """A small, well-separated 4-gesture model for perform-mode tests."""
    ds = generate_synthetic(make_synthetic_config(4, 10, noise_std=0.01, seed=5))
    model, scaler, report = train(ds, TrainConfig(max_epochs=80, seed=5))
    assert report.validation_report.accuracy == 1.0
    return model, scaler, ds


def gesture_landmarks(name: str | None, rng=None, noise: float = 0.005) -> list:
    """Landmark payload rows for a gesture prototype (None = neutral pose)."""
    proto = NEUTRAL_PROTOTYPE if name is None else GESTURE_PROTOTYPES[name]
    coords = proto.copy()
    if rng is not None and noise > 0:
        coords = coords + rng.normal(0, noise, coords.shape)
    return [[round(float(x), 6), round(float(y), 6), round(float(z), 6)]
            for x, y, z in coords]


def frame_event(name: str | None = None, rng=None, t: int = 0) -> dict:
    return {"type": "frame", "src": "pose", "t": t,
            "landmarks": gesture_landmarks(name, rng)}
