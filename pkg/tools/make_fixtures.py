#!/usr/bin/env python3
"""Regenerate the committed test fixtures.

Everything here is a pure function of hard-coded seeds, so the outputs are
bit-reproducible; tests assert that the committed files match a fresh
regeneration. Run from the repository root:

    python3 tools/make_fixtures.py
"""

from __future__ import annotations

import json
import os
import sys

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "tests", "fixtures")
REPLAY_DIR = os.path.join(FIXTURES, "replay")

sys.path.insert(0, os.path.join(ROOT, "src"))

from cuepose import dataset as ds_mod  # noqa: E402
from cuepose import mlp  # noqa: E402
from cuepose.cues import (  # noqa: E402
    AdjustParam,
    CueMapping,
    ObservationWindowCfg,
    TriggerJump,
    save_mapping,
)
from cuepose.dataset import GESTURE_PROTOTYPES, NEUTRAL_PROTOTYPE  # noqa: E402

SYNTH_A = dict(n_classes=4, samples_per_class=60, noise_std=0.02, user_shift=0.0, seed=42)
SYNTH_B = dict(n_classes=4, samples_per_class=60, noise_std=0.02, user_shift=0.08, seed=42)
SYNTH_CONTROL = dict(n_classes=4, samples_per_class=60, noise_std=0.02, user_shift=0.0, seed=1042)
SYNTH_CURVE = dict(n_classes=4, samples_per_class=100, noise_std=0.02, user_shift=0.0, seed=7)

TRAIN_SEED = 42

# replay fixture timeline (all milliseconds)
T0 = 1_000_000          # virtual wall clock at trace start
DURATION = 30_000
FRAME_EVERY = 30
TICK_EVERY = 100
BEAT_EVERY = 500
TRACK_AT_T0 = 10_000

WINDOW = ObservationWindowCfg(12_000, 14_000, 14_500, 1_000)

GESTURE_SCHEDULE = [
    # (virtual start, virtual end, gesture)
    (2_000, 2_500, "right_hand_up"),   # falls inside the observation window
    (6_000, 6_400, "right_leg_up"),    # gain +1
    (8_000, 8_400, "right_leg_up"),    # gain +1
    (10_500, 10_900, "right_leg_up"),  # gain +1
    (13_000, 13_400, "left_hand_up"),  # pitch -1
    (16_000, 16_400, "left_leg_up"),   # tempo +2
    (20_000, 20_400, "right_leg_up"),  # gain +1
]


def write_synthetic() -> None:
    for name, params in (("synthetic_a.jsonl", SYNTH_A),
                         ("synthetic_b_shift.jsonl", SYNTH_B),
                         ("synthetic_control.jsonl", SYNTH_CONTROL),
                         ("synthetic_curve.jsonl", SYNTH_CURVE)):
        ds = ds_mod.generate_synthetic(ds_mod.make_synthetic_config(**params))
        path = os.path.join(FIXTURES, name)
        ds_mod.save(ds, path)
        print(f"wrote {path} ({len(ds)} samples)")


def write_replay_model() -> None:
    ds = ds_mod.load(os.path.join(FIXTURES, "synthetic_a.jsonl"))
    model, scaler, report = mlp.train(ds, mlp.TrainConfig(seed=TRAIN_SEED))
    mlp.save_model(model, scaler,
                   os.path.join(REPLAY_DIR, "model.json"),
                   os.path.join(REPLAY_DIR, "scaler.json"))
    print(f"wrote replay model (val acc {report.validation_report.accuracy:.3f})")


def write_replay_mapping() -> None:
    mapping = CueMapping()
    mapping.set_action(1, TriggerJump(WINDOW))
    mapping.set_action(2, AdjustParam("drums", "gain", "increase", 1))
    mapping.set_action(3, AdjustParam("vocals", "pitch", "decrease", 1))
    mapping.set_action(4, AdjustParam("drums", "tempo", "increase", 2))
    save_mapping(mapping, os.path.join(REPLAY_DIR, "mapping.json"))
    print("wrote replay mapping")


def write_replay_config() -> None:
    config = {
        "osc_listen": "127.0.0.1:9000",
        "osc_out": "127.0.0.1:9001",
        "ws_listen": "127.0.0.1:8765",
        "model_path": "model.json",
        "scaler_path": "scaler.json",
        "mapping_path": "mapping.json",
        "dataset_dir": "datasets",
        "stems": ["drums", "bass", "vocals", "melody"],
        "mode": "perform",
    }
    path = os.path.join(REPLAY_DIR, "config.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2)
        f.write("\n")
    print(f"wrote {path}")


def gesture_at(virtual_ms: int) -> str | None:
    for start, end, name in GESTURE_SCHEDULE:
        if start <= virtual_ms < end:
            return name
    return None


def frame_landmarks(rng: np.random.Generator, gesture: str | None) -> list:
    proto = NEUTRAL_PROTOTYPE if gesture is None else GESTURE_PROTOTYPES[gesture]
    coords = proto + rng.normal(0, 0.004, proto.shape)
    return [[round(float(x), 6), round(float(y), 6), round(float(z), 6)]
            for x, y, z in coords]


def build_input_events() -> list[tuple[int, dict]]:
    rng = np.random.default_rng(20_240)
    events: list[tuple[int, dict]] = []
    frames = 0
    for ms in range(0, DURATION + 1):
        t = T0 + ms
        if ms % TICK_EVERY == 0:
            events.append((t, {"type": "tick", "pos": TRACK_AT_T0 + ms}))
        if ms % BEAT_EVERY == 0:
            events.append((t, {"type": "beat"}))
        if ms % FRAME_EVERY == 0 and frames < 1_000:
            events.append((t, {"type": "frame", "src": "pose", "t": t,
                               "landmarks": frame_landmarks(rng, gesture_at(ms))}))
            frames += 1
    return events


def write_input_trace() -> str:
    path = os.path.join(REPLAY_DIR, "input_trace.jsonl")
    events = build_input_events()
    with open(path, "w", encoding="utf-8") as f:
        for seq, (t, ev) in enumerate(events, start=1):
            f.write(json.dumps({"seq": seq, "kind": "in", "t": t, "ev": ev},
                               separators=(",", ":")) + "\n")
    frames = sum(1 for _, ev in events if ev["type"] == "frame")
    print(f"wrote {path} ({len(events)} events, {frames} frames)")
    return path


def write_golden(trace_path: str) -> None:
    from cuepose.server import EngineRuntime, SyncTrainer, load_config, replay_file

    config = load_config(os.path.join(REPLAY_DIR, "config.json"))

    def make_core():
        core = EngineRuntime(config).core
        core.trainer = SyncTrainer()
        return core

    golden = os.path.join(REPLAY_DIR, "golden_commands.jsonl")
    result = replay_file(trace_path, make_core, golden)
    print(f"wrote {golden} ({len(result.out_lines)} commands)")
    for line in result.out_lines:
        print("   ", line.strip())


def main() -> None:
    os.makedirs(FIXTURES, exist_ok=True)
    os.makedirs(REPLAY_DIR, exist_ok=True)
    write_synthetic()
    write_replay_model()
    write_replay_mapping()
    write_replay_config()
    trace_path = write_input_trace()
    write_golden(trace_path)


if __name__ == "__main__":
    main()
