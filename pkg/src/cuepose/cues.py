"""Gesture-to-action mapping and the action-phase state machines.

Detection smoothing is k-consecutive-over-threshold: a gesture counts as
detected once the same non-zero class has been predicted with confidence
at or above the threshold k times in a row; any break resets the run, and
so does a detection itself.

Two action kinds exist. TriggerJump is the dance scenario: an observation
window on the track timeline watches for the cue gesture before a bang
moment t. Detected in the window, the bang is scheduled for exactly t;
detected during the single latency-tolerance extension, it fires
immediately; never detected, playback jumps to the bang position.
AdjustParam is beat-synced continuous control: on each beat the latest
detection since the previous beat nudges one stem parameter by a number
of units, and the command carries the absolute clamped value so lost or
re-delivered datagrams cannot skew the receiver.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

log = logging.getLogger(__name__)

MAPPING_VERSION = 1

GAIN_UNIT_DEFAULT = 0.05      # linear gain per unit
PITCH_UNIT_DEFAULT = 1        # semitones per unit
TEMPO_UNIT_DEFAULT = 1.0      # BPM per unit

PITCH_RANGE = (-24, 24)
TEMPO_RANGE = (30.0, 300.0)

COMMAND_ADDRESSES = frozenset({
    "/ctrl/bang", "/ctrl/jump", "/ctrl/stem/gain", "/ctrl/stem/pitch", "/ctrl/tempo",
})


class CueError(Exception):
    pass


@dataclass(frozen=True)
class DetectorCfg:
    confidence_threshold: float = 0.8
    consecutive_frames: int = 3

    def __post_init__(self):
        if not 0 < self.confidence_threshold <= 1:
            raise CueError("confidence_threshold must be in (0, 1]")
        if self.consecutive_frames < 1:
            raise CueError("consecutive_frames must be >= 1")


@dataclass(frozen=True)
class DetectorState:
    class_id: int = 0
    run: int = 0


@dataclass(frozen=True)
class Prediction:
    class_id: int
    confidence: float
    at_ms: int


@dataclass(frozen=True)
class DetectedGesture:
    class_id: int
    at_ms: int


def detector_update(cfg: DetectorCfg, state: DetectorState,
                    prediction: Prediction) -> tuple[DetectorState, DetectedGesture | None]:
    """Advance the run-length detector by one prediction."""
    if prediction.class_id == 0 or prediction.confidence < cfg.confidence_threshold:
        return DetectorState(), None
    run = state.run + 1 if prediction.class_id == state.class_id else 1
    if run >= cfg.consecutive_frames:
        return DetectorState(), DetectedGesture(prediction.class_id, prediction.at_ms)
    return DetectorState(prediction.class_id, run), None


@dataclass(frozen=True)
class ObservationWindowCfg:
    start_ms: int
    end_ms: int
    cue_time_ms: int
    latency_tolerance_ms: int = 0

    def __post_init__(self):
        if not self.start_ms < self.end_ms <= self.cue_time_ms:
            raise CueError(
                f"need start < end <= cue time, got "
                f"{self.start_ms}, {self.end_ms}, {self.cue_time_ms}"
            )
        if self.latency_tolerance_ms < 0:
            raise CueError("latency_tolerance_ms must be >= 0")


@dataclass(frozen=True)
class TriggerJump:
    window: ObservationWindowCfg
    bang_address: str = "/ctrl/bang"


@dataclass(frozen=True)
class AdjustParam:
    stem: str
    param: str               # gain | pitch | tempo
    direction: str           # increase | decrease
    units: int = 1

    def __post_init__(self):
        if self.param not in ("gain", "pitch", "tempo"):
            raise CueError(f"unknown param {self.param!r}")
        if self.direction not in ("increase", "decrease"):
            raise CueError(f"unknown direction {self.direction!r}")
        if self.units < 1:
            raise CueError("units must be >= 1")
        if not self.stem:
            raise CueError("stem must be non-empty")


Action = TriggerJump | AdjustParam


@dataclass(frozen=True)
class CommandOut:
    """One outbound sound-control command.

    ``deliver_at_track_ms`` is None for immediate delivery, otherwise the
    track time at which the receiver should apply the command.
    """

    address: str
    args: tuple = ()
    deliver_at_track_ms: int | None = None

    def __post_init__(self):
        if self.address not in COMMAND_ADDRESSES:
            raise CueError(f"address {self.address!r} outside command namespace")
        object.__setattr__(self, "args", tuple(self.args))


class CueMapping:
    """Bindings from gesture class ids to actions, one action per class."""

    def __init__(self, detector: DetectorCfg = DetectorCfg(),
                 gain_unit: float = GAIN_UNIT_DEFAULT,
                 pitch_unit: int = PITCH_UNIT_DEFAULT,
                 tempo_unit: float = TEMPO_UNIT_DEFAULT):
        self.detector = detector
        self.gain_unit = gain_unit
        self.pitch_unit = pitch_unit
        self.tempo_unit = tempo_unit
        self.entries: dict[int, Action] = {}

    def set_action(self, class_id: int, action: Action) -> None:
        if class_id == 0:
            raise CueError('the "other" class (id 0) cannot be mapped')
        self.entries[class_id] = action

    def get(self, class_id: int) -> Action | None:
        return self.entries.get(class_id)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CueMapping):
            return NotImplemented
        return (self.detector == other.detector and self.entries == other.entries
                and (self.gain_unit, self.pitch_unit, self.tempo_unit)
                == (other.gain_unit, other.pitch_unit, other.tempo_unit))


def register_mapping(mapping: CueMapping, class_id: int, action: Action) -> CueMapping:
    mapping.set_action(class_id, action)
    return mapping


def _action_to_json(class_id: int, action: Action) -> dict:
    if isinstance(action, TriggerJump):
        w = action.window
        return {"class": class_id, "type": "trigger_jump",
                "start_ms": w.start_ms, "end_ms": w.end_ms,
                "cue_time_ms": w.cue_time_ms,
                "latency_tolerance_ms": w.latency_tolerance_ms,
                "bang_address": action.bang_address}
    return {"class": class_id, "type": "adjust_param", "stem": action.stem,
            "param": action.param, "direction": action.direction,
            "units": action.units}


def action_from_json(entry: dict) -> Action:
    kind = entry.get("type")
    if kind == "trigger_jump":
        window = ObservationWindowCfg(int(entry["start_ms"]), int(entry["end_ms"]),
                                      int(entry["cue_time_ms"]),
                                      int(entry.get("latency_tolerance_ms", 0)))
        return TriggerJump(window, str(entry.get("bang_address", "/ctrl/bang")))
    if kind == "adjust_param":
        return AdjustParam(str(entry["stem"]), str(entry["param"]),
                           str(entry["direction"]), int(entry.get("units", 1)))
    raise CueError(f"unknown action type {kind!r}")


def save_mapping(mapping: CueMapping, path) -> None:
    doc = {
        "version": MAPPING_VERSION,
        "detector": {"theta": mapping.detector.confidence_threshold,
                     "k": mapping.detector.consecutive_frames},
        "units": {"gain": mapping.gain_unit, "pitch": mapping.pitch_unit,
                  "tempo": mapping.tempo_unit},
        "entries": [_action_to_json(cid, a) for cid, a in sorted(mapping.entries.items())],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_mapping(path) -> CueMapping:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("version") != MAPPING_VERSION:
        raise CueError(f"{path}: mapping version mismatch: {doc.get('version')}")
    det = doc.get("detector", {})
    units = doc.get("units", {})
    mapping = CueMapping(
        DetectorCfg(float(det.get("theta", 0.8)), int(det.get("k", 3))),
        gain_unit=float(units.get("gain", GAIN_UNIT_DEFAULT)),
        pitch_unit=int(units.get("pitch", PITCH_UNIT_DEFAULT)),
        tempo_unit=float(units.get("tempo", TEMPO_UNIT_DEFAULT)),
    )
    for entry in doc.get("entries", []):
        mapping.set_action(int(entry["class"]), action_from_json(entry))
    return mapping


# --- dance scenario ---------------------------------------------------------

ARMED = "armed"
WATCHING = "watching"
EXTENDED = "extended"
TRIGGERED = "triggered"
FALLBACK = "fallback"

TERMINAL_PHASES = (TRIGGERED, FALLBACK)


@dataclass(frozen=True)
class DanceWindowState:
    phase: str = ARMED


@dataclass(frozen=True)
class TickAt:
    track_pos_ms: int


@dataclass(frozen=True)
class DetectAt:
    track_pos_ms: int


def dance_step(cfg: ObservationWindowCfg, state: DanceWindowState,
               event: TickAt | DetectAt) -> tuple[DanceWindowState, list[CommandOut]]:
    """Advance one observation-window lifecycle; emits one terminal command.

    Ticks move the phase along the track timeline; a detection inside
    [start, end] schedules the bang at the cue time, a detection inside the
    one-shot tolerance extension bangs immediately, and a tick past the
    extension jumps playback to the bang position.
    """
    if state.phase in TERMINAL_PHASES:
        log.debug("dance window already %s; ignoring %r", state.phase, event)
        return state, []
    pos = event.track_pos_ms
    deadline = cfg.end_ms + cfg.latency_tolerance_ms

    if isinstance(event, DetectAt):
        if cfg.start_ms <= pos <= cfg.end_ms:
            return (DanceWindowState(TRIGGERED),
                    [CommandOut("/ctrl/bang", deliver_at_track_ms=cfg.cue_time_ms)])
        if cfg.end_ms < pos <= deadline:
            return DanceWindowState(TRIGGERED), [CommandOut("/ctrl/bang")]
        return state, []

    if pos >= deadline and pos > cfg.end_ms:
        return (DanceWindowState(FALLBACK),
                [CommandOut("/ctrl/jump", (int(cfg.cue_time_ms),))])
    if pos < cfg.start_ms:
        return DanceWindowState(ARMED), []
    if pos <= cfg.end_ms:
        return DanceWindowState(WATCHING), []
    return DanceWindowState(EXTENDED), []


# --- realtime scenario ------------------------------------------------------

@dataclass
class MixerState:
    """Clamped view of the receiving mixer: per-stem gain/pitch, global tempo."""

    gains: dict[str, float]
    pitches: dict[str, int]
    tempo_bpm: float = 120.0

    @classmethod
    def for_stems(cls, stems, gain: float = 0.5, tempo_bpm: float = 120.0) -> "MixerState":
        return cls({s: gain for s in stems}, {s: 0 for s in stems}, tempo_bpm)

    def copy(self) -> "MixerState":
        return MixerState(dict(self.gains), dict(self.pitches), self.tempo_bpm)


def realtime_step(mapping: CueMapping, mixer: MixerState,
                  detection: DetectedGesture | None) -> list[CommandOut]:
    """Apply the latest detection since the previous beat, if any.

    Mutates ``mixer`` and returns at most one command carrying the new
    absolute parameter value.
    """
    if detection is None:
        return []
    action = mapping.get(detection.class_id)
    if not isinstance(action, AdjustParam):
        return []
    sign = 1 if action.direction == "increase" else -1
    if action.param == "gain":
        if action.stem not in mixer.gains:
            log.error("unknown stem %r; gain command dropped", action.stem)
            return []
        value = mixer.gains[action.stem] + sign * action.units * mapping.gain_unit
        value = round(min(max(value, 0.0), 1.0), 9)
        mixer.gains[action.stem] = value
        return [CommandOut("/ctrl/stem/gain", (action.stem, float(value)))]
    if action.param == "pitch":
        if action.stem not in mixer.pitches:
            log.error("unknown stem %r; pitch command dropped", action.stem)
            return []
        value = mixer.pitches[action.stem] + sign * action.units * mapping.pitch_unit
        value = int(min(max(value, PITCH_RANGE[0]), PITCH_RANGE[1]))
        mixer.pitches[action.stem] = value
        return [CommandOut("/ctrl/stem/pitch", (action.stem, value))]
    value = mixer.tempo_bpm + sign * action.units * mapping.tempo_unit
    value = round(min(max(value, TEMPO_RANGE[0]), TEMPO_RANGE[1]), 9)
    mixer.tempo_bpm = value
    return [CommandOut("/ctrl/tempo", (float(value),))]
