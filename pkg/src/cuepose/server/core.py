"""Deterministic engine core: one ordered event stream in, commands out.

The core owns all performance state (mode, training session, working
dataset, model, cue mapping, detector run, dance windows, mixer) and
advances it one event at a time. It never touches sockets, disks, clocks
or threads: given the same sequence of (timestamp, event) pairs it
produces the same commands, which is what makes trace replay byte-exact.

Side effects are returned to the caller instead of performed: commands to
dispatch, UI messages to broadcast (a ``_to`` key marks direct replies),
and hints such as metronome start/stop or persistence requests that only
the live runtime acts on.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .. import session as sess
from ..cues import (
    TERMINAL_PHASES,
    AdjustParam,
    CommandOut,
    CueError,
    CueMapping,
    DanceWindowState,
    DetectAt,
    DetectedGesture,
    DetectorState,
    MixerState,
    Prediction,
    TickAt,
    TriggerJump,
    action_from_json,
    dance_step,
    detector_update,
    realtime_step,
)
from ..dataset import OTHER_CLASS_ID, DatasetError, GestureClass, GestureDataset
from ..mlp import ModelError, TrainConfig, predict, train
from ..pose import FrameSource, LandmarkFrame, PoseError, select_features, get_spec
from .config import DEFAULT_STEMS

log = logging.getLogger(__name__)

MODE_TRAIN = "train"
MODE_PERFORM = "perform"

EVENT_TYPES = frozenset({
    "frame", "beat", "tick", "mode", "session/start", "session/confirm",
    "train/start", "train/done", "mapping/set",
})


@dataclass(frozen=True)
class DispatchCommand:
    """A command plus its resolved wall-clock delivery time (None = now)."""

    cmd: CommandOut
    deliver_at_unix_ms: int | None = None


@dataclass
class EngineOutput:
    commands: list[DispatchCommand] = field(default_factory=list)
    ui: list[dict] = field(default_factory=list)
    hints: list[tuple] = field(default_factory=list)


class SyncTrainer:
    """Trains inline when the start event arrives; used by tests and replay."""

    def __init__(self):
        self._result = None

    def start(self, ds: GestureDataset, cfg: TrainConfig) -> None:
        try:
            self._result = train(ds, cfg)
        except (DatasetError, ModelError) as exc:
            self._result = exc

    def take_result(self):
        result, self._result = self._result, None
        return result


class EngineCore:
    def __init__(self, *, spec_id: str = "pose-v1",
                 dataset: GestureDataset | None = None,
                 mapping: CueMapping | None = None,
                 model=None, scaler=None,
                 mixer: MixerState | None = None,
                 trainer=None,
                 mode: str = MODE_TRAIN):
        self.spec = get_spec(spec_id)
        self.dataset = dataset if dataset is not None else GestureDataset(
            spec_id, [GestureClass(OTHER_CLASS_ID, "other")])
        self.mapping = mapping if mapping is not None else CueMapping()
        self.model = model
        self.scaler = scaler
        self.mixer = mixer if mixer is not None else MixerState.for_stems(DEFAULT_STEMS)
        self.trainer = trainer if trainer is not None else SyncTrainer()
        self.mode = MODE_TRAIN
        self.session: sess.SessionState = sess.Idle()
        self.session_seq = 0
        self.detector_state = DetectorState()
        self.windows: dict[int, DanceWindowState] = {}
        self.pending_adjust: DetectedGesture | None = None
        self.transport: tuple[int, int] | None = None  # (track_pos_ms, at_ms)
        self.training_active = False
        self.counters: Counter = Counter()
        if mode == MODE_PERFORM:
            self._enter_perform()

    # -- event entry point ---------------------------------------------------

    def handle(self, t_ms: int, ev: dict) -> EngineOutput:
        out = EngineOutput()
        kind = ev.get("type")
        try:
            if kind == "frame":
                self._on_frame(t_ms, ev, out)
            elif kind == "beat":
                self._on_beat(t_ms, out)
            elif kind == "tick":
                self._on_tick(t_ms, ev, out)
            elif kind == "mode":
                self._on_mode(ev, out)
            elif kind == "session/start":
                self._on_session_start(ev, out)
            elif kind == "session/confirm":
                self._on_session_confirm(ev, out)
            elif kind == "train/start":
                self._on_train_start(ev, out)
            elif kind == "train/done":
                self._on_train_done(ev, out)
            elif kind == "mapping/set":
                self._on_mapping_set(ev, out)
            else:
                self.counters["unknown_event_type"] += 1
                self._reply_error(ev, out, f"unknown message type {kind!r}")
        except Exception:  # the loop survives anything an event throws at it
            self.counters["handler_error"] += 1
            log.exception("event handler failed for %r", kind)
        return out

    # -- frames ---------------------------------------------------------------

    def _parse_frame(self, t_ms: int, ev: dict) -> LandmarkFrame | None:
        # ingest time is the engine clock; the payload's own capture time
        # may come from a different machine and never drives windows
        try:
            src = FrameSource.BODY_POSE_33 if ev.get("src", "pose") == "pose" else FrameSource.HAND_21
            coords = np.asarray([p[:3] for p in ev["landmarks"]], dtype=np.float64)
            return LandmarkFrame(src, t_ms, coords)
        except (PoseError, KeyError, TypeError, ValueError, IndexError):
            self.counters["bad_frame"] += 1
            return None

    def _on_frame(self, t_ms: int, ev: dict, out: EngineOutput) -> None:
        frame = self._parse_frame(t_ms, ev)
        if frame is None:
            return
        if self.mode == MODE_TRAIN:
            if isinstance(self.session, (sess.Collecting, sess.Review)):
                self.session, sample = sess.on_frame(self.session, frame)
                if sample is not None and isinstance(self.session, sess.Review):
                    # the still-open final green window captured during review
                    out.ui.append(self._samples_message(self.session))
            return
        if self.model is None or frame.source is not self.spec.source:
            self.counters["frame_without_model" if self.model is None else "wrong_source"] += 1
            return
        if not frame.is_finite():
            self.counters["non_finite_frame"] += 1
            return
        class_id, confidence = predict(self.model, self.scaler,
                                       select_features(frame, self.spec))
        name = self.dataset.class_by_id(class_id).name if self._class_known(class_id) else str(class_id)
        out.ui.append({"type": "prediction", "class": class_id, "name": name,
                       "confidence": confidence})
        self.detector_state, detection = detector_update(
            self.mapping.detector, self.detector_state,
            Prediction(class_id, confidence, t_ms))
        if detection is not None:
            self._route_detection(t_ms, detection, out)

    def _class_known(self, class_id: int) -> bool:
        return any(c.id == class_id for c in self.dataset.classes)

    def _route_detection(self, t_ms: int, detection: DetectedGesture,
                         out: EngineOutput) -> None:
        action = self.mapping.get(detection.class_id)
        if action is None:
            self.counters["unmapped_detection"] += 1
            return
        if isinstance(action, AdjustParam):
            self.pending_adjust = detection
            return
        state = self.windows.get(detection.class_id)
        if state is None:
            self.counters["detection_without_window"] += 1
            return
        pos = self._track_pos(t_ms)
        if pos is None:
            self.counters["detection_without_transport"] += 1
            return
        new_state, commands = dance_step(action.window, state, DetectAt(pos))
        self.windows[detection.class_id] = new_state
        for cmd in commands:
            self._emit(t_ms, cmd, out)
        if new_state.phase != state.phase:
            out.ui.append(self._state_message())

    # -- beats and transport ---------------------------------------------------

    def _on_beat(self, t_ms: int, out: EngineOutput) -> None:
        if self.mode == MODE_TRAIN:
            if not isinstance(self.session, (sess.Countdown, sess.Collecting)):
                self.counters["stray_beat"] += 1
                return
            try:
                self.session, signals = sess.on_beat(self.session, t_ms)
            except sess.SessionError as exc:
                self.counters["session_beat_error"] += 1
                log.warning("beat rejected: %s", exc)
                return
            for signal in signals:
                out.ui.append({"type": "beat", "signal": _signal_json(signal)})
                if isinstance(signal, sess.SessionDone):
                    out.ui.append(self._samples_message(self.session))
                    out.hints.append(("metronome_stop",))
            return
        commands = realtime_step(self.mapping, self.mixer, self.pending_adjust)
        self.pending_adjust = None
        for cmd in commands:
            self._emit(t_ms, cmd, out)
        if commands:
            out.ui.append(self._state_message())

    def _on_tick(self, t_ms: int, ev: dict, out: EngineOutput) -> None:
        try:
            pos = int(ev["pos"])
        except (KeyError, TypeError, ValueError):
            self.counters["bad_tick"] += 1
            return
        self.transport = (pos, t_ms)
        changed = False
        for class_id, state in list(self.windows.items()):
            action = self.mapping.get(class_id)
            if not isinstance(action, TriggerJump) or state.phase in TERMINAL_PHASES:
                continue
            new_state, commands = dance_step(action.window, state, TickAt(pos))
            self.windows[class_id] = new_state
            for cmd in commands:
                self._emit(t_ms, cmd, out)
            changed = changed or new_state.phase != state.phase
        if changed:
            out.ui.append(self._state_message())

    def _track_pos(self, t_ms: int) -> int | None:
        if self.transport is None:
            return None
        pos, at = self.transport
        return pos + (t_ms - at)

    def _wall_for_track(self, track_ms: int, t_ms: int) -> int:
        pos, at = self.transport if self.transport is not None else (0, t_ms)
        return at + (track_ms - pos)

    def _emit(self, t_ms: int, cmd: CommandOut, out: EngineOutput) -> None:
        deliver = None
        if cmd.deliver_at_track_ms is not None:
            deliver = self._wall_for_track(cmd.deliver_at_track_ms, t_ms)
        out.commands.append(DispatchCommand(cmd, deliver))
        out.ui.append({"type": "command", "address": cmd.address,
                       "args": list(cmd.args), "deliver_at": deliver})

    # -- mode and session -------------------------------------------------------

    def _enter_perform(self) -> None:
        self.mode = MODE_PERFORM
        self.detector_state = DetectorState()
        self.pending_adjust = None
        self.windows = {cid: DanceWindowState()
                        for cid, action in self.mapping.entries.items()
                        if isinstance(action, TriggerJump)}

    def _on_mode(self, ev: dict, out: EngineOutput) -> None:
        value = ev.get("value")
        if value == MODE_PERFORM:
            if self.model is None:
                self._reply_error(ev, out, "cannot enter perform mode: no trained model")
                return
            if self.training_active:
                self._reply_error(ev, out, "cannot enter perform mode: training in progress")
                return
            self._enter_perform()
        elif value == MODE_TRAIN:
            self.mode = MODE_TRAIN
        else:
            self._reply_error(ev, out, f"unknown mode {value!r}")
            return
        out.ui.append(self._state_message())

    def _on_session_start(self, ev: dict, out: EngineOutput) -> None:
        if self.mode != MODE_TRAIN:
            self._reply_error(ev, out, "sessions can only start in train mode")
            return
        if not isinstance(self.session, (sess.Idle, sess.Confirmed)):
            self._reply_error(ev, out, "session active")
            return
        cfg_doc = ev.get("cfg") or {}
        try:
            cfg = sess.SessionConfig(
                tempo_bpm=float(cfg_doc.get("tempo_bpm", 120.0)),
                target_green_samples=int(cfg_doc.get("target", 4)),
                gesture_name=str(cfg_doc["gesture"]),
                capture_window_ms=int(cfg_doc.get("capture_window_ms", 150)),
                spec_id=self.spec.id,
            )
        except (sess.SessionError, KeyError, TypeError, ValueError) as exc:
            self._reply_error(ev, out, f"bad session config: {exc}")
            return
        gesture_class = self.dataset.add_class(cfg.gesture_name)
        self.session_seq += 1
        self.session = sess.start_session(cfg, gesture_class.id, f"s{self.session_seq}")
        out.hints.append(("metronome_start", int(round(cfg.beat_period_ms))))
        out.ui.append(self._state_message())

    def _on_session_confirm(self, ev: dict, out: EngineOutput) -> None:
        try:
            self.session, delta = sess.confirm(self.session, ev.get("keep") or [])
        except sess.SessionError as exc:
            self._reply_error(ev, out, str(exc))
            return
        for sample in delta.samples:
            self.dataset.append_sample(sample)
        out.hints.append(("persist_dataset",))
        msg = self._state_message()
        if delta.warning:
            msg["warning"] = delta.warning
        out.ui.append(msg)

    # -- training ----------------------------------------------------------------

    def _on_train_start(self, ev: dict, out: EngineOutput) -> None:
        if self.training_active:
            self._reply_error(ev, out, "training already in progress")
            return
        cfg_doc = ev.get("cfg") or {}
        try:
            cfg = TrainConfig(
                hidden_dims=tuple(cfg_doc.get("hidden", (64,))),
                learning_rate=float(cfg_doc.get("learning_rate", 1e-3)),
                batch_size=int(cfg_doc.get("batch_size", 16)),
                max_epochs=int(cfg_doc.get("max_epochs", 200)),
                early_stop_patience=int(cfg_doc.get("patience", 20)),
                val_fraction=float(cfg_doc.get("val_fraction", 0.3)),
                seed=int(cfg_doc.get("seed", 0)),
            )
        except (ModelError, TypeError, ValueError) as exc:
            self._reply_error(ev, out, f"bad train config: {exc}")
            return
        self.training_active = True
        self.trainer.start(self.dataset.copy(), cfg)
        out.ui.append(self._state_message())

    def _on_train_done(self, ev: dict, out: EngineOutput) -> None:
        if not self.training_active:
            self.counters["stray_train_done"] += 1
            return
        self.training_active = False
        result = self.trainer.take_result()
        if result is None:
            self._reply_error(ev, out, "training produced no result")
            return
        if isinstance(result, Exception):
            self._reply_error(ev, out, f"training failed: {result}")
            out.ui.append(self._state_message())
            return
        self.model, self.scaler, report = result
        out.ui.append({"type": "train/progress",
                       "epoch": report.epochs_run - 1,
                       "loss": report.train_losses[-1],
                       "val_acc": report.val_accuracies[-1]})
        out.ui.append({"type": "train/report",
                       "report": report.validation_report.to_json(),
                       "best_epoch": report.best_epoch,
                       "epochs": report.epochs_run})
        out.hints.append(("persist_model",))
        out.ui.append(self._state_message())

    # -- mapping -----------------------------------------------------------------

    def _on_mapping_set(self, ev: dict, out: EngineOutput) -> None:
        entry = ev.get("entry") or {}
        try:
            class_id = int(entry["class"])
        except (KeyError, TypeError, ValueError):
            self._reply_error(ev, out, "mapping entry needs a class id")
            return
        if class_id == OTHER_CLASS_ID:
            self._reply_error(ev, out, "other class unmappable")
            return
        try:
            action = action_from_json(entry)
        except (CueError, KeyError, TypeError, ValueError) as exc:
            self._reply_error(ev, out, f"bad mapping entry: {exc}")
            return
        self.mapping.set_action(class_id, action)
        if self.mode == MODE_PERFORM and isinstance(action, TriggerJump):
            self.windows[class_id] = DanceWindowState()
        out.hints.append(("persist_mapping",))
        out.ui.append(self._state_message())

    # -- ui helpers ----------------------------------------------------------------

    def _reply_error(self, ev: dict, out: EngineOutput, message: str) -> None:
        msg = {"type": "error", "message": message}
        if "_conn" in ev:
            msg["_to"] = ev["_conn"]
        out.ui.append(msg)

    def _samples_message(self, review: sess.Review) -> dict:
        return {
            "type": "samples",
            "gesture": review.cfg.gesture_name,
            "class": review.main_class_id,
            "candidates": [
                {"i": i, "at_ms": s.captured_at_ms, "values": s.features.values.tolist()}
                for i, s in enumerate(review.greens)
            ],
            "yellow_count": len(review.yellows),
        }

    def _session_phase(self) -> dict:
        s = self.session
        if isinstance(s, sess.Countdown):
            return {"phase": "countdown", "remaining": s.remaining}
        if isinstance(s, sess.Collecting):
            return {"phase": "collecting", "greens_done": s.greens_done,
                    "target": s.cfg.target_green_samples}
        if isinstance(s, sess.Review):
            return {"phase": "review", "candidates": len(s.greens)}
        if isinstance(s, sess.Confirmed):
            return {"phase": "confirmed"}
        return {"phase": "idle"}

    def state_message(self) -> dict:
        return self._state_message()

    def _state_message(self) -> dict:
        return {
            "type": "state",
            "snapshot": {
                "mode": self.mode,
                "training_active": self.training_active,
                "model_loaded": self.model is not None,
                "session": self._session_phase(),
                "classes": [{"id": c.id, "name": c.name} for c in self.dataset.classes],
                "sample_counts": {str(k): v for k, v in self.dataset.counts().items()},
                "mixer": {"gains": dict(self.mixer.gains),
                          "pitches": dict(self.mixer.pitches),
                          "tempo_bpm": self.mixer.tempo_bpm},
                "windows": {str(cid): st.phase for cid, st in self.windows.items()},
            },
        }


def _signal_json(signal) -> dict:
    if isinstance(signal, sess.CountTick):
        return {"kind": "count", "n": signal.n}
    if isinstance(signal, sess.YellowBeat):
        return {"kind": "yellow"}
    if isinstance(signal, sess.GreenBeat):
        return {"kind": "green"}
    return {"kind": "done"}
