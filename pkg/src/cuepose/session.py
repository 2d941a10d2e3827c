"""Metronome-guided sample collection: countdown, beat pattern, review.

The session is a pure state machine driven by externally clocked beat and
frame events, so a recorded event log replays to the identical sample set.
After a 3-2-1 countdown, beats repeat the pattern yellow, yellow, yellow,
green until the target number of green beats has fired. Green-beat
snapshots are labeled with the gesture's class; yellow-beat snapshots feed
the "other" class (id 0) so incidental movement can be told apart from the
cue gesture later.

A snapshot is the first frame arriving within ``capture_window_ms`` after
a beat, at most one per beat. The final green beat emits SessionDone and
moves to Review, but its capture window stays open so the last gesture
sample is not lost; a frame landing in that window is appended to the
review candidates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .dataset import OTHER_CLASS_ID, GestureSample
from .pose import LandmarkFrame, get_spec, select_features

log = logging.getLogger(__name__)

YELLOW_BEATS_PER_GREEN = 3
COUNTDOWN_BEATS = 3


class SessionError(Exception):
    pass


@dataclass(frozen=True)
class SessionConfig:
    tempo_bpm: float
    target_green_samples: int
    gesture_name: str
    capture_window_ms: int = 150
    spec_id: str = "pose-v1"

    def __post_init__(self):
        if not 30 <= self.tempo_bpm <= 300:
            raise SessionError(f"tempo must be 30..300 BPM, got {self.tempo_bpm}")
        if self.target_green_samples < 1:
            raise SessionError("target_green_samples must be >= 1")
        if self.capture_window_ms < 1:
            raise SessionError("capture_window_ms must be >= 1")
        get_spec(self.spec_id)

    @property
    def beat_period_ms(self) -> float:
        return 60000.0 / self.tempo_bpm


# --- cue signals -----------------------------------------------------------

@dataclass(frozen=True)
class CountTick:
    n: int


@dataclass(frozen=True)
class YellowBeat:
    pass


@dataclass(frozen=True)
class GreenBeat:
    pass


@dataclass(frozen=True)
class SessionDone:
    pass


CueSignal = CountTick | YellowBeat | GreenBeat | SessionDone


# --- states ----------------------------------------------------------------

@dataclass(frozen=True)
class Idle:
    pass


@dataclass(frozen=True)
class _Base:
    cfg: SessionConfig
    main_class_id: int
    session_id: str


@dataclass(frozen=True)
class Countdown(_Base):
    remaining: int = COUNTDOWN_BEATS


@dataclass(frozen=True)
class Collecting(_Base):
    beat_index: int = 0
    greens_done: int = 0
    last_beat_ms: int | None = None
    last_beat_green: bool = False
    captured_this_beat: bool = False
    greens: tuple[GestureSample, ...] = ()
    yellows: tuple[GestureSample, ...] = ()


@dataclass(frozen=True)
class Review(_Base):
    greens: tuple[GestureSample, ...] = ()
    yellows: tuple[GestureSample, ...] = ()
    # the final green window may still be open when review starts
    final_beat_ms: int | None = None
    final_captured: bool = False


@dataclass(frozen=True)
class Confirmed(_Base):
    delta: "DatasetDelta" = None


SessionState = Idle | Countdown | Collecting | Review | Confirmed


@dataclass(frozen=True)
class DatasetDelta:
    gesture_name: str
    main_class_id: int
    samples: tuple[GestureSample, ...]
    warning: str | None = None


def start_session(cfg: SessionConfig, main_class_id: int, session_id: str) -> Countdown:
    if main_class_id == OTHER_CLASS_ID:
        raise SessionError('cannot train the "other" class directly')
    return Countdown(cfg, main_class_id, session_id)


def on_beat(state: SessionState, timestamp_ms: int) -> tuple[SessionState, tuple[CueSignal, ...]]:
    """Advance the machine by one metronome beat."""
    if isinstance(state, Idle):
        raise SessionError("no active session")
    if isinstance(state, Review):
        raise SessionError("beat after session finished")
    if isinstance(state, Confirmed):
        raise SessionError("session already confirmed")

    if isinstance(state, Countdown):
        signal = CountTick(state.remaining)
        if state.remaining > 1:
            return replace(state, remaining=state.remaining - 1), (signal,)
        return Collecting(state.cfg, state.main_class_id, state.session_id), (signal,)

    assert isinstance(state, Collecting)
    if state.last_beat_ms is not None and timestamp_ms < state.last_beat_ms:
        raise SessionError(f"beat timestamp {timestamp_ms} precedes previous beat")
    green = state.beat_index % (YELLOW_BEATS_PER_GREEN + 1) == YELLOW_BEATS_PER_GREEN
    if not green:
        next_state = replace(state, beat_index=state.beat_index + 1,
                             last_beat_ms=timestamp_ms, last_beat_green=False,
                             captured_this_beat=False)
        return next_state, (YellowBeat(),)
    greens_done = state.greens_done + 1
    if greens_done < state.cfg.target_green_samples:
        next_state = replace(state, beat_index=state.beat_index + 1,
                             greens_done=greens_done, last_beat_ms=timestamp_ms,
                             last_beat_green=True, captured_this_beat=False)
        return next_state, (GreenBeat(),)
    review = Review(state.cfg, state.main_class_id, state.session_id,
                    greens=state.greens, yellows=state.yellows,
                    final_beat_ms=timestamp_ms, final_captured=False)
    return review, (GreenBeat(), SessionDone())


def _capture(state, frame: LandmarkFrame, green: bool) -> GestureSample | None:
    if not frame.is_finite():
        log.warning("dropping frame at t=%d: non-finite coordinates", frame.timestamp_ms)
        return None
    spec = get_spec(state.cfg.spec_id)
    class_id = state.main_class_id if green else OTHER_CLASS_ID
    return GestureSample(select_features(frame, spec), class_id,
                         frame.timestamp_ms, state.session_id)


def on_frame(state: SessionState,
             frame: LandmarkFrame) -> tuple[SessionState, GestureSample | None]:
    """Offer a landmark frame; captures at most one snapshot per beat.

    Frames during countdown, outside capture windows, or after a beat's
    snapshot has been taken are ignored.
    """
    if isinstance(state, Collecting) and state.last_beat_ms is not None:
        in_window = (state.last_beat_ms <= frame.timestamp_ms
                     <= state.last_beat_ms + state.cfg.capture_window_ms)
        if in_window and not state.captured_this_beat:
            sample = _capture(state, frame, state.last_beat_green)
            if sample is None:
                return state, None
            if state.last_beat_green:
                next_state = replace(state, captured_this_beat=True,
                                     greens=state.greens + (sample,))
            else:
                next_state = replace(state, captured_this_beat=True,
                                     yellows=state.yellows + (sample,))
            return next_state, sample
        return state, None

    if isinstance(state, Review) and state.final_beat_ms is not None and not state.final_captured:
        in_window = (state.final_beat_ms <= frame.timestamp_ms
                     <= state.final_beat_ms + state.cfg.capture_window_ms)
        if in_window:
            sample = _capture(state, frame, green=True)
            if sample is None:
                return state, None
            return replace(state, final_captured=True,
                           greens=state.greens + (sample,)), sample
        return state, None

    return state, None


def confirm(state: SessionState, keep) -> tuple[Confirmed, DatasetDelta]:
    """Keep the selected green candidates (by index) plus all yellows."""
    if isinstance(state, Confirmed):
        raise SessionError("session already confirmed")
    if not isinstance(state, Review):
        raise SessionError("can only confirm a session under review")
    keep = sorted(set(int(i) for i in keep))
    if keep and (keep[0] < 0 or keep[-1] >= len(state.greens)):
        raise SessionError(
            f"keep index out of range: {keep} for {len(state.greens)} candidates"
        )
    kept_greens = [state.greens[i] for i in keep]
    warning = None
    if not kept_greens:
        warning = f"gesture class {state.cfg.gesture_name!r} gained 0 samples"
        log.warning("%s", warning)
    samples = tuple(sorted(list(state.yellows) + kept_greens,
                           key=lambda s: s.captured_at_ms))
    delta = DatasetDelta(state.cfg.gesture_name, state.main_class_id, samples, warning)
    return Confirmed(state.cfg, state.main_class_id, state.session_id, delta), delta
