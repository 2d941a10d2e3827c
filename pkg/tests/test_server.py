"""Ingestion parsing, engine core behavior, trace replay, runtime, WS protocol."""

import json
import random
import socket
import threading
import time

import numpy as np
import pytest
from starlette.testclient import TestClient

from conftest import frame_event, gesture_landmarks
from cuepose.cues import AdjustParam, CueMapping, MixerState, ObservationWindowCfg, TriggerJump
from cuepose.dataset import GestureClass, GestureDataset
from cuepose.osc import OscMessage, decode_packet, encode_message
from cuepose.server import (
    EngineCore,
    EngineRuntime,
    IngestError,
    ServerConfig,
    SyncTrainer,
    config_from_dict,
    datagram_to_event,
    read_trace,
    replay_events,
)
from cuepose.server.app import create_app
from cuepose.server.config import ConfigError
from cuepose.server.runtime import Outbox
from cuepose.server.trace import TraceWriter


def landmark_datagram(name=None, t=0, src="pose", count=None):
    landmarks = gesture_landmarks(name)
    if src == "hand":
        landmarks = landmarks[:21]
    if count is not None:
        landmarks = landmarks[:count]
    payload = json.dumps({"t": t, "landmarks": landmarks})
    return encode_message(OscMessage(f"/landmarks/{src}", (payload,)))


# --- ingest -----------------------------------------------------------------


def test_ingest_valid_pose_datagram():
    ev = datagram_to_event(landmark_datagram(t=123))
    assert ev["type"] == "frame"
    assert ev["src"] == "pose"
    assert ev["t"] == 123
    assert len(ev["landmarks"]) == 33


def test_ingest_valid_hand_datagram():
    ev = datagram_to_event(landmark_datagram(src="hand"))
    assert ev["src"] == "hand"
    assert len(ev["landmarks"]) == 21


def test_ingest_wrong_landmark_count():
    with pytest.raises(IngestError) as err:
        datagram_to_event(landmark_datagram(count=32))
    assert err.value.reason == "bad_landmark_count"


def test_ingest_bad_json():
    data = encode_message(OscMessage("/landmarks/pose", ("{oops",)))
    with pytest.raises(IngestError) as err:
        datagram_to_event(data)
    assert err.value.reason == "bad_json"


def test_ingest_non_finite_rejected():
    landmarks = gesture_landmarks(None)
    landmarks[5][1] = float("nan")
    payload = json.dumps({"t": 0, "landmarks": landmarks})
    with pytest.raises(IngestError) as err:
        datagram_to_event(encode_message(OscMessage("/landmarks/pose", (payload,))))
    assert err.value.reason == "non_finite_landmark"


def test_ingest_transport_and_beat():
    assert datagram_to_event(encode_message(OscMessage("/transport", (4200,)))) == \
        {"type": "tick", "pos": 4200}
    assert datagram_to_event(encode_message(OscMessage("/beat"))) == {"type": "beat"}


def test_ingest_unknown_address():
    with pytest.raises(IngestError) as err:
        datagram_to_event(encode_message(OscMessage("/nope", ())))
    assert err.value.reason == "unknown_address"


def test_ingest_garbage_bytes():
    with pytest.raises(IngestError) as err:
        datagram_to_event(b"\x01\x02\x03\x04")
    assert err.value.reason == "bad_osc"


# --- config -----------------------------------------------------------------


def test_config_defaults_and_endpoints():
    cfg = config_from_dict({"osc_listen": "0.0.0.0:7001", "osc_out": "10.0.0.9:7002",
                            "ws_listen": "127.0.0.1:7003"})
    assert cfg.osc_listen == ("0.0.0.0", 7001)
    assert cfg.osc_out == ("10.0.0.9", 7002)


def test_config_rejects_duplicate_ports():
    with pytest.raises(ConfigError, match="distinct"):
        config_from_dict({"osc_listen": "a:9000", "osc_out": "b:9000"})


def test_config_rejects_unknown_field():
    with pytest.raises(ConfigError, match="unknown config field"):
        config_from_dict({"osc_lisen": "a:9000"})


def test_config_env_override(monkeypatch):
    monkeypatch.setenv("CUEPOSE_OSC_IN", "127.0.0.1:7777")
    cfg = config_from_dict({})
    assert cfg.osc_listen == ("127.0.0.1", 7777)


# --- engine core: training flow -----------------------------------------------


def run_training_session(core, target=2, frames_per_beat=True):
    """Drive session/start + beats/frames; returns collected ui messages."""
    t = 1000
    ui = []
    out = core.handle(t, {"type": "session/start",
                          "cfg": {"tempo_bpm": 120, "target": target, "gesture": "wave"}})
    ui.extend(out.ui)
    for _ in range(3 + 4 * target):
        t += 500
        out = core.handle(t, {"type": "beat"})
        ui.extend(out.ui)
        if frames_per_beat:
            out = core.handle(t + 40, {**frame_event(), "t": t + 40})
            ui.extend(out.ui)
    return t, ui


def test_core_session_beat_messages():
    core = EngineCore()
    _, ui = run_training_session(core, target=2)
    beats = [m["signal"]["kind"] for m in ui if m["type"] == "beat"]
    assert beats == ["count", "count", "count",
                     "yellow", "yellow", "yellow", "green",
                     "yellow", "yellow", "yellow", "green", "done"]
    samples_msgs = [m for m in ui if m["type"] == "samples"]
    assert samples_msgs
    assert len(samples_msgs[-1]["candidates"]) == 2


def test_core_session_confirm_appends_dataset():
    core = EngineCore()
    t, _ = run_training_session(core, target=2)
    out = core.handle(t + 1000, {"type": "session/confirm", "keep": [0, 1]})
    assert ("persist_dataset",) in out.hints
    counts = core.dataset.counts()
    assert counts[1] == 2        # the new "wave" class
    assert counts[0] == 6        # three yellows per green
    state = [m for m in out.ui if m["type"] == "state"][-1]
    assert state["snapshot"]["session"]["phase"] == "confirmed"


def test_core_session_start_while_active_is_error_reply():
    core = EngineCore()
    core.handle(0, {"type": "session/start", "cfg": {"gesture": "wave"}})
    out = core.handle(1, {"type": "session/start", "cfg": {"gesture": "other2"},
                          "_conn": 7})
    errors = [m for m in out.ui if m["type"] == "error"]
    assert errors and "session active" in errors[0]["message"]
    assert errors[0]["_to"] == 7


def test_core_metronome_hints():
    core = EngineCore()
    out = core.handle(0, {"type": "session/start",
                          "cfg": {"tempo_bpm": 120, "target": 1, "gesture": "w"}})
    assert ("metronome_start", 500) in out.hints
    t = 0
    stop_seen = False
    for _ in range(7):
        t += 500
        out = core.handle(t, {"type": "beat"})
        stop_seen = stop_seen or ("metronome_stop",) in out.hints
    assert stop_seen


def test_core_trains_and_reports():
    core = EngineCore()
    rng = np.random.default_rng(0)
    # two sessions: one gesture class plus enough "other" yellows
    for gesture in ("right_hand_up", "left_hand_up"):
        t = core.handle(0, {"type": "session/start",
                            "cfg": {"tempo_bpm": 120, "target": 4, "gesture": gesture}})
        t = 0
        for _ in range(3 + 16):
            t += 500
            core.handle(t, {"type": "beat"})
            name = gesture if (isinstance(core.session, object)) else None
            core.handle(t + 30, {**frame_event(gesture, rng), "t": t + 30})
        core.handle(t + 400, {"type": "session/confirm",
                              "keep": list(range(4))})
    assert core.dataset.counts()[1] == 4
    out = core.handle(t + 500, {"type": "train/start", "cfg": {"seed": 3, "max_epochs": 40}})
    assert core.training_active
    out = core.handle(t + 600, {"type": "train/done"})
    assert not core.training_active
    assert core.model is not None
    reports = [m for m in out.ui if m["type"] == "train/report"]
    assert reports and 0 <= reports[0]["report"]["accuracy"] <= 1
    assert ("persist_model",) in out.hints


def test_core_mode_perform_requires_model():
    core = EngineCore()
    out = core.handle(0, {"type": "mode", "value": "perform", "_conn": 3})
    errors = [m for m in out.ui if m["type"] == "error"]
    assert errors and "no trained model" in errors[0]["message"]
    assert core.mode == "train"


def test_core_mode_rejected_while_training(trained_gestures):
    model, scaler, ds = trained_gestures
    core = EngineCore(dataset=ds.copy(), model=model, scaler=scaler)
    core.handle(0, {"type": "train/start", "cfg": {"max_epochs": 2}})
    out = core.handle(1, {"type": "mode", "value": "perform"})
    errors = [m for m in out.ui if m["type"] == "error"]
    assert errors and "training in progress" in errors[0]["message"]
    core.handle(2, {"type": "train/done"})
    out = core.handle(3, {"type": "mode", "value": "perform"})
    assert core.mode == "perform"


def test_core_mapping_set_class_zero_rejected():
    core = EngineCore()
    out = core.handle(0, {"type": "mapping/set",
                          "entry": {"class": 0, "type": "adjust_param", "stem": "drums",
                                    "param": "gain", "direction": "increase"}})
    errors = [m for m in out.ui if m["type"] == "error"]
    assert errors and "other class unmappable" in errors[0]["message"]


def test_core_unknown_event_type_error_reply():
    core = EngineCore()
    out = core.handle(0, {"type": "selfdestruct", "_conn": 1})
    errors = [m for m in out.ui if m["type"] == "error"]
    assert errors and "unknown message type" in errors[0]["message"]


# --- engine core: perform flow -------------------------------------------------


def perform_core(trained_gestures, mapping=None):
    model, scaler, ds = trained_gestures
    core = EngineCore(dataset=ds.copy(), model=model, scaler=scaler,
                      mapping=mapping or CueMapping(),
                      mixer=MixerState.for_stems(("drums", "bass")))
    out = core.handle(0, {"type": "mode", "value": "perform"})
    assert core.mode == "perform"
    return core


def test_core_predicts_frames_in_perform(trained_gestures):
    core = perform_core(trained_gestures)
    rng = np.random.default_rng(1)
    out = core.handle(100, {**frame_event("right_hand_up", rng), "t": 100})
    preds = [m for m in out.ui if m["type"] == "prediction"]
    assert len(preds) == 1
    assert preds[0]["class"] == 1
    assert preds[0]["confidence"] > 0.9
    assert preds[0]["name"] == "right_hand_up"


def test_core_frame_in_train_mode_not_classified(trained_gestures):
    model, scaler, ds = trained_gestures
    core = EngineCore(dataset=ds.copy(), model=model, scaler=scaler)
    out = core.handle(100, frame_event("right_hand_up"))
    assert [m for m in out.ui if m["type"] == "prediction"] == []


def test_core_dance_scenario_scheduled_bang(trained_gestures):
    mapping = CueMapping()
    mapping.set_action(1, TriggerJump(ObservationWindowCfg(10_000, 12_000, 12_500, 1_000)))
    core = perform_core(trained_gestures, mapping)
    rng = np.random.default_rng(2)
    core.handle(2_000, {"type": "tick", "pos": 10_000})
    commands = []
    for i in range(3):
        out = core.handle(2_100 + i * 100, {**frame_event("right_hand_up", rng)})
        commands.extend(out.commands)
    assert len(commands) == 1
    dispatch = commands[0]
    assert dispatch.cmd.address == "/ctrl/bang"
    assert dispatch.cmd.deliver_at_track_ms == 12_500
    # track 10k at ingest 2k -> track 12.5k at ingest 4.5k
    assert dispatch.deliver_at_unix_ms == 4_500


def test_core_dance_timeout_jump(trained_gestures):
    mapping = CueMapping()
    mapping.set_action(1, TriggerJump(ObservationWindowCfg(10_000, 12_000, 12_500, 1_000)))
    core = perform_core(trained_gestures, mapping)
    core.handle(1_000, {"type": "tick", "pos": 9_000})
    out = core.handle(2_000, {"type": "tick", "pos": 11_000})
    assert out.commands == []
    out = core.handle(4_000, {"type": "tick", "pos": 13_000})
    assert [d.cmd.address for d in out.commands] == ["/ctrl/jump"]
    assert out.commands[0].cmd.args == (12_500,)


def test_core_realtime_gain_at_beat(trained_gestures):
    mapping = CueMapping()
    mapping.set_action(2, AdjustParam("drums", "gain", "increase", 1))
    core = perform_core(trained_gestures, mapping)
    rng = np.random.default_rng(3)
    for i in range(3):
        out = core.handle(100 + i * 33, {**frame_event("right_leg_up", rng)})
        assert out.commands == []  # adjustments wait for the beat
    out = core.handle(500, {"type": "beat"})
    assert len(out.commands) == 1
    cmd = out.commands[0].cmd
    assert cmd.address == "/ctrl/stem/gain"
    assert cmd.args == ("drums", 0.55)
    echoes = [m for m in out.ui if m["type"] == "command"]
    assert echoes and echoes[0]["address"] == "/ctrl/stem/gain"
    # no new detection -> next beat emits nothing
    out = core.handle(1_000, {"type": "beat"})
    assert out.commands == []


def test_core_other_class_frames_never_detect(trained_gestures):
    mapping = CueMapping()
    mapping.set_action(2, AdjustParam("drums", "gain", "increase", 1))
    core = perform_core(trained_gestures, mapping)
    rng = np.random.default_rng(4)
    for i in range(6):
        core.handle(100 + i * 33, {**frame_event(None, rng)})
    out = core.handle(500, {"type": "beat"})
    assert out.commands == []


def test_core_malformed_events_never_raise(trained_gestures):
    core = perform_core(trained_gestures)
    rng = random.Random(5)
    bad_events = [
        {"type": "frame"},
        {"type": "frame", "landmarks": "zzz"},
        {"type": "frame", "landmarks": [[1, 2, 3]] * 5},
        {"type": "tick"},
        {"type": "tick", "pos": "four"},
        {"type": "session/confirm", "keep": [40]},
        {"type": "mapping/set", "entry": {"class": "x"}},
        {"type": "train/done"},
        {"type": None},
        {},
    ]
    for i, ev in enumerate(bad_events):
        core.handle(i, ev)  # must not raise
    for i in range(200):
        ev = {"type": rng.choice(["frame", "tick", "beat", "mode", "nope"]),
              "value": rng.random(), "pos": rng.choice([None, "x", 1.5]),
              "landmarks": rng.choice([None, [], [[0, 1]], 17])}
        core.handle(1000 + i, ev)


# --- trace + replay -------------------------------------------------------------


def scripted_perform_events(n_frames=60):
    """A deterministic event list exercising windows, beats, and gains."""
    rng = np.random.default_rng(7)
    events = []
    t = 1000

    def add(ev):
        nonlocal t
        events.append((t, ev))
        t += 25

    add({"type": "mode", "value": "perform"})
    add({"type": "tick", "pos": 9_000})
    for i in range(n_frames):
        if i % 10 == 0:
            add({"type": "tick", "pos": 9_000 + (t - 1025)})
        if 20 <= i < 26:
            add({**frame_event("right_hand_up", rng), "t": t})
        elif 34 <= i < 40:
            add({**frame_event("right_leg_up", rng), "t": t})
        else:
            add({**frame_event(None, rng), "t": t})
        if i % 8 == 7:
            add({"type": "beat"})
    return events


def make_perform_core(trained_gestures):
    model, scaler, ds = trained_gestures
    mapping = CueMapping()
    mapping.set_action(1, TriggerJump(ObservationWindowCfg(9_100, 10_200, 10_500, 300)))
    mapping.set_action(2, AdjustParam("drums", "gain", "increase", 1))
    return EngineCore(dataset=ds.copy(), model=model, scaler=scaler, mapping=mapping,
                      mixer=MixerState.for_stems(("drums",)))


def test_replay_events_deterministic(trained_gestures):
    events = scripted_perform_events()
    records = [{"kind": "in", "t": t, "ev": ev} for t, ev in events]
    a = replay_events(records, make_perform_core(trained_gestures))
    b = replay_events(records, make_perform_core(trained_gestures))
    assert a.trace_bytes() == b.trace_bytes()
    assert len(a.out_lines) >= 2  # a bang and at least one gain command


def test_trace_writer_reader_round_trip(tmp_path):
    path = tmp_path / "trace.jsonl"
    with open(path, "w") as fh:
        writer = TraceWriter(fh)
        writer.write_in(10, {"type": "beat", "_conn": 9})
        from cuepose.cues import CommandOut
        from cuepose.server import DispatchCommand

        writer.write_out(11, DispatchCommand(CommandOut("/ctrl/bang"), 500))
    records = read_trace(path)
    assert [r["kind"] for r in records] == ["in", "out"]
    assert records[0]["ev"] == {"type": "beat"}  # _conn stripped
    assert records[1]["cmd"] == {"addr": "/ctrl/bang", "args": [], "at": 500}


def test_read_trace_rejects_bad_seq(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"seq":1,"kind":"in","t":0,"ev":{}}\n'
                    '{"seq":1,"kind":"in","t":1,"ev":{}}\n')
    from cuepose.server import TraceError

    with pytest.raises(TraceError, match="strictly increasing"):
        read_trace(path)


# --- runtime ----------------------------------------------------------------------


def free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def runtime_config(tmp_path, **overrides) -> ServerConfig:
    doc = {
        "osc_listen": f"127.0.0.1:{free_port()}",
        "osc_out": f"127.0.0.1:{free_port()}",
        "ws_listen": f"127.0.0.1:{free_port()}",
        "dataset_dir": str(tmp_path / "datasets"),
        **overrides,
    }
    return config_from_dict(doc)


def test_runtime_stamp_strictly_increasing(tmp_path):
    runtime = EngineRuntime(runtime_config(tmp_path))
    stamps = [runtime.stamp() for _ in range(1000)]
    assert all(b > a for a, b in zip(stamps, stamps[1:]))


def test_runtime_handle_datagram_counters(tmp_path):
    runtime = EngineRuntime(runtime_config(tmp_path))
    runtime.handle_datagram(b"garbage!")
    runtime.handle_datagram(landmark_datagram())
    assert runtime.counters["bad_osc"] == 1
    assert runtime.counters["datagrams_in"] == 1
    assert runtime.event_q.qsize() == 1


def test_runtime_udp_round_trip(tmp_path, trained_gestures):
    model, scaler, _ = trained_gestures
    model_path = tmp_path / "model.json"
    scaler_path = tmp_path / "scaler.json"
    from cuepose.mlp import save_model

    save_model(model, scaler, model_path, scaler_path)
    trace_path = tmp_path / "live.jsonl"
    config = runtime_config(tmp_path, model_path=str(model_path),
                            scaler_path=str(scaler_path),
                            trace_path=str(trace_path), mode="perform")
    runtime = EngineRuntime(config)
    runtime.start()
    try:
        out_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        out_sock.bind(config.osc_out)  # pose as the sound engine
        out_sock.settimeout(5)
        send = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        # mapping via core event queue, then gesture frames + beat
        runtime.submit_event({"type": "mapping/set",
                              "entry": {"class": 1, "type": "adjust_param",
                                        "stem": "drums", "param": "gain",
                                        "direction": "increase", "units": 1}})
        for _ in range(3):
            send.sendto(landmark_datagram("right_hand_up"), config.osc_listen)
            time.sleep(0.02)
        send.sendto(encode_message(OscMessage("/beat")), config.osc_listen)
        data, _ = out_sock.recvfrom(65535)
        msg = decode_packet(data)
        assert msg.address == "/ctrl/stem/gain"
        assert msg.args[0] == "drums"
        assert abs(msg.args[1] - 0.55) < 1e-6
    finally:
        runtime.stop()
        out_sock.close()
        send.close()
    trace_lines = trace_path.read_text().splitlines()
    kinds = [json.loads(line)["kind"] for line in trace_lines]
    assert "in" in kinds and "out" in kinds


def test_runtime_survives_datagram_garbage_flood(tmp_path):
    runtime = EngineRuntime(runtime_config(tmp_path))
    rng = random.Random(11)
    for _ in range(5000):
        runtime.handle_datagram(rng.randbytes(rng.randint(0, 96)))
    assert runtime.event_q.qsize() == 0
    assert sum(runtime.counters.values()) == 5000


def measure_processing_p99(tmp_path, trained_gestures, stall_ui: bool) -> float:
    model, scaler, ds = trained_gestures
    config = runtime_config(tmp_path / ("stalled" if stall_ui else "free"))
    runtime = EngineRuntime(config)
    runtime.core.dataset = ds.copy()
    runtime.core.model = model
    runtime.core.scaler = scaler
    runtime.start()
    try:
        if stall_ui:
            runtime.ui.register()  # outbox that is never drained
        runtime.submit_event({"type": "mode", "value": "perform"})
        rng = np.random.default_rng(0)

        def feed_and_drain(n):
            for _ in range(n):
                runtime.submit_event({**frame_event("right_hand_up", rng)})
            deadline = time.monotonic() + 15
            while runtime.event_q.qsize() > 0 and time.monotonic() < deadline:
                time.sleep(0.01)
            time.sleep(0.1)

        feed_and_drain(100)        # warm caches so runs compare fairly
        runtime.compute_ms.clear()
        feed_and_drain(400)
        from cuepose.metrics import latency_from_values

        return latency_from_values(list(runtime.compute_ms)).p99
    finally:
        runtime.stop()


def test_stalled_ui_consumer_leaves_realtime_path_unaffected(tmp_path, trained_gestures):
    baseline = measure_processing_p99(tmp_path, trained_gestures, stall_ui=False)
    stalled = measure_processing_p99(tmp_path, trained_gestures, stall_ui=True)
    assert abs(stalled - baseline) < 1.0, (baseline, stalled)


def test_outbox_conflates_and_never_blocks():
    outbox = Outbox()
    for i in range(5000):
        outbox.push({"type": "state", "snapshot": i})
        outbox.push({"type": "beat", "signal": {"kind": "yellow", "i": i}})
    msgs = outbox.drain()
    states = [m for m in msgs if m["type"] == "state"]
    assert len(states) == 1
    assert states[0]["snapshot"] == 4999
    assert outbox.dropped > 0
    assert outbox.drain() == []


# --- websocket protocol --------------------------------------------------------


@pytest.fixture
def ws_client(tmp_path):
    runtime = EngineRuntime(runtime_config(tmp_path))
    runtime.start()
    client = TestClient(create_app(runtime))
    yield client, runtime
    runtime.stop()


def recv_until(ws, predicate, timeout=10.0):
    deadline = time.monotonic() + timeout
    seen = []
    while time.monotonic() < deadline:
        msg = ws.receive_json()
        seen.append(msg)
        if predicate(msg):
            return seen
    raise AssertionError(f"condition not met; saw {[m['type'] for m in seen]}")


def test_ws_initial_state_snapshot(ws_client):
    client, _ = ws_client
    with client.websocket_connect("/ws") as ws:
        msgs = recv_until(ws, lambda m: m["type"] == "state")
        assert msgs[-1]["snapshot"]["mode"] == "train"


def test_ws_unknown_type_error_reply_keeps_connection(ws_client):
    client, _ = ws_client
    with client.websocket_connect("/ws") as ws:
        ws.send_json({"type": "blargh"})
        msgs = recv_until(ws, lambda m: m["type"] == "error")
        assert "unknown message type" in msgs[-1]["message"]
        ws.send_json({"type": "mode", "value": "train"})
        recv_until(ws, lambda m: m["type"] == "state")


def test_ws_mapping_class_zero_error(ws_client):
    client, _ = ws_client
    with client.websocket_connect("/ws") as ws:
        ws.send_json({"type": "mapping/set",
                      "entry": {"class": 0, "type": "adjust_param", "stem": "drums",
                                "param": "gain", "direction": "increase"}})
        msgs = recv_until(ws, lambda m: m["type"] == "error")
        assert "other class unmappable" in msgs[-1]["message"]


def test_ws_short_session_flow(ws_client):
    client, runtime = ws_client
    with client.websocket_connect("/ws") as ws:
        ws.send_json({"type": "session/start",
                      "cfg": {"tempo_bpm": 300, "target": 1, "gesture": "wave"}})

        stop_frames = threading.Event()

        def feed_frames():
            while not stop_frames.is_set():
                runtime.submit_event(frame_event(None))
                time.sleep(0.03)

        feeder = threading.Thread(target=feed_frames, daemon=True)
        feeder.start()
        try:
            msgs = recv_until(ws, lambda m: m["type"] == "samples", timeout=15)
        finally:
            stop_frames.set()
            feeder.join()
        beats = [m["signal"]["kind"] for m in msgs if m["type"] == "beat"]
        assert beats[:3] == ["count", "count", "count"]
        assert beats[3:] == ["yellow", "yellow", "yellow", "green", "done"]
        candidates = msgs[-1]["candidates"]
        ws.send_json({"type": "session/confirm", "keep": [c["i"] for c in candidates]})
        states = recv_until(ws, lambda m: m["type"] == "state"
                            and m["snapshot"]["session"]["phase"] == "confirmed",
                            timeout=10)
        counts = states[-1]["snapshot"]["sample_counts"]
        assert int(counts["0"]) >= 1


def test_status_endpoint(ws_client):
    client, _ = ws_client
    doc = client.get("/").json()
    assert doc["service"] == "cuepose"
    assert doc["mode"] == "train"
