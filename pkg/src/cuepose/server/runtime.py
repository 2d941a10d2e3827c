"""Live runtime: sockets, queues, and the threads around the engine core.

Thread layout, all hand-off via queues of immutable items:

  - one ingestion thread per listener (UDP receive loop here; the
    WebSocket app enqueues from its own context) that only parses,
    stamps, and enqueues;
  - one processing thread owning the engine core, fed from a single
    ordered event queue;
  - one dispatcher thread owning the trace file and the outbound UDP
    socket (trace entry is written before the datagram is sent);
  - one broadcast thread fanning UI messages out to per-connection
    outboxes (conflatable message types keep only the latest);
  - a background training thread spawned per train request, whose
    completion re-enters the pipeline as a train/done event.

The real-time path (ingest, process, dispatch) never waits on disk,
training, or UI consumers.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
import queue
import socket
import threading
import time
from collections import Counter, deque

from .. import dataset as ds_mod
from ..cues import CueMapping, MixerState, save_mapping, load_mapping
from ..mlp import load_model, save_model, train
from ..osc import OscBundle, OscMessage, encode_bundle, encode_message, timetag_from_unix_ms
from .config import ServerConfig
from .core import EngineCore, EngineOutput
from .ingest import IngestError, datagram_to_event
from .trace import TraceWriter

log = logging.getLogger(__name__)

CONFLATE_TYPES = frozenset({"state", "prediction", "train/progress"})
OUTBOX_LIMIT = 1024
WORKING_DATASET = "working.jsonl"


class Outbox:
    """Per-connection UI buffer: lossy, conflating, never blocking."""

    def __init__(self):
        self._lock = threading.Lock()
        self._queue: deque = deque(maxlen=OUTBOX_LIMIT)
        self._latest: dict[str, dict] = {}
        self.dropped = 0

    def push(self, msg: dict) -> None:
        with self._lock:
            if msg["type"] in CONFLATE_TYPES:
                self._latest[msg["type"]] = msg
                return
            if len(self._queue) == self._queue.maxlen:
                self.dropped += 1
            self._queue.append(msg)

    def drain(self) -> list[dict]:
        with self._lock:
            msgs = list(self._queue)
            self._queue.clear()
            msgs.extend(self._latest.values())
            self._latest.clear()
        return msgs


class UiHub:
    def __init__(self):
        self._lock = threading.Lock()
        self._outboxes: dict[int, Outbox] = {}
        self._ids = itertools.count(1)
        self.last_state: dict | None = None

    def register(self) -> tuple[int, Outbox]:
        outbox = Outbox()
        with self._lock:
            conn_id = next(self._ids)
            self._outboxes[conn_id] = outbox
            if self.last_state is not None:
                outbox.push(self.last_state)
        return conn_id, outbox

    def unregister(self, conn_id: int) -> None:
        with self._lock:
            self._outboxes.pop(conn_id, None)

    def publish(self, msg: dict) -> None:
        target = msg.pop("_to", None)
        if msg["type"] == "state":
            self.last_state = msg
        with self._lock:
            if target is not None:
                outbox = self._outboxes.get(target)
                if outbox is not None:
                    outbox.push(msg)
                return
            for outbox in self._outboxes.values():
                outbox.push(msg)


class Metronome(threading.Thread):
    def __init__(self, period_ms: int, emit):
        super().__init__(name="cuepose-metronome", daemon=True)
        self.period_s = period_ms / 1000.0
        self.emit = emit
        self._stop = threading.Event()

    def cancel(self) -> None:
        self._stop.set()

    def run(self) -> None:
        next_at = time.monotonic()
        while not self._stop.is_set():
            self.emit()
            next_at += self.period_s
            delay = next_at - time.monotonic()
            if delay > 0 and self._stop.wait(delay):
                break


_STOP = object()


class EngineRuntime:
    """Owns the engine core plus all live I/O machinery."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.counters: Counter = Counter()
        self.event_q: queue.Queue = queue.Queue()
        self.dispatch_q: queue.Queue = queue.Queue()
        self.ui_q: queue.Queue = queue.Queue()
        self.side_q: queue.Queue = queue.Queue()
        self.ui = UiHub()
        self.latency_samples: deque = deque(maxlen=100_000)   # (ingest ms, dispatch ms)
        self.compute_ms: deque = deque(maxlen=100_000)        # per-event handle time
        self._stamp_lock = threading.Lock()
        self._last_stamp = 0
        self._metronome: Metronome | None = None
        self._metronome_lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()
        self._in_socket: socket.socket | None = None
        self._out_socket: socket.socket | None = None
        self._trace_fh = None
        self.core = self._build_core(config)

    def _build_core(self, config: ServerConfig) -> EngineCore:
        model = scaler = None
        if config.model_path and config.scaler_path \
                and os.path.exists(config.model_path) and os.path.exists(config.scaler_path):
            model, scaler = load_model(config.model_path, config.scaler_path)
        mapping = CueMapping(config.detector, config.gain_unit,
                             config.pitch_unit, config.tempo_unit)
        if config.mapping_path and os.path.exists(config.mapping_path):
            mapping = load_mapping(config.mapping_path)
        dataset = None
        working = os.path.join(config.dataset_dir, WORKING_DATASET)
        if os.path.exists(working):
            dataset = ds_mod.load(working)
        return EngineCore(
            dataset=dataset, mapping=mapping, model=model, scaler=scaler,
            mixer=MixerState.for_stems(config.stems),
            trainer=ThreadTrainer(self), mode=config.mode,
        )

    # -- clock ---------------------------------------------------------------

    def stamp(self) -> int:
        """Unix-ms ingest stamp, strictly increasing across all sources."""
        now = int(time.time() * 1000)
        with self._stamp_lock:
            self._last_stamp = max(now, self._last_stamp + 1)
            return self._last_stamp

    # -- ingestion -----------------------------------------------------------

    def submit_event(self, ev: dict) -> int:
        t = self.stamp()
        self.event_q.put((t, ev))
        return t

    def handle_datagram(self, data: bytes) -> None:
        """Parse one inbound datagram; malformed input is counted, never fatal."""
        try:
            ev = datagram_to_event(data)
        except IngestError as exc:
            self.counters[exc.reason] += 1
            log.debug("dropped datagram: %s", exc)
            return
        self.counters["datagrams_in"] += 1
        self.submit_event(ev)

    def _udp_loop(self) -> None:
        assert self._in_socket is not None
        while not self._stop.is_set():
            try:
                data, _ = self._in_socket.recvfrom(65535)
            except socket.timeout:
                continue
            except OSError:
                break
            self.handle_datagram(data)

    # -- processing ----------------------------------------------------------

    def _process_loop(self) -> None:
        while True:
            try:
                item = self.event_q.get(timeout=0.1)
            except queue.Empty:
                if self._stop.is_set():
                    break
                continue
            if item is _STOP:
                break
            t, ev = item
            self.dispatch_q.put(("in", t, ev))
            started = time.perf_counter()
            try:
                out = self.core.handle(t, ev)
            except Exception:
                self.counters["core_error"] += 1
                log.exception("engine core failed")
                continue
            self.compute_ms.append((time.perf_counter() - started) * 1000.0)
            self._apply_output(t, out)

    def _apply_output(self, t_in: int, out: EngineOutput) -> None:
        for dispatch in out.commands:
            t_out = self.stamp()
            self.dispatch_q.put(("out", t_out, dispatch))
            self.latency_samples.append((t_in, t_out))
        for msg in out.ui:
            self.ui_q.put(msg)
        for hint in out.hints:
            self._apply_hint(hint)

    def _apply_hint(self, hint: tuple) -> None:
        kind = hint[0]
        if kind == "metronome_start":
            self._start_metronome(hint[1])
        elif kind == "metronome_stop":
            self._stop_metronome()
        elif kind in ("persist_dataset", "persist_model", "persist_mapping"):
            self.side_q.put(kind)
        else:
            log.warning("unknown hint %r", hint)

    def _start_metronome(self, period_ms: int) -> None:
        with self._metronome_lock:
            if self._metronome is not None:
                self._metronome.cancel()
            self._metronome = Metronome(period_ms,
                                        lambda: self.submit_event({"type": "beat"}))
            self._metronome.start()

    def _stop_metronome(self) -> None:
        with self._metronome_lock:
            if self._metronome is not None:
                self._metronome.cancel()
                self._metronome = None

    # -- dispatch --------------------------------------------------------------

    def _dispatch_loop(self) -> None:
        writer = TraceWriter(self._trace_fh) if self._trace_fh else None
        while True:
            item = self.dispatch_q.get()
            if item is _STOP:
                break
            kind, t, payload = item
            if writer is not None:
                try:
                    if kind == "in":
                        writer.write_in(t, payload)
                    else:
                        writer.write_out(t, payload)
                except OSError:
                    self.counters["trace_write_error"] += 1
            if kind == "out":
                self._send_command(payload)

    def _send_command(self, dispatch) -> None:
        msg = OscMessage(dispatch.cmd.address, dispatch.cmd.args)
        if dispatch.deliver_at_unix_ms is None:
            data = encode_message(msg)
        else:
            timetag = timetag_from_unix_ms(max(0, dispatch.deliver_at_unix_ms))
            data = encode_bundle(OscBundle(timetag, (msg,)))
        self.counters["commands_out"] += 1
        if self._out_socket is None:
            return
        try:
            self._out_socket.sendto(data, self.config.osc_out)
        except OSError as exc:
            self.counters["send_error"] += 1
            log.warning("command send failed: %s", exc)

    # -- broadcast and persistence ----------------------------------------------

    def _broadcast_loop(self) -> None:
        while True:
            msg = self.ui_q.get()
            if msg is _STOP:
                break
            self.ui.publish(msg)

    def _side_loop(self) -> None:
        while True:
            item = self.side_q.get()
            if item is _STOP:
                break
            try:
                self._persist(item)
            except OSError:
                self.counters["persist_error"] += 1
                log.exception("persistence failed for %s", item)

    def _persist(self, kind: str) -> None:
        if kind == "persist_dataset":
            os.makedirs(self.config.dataset_dir, exist_ok=True)
            ds_mod.save(self.core.dataset, os.path.join(self.config.dataset_dir, WORKING_DATASET))
        elif kind == "persist_model" and self.config.model_path and self.config.scaler_path:
            if self.core.model is not None:
                save_model(self.core.model, self.core.scaler,
                           self.config.model_path, self.config.scaler_path)
        elif kind == "persist_mapping" and self.config.mapping_path:
            save_mapping(self.core.mapping, self.config.mapping_path)

    # -- lifecycle ------------------------------------------------------------------

    def start(self) -> None:
        cfg = self.config
        self._in_socket = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._in_socket.settimeout(0.2)
        try:
            self._in_socket.bind(cfg.osc_listen)
        except OSError as exc:
            raise OSError(f"cannot bind OSC listener on "
                          f"{cfg.osc_listen[0]}:{cfg.osc_listen[1]}: {exc}") from exc
        self._out_socket = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        if cfg.trace_path:
            os.makedirs(os.path.dirname(cfg.trace_path) or ".", exist_ok=True)
            self._trace_fh = open(cfg.trace_path, "w", encoding="utf-8")
        self.ui_q.put(self.core.state_message())
        for name, target in (("udp", self._udp_loop), ("process", self._process_loop),
                             ("dispatch", self._dispatch_loop),
                             ("broadcast", self._broadcast_loop), ("side", self._side_loop)):
            thread = threading.Thread(target=target, name=f"cuepose-{name}", daemon=True)
            thread.start()
            self._threads.append(thread)

    def stop(self) -> None:
        self._stop.set()
        self._stop_metronome()
        if self._in_socket is not None:
            self._in_socket.close()
        self.event_q.put(_STOP)
        # let the processor drain before stopping downstream consumers
        for thread in self._threads:
            if thread.name in ("cuepose-udp", "cuepose-process"):
                thread.join(timeout=5)
        self.dispatch_q.put(_STOP)
        self.ui_q.put(_STOP)
        self.side_q.put(_STOP)
        for thread in self._threads:
            thread.join(timeout=5)
        if self._trace_fh is not None:
            self._trace_fh.close()
            self._trace_fh = None
        if self._out_socket is not None:
            self._out_socket.close()
            self._out_socket = None


class ThreadTrainer:
    """Background trainer; completion re-enters the queue as train/done."""

    def __init__(self, runtime: EngineRuntime):
        self._runtime = runtime
        self._lock = threading.Lock()
        self._result = None

    def start(self, ds, cfg) -> None:
        def work():
            try:
                result = train(ds, cfg)
            except Exception as exc:  # surfaced to the UI via train/done
                result = exc
            with self._lock:
                self._result = result
            self._runtime.submit_event({"type": "train/done"})

        threading.Thread(target=work, name="cuepose-train", daemon=True).start()

    def take_result(self):
        with self._lock:
            result, self._result = self._result, None
        return result
