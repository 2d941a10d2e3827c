"""Trace record and replay.

A trace is JSON lines, one record per line, with a strictly increasing
``seq``. Input records carry the engine event verbatim::

    {"seq": 1, "kind": "in",  "t": <ingest ms>, "ev": {"type": ...}}
    {"seq": 2, "kind": "out", "t": <emit ms>,   "cmd": {"addr": ..., "args": [...], "at": null}}

``at`` is the unix-millisecond delivery time for scheduled commands.
Replay feeds the recorded input events through a fresh engine core with
the recorded timestamps as the clock, so the produced command trace is a
pure function of the input trace: running it twice yields identical bytes.
Per-event wall processing time is measured on the side for latency stats.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

from ..metrics import LatencyStats, latency_from_values
from .core import DispatchCommand, EngineCore


class TraceError(Exception):
    pass


class TraceWriter:
    """Serializes records to a line-buffered JSON-lines stream."""

    def __init__(self, fh):
        self._fh = fh
        self._seq = 0

    def write_in(self, t_ms: int, ev: dict) -> None:
        self._write({"seq": self._next(), "kind": "in", "t": t_ms, "ev": _clean(ev)})

    def write_out(self, t_ms: int, dispatch: DispatchCommand) -> None:
        self._write({"seq": self._next(), "kind": "out", "t": t_ms,
                     "cmd": command_json(dispatch)})

    def _next(self) -> int:
        self._seq += 1
        return self._seq

    def _write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        self._fh.flush()


def command_json(dispatch: DispatchCommand) -> dict:
    return {"addr": dispatch.cmd.address, "args": list(dispatch.cmd.args),
            "at": dispatch.deliver_at_unix_ms}


def _clean(ev: dict) -> dict:
    return {k: v for k, v in ev.items() if not k.startswith("_")}


def read_trace(path) -> list[dict]:
    records = []
    last_seq = 0
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError(f"{path}:{lineno}: malformed trace line: {exc}") from None
            if record.get("kind") not in ("in", "out"):
                raise TraceError(f"{path}:{lineno}: unknown record kind")
            seq = record.get("seq")
            if not isinstance(seq, int) or seq <= last_seq:
                raise TraceError(f"{path}:{lineno}: seq not strictly increasing")
            last_seq = seq
            records.append(record)
    return records


@dataclass
class ReplayResult:
    out_lines: list[str]
    stats: LatencyStats | None

    def trace_bytes(self) -> bytes:
        return "".join(self.out_lines).encode("utf-8")


def replay_events(records: list[dict], core: EngineCore) -> ReplayResult:
    """Run recorded input events through a core under virtual time."""
    seq = 0
    lines = []
    compute_ms = []
    for record in records:
        if record["kind"] != "in":
            continue
        t = record["t"]
        started = time.perf_counter()
        out = core.handle(t, record["ev"])
        compute_ms.append((time.perf_counter() - started) * 1000.0)
        for dispatch in out.commands:
            seq += 1
            line = json.dumps({"seq": seq, "kind": "out", "t": t,
                               "cmd": command_json(dispatch)},
                              separators=(",", ":"))
            lines.append(line + "\n")
    stats = latency_from_values(compute_ms) if compute_ms else None
    return ReplayResult(lines, stats)


def replay_file(trace_path, make_core, out_path=None) -> ReplayResult:
    """Replay a trace file; ``make_core`` builds a fresh EngineCore."""
    records = read_trace(trace_path)
    result = replay_events(records, make_core())
    if out_path is not None:
        with open(out_path, "wb") as f:
            f.write(result.trace_bytes())
    return result
