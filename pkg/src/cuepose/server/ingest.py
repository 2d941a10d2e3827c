"""Datagram parsing: OSC packets in, engine event dicts out.

Landmark traffic arrives as an OSC message at /landmarks/pose or
/landmarks/hand whose single string argument is a JSON object
``{"t": <capture ms>, "landmarks": [[x, y, z], ...]}`` (33 entries for
pose, 21 for hand, optional fourth visibility element). Transport ticks
arrive at /transport with one int32 track position and beats at /beat.

Every parse failure is classified and reported via the returned reason so
the caller can count and drop without ever crashing the receive loop.
"""

from __future__ import annotations

import json
import math

from ..osc import OscDecodeError, OscMessage, decode_packet, match_address

MAX_VISIBLE = 4  # x, y, z, visibility

LANDMARK_COUNTS = {"pose": 33, "hand": 21}


class IngestError(Exception):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


def decode_landmark_payload(payload: str, src: str) -> dict:
    """Validate the JSON landmark payload and build a frame event dict."""
    expected = LANDMARK_COUNTS[src]
    try:
        doc = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise IngestError("bad_json", str(exc)) from None
    if not isinstance(doc, dict):
        raise IngestError("bad_json", "payload is not an object")
    landmarks = doc.get("landmarks")
    if not isinstance(landmarks, list) or len(landmarks) != expected:
        got = len(landmarks) if isinstance(landmarks, list) else type(landmarks).__name__
        raise IngestError("bad_landmark_count", f"expected {expected}, got {got}")
    clean = []
    for point in landmarks:
        if not isinstance(point, list) or not 3 <= len(point) <= MAX_VISIBLE:
            raise IngestError("bad_landmark_point", repr(point)[:60])
        try:
            values = [float(v) for v in point]
        except (TypeError, ValueError):
            raise IngestError("bad_landmark_point", repr(point)[:60]) from None
        if not all(math.isfinite(v) for v in values[:3]):
            raise IngestError("non_finite_landmark")
        clean.append(values)
    try:
        t = int(doc.get("t", 0))
    except (TypeError, ValueError):
        raise IngestError("bad_timestamp", repr(doc.get("t"))) from None
    return {"type": "frame", "src": src, "t": t, "landmarks": clean}


def datagram_to_event(data: bytes) -> dict:
    """Parse one UDP datagram into an engine event dict.

    Raises IngestError with a classified reason for anything malformed.
    """
    try:
        packet = decode_packet(data)
    except OscDecodeError as exc:
        raise IngestError("bad_osc", str(exc)) from None
    if not isinstance(packet, OscMessage):
        raise IngestError("unexpected_bundle")
    if match_address("/landmarks/*", packet.address):
        src = packet.address.rsplit("/", 1)[-1]
        if src not in LANDMARK_COUNTS:
            raise IngestError("unknown_address", packet.address)
        if len(packet.args) != 1 or not isinstance(packet.args[0], str):
            raise IngestError("bad_args", "expected one JSON string argument")
        return decode_landmark_payload(packet.args[0], src)
    if packet.address == "/transport":
        if len(packet.args) != 1 or not isinstance(packet.args[0], int):
            raise IngestError("bad_args", "/transport expects one int32 position")
        return {"type": "tick", "pos": int(packet.args[0])}
    if packet.address == "/beat":
        return {"type": "beat"}
    raise IngestError("unknown_address", packet.address)
