"""Open Sound Control 1.0 message/bundle codec and address matching.

Wire layout (all fields 4-byte aligned, big-endian):

    message  = padded-address  padded-typetags  arg*
    address  = ASCII string starting with '/', NUL-terminated, padded to 4
    typetags = ',' followed by one tag char per argument, NUL-terminated, padded
    arg      = int32 | float32 | padded-string | blob
    blob     = int32 byte count, payload, zero padding to 4
    bundle   = "#bundle\\0"  uint64 timetag  (int32 size, packet)*

Supported type tags: i (int32), f (float32), s (string), b (blob).
Python mapping: int -> i, float -> f, str -> s, bytes -> b.

Timetags are 64-bit NTP timestamps (seconds since 1900 in the upper word,
2^-32 fractions in the lower). The value 1 means "deliver immediately".

The codec is strict: unknown type tags, non-zero padding bytes, truncated
payloads, and lengths that are not multiples of 4 are all decode errors
carrying the byte offset where decoding failed. Encoding and decoding are
pure functions and safe to call concurrently.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from typing import Union

IMMEDIATELY = 1
NTP_UNIX_OFFSET_S = 2_208_988_800  # seconds between 1900-01-01 and 1970-01-01

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1


class OscError(Exception):
    """Base class for OSC codec errors."""


class OscEncodeError(OscError):
    """A value cannot be represented on the wire."""


class OscDecodeError(OscError):
    """Malformed wire bytes. ``offset`` is where decoding failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class OscMessage:
    address: str
    args: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class OscBundle:
    timetag: int = IMMEDIATELY
    elements: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))


OscPacket = Union[OscMessage, OscBundle]


def _pad4(data: bytes) -> bytes:
    rem = len(data) % 4
    return data if rem == 0 else data + b"\x00" * (4 - rem)


def _encode_string(s: str) -> bytes:
    if "\x00" in s:
        raise OscEncodeError(f"string contains interior null byte: {s!r}")
    try:
        raw = s.encode("ascii")
    except UnicodeEncodeError as exc:
        raise OscEncodeError(f"string is not ASCII: {s!r}") from exc
    return _pad4(raw + b"\x00")


def encode_message(msg: OscMessage) -> bytes:
    """Encode a message to wire bytes. Output length is a multiple of 4."""
    if not msg.address or not msg.address.startswith("/"):
        raise OscEncodeError(f"address must start with '/': {msg.address!r}")
    tags = [","]
    payload = []
    for arg in msg.args:
        if isinstance(arg, bool):
            raise OscEncodeError("bool is not an OSC argument type")
        if isinstance(arg, int):
            if not INT32_MIN <= arg <= INT32_MAX:
                raise OscEncodeError(f"int out of int32 range: {arg}")
            tags.append("i")
            payload.append(struct.pack(">i", arg))
        elif isinstance(arg, float):
            tags.append("f")
            payload.append(struct.pack(">f", arg))
        elif isinstance(arg, str):
            tags.append("s")
            payload.append(_encode_string(arg))
        elif isinstance(arg, (bytes, bytearray)):
            tags.append("b")
            blob = bytes(arg)
            payload.append(struct.pack(">i", len(blob)) + _pad4(blob))
        else:
            raise OscEncodeError(f"unsupported argument type: {type(arg).__name__}")
    return _encode_string(msg.address) + _encode_string("".join(tags)) + b"".join(payload)


def encode_bundle(bundle: OscBundle) -> bytes:
    """Encode a bundle: "#bundle\\0" header, timetag, length-prefixed elements."""
    if not 0 <= bundle.timetag < 2**64:
        raise OscEncodeError(f"timetag out of uint64 range: {bundle.timetag}")
    out = [b"#bundle\x00", struct.pack(">Q", bundle.timetag)]
    for element in bundle.elements:
        encoded = encode_packet(element)
        out.append(struct.pack(">i", len(encoded)))
        out.append(encoded)
    return b"".join(out)


def encode_packet(packet: OscPacket) -> bytes:
    if isinstance(packet, OscMessage):
        return encode_message(packet)
    if isinstance(packet, OscBundle):
        return encode_bundle(packet)
    raise OscEncodeError(f"not an OSC packet: {type(packet).__name__}")


_BUNDLE_HEADER = b"#bundle\x00"


def decode_packet(data: bytes) -> OscPacket:
    """Decode wire bytes into a message or (recursively) a bundle.

    Exact inverse of :func:`encode_packet` for all valid wire forms. Never
    reads past ``data``; malformed input raises :class:`OscDecodeError`.
    """
    if len(data) == 0:
        raise OscDecodeError("empty packet", 0)
    if len(data) % 4 != 0:
        raise OscDecodeError("length not multiple of 4", len(data))
    return _decode_packet(data, 0, len(data))


def _decode_packet(data: bytes, start: int, end: int) -> OscPacket:
    if data[start : start + 8] == _BUNDLE_HEADER:
        return _decode_bundle(data, start, end)
    return _decode_message(data, start, end)


def _read_string(data: bytes, offset: int, end: int) -> tuple[str, int]:
    nul = data.find(b"\x00", offset, end)
    if nul < 0:
        raise OscDecodeError("unterminated string", offset)
    try:
        s = data[offset:nul].decode("ascii")
    except UnicodeDecodeError:
        raise OscDecodeError("non-ASCII byte in string", offset) from None
    after = nul + 1
    padded = offset + ((after - offset + 3) // 4) * 4
    if padded > end:
        raise OscDecodeError("truncated string padding", after)
    if data[after:padded].strip(b"\x00"):
        raise OscDecodeError("bad padding (non-zero pad byte)", after)
    return s, padded


def _decode_message(data: bytes, start: int, end: int) -> OscMessage:
    address, offset = _read_string(data, start, end)
    if not address.startswith("/"):
        raise OscDecodeError(f"address does not start with '/': {address!r}", start)
    if offset >= end:
        raise OscDecodeError("missing type-tag string", offset)
    tags_at = offset
    tags, offset = _read_string(data, offset, end)
    if not tags.startswith(","):
        raise OscDecodeError("type-tag string does not start with ','", tags_at)
    args = []
    for tag in tags[1:]:
        if tag == "i":
            if offset + 4 > end:
                raise OscDecodeError("truncated int32 argument", offset)
            args.append(struct.unpack_from(">i", data, offset)[0])
            offset += 4
        elif tag == "f":
            if offset + 4 > end:
                raise OscDecodeError("truncated float32 argument", offset)
            args.append(struct.unpack_from(">f", data, offset)[0])
            offset += 4
        elif tag == "s":
            value, offset = _read_string(data, offset, end)
            args.append(value)
        elif tag == "b":
            if offset + 4 > end:
                raise OscDecodeError("truncated blob length", offset)
            size = struct.unpack_from(">i", data, offset)[0]
            if size < 0:
                raise OscDecodeError(f"negative blob length {size}", offset)
            offset += 4
            padded = offset + ((size + 3) // 4) * 4
            if padded > end:
                raise OscDecodeError("truncated blob payload", offset)
            args.append(data[offset : offset + size])
            if data[offset + size : padded].strip(b"\x00"):
                raise OscDecodeError("bad padding (non-zero pad byte)", offset + size)
            offset = padded
        else:
            raise OscDecodeError(f"unknown type tag {tag!r}", tags_at)
    if offset != end:
        raise OscDecodeError("trailing bytes after last argument", offset)
    return OscMessage(address, tuple(args))


def _decode_bundle(data: bytes, start: int, end: int) -> OscBundle:
    if start + 16 > end:
        raise OscDecodeError("truncated bundle header", start)
    timetag = struct.unpack_from(">Q", data, start + 8)[0]
    offset = start + 16
    elements = []
    while offset < end:
        if offset + 4 > end:
            raise OscDecodeError("truncated element size", offset)
        size = struct.unpack_from(">i", data, offset)[0]
        offset += 4
        if size <= 0 or size % 4 != 0:
            raise OscDecodeError(f"element size not a positive multiple of 4: {size}", offset - 4)
        if offset + size > end:
            raise OscDecodeError("truncated bundle element", offset)
        elements.append(_decode_packet(data, offset, offset + size))
        offset += size
    return OscBundle(timetag, tuple(elements))


def match_address(pattern: str, address: str) -> bool:
    """Match an address against a pattern with single-segment '*' wildcards.

    '*' matches any run of characters within one path segment; no other
    pattern syntax is supported. Malformed patterns simply fail to match.
    """
    if not pattern.startswith("/") or not address.startswith("/"):
        return False
    psegs = pattern.split("/")
    asegs = address.split("/")
    if len(psegs) != len(asegs):
        return False
    for pseg, aseg in zip(psegs, asegs):
        if "*" in pseg:
            regex = "[^/]*".join(re.escape(part) for part in pseg.split("*"))
            if re.fullmatch(regex, aseg) is None:
                return False
        elif pseg != aseg:
            return False
    return True


def timetag_from_unix_ms(t_ms: int) -> int:
    """Convert unix milliseconds to a 64-bit NTP timetag (fraction truncated)."""
    if t_ms < 0:
        raise ValueError(f"unix milliseconds must be >= 0, got {t_ms}")
    seconds = t_ms // 1000 + NTP_UNIX_OFFSET_S
    fraction = ((t_ms % 1000) << 32) // 1000
    return (seconds << 32) | fraction


def timetag_to_unix_ms(timetag: int) -> int:
    """Inverse of :func:`timetag_from_unix_ms`; round trip loses < 1 ms."""
    seconds = (timetag >> 32) - NTP_UNIX_OFFSET_S
    fraction = timetag & 0xFFFFFFFF
    return seconds * 1000 + ((fraction * 1000 + (1 << 31)) >> 32)
