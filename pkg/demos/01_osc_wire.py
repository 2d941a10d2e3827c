#!/usr/bin/env python3
"""Walk through the OSC wire codec: messages, bundles, matching, timetags."""

from cuepose.osc import (
    IMMEDIATELY,
    OscBundle,
    OscMessage,
    decode_packet,
    encode_bundle,
    encode_message,
    match_address,
    timetag_from_unix_ms,
    timetag_to_unix_ms,
)


def hexdump(data: bytes) -> str:
    return " ".join(f"{b:02x}" for b in data)


print("== messages ==")
msg = OscMessage("/gesture", (1,))
wire = encode_message(msg)
print(f"{msg.address} {msg.args}  ->  {len(wire)} bytes")
print("   ", hexdump(wire))
print("    decoded back:", decode_packet(wire))

rich = OscMessage("/ctrl/stem/gain", ("drums", 0.55))
print(f"\n{rich.address} {rich.args}")
print("   ", hexdump(encode_message(rich)))

print("\n== bundles carry scheduled commands ==")
bang_at = timetag_from_unix_ms(1_700_000_000_500)
bundle = OscBundle(bang_at, (OscMessage("/ctrl/bang"),))
wire = encode_bundle(bundle)
print(f"bundle timetag={bang_at} ({len(wire)} bytes)")
print("    header:", hexdump(wire[:16]))
print("    round trip ms:", timetag_to_unix_ms(bang_at))
print("    immediate bundles use timetag", IMMEDIATELY)

print("\n== address matching (single-segment wildcard only) ==")
for pattern, address in [("/landmarks/*", "/landmarks/pose"),
                         ("/landmarks/*", "/landmarks/hand"),
                         ("/landmarks/*", "/landmarks/pose/extra"),
                         ("/ctrl/stem/*", "/ctrl/stem/gain")]:
    print(f"    {pattern:18s} vs {address:24s} -> {match_address(pattern, address)}")
