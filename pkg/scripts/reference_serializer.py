#!/usr/bin/env python3
"""Standalone reference serializer for the canonical transaction layout.

Deliberately independent of the biotrak package: it rebuilds the byte
layout from the documented rules alone and prints the golden vector that
tests/data/golden_tx.hex freezes.  Rerun after any (intentional) layout
change and refresh the fixture.

    python scripts/reference_serializer.py
"""

import hashlib
import struct


def u8(v):
    return struct.pack(">B", v)


def u32(v):
    return struct.pack(">I", v)


def u64(v):
    return struct.pack(">Q", v)


def i64(v):
    return struct.pack(">q", v)


def blob(b):
    return u32(len(b)) + b


def string(s):
    return blob(s.encode("utf-8"))


def optional(present, payload=b""):
    return (b"\x01" + payload) if present else b"\x00"


def reference_tx_bytes():
    # field values mirror the fixture in tests/test_ledger.py
    tx_id = bytes(range(16))
    process_type = 2  # production
    actor_id = "0011223344556677"
    role = 1  # producer
    input_lots = ["RAW-A.1", "RAW-B"]
    output_lot = "PROD-C"
    delivery_note = None
    transport_ref = None
    supersedes = None
    sensor_series = None
    parameters = [
        ("batch.size", 1200),                      # integer
        ("oven.temp", "180.5", "decimal"),         # decimal as canonical text
        ("recipe", "tomato-passata"),              # string
        ("seal", bytes.fromhex("deadbeef")),       # byte blob
    ]
    created_at = 1_700_000_123

    out = [u8(0x01)]
    out.append(tx_id)
    out.append(u8(process_type))
    out.append(string(actor_id))
    out.append(u8(role))
    out.append(u32(len(input_lots)))
    for lot in input_lots:
        out.append(string(lot))
    out.append(optional(True, string(output_lot)))
    out.append(optional(delivery_note is not None))
    out.append(optional(transport_ref is not None))
    out.append(optional(supersedes is not None))
    out.append(optional(sensor_series is not None))

    def param_value(v, kind=None):
        if kind == "decimal":
            return u8(3) + string(v)
        if isinstance(v, int):
            return u8(2) + i64(v)
        if isinstance(v, str):
            return u8(1) + string(v)
        if isinstance(v, bytes):
            return u8(4) + blob(v)
        raise AssertionError(v)

    entries = []
    for entry in parameters:
        if len(entry) == 3:
            key, value, kind = entry
        else:
            key, value = entry
            kind = None
        entries.append((key.encode("utf-8"), param_value(value, kind)))
    entries.sort(key=lambda kv: kv[0])
    out.append(u32(len(entries)))
    for key, encoded in entries:
        out.append(blob(key))
        out.append(encoded)
    out.append(u64(created_at))
    return b"".join(out)


if __name__ == "__main__":
    data = reference_tx_bytes()
    print(data.hex())
    print("sha256:", hashlib.sha256(data).hexdigest())
