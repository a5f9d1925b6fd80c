"""JSON views of domain objects for the HTTP API and CLI.

Field names mirror the domain types in snake_case.  Parameter values keep
their type tag explicit so integers, decimals, strings, and byte blobs
round-trip unambiguously; byte fields travel as base64, digests and ids as
hex.
"""

from __future__ import annotations

import base64
from decimal import Decimal, InvalidOperation

from .coldchain import ComplianceReport, SensorSeries, format_temp
from .errors import SerializationError
from .ledger import (
    Block,
    BlockHeader,
    ProcessTransaction,
    ProcessType,
    Role,
    canon_decimal,
)


def param_value_to_json(value) -> dict:
    if isinstance(value, bool):
        raise SerializationError("boolean parameter values are not supported")
    if isinstance(value, str):
        return {"type": "string", "value": value}
    if isinstance(value, int):
        return {"type": "integer", "value": value}
    if isinstance(value, Decimal):
        return {"type": "decimal", "value": canon_decimal(value)}
    if isinstance(value, bytes):
        return {"type": "bytes", "value": base64.b64encode(value).decode("ascii")}
    raise SerializationError(f"unsupported parameter type {type(value).__name__}")


def param_value_from_json(entry: dict):
    kind = entry.get("type")
    value = entry.get("value")
    if kind == "string" and isinstance(value, str):
        return value
    if kind == "integer" and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind == "decimal" and isinstance(value, str):
        try:
            return Decimal(value)
        except InvalidOperation:
            raise SerializationError(f"bad decimal value {value!r}")
    if kind == "bytes" and isinstance(value, str):
        try:
            return base64.b64decode(value, validate=True)
        except Exception:
            raise SerializationError("bad base64 in bytes parameter")
    raise SerializationError(f"bad parameter entry {entry!r}")


def tx_to_json(tx: ProcessTransaction) -> dict:
    return {
        "tx_id": tx.tx_id.hex(),
        "process_type": tx.process_type.json_name,
        "actor_id": tx.actor_id,
        "role": tx.role.json_name,
        "input_lots": list(tx.input_lots),
        "output_lot": tx.output_lot,
        "delivery_note": tx.delivery_note,
        "transport_ref": tx.transport_ref.hex() if tx.transport_ref else None,
        "supersedes": tx.supersedes.hex() if tx.supersedes else None,
        "sensor_series": (
            base64.b64encode(tx.sensor_series).decode("ascii") if tx.sensor_series else None
        ),
        "parameters": [
            {"key": k, **param_value_to_json(v)} for k, v in tx.parameters
        ],
        "created_at": tx.created_at,
    }


def _hex_bytes(value, size: int, what: str) -> bytes:
    if not isinstance(value, str):
        raise SerializationError(f"{what} must be a hex string")
    try:
        raw = bytes.fromhex(value)
    except ValueError:
        raise SerializationError(f"{what} is not valid hex")
    if len(raw) != size:
        raise SerializationError(f"{what} must be {size} bytes")
    return raw


def tx_from_json(doc: dict) -> ProcessTransaction:
    if not isinstance(doc, dict):
        raise SerializationError("transaction document must be an object")
    try:
        params = []
        for entry in doc.get("parameters", []):
            key = entry.get("key")
            if not isinstance(key, str):
                raise SerializationError("parameter key must be a string")
            params.append((key, param_value_from_json(entry)))
        sensor_b64 = doc.get("sensor_series")
        created_at = doc.get("created_at", 0)
        if not isinstance(created_at, int) or isinstance(created_at, bool):
            raise SerializationError("created_at must be an integer")
        input_lots = doc.get("input_lots", [])
        if not isinstance(input_lots, list) or not all(isinstance(x, str) for x in input_lots):
            raise SerializationError("input_lots must be a list of strings")
        return ProcessTransaction(
            tx_id=_hex_bytes(doc.get("tx_id"), 16, "tx_id"),
            process_type=ProcessType.from_json(doc.get("process_type", "")),
            actor_id=doc.get("actor_id", ""),
            role=Role.from_json(doc.get("role", "")),
            input_lots=tuple(input_lots),
            output_lot=doc.get("output_lot"),
            delivery_note=doc.get("delivery_note"),
            transport_ref=(
                _hex_bytes(doc["transport_ref"], 16, "transport_ref")
                if doc.get("transport_ref")
                else None
            ),
            supersedes=(
                _hex_bytes(doc["supersedes"], 16, "supersedes")
                if doc.get("supersedes")
                else None
            ),
            sensor_series=(
                base64.b64decode(sensor_b64, validate=True) if sensor_b64 else None
            ),
            parameters=tuple(params),
            created_at=created_at,
        )
    except SerializationError:
        raise
    except Exception as exc:
        raise SerializationError(f"bad transaction document: {exc}")


def header_to_json(header: BlockHeader) -> dict:
    return {
        "height": header.height,
        "prev_hash": header.prev_hash.hex(),
        "timestamp": header.timestamp,
        "proposer": header.proposer,
        "tx_hash": header.tx_hash.hex(),
    }


def block_to_json(block: Block) -> dict:
    return {
        "header": header_to_json(block.header),
        "transaction": tx_to_json(block.transaction),
        "proposer_signature": base64.b64encode(block.proposer_signature).decode("ascii"),
        "countersignatures": [
            {"authority_id": aid, "signature": base64.b64encode(sig).decode("ascii")}
            for aid, sig in block.countersignatures
        ],
        "block_hash": block.block_hash.hex(),
    }


def series_to_json(series: SensorSeries) -> dict:
    return {
        "sensor_id": series.sensor_id,
        "samples": [
            {"timestamp": ts, "temperature": format_temp(temp)}
            for ts, temp in series.samples
        ],
    }


def report_to_json(report: ComplianceReport) -> dict:
    return {
        "compliant": report.compliant,
        "total_excursion_seconds": report.total_excursion_seconds,
        "violations": [
            {
                "start_ts": v.start_ts,
                "end_ts": v.end_ts,
                "duration": v.duration,
                "extreme_temp": format_temp(v.extreme_temp),
            }
            for v in report.violations
        ],
    }
