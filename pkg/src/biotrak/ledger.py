"""Blocks, process transactions, canonical serialization, and genesis.

Canonical layout (bit-exact, shared by hashing, signing, storage and wire):

* leading version byte ``0x01``, then fields in declaration order
* integers big-endian fixed width (u64 for heights/timestamps, i64 for
  integer parameter values)
* strings and byte blobs as 4-byte big-endian length + bytes
* fixed-size identifiers (16-byte tx ids, 32-byte digests) as raw bytes
* optional fields as a presence byte ``0x00``/``0x01`` + payload
* lists as 4-byte count + elements
* parameters as count + (key, value-tag, value) triples sorted by the
  UTF-8 bytes of the key

Digest is SHA-256; signatures are Ed25519 over the canonical header bytes.
"""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from .errors import (
    BadHeight,
    BadLink,
    BadTimestamp,
    BadTxHash,
    InvariantError,
    MinimumAuthorities,
    SerializationError,
)

SERIAL_VERSION = 0x01
DIGEST_SIZE = 32
TX_ID_SIZE = 16
SIGNATURE_SIZE = 64
ZERO_DIGEST = b"\x00" * DIGEST_SIZE
GENESIS_SIGNATURE = b"\x00" * SIGNATURE_SIZE
MAX_SENSOR_BLOB = 1 << 20

LOT_CODE_RE = re.compile(r"^[A-Z0-9.\-]{1,64}$")
ACTOR_ID_RE = re.compile(r"^[0-9a-f]{16}$")

ParamValue = str | int | Decimal | bytes


class ProcessType(enum.IntEnum):
    INBOUND_RECEIPT = 1
    PRODUCTION = 2
    TRANSPORT_START = 3
    TRANSPORT_END = 4
    OUTBOUND_DELIVERY = 5

    @property
    def json_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_json(cls, name: str) -> "ProcessType":
        try:
            return cls[name.upper()]
        except KeyError:
            raise SerializationError(f"unknown process type {name!r}")


class Role(enum.IntEnum):
    PRODUCER = 1
    TRANSPORTER = 2

    @property
    def json_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_json(cls, name: str) -> "Role":
        try:
            return cls[name.upper()]
        except KeyError:
            raise SerializationError(f"unknown role {name!r}")


def valid_lot_code(code: str) -> bool:
    return isinstance(code, str) and LOT_CODE_RE.match(code) is not None


def is_admin_grant(tx: "ProcessTransaction") -> bool:
    """Role-grant transactions: Production-typed, lot-free, carrying
    ``grant.*`` parameters; only authorities may commit them."""
    return (
        tx.process_type == ProcessType.PRODUCTION
        and not tx.input_lots
        and tx.output_lot is None
        and any(k.startswith("grant.") for k, _ in tx.parameters)
    )


def canon_decimal(value: Decimal) -> str:
    """Canonical text form: no exponent, no trailing zeros, ``0`` for zero.

    Uses exact string formatting rather than ``normalize()``, which would
    round to the active context precision.
    """
    if not value.is_finite():
        raise SerializationError("non-finite decimal parameter")
    text = format(value, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    if text in ("-0", ""):
        text = "0"
    return text


def _sorted_params(params) -> tuple:
    if isinstance(params, dict):
        items = list(params.items())
    else:
        items = [(k, v) for k, v in params]
    return tuple(sorted(items, key=lambda kv: kv[0].encode("utf-8")))


@dataclass(frozen=True)
class ProcessTransaction:
    """One supply-chain event; exactly one is committed per block."""

    tx_id: bytes
    process_type: ProcessType
    actor_id: str
    role: Role
    input_lots: tuple = ()
    output_lot: str | None = None
    delivery_note: str | None = None
    transport_ref: bytes | None = None
    supersedes: bytes | None = None
    sensor_series: bytes | None = None
    parameters: tuple = ()
    created_at: int = 0

    def __post_init__(self):
        object.__setattr__(self, "input_lots", tuple(self.input_lots))
        object.__setattr__(self, "parameters", _sorted_params(self.parameters))

    def param(self, key: str, default=None):
        for k, v in self.parameters:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class BlockHeader:
    height: int
    prev_hash: bytes
    timestamp: int
    proposer: str
    tx_hash: bytes


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transaction: ProcessTransaction
    proposer_signature: bytes
    countersignatures: tuple = ()

    def __post_init__(self):
        object.__setattr__(
            self, "countersignatures", tuple(tuple(c) for c in self.countersignatures)
        )

    @property
    def block_hash(self) -> bytes:
        return hash_block(self.header)

    @property
    def height(self) -> int:
        return self.header.height

    def signer_count(self) -> int:
        return 1 + len(self.countersignatures)


@dataclass(frozen=True)
class ChainId:
    genesis_hash: bytes

    @property
    def hint(self) -> str:
        """8-hex-char prefix used in QR payloads."""
        return self.genesis_hash.hex()[:8]


# ---------------------------------------------------------------------------
# encoding primitives

def _u8(v: int) -> bytes:
    return v.to_bytes(1, "big")


def _u32(v: int) -> bytes:
    if not 0 <= v < 1 << 32:
        raise SerializationError(f"u32 out of range: {v}")
    return v.to_bytes(4, "big")


def _u64(v: int) -> bytes:
    if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < 1 << 64:
        raise SerializationError(f"u64 out of range: {v!r}")
    return v.to_bytes(8, "big")


def _i64(v: int) -> bytes:
    if not -(1 << 63) <= v < 1 << 63:
        raise SerializationError(f"i64 out of range: {v}")
    return v.to_bytes(8, "big", signed=True)


def _blob(b: bytes) -> bytes:
    return _u32(len(b)) + b


def _string(s: str) -> bytes:
    return _blob(s.encode("utf-8"))


def _fixed(b: bytes, size: int, what: str) -> bytes:
    if not isinstance(b, bytes) or len(b) != size:
        raise SerializationError(f"{what} must be {size} bytes")
    return b


def _optional(value, encode) -> bytes:
    if value is None:
        return b"\x00"
    return b"\x01" + encode(value)


_TAG_STRING = 1
_TAG_INTEGER = 2
_TAG_DECIMAL = 3
_TAG_BYTES = 4


def _encode_param_value(value) -> bytes:
    if isinstance(value, bool):
        raise SerializationError("boolean parameter values are not supported")
    if isinstance(value, str):
        return _u8(_TAG_STRING) + _string(value)
    if isinstance(value, int):
        return _u8(_TAG_INTEGER) + _i64(value)
    if isinstance(value, Decimal):
        return _u8(_TAG_DECIMAL) + _string(canon_decimal(value))
    if isinstance(value, bytes):
        return _u8(_TAG_BYTES) + _blob(value)
    raise SerializationError(f"unsupported parameter value type {type(value).__name__}")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SerializationError("truncated input", offset=self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def i64(self) -> int:
        return int.from_bytes(self.take(8), "big", signed=True)

    def blob(self) -> bytes:
        return self.take(self.u32())

    def string(self) -> str:
        try:
            return self.blob().decode("utf-8")
        except UnicodeDecodeError:
            raise SerializationError("invalid utf-8", offset=self.pos)

    def optional(self, decode):
        flag = self.u8()
        if flag == 0:
            return None
        if flag != 1:
            raise SerializationError(f"bad presence byte {flag}", offset=self.pos)
        return decode()

    def done(self) -> None:
        if self.pos != len(self.data):
            raise SerializationError("trailing bytes after payload", offset=self.pos)


def _decode_param_value(r: _Reader):
    tag = r.u8()
    if tag == _TAG_STRING:
        return r.string()
    if tag == _TAG_INTEGER:
        return r.i64()
    if tag == _TAG_DECIMAL:
        text = r.string()
        try:
            return Decimal(text)
        except InvalidOperation:
            raise SerializationError(f"bad decimal text {text!r}")
    if tag == _TAG_BYTES:
        return r.blob()
    raise SerializationError(f"unknown parameter tag {tag}")


# ---------------------------------------------------------------------------
# transaction shape rules

def validate_tx_shape(tx: ProcessTransaction, bootstrap: bool = False) -> None:
    """Type invariants; raise InvariantError on the first violation.

    ``bootstrap`` exempts the genesis transaction from the lot shape rules
    (it is Production-typed but mints nothing; its payload is the authority
    set and role grants in the parameters map).
    """
    if not isinstance(tx.tx_id, bytes) or len(tx.tx_id) != TX_ID_SIZE:
        raise InvariantError("tx_id must be 16 bytes")
    if not isinstance(tx.process_type, ProcessType):
        raise InvariantError("bad process_type")
    if not isinstance(tx.role, Role):
        raise InvariantError("bad role")
    if not ACTOR_ID_RE.match(tx.actor_id or ""):
        raise InvariantError(f"actor_id must be 16 lowercase hex chars: {tx.actor_id!r}")
    for lot in tx.input_lots:
        if not valid_lot_code(lot):
            raise InvariantError(f"bad input lot code {lot!r}")
    if len(set(tx.input_lots)) != len(tx.input_lots):
        raise InvariantError("duplicate input lots")
    if tx.output_lot is not None and not valid_lot_code(tx.output_lot):
        raise InvariantError(f"bad output lot code {tx.output_lot!r}")
    if tx.delivery_note is not None and not valid_lot_code(tx.delivery_note):
        raise InvariantError(f"bad delivery note id {tx.delivery_note!r}")

    pt = tx.process_type
    if pt == ProcessType.PRODUCTION and not bootstrap and not is_admin_grant(tx):
        if not tx.input_lots:
            raise InvariantError("production requires input lots")
        if tx.output_lot is None:
            raise InvariantError("production requires an output lot")
    if pt in (ProcessType.TRANSPORT_START, ProcessType.TRANSPORT_END):
        if tx.output_lot is not None:
            raise InvariantError("transport events must not carry an output lot")
    if pt == ProcessType.TRANSPORT_END:
        if tx.transport_ref is None:
            raise InvariantError("transport end requires transport_ref")
    elif tx.transport_ref is not None:
        raise InvariantError("transport_ref only allowed on transport end")
    if tx.transport_ref is not None and len(tx.transport_ref) != TX_ID_SIZE:
        raise InvariantError("transport_ref must be 16 bytes")
    if tx.supersedes is not None and len(tx.supersedes) != TX_ID_SIZE:
        raise InvariantError("supersedes must be 16 bytes")
    if tx.sensor_series is not None:
        if pt != ProcessType.TRANSPORT_END:
            raise InvariantError("sensor series only allowed on transport end")
        if len(tx.sensor_series) > MAX_SENSOR_BLOB:
            raise InvariantError("sensor series exceeds 1 MiB cap")

    keys = [k for k, _ in tx.parameters]
    if len(set(keys)) != len(keys):
        raise InvariantError("duplicate parameter keys")
    for k, _ in tx.parameters:
        if not isinstance(k, str) or not k:
            raise InvariantError("parameter keys must be nonempty strings")
    if not isinstance(tx.created_at, int) or tx.created_at < 0:
        raise InvariantError("created_at must be a nonnegative integer")


# ---------------------------------------------------------------------------
# canonical serialization

def canonical_serialize(tx: ProcessTransaction, bootstrap: bool = False) -> bytes:
    validate_tx_shape(tx, bootstrap=bootstrap)
    out = [_u8(SERIAL_VERSION)]
    out.append(_fixed(tx.tx_id, TX_ID_SIZE, "tx_id"))
    out.append(_u8(int(tx.process_type)))
    out.append(_string(tx.actor_id))
    out.append(_u8(int(tx.role)))
    out.append(_u32(len(tx.input_lots)))
    for lot in tx.input_lots:
        out.append(_string(lot))
    out.append(_optional(tx.output_lot, _string))
    out.append(_optional(tx.delivery_note, _string))
    out.append(_optional(tx.transport_ref, lambda b: _fixed(b, TX_ID_SIZE, "transport_ref")))
    out.append(_optional(tx.supersedes, lambda b: _fixed(b, TX_ID_SIZE, "supersedes")))
    out.append(_optional(tx.sensor_series, _blob))
    out.append(_u32(len(tx.parameters)))
    for key, value in tx.parameters:
        out.append(_string(key))
        out.append(_encode_param_value(value))
    out.append(_u64(tx.created_at))
    return b"".join(out)


def deserialize_tx(data: bytes, bootstrap: bool = False) -> ProcessTransaction:
    r = _Reader(data)
    tx = _read_tx(r)
    r.done()
    validate_tx_shape(tx, bootstrap=bootstrap)
    return tx


def _read_tx(r: _Reader) -> ProcessTransaction:
    version = r.u8()
    if version != SERIAL_VERSION:
        raise SerializationError(f"unsupported serialization version {version}")
    tx_id = r.take(TX_ID_SIZE)
    try:
        ptype = ProcessType(r.u8())
    except ValueError as exc:
        raise SerializationError(str(exc))
    actor_id = r.string()
    try:
        role = Role(r.u8())
    except ValueError as exc:
        raise SerializationError(str(exc))
    input_lots = tuple(r.string() for _ in range(r.u32()))
    output_lot = r.optional(r.string)
    delivery_note = r.optional(r.string)
    transport_ref = r.optional(lambda: r.take(TX_ID_SIZE))
    supersedes = r.optional(lambda: r.take(TX_ID_SIZE))
    sensor_series = r.optional(r.blob)
    n_params = r.u32()
    params = []
    prev_key: bytes | None = None
    for _ in range(n_params):
        key = r.string()
        kb = key.encode("utf-8")
        if prev_key is not None and kb <= prev_key:
            raise SerializationError("parameter keys not strictly ascending")
        prev_key = kb
        params.append((key, _decode_param_value(r)))
    created_at = r.u64()
    return ProcessTransaction(
        tx_id=tx_id,
        process_type=ptype,
        actor_id=actor_id,
        role=role,
        input_lots=input_lots,
        output_lot=output_lot,
        delivery_note=delivery_note,
        transport_ref=transport_ref,
        supersedes=supersedes,
        sensor_series=sensor_series,
        parameters=tuple(params),
        created_at=created_at,
    )


def serialize_header(header: BlockHeader) -> bytes:
    out = [_u8(SERIAL_VERSION)]
    if header.height < 0:
        raise SerializationError("negative height")
    out.append(_u64(header.height))
    out.append(_fixed(header.prev_hash, DIGEST_SIZE, "prev_hash"))
    out.append(_u64(header.timestamp))
    out.append(_string(header.proposer))
    out.append(_fixed(header.tx_hash, DIGEST_SIZE, "tx_hash"))
    return b"".join(out)


def _read_header(r: _Reader) -> BlockHeader:
    version = r.u8()
    if version != SERIAL_VERSION:
        raise SerializationError(f"unsupported serialization version {version}")
    return BlockHeader(
        height=r.u64(),
        prev_hash=r.take(DIGEST_SIZE),
        timestamp=r.u64(),
        proposer=r.string(),
        tx_hash=r.take(DIGEST_SIZE),
    )


def deserialize_header(data: bytes) -> BlockHeader:
    r = _Reader(data)
    header = _read_header(r)
    r.done()
    return header


def hash_block(header: BlockHeader) -> bytes:
    return hashlib.sha256(serialize_header(header)).digest()


def hash_tx(tx: ProcessTransaction, bootstrap: bool = False) -> bytes:
    return hashlib.sha256(canonical_serialize(tx, bootstrap=bootstrap)).digest()


def serialize_block(block: Block) -> bytes:
    bootstrap = block.header.height == 0
    out = [_u8(SERIAL_VERSION)]
    out.append(_blob(serialize_header(block.header)))
    out.append(_blob(canonical_serialize(block.transaction, bootstrap=bootstrap)))
    out.append(_blob(block.proposer_signature))
    out.append(_u32(len(block.countersignatures)))
    for authority_id, signature in block.countersignatures:
        out.append(_string(authority_id))
        out.append(_blob(signature))
    return b"".join(out)


def deserialize_block(data: bytes) -> Block:
    r = _Reader(data)
    version = r.u8()
    if version != SERIAL_VERSION:
        raise SerializationError(f"unsupported serialization version {version}")
    header = deserialize_header(r.blob())
    tx = deserialize_tx(r.blob(), bootstrap=header.height == 0)
    proposer_signature = r.blob()
    counters = []
    for _ in range(r.u32()):
        authority_id = r.string()
        counters.append((authority_id, r.blob()))
    r.done()
    return Block(
        header=header,
        transaction=tx,
        proposer_signature=proposer_signature,
        countersignatures=tuple(counters),
    )


# ---------------------------------------------------------------------------
# genesis

@dataclass(frozen=True)
class AuthorityEntry:
    public_key: bytes
    endpoint: str = ""


@dataclass(frozen=True)
class ActorGrant:
    public_key: bytes
    roles: tuple = ()
    display_name: str = ""


@dataclass(frozen=True)
class GenesisConfig:
    chain_name: str
    authorities: tuple = ()
    actors: tuple = ()
    timestamp: int = 0
    min_temp: Decimal | None = None
    max_temp: Decimal | None = None
    max_excursion_seconds: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "authorities", tuple(self.authorities))
        object.__setattr__(self, "actors", tuple(self.actors))


MIN_AUTHORITIES = 3


def make_genesis(config: GenesisConfig) -> Block:
    """Height-0 block carrying the authority set and role grants."""
    from .keys import fingerprint

    if not config.chain_name:
        raise InvariantError("chain name must be nonempty")
    if len(config.authorities) < MIN_AUTHORITIES:
        raise MinimumAuthorities(
            f"need at least {MIN_AUTHORITIES} authorities, got {len(config.authorities)}"
        )
    keys = [a.public_key for a in config.authorities]
    if len(set(keys)) != len(keys):
        raise InvariantError("authority public keys must be distinct")

    params: list = [("chain.name", config.chain_name)]
    params.append(("authority.count", len(config.authorities)))
    for i, auth in enumerate(config.authorities):
        fp = fingerprint(auth.public_key)
        params.append((f"authority.{i}.id", fp))
        params.append((f"authority.{i}.pubkey", auth.public_key))
        params.append((f"authority.{i}.endpoint", auth.endpoint))
    for actor in config.actors:
        fp = fingerprint(actor.public_key)
        params.append((f"actor.{fp}.pubkey", actor.public_key))
        params.append(
            (f"actor.{fp}.roles", ",".join(r.json_name for r in actor.roles))
        )
        params.append((f"actor.{fp}.name", actor.display_name))
    if config.min_temp is not None:
        params.append(("coldchain.min_temp", config.min_temp))
    if config.max_temp is not None:
        params.append(("coldchain.max_temp", config.max_temp))
    if config.max_excursion_seconds is not None:
        params.append(("coldchain.max_excursion_seconds", config.max_excursion_seconds))

    seed = hashlib.sha256(
        b"biotrak-genesis" + config.chain_name.encode("utf-8") + _u64(config.timestamp)
    )
    proposer = fingerprint(config.authorities[0].public_key)
    tx = ProcessTransaction(
        tx_id=seed.digest()[:TX_ID_SIZE],
        process_type=ProcessType.PRODUCTION,
        actor_id=proposer,
        role=Role.PRODUCER,
        parameters=tuple(params),
        created_at=config.timestamp,
    )
    header = BlockHeader(
        height=0,
        prev_hash=ZERO_DIGEST,
        timestamp=config.timestamp,
        proposer=proposer,
        tx_hash=hash_tx(tx, bootstrap=True),
    )
    return Block(header=header, transaction=tx, proposer_signature=GENESIS_SIGNATURE)


def check_header_links(block: Block, parent: Block) -> None:
    """Structural link/height/timestamp/tx-hash rules shared by validators."""
    if block.header.prev_hash != parent.block_hash:
        raise BadLink("prev_hash does not match parent block hash")
    if block.header.height != parent.header.height + 1:
        raise BadHeight(
            f"expected height {parent.header.height + 1}, got {block.header.height}"
        )
    if block.header.timestamp < parent.header.timestamp:
        raise BadTimestamp("timestamp below parent timestamp")
    bootstrap = block.header.height == 0
    if block.header.tx_hash != hash_tx(block.transaction, bootstrap=bootstrap):
        raise BadTxHash("tx_hash does not commit to the block transaction")
