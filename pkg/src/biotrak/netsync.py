"""Peer wire protocol: framing, message codecs, and session handshake.

Framing is a 4-byte big-endian payload length, a 1-byte message-type tag
(Hello=1, BlockAnnounce=2, BlockRequest=3, BlockResponse=4, TxSubmit=5,
Proposal=6, Share=7), then the canonical payload bytes.  Authoritative
peers prove their identity inside Hello with a timestamped signature from
an authority-set key; read-only replicas are admitted with a matching
chain id alone.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass

from . import ledger
from .consensus import AuthoritySet, BlockProposal, SignatureShare
from .errors import (
    AuthorityImpersonation,
    ChainMismatch,
    SerializationError,
)
from .keys import SigningKey, verify_signature
from .ledger import Block, ProcessTransaction

SYNC_WINDOW = 512
HELLO_MAX_SKEW = 300


class NodeMode(enum.IntEnum):
    AUTHORITATIVE = 1
    NON_AUTHORITATIVE = 2


@dataclass(frozen=True)
class Hello:
    chain_id: bytes
    mode: NodeMode
    head_height: int
    authority_id: str | None = None
    timestamp: int = 0
    signature: bytes | None = None


@dataclass(frozen=True)
class BlockAnnounce:
    block: Block


@dataclass(frozen=True)
class BlockRequest:
    from_height: int
    to_height: int


@dataclass(frozen=True)
class BlockResponse:
    blocks: tuple


@dataclass(frozen=True)
class TxSubmit:
    tx: ProcessTransaction
    submitter_id: str
    signature: bytes


@dataclass(frozen=True)
class Proposal:
    proposal: BlockProposal


@dataclass(frozen=True)
class Share:
    share: SignatureShare


_TAGS = {
    Hello: 1,
    BlockAnnounce: 2,
    BlockRequest: 3,
    BlockResponse: 4,
    TxSubmit: 5,
    Proposal: 6,
    Share: 7,
}


class PeerSession:
    """One verified peer; ``head_height`` tracks the peer's announced head."""

    def __init__(self, peer_id: str, mode: NodeMode, chain_id: bytes, head_height: int,
                 authority_id: str | None = None):
        self.peer_id = peer_id
        self.mode = mode
        self.chain_id = chain_id
        self.head_height = head_height
        self.authority_id = authority_id


def hello_challenge(chain_id: bytes, mode: NodeMode, head_height: int, timestamp: int) -> bytes:
    return hashlib.sha256(
        b"biotrak-hello"
        + chain_id
        + bytes([int(mode)])
        + struct.pack(">Q", head_height)
        + struct.pack(">Q", timestamp)
    ).digest()


def make_hello(chain_id: bytes, mode: NodeMode, head_height: int, now: int,
               key: SigningKey | None = None) -> Hello:
    if mode == NodeMode.AUTHORITATIVE:
        if key is None:
            raise AuthorityImpersonation("authoritative hello requires a signing key")
        sig = key.sign(hello_challenge(chain_id, mode, head_height, now))
        return Hello(chain_id, mode, head_height, key.fingerprint, now, sig)
    return Hello(chain_id, mode, head_height, None, now, None)


def handshake(local_chain_id: bytes, authorities: AuthoritySet, peer_id: str,
              hello: Hello, now: int) -> PeerSession:
    """Admit a peer: chain ids must match; authority claims must verify."""
    if hello.chain_id != local_chain_id:
        raise ChainMismatch(
            f"peer follows chain {hello.chain_id.hex()[:8]}, local is {local_chain_id.hex()[:8]}"
        )
    authority_id = None
    if hello.mode == NodeMode.AUTHORITATIVE:
        if (
            hello.authority_id is None
            or hello.signature is None
            or not authorities.contains(hello.authority_id)
        ):
            raise AuthorityImpersonation("peer claims authority without a set key")
        if abs(now - hello.timestamp) > HELLO_MAX_SKEW:
            raise AuthorityImpersonation("stale authority hello")
        challenge = hello_challenge(hello.chain_id, hello.mode, hello.head_height, hello.timestamp)
        pub = authorities.public_key(hello.authority_id)
        if not verify_signature(pub, challenge, hello.signature):
            raise AuthorityImpersonation("authority hello signature does not verify")
        authority_id = hello.authority_id
    return PeerSession(
        peer_id=peer_id,
        mode=hello.mode,
        chain_id=hello.chain_id,
        head_height=hello.head_height,
        authority_id=authority_id,
    )


# ---------------------------------------------------------------------------
# codecs

def _enc_optional_blob(b: bytes | None) -> bytes:
    if b is None:
        return b"\x00"
    return b"\x01" + struct.pack(">I", len(b)) + b


def _enc_optional_str(s: str | None) -> bytes:
    return _enc_optional_blob(None if s is None else s.encode("utf-8"))


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SerializationError("truncated wire payload", offset=self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def string(self) -> str:
        return self.blob().decode("utf-8")

    def opt_blob(self) -> bytes | None:
        return self.blob() if self.u8() else None

    def opt_str(self) -> str | None:
        b = self.opt_blob()
        return None if b is None else b.decode("utf-8")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise SerializationError("trailing bytes in wire payload", offset=self.pos)


def _blob(b: bytes) -> bytes:
    return struct.pack(">I", len(b)) + b


def _string(s: str) -> bytes:
    return _blob(s.encode("utf-8"))


def _encode_proposal(p: BlockProposal) -> bytes:
    return (
        _blob(ledger.serialize_header(p.header))
        + _blob(ledger.canonical_serialize(p.transaction))
        + _blob(p.proposer_signature)
    )


def _decode_proposal(c: _Cursor) -> BlockProposal:
    header = ledger.deserialize_header(c.blob())
    tx = ledger.deserialize_tx(c.blob())
    sig = c.blob()
    return BlockProposal(header=header, transaction=tx, proposer_signature=sig)


def encode_payload(msg) -> bytes:
    if isinstance(msg, Hello):
        return (
            msg.chain_id
            + bytes([int(msg.mode)])
            + struct.pack(">Q", msg.head_height)
            + _enc_optional_str(msg.authority_id)
            + struct.pack(">Q", msg.timestamp)
            + _enc_optional_blob(msg.signature)
        )
    if isinstance(msg, BlockAnnounce):
        return ledger.serialize_block(msg.block)
    if isinstance(msg, BlockRequest):
        if msg.to_height - msg.from_height > SYNC_WINDOW:
            raise SerializationError(f"block request window exceeds {SYNC_WINDOW}")
        return struct.pack(">QQ", msg.from_height, msg.to_height)
    if isinstance(msg, BlockResponse):
        out = [struct.pack(">I", len(msg.blocks))]
        for block in msg.blocks:
            out.append(_blob(ledger.serialize_block(block)))
        return b"".join(out)
    if isinstance(msg, TxSubmit):
        return _blob(ledger.canonical_serialize(msg.tx)) + _string(msg.submitter_id) + _blob(msg.signature)
    if isinstance(msg, Proposal):
        return _encode_proposal(msg.proposal)
    if isinstance(msg, Share):
        s = msg.share
        return struct.pack(">Q", s.height) + _string(s.authority_id) + _blob(s.signature)
    raise SerializationError(f"cannot encode {type(msg).__name__}")


def decode_payload(tag: int, payload: bytes):
    c = _Cursor(payload)
    if tag == 1:
        chain_id = c.take(32)
        mode = NodeMode(c.u8())
        head_height = c.u64()
        authority_id = c.opt_str()
        timestamp = c.u64()
        signature = c.opt_blob()
        c.done()
        return Hello(chain_id, mode, head_height, authority_id, timestamp, signature)
    if tag == 2:
        return BlockAnnounce(block=ledger.deserialize_block(payload))
    if tag == 3:
        from_height, to_height = struct.unpack(">QQ", payload)
        if to_height - from_height > SYNC_WINDOW:
            raise SerializationError(f"block request window exceeds {SYNC_WINDOW}")
        return BlockRequest(from_height, to_height)
    if tag == 4:
        blocks = tuple(ledger.deserialize_block(c.blob()) for _ in range(c.u32()))
        c.done()
        return BlockResponse(blocks)
    if tag == 5:
        tx = ledger.deserialize_tx(c.blob())
        submitter = c.string()
        sig = c.blob()
        c.done()
        return TxSubmit(tx, submitter, sig)
    if tag == 6:
        proposal = _decode_proposal(c)
        c.done()
        return Proposal(proposal)
    if tag == 7:
        height = c.u64()
        authority_id = c.string()
        sig = c.blob()
        c.done()
        return Share(SignatureShare(height=height, authority_id=authority_id, signature=sig))
    raise SerializationError(f"unknown message tag {tag}")


def encode_message(msg) -> bytes:
    tag = _TAGS[type(msg)]
    payload = encode_payload(msg)
    return struct.pack(">I", len(payload)) + bytes([tag]) + payload


def decode_message(frame: bytes):
    if len(frame) < 5:
        raise SerializationError("frame too short")
    (length,) = struct.unpack(">I", frame[:4])
    if len(frame) != 5 + length:
        raise SerializationError("frame length mismatch")
    return decode_payload(frame[4], frame[5:])
