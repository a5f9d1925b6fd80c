"""Append-only block storage surviving restarts.

Segment files hold repeated records of ``[4-byte BE length][canonical block
bytes][4-byte CRC32 of the block bytes, little-endian]`` and rotate at
64 MiB.  The in-memory index is rebuilt by scanning at open; the sidecar
``index.json`` is a derivable cache with no authority.  A partially written
tail record is truncated on recovery; corruption anywhere earlier refuses
to open and demands a resync.  Fork siblings live in an overflow directory
until they fall 128 confirmations behind the head.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

from . import ledger
from .errors import CorruptBeyondTail, HashMismatchOnRead, InvariantError, NotFound
from .ledger import Block

SEGMENT_CAP = 64 * 1024 * 1024
FORK_RETENTION = 128


def _segment_name(n: int) -> str:
    return f"segment-{n:05d}.seg"


def _truncate(path: Path, size: int) -> None:
    with open(path, "r+b") as f:
        f.truncate(size)


class BlockStore:
    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.fork_dir = self.data_dir / "forks"
        self.fork_dir.mkdir(exist_ok=True)
        self.recovered_partial_tail = False
        self._index: list = []  # height -> (segment_path, offset)
        self._hashes: list = []  # height -> block hash recorded at put/scan
        self._by_hash: dict = {}
        self._scan()
        self._current = self._open_current_segment()

    # -- open / recovery -------------------------------------------------------

    def _segments(self) -> list:
        return sorted(self.data_dir.glob("segment-*.seg"))

    def _scan(self) -> None:
        segments = self._segments()
        for seg_i, seg in enumerate(segments):
            is_last_segment = seg_i == len(segments) - 1
            offset = 0
            data = seg.read_bytes()
            while offset < len(data):
                record, next_offset, tail_like = _read_record(data, offset)
                if record is None:
                    if is_last_segment and tail_like:
                        _truncate(seg, offset)
                        self.recovered_partial_tail = True
                        break
                    raise CorruptBeyondTail(
                        f"unreadable record in {seg.name} at offset {offset}"
                    )
                try:
                    block = ledger.deserialize_block(record)
                except Exception:
                    if is_last_segment and next_offset >= len(data):
                        _truncate(seg, offset)
                        self.recovered_partial_tail = True
                        break
                    raise CorruptBeyondTail(
                        f"undecodable record in {seg.name} at offset {offset}"
                    )
                if block.header.height != len(self._index):
                    raise CorruptBeyondTail(
                        f"height gap at {seg.name} offset {offset}: "
                        f"expected {len(self._index)}, got {block.header.height}"
                    )
                self._index.append((seg, offset))
                self._hashes.append(block.block_hash)
                self._by_hash[block.block_hash] = block.header.height
                offset = next_offset

    def _open_current_segment(self):
        segments = self._segments()
        if not segments:
            path = self.data_dir / _segment_name(0)
            path.touch()
        else:
            path = segments[-1]
            if path.stat().st_size >= SEGMENT_CAP:
                path = self.data_dir / _segment_name(len(segments))
                path.touch()
        return open(path, "ab")

    # -- reads -------------------------------------------------------------------

    @property
    def head(self):
        if not self._index:
            return None
        block = self.get_block(height=len(self._index) - 1)
        return block.header.height, block.block_hash

    def __len__(self) -> int:
        return len(self._index)

    def get_block(self, height: int | None = None, block_hash: bytes | None = None) -> Block:
        if height is None:
            if block_hash is None:
                raise InvariantError("need a height or a hash")
            if block_hash not in self._by_hash:
                raise NotFound(f"no block with hash {block_hash.hex()}")
            height = self._by_hash[block_hash]
        if not 0 <= height < len(self._index):
            raise NotFound(f"no block at height {height}")
        seg, offset = self._index[height]
        with open(seg, "rb") as f:
            f.seek(offset)
            header = f.read(4)
            (length,) = struct.unpack(">I", header)
            payload = f.read(length)
            (crc,) = struct.unpack("<I", f.read(4))
        if len(payload) != length or zlib.crc32(payload) != crc:
            raise HashMismatchOnRead(f"CRC failure reading height {height}")
        block = ledger.deserialize_block(payload)
        recomputed = block.block_hash
        if block.header.height != height or recomputed != self._hashes[height]:
            raise HashMismatchOnRead(f"stored block at height {height} does not match")
        bootstrap = height == 0
        if block.header.tx_hash != ledger.hash_tx(block.transaction, bootstrap=bootstrap):
            raise HashMismatchOnRead(f"tx hash mismatch at height {height}")
        return block

    def iter_blocks(self):
        for height in range(len(self._index)):
            yield self.get_block(height=height)

    # -- writes ------------------------------------------------------------------

    def put_block(self, block: Block) -> None:
        if block.header.height != len(self._index):
            raise InvariantError(
                f"puts must append at height {len(self._index)}, got {block.header.height}"
            )
        payload = ledger.serialize_block(block)
        if self._current.tell() >= SEGMENT_CAP:
            self._current.close()
            path = self.data_dir / _segment_name(len(self._segments()))
            self._current = open(path, "ab")
        offset = self._current.tell()
        self._current.write(struct.pack(">I", len(payload)))
        self._current.write(payload)
        self._current.write(struct.pack("<I", zlib.crc32(payload)))
        self._current.flush()
        os.fsync(self._current.fileno())
        self._index.append((Path(self._current.name), offset))
        self._hashes.append(block.block_hash)
        self._by_hash[block.block_hash] = block.header.height

    def put_fork(self, block: Block) -> None:
        payload = ledger.serialize_block(block)
        path = self.fork_dir / f"{block.block_hash.hex()}.blk"
        with open(path, "wb") as f:
            f.write(struct.pack(">I", len(payload)))
            f.write(payload)
            f.write(struct.pack("<I", zlib.crc32(payload)))
            f.flush()
            os.fsync(f.fileno())

    def load_forks(self) -> list:
        out = []
        for path in sorted(self.fork_dir.glob("*.blk")):
            data = path.read_bytes()
            record, _, _ = _read_record(data, 0)
            if record is None:
                continue
            try:
                out.append(ledger.deserialize_block(record))
            except Exception:
                continue
        return out

    def prune_forks(self, head_height: int) -> int:
        pruned = 0
        for block in self.load_forks():
            if block.header.height <= head_height - FORK_RETENTION:
                (self.fork_dir / f"{block.block_hash.hex()}.blk").unlink(missing_ok=True)
                pruned += 1
        return pruned

    def close(self) -> None:
        self._current.flush()
        os.fsync(self._current.fileno())
        self._current.close()
        cache = {
            "head_height": len(self._index) - 1,
            "heights": {str(h): [str(seg), off] for h, (seg, off) in enumerate(self._index)},
        }
        (self.data_dir / "index.json").write_text(json.dumps(cache, indent=1))


def open_store(data_dir: str | Path) -> BlockStore:
    return BlockStore(data_dir)


def _read_record(data: bytes, offset: int):
    """Returns (payload | None, next_offset, tail_like).

    ``tail_like`` is True when a failure looks like a partial tail write:
    the record structure runs past EOF, or its CRC mismatches and nothing
    follows it.  Such damage is recoverable by truncation; anything else
    is corruption beyond the tail.
    """
    if offset + 4 > len(data):
        return None, len(data), True
    (length,) = struct.unpack(">I", data[offset : offset + 4])
    body_end = offset + 4 + length
    if body_end + 4 > len(data):
        return None, len(data), True
    payload = data[offset + 4 : body_end]
    (crc,) = struct.unpack("<I", data[body_end : body_end + 4])
    if zlib.crc32(payload) != crc:
        return None, body_end + 4, body_end + 4 >= len(data)
    return payload, body_end + 4, False
