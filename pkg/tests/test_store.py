import struct
import zlib
from pathlib import Path

import pytest

import biotrak.store as store_mod
from biotrak.chain import ChainState
from biotrak.errors import CorruptBeyondTail, HashMismatchOnRead, InvariantError, NotFound
from biotrak.store import BlockStore
from biotrak.txbuild import DirectChain, inbound_receipt


def build_blocks(genesis, authority_keys, producer_key, n):
    state = ChainState(genesis)
    chain = DirectChain(state, authority_keys)
    blocks = [genesis]
    for i in range(n):
        blocks.append(chain.commit(
            inbound_receipt(producer_key.fingerprint, [f"ST-{i}"], f"DN-{i}",
                            created_at=1_700_000_001 + i)
        ))
    return blocks


@pytest.fixture(scope="module")
def hundred_blocks(genesis, authority_keys, producer_key):
    return build_blocks(genesis, authority_keys, producer_key, 100)


class TestOpen:
    def test_fresh_dir_empty(self, tmp_path):
        store = BlockStore(tmp_path / "data")
        assert store.head is None
        assert len(store) == 0
        assert not store.recovered_partial_tail

    def test_reopen_identical_head(self, tmp_path, hundred_blocks):
        store = BlockStore(tmp_path)
        for block in hundred_blocks:
            store.put_block(block)
        head = store.head
        store.close()
        reopened = BlockStore(tmp_path)
        assert reopened.head == head
        assert len(reopened) == 101

    def test_truncated_tail_recovers(self, tmp_path, hundred_blocks):
        store = BlockStore(tmp_path)
        for block in hundred_blocks:
            store.put_block(block)
        store.close()
        seg = sorted(Path(tmp_path).glob("segment-*.seg"))[-1]
        data = seg.read_bytes()
        seg.write_bytes(data[:-7])  # cut into the final record
        reopened = BlockStore(tmp_path)
        assert reopened.recovered_partial_tail
        assert reopened.head[0] == 99
        assert reopened.get_block(height=99).header.height == 99

    def test_non_tail_corruption_refuses_open(self, tmp_path, hundred_blocks):
        store = BlockStore(tmp_path)
        for block in hundred_blocks:
            store.put_block(block)
        store.close()
        seg = sorted(Path(tmp_path).glob("segment-*.seg"))[0]
        data = bytearray(seg.read_bytes())
        data[len(data) // 2] ^= 0xFF  # mid-file damage
        seg.write_bytes(bytes(data))
        with pytest.raises(CorruptBeyondTail):
            BlockStore(tmp_path)


class TestPutGet:
    def test_put_then_get(self, tmp_path, genesis, authority_keys, producer_key):
        blocks = build_blocks(genesis, authority_keys, producer_key, 3)
        store = BlockStore(tmp_path)
        for block in blocks:
            store.put_block(block)
        assert store.get_block(height=2) == blocks[2]
        assert store.get_block(block_hash=blocks[3].block_hash) == blocks[3]

    def test_unknown_lookups(self, tmp_path, genesis):
        store = BlockStore(tmp_path)
        store.put_block(genesis)
        with pytest.raises(NotFound):
            store.get_block(height=5)
        with pytest.raises(NotFound):
            store.get_block(block_hash=b"\xab" * 32)

    def test_out_of_order_put_refused(self, tmp_path, genesis, authority_keys, producer_key):
        blocks = build_blocks(genesis, authority_keys, producer_key, 2)
        store = BlockStore(tmp_path)
        store.put_block(blocks[0])
        with pytest.raises(InvariantError):
            store.put_block(blocks[2])

    def test_flipped_byte_detected_on_read(self, tmp_path, genesis):
        # bit rot under an open store: the CRC catches it at read time
        store = BlockStore(tmp_path)
        store.put_block(genesis)
        seg = sorted(Path(tmp_path).glob("segment-*.seg"))[0]
        data = bytearray(seg.read_bytes())
        data[40] ^= 0x01
        seg.write_bytes(bytes(data))
        with pytest.raises(HashMismatchOnRead):
            store.get_block(height=0)

    def test_recomputed_crc_still_caught_by_hash(self, tmp_path, genesis):
        # an attacker who fixes the CRC is caught by block-hash re-verification
        store = BlockStore(tmp_path)
        store.put_block(genesis)
        seg = sorted(Path(tmp_path).glob("segment-*.seg"))[0]
        data = bytearray(seg.read_bytes())
        (length,) = struct.unpack(">I", data[:4])
        payload = bytearray(data[4 : 4 + length])
        # flip a byte inside the embedded header (prev_hash region)
        payload[20] ^= 0x01
        data[4 : 4 + length] = payload
        data[4 + length : 8 + length] = struct.pack("<I", zlib.crc32(bytes(payload)))
        seg.write_bytes(bytes(data))
        with pytest.raises(HashMismatchOnRead):
            store.get_block(height=0)

    def test_tail_bitrot_truncated_on_reopen(self, tmp_path, genesis):
        # damage to the final record is indistinguishable from a torn write
        store = BlockStore(tmp_path)
        store.put_block(genesis)
        store.close()
        seg = sorted(Path(tmp_path).glob("segment-*.seg"))[0]
        data = bytearray(seg.read_bytes())
        data[40] ^= 0x01
        seg.write_bytes(bytes(data))
        reopened = BlockStore(tmp_path)
        assert reopened.recovered_partial_tail
        assert len(reopened) == 0


class TestDurability:
    def test_survives_abandon_without_close(self, tmp_path, hundred_blocks):
        written = 0
        for batch_end in range(1, 20):
            store = BlockStore(tmp_path)
            assert len(store) == written
            for block in hundred_blocks[written : written + 3]:
                store.put_block(block)
                written += 1
            # no close(): simulates a crash right after the fsync'd put
        final = BlockStore(tmp_path)
        assert len(final) == written
        for h in range(written):
            assert final.get_block(height=h) == hundred_blocks[h]


class TestSegments:
    def test_rotation_and_rescan(self, tmp_path, hundred_blocks, monkeypatch):
        monkeypatch.setattr(store_mod, "SEGMENT_CAP", 4096)
        store = BlockStore(tmp_path)
        for block in hundred_blocks[:40]:
            store.put_block(block)
        store.close()
        segments = sorted(Path(tmp_path).glob("segment-*.seg"))
        assert len(segments) > 1
        reopened = BlockStore(tmp_path)
        assert len(reopened) == 40
        assert reopened.get_block(height=39) == hundred_blocks[39]


class TestForks:
    def test_fork_overflow_and_prune(self, tmp_path, hundred_blocks):
        store = BlockStore(tmp_path)
        for block in hundred_blocks[:5]:
            store.put_block(block)
        sibling = hundred_blocks[60]  # arbitrary block standing in for a fork
        store.put_fork(sibling)
        loaded = store.load_forks()
        assert loaded == [sibling]
        assert store.prune_forks(sibling.header.height + store_mod.FORK_RETENTION) == 1
        assert store.load_forks() == []
