import pytest

from conftest import det_key

from biotrak import netsync
from biotrak.chain import ChainState
from biotrak.consensus import SignatureShare, propose_block
from biotrak.errors import AuthorityImpersonation, ChainMismatch, SerializationError
from biotrak.netsync import (
    BlockAnnounce,
    BlockRequest,
    BlockResponse,
    Hello,
    NodeMode,
    Proposal,
    Share,
    TxSubmit,
    decode_message,
    encode_message,
    handshake,
    make_hello,
)
from biotrak.txbuild import inbound_receipt, sign_submission


class TestCodecs:
    def test_hello_round_trip(self, genesis, authority_keys):
        hello = make_hello(genesis.block_hash, NodeMode.AUTHORITATIVE, 7, 1_700_000_000,
                           key=authority_keys[0])
        assert decode_message(encode_message(hello)) == hello

    def test_replica_hello_round_trip(self, genesis):
        hello = make_hello(genesis.block_hash, NodeMode.NON_AUTHORITATIVE, 0, 5)
        assert decode_message(encode_message(hello)) == hello

    def test_block_announce_round_trip(self, genesis):
        msg = BlockAnnounce(block=genesis)
        assert decode_message(encode_message(msg)) == msg

    def test_block_request_round_trip(self):
        msg = BlockRequest(from_height=3, to_height=515)
        assert decode_message(encode_message(msg)) == msg

    def test_block_request_window_cap(self):
        with pytest.raises(SerializationError):
            encode_message(BlockRequest(from_height=0, to_height=513))

    def test_block_response_round_trip(self, genesis, chain, state, producer_key):
        block = chain.commit(inbound_receipt(producer_key.fingerprint, ["NS-1"], "DN-1",
                                             created_at=1_700_000_001))
        msg = BlockResponse(blocks=(genesis, block))
        assert decode_message(encode_message(msg)) == msg

    def test_tx_submit_round_trip(self, producer_key):
        tx = inbound_receipt(producer_key.fingerprint, ["NS-2"], "DN-1", created_at=2)
        msg = TxSubmit(tx=tx, submitter_id=producer_key.fingerprint,
                       signature=sign_submission(tx, producer_key))
        assert decode_message(encode_message(msg)) == msg

    def test_proposal_and_share_round_trip(self, genesis, state, authority_keys, producer_key):
        tx = inbound_receipt(producer_key.fingerprint, ["NS-3"], "DN-1", created_at=2)
        proposal = propose_block(tx, genesis, authority_keys[0], state.authorities,
                                 1_700_000_002)
        msg = Proposal(proposal=proposal)
        assert decode_message(encode_message(msg)) == msg
        share = Share(share=SignatureShare(height=1, authority_id="ab" * 8,
                                           signature=b"\x11" * 64))
        assert decode_message(encode_message(share)) == share

    def test_frame_length_mismatch(self, genesis):
        frame = encode_message(BlockAnnounce(block=genesis))
        with pytest.raises(SerializationError):
            decode_message(frame + b"\x00")

    def test_unknown_tag(self):
        with pytest.raises(SerializationError):
            netsync.decode_payload(99, b"")


class TestHandshake:
    def test_matching_replica_admitted(self, genesis, state):
        hello = make_hello(genesis.block_hash, NodeMode.NON_AUTHORITATIVE, 4, 100)
        session = handshake(genesis.block_hash, state.authorities, "peer-1", hello, 100)
        assert session.mode == NodeMode.NON_AUTHORITATIVE
        assert session.head_height == 4
        assert session.authority_id is None

    def test_chain_mismatch(self, genesis, state):
        hello = make_hello(b"\x12" * 32, NodeMode.NON_AUTHORITATIVE, 0, 100)
        with pytest.raises(ChainMismatch):
            handshake(genesis.block_hash, state.authorities, "peer-1", hello, 100)

    def test_authority_hello_admitted(self, genesis, state, authority_keys):
        hello = make_hello(genesis.block_hash, NodeMode.AUTHORITATIVE, 9, 100,
                           key=authority_keys[1])
        session = handshake(genesis.block_hash, state.authorities, "peer-2", hello, 150)
        assert session.authority_id == authority_keys[1].fingerprint

    def test_non_authority_key_impersonation(self, genesis, state):
        forger = det_key(911)
        hello = make_hello(genesis.block_hash, NodeMode.AUTHORITATIVE, 9, 100, key=forger)
        with pytest.raises(AuthorityImpersonation):
            handshake(genesis.block_hash, state.authorities, "peer-3", hello, 100)

    def test_forged_signature_impersonation(self, genesis, state, authority_keys):
        real = make_hello(genesis.block_hash, NodeMode.AUTHORITATIVE, 9, 100,
                          key=authority_keys[0])
        forged = Hello(
            chain_id=real.chain_id, mode=real.mode, head_height=real.head_height + 1,
            authority_id=real.authority_id, timestamp=real.timestamp,
            signature=real.signature,
        )
        with pytest.raises(AuthorityImpersonation):
            handshake(genesis.block_hash, state.authorities, "peer-4", forged, 100)

    def test_stale_authority_hello(self, genesis, state, authority_keys):
        hello = make_hello(genesis.block_hash, NodeMode.AUTHORITATIVE, 9, 100,
                           key=authority_keys[0])
        with pytest.raises(AuthorityImpersonation):
            handshake(genesis.block_hash, state.authorities, "peer-5", hello, 100_000)
