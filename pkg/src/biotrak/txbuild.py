"""Convenience constructors for process transactions and direct chains.

``DirectChain`` drives the full propose/countersign/finalize path without
any networking; tests, seed scripts, and fixtures use it to commit
transactions in one call.
"""

from __future__ import annotations

import os

from . import consensus
from .chain import ChainState
from .keys import SigningKey
from .ledger import Block, ProcessTransaction, ProcessType, Role, canonical_serialize


def new_tx_id(rng=None) -> bytes:
    if rng is not None:
        return bytes(rng.randrange(256) for _ in range(16))
    return os.urandom(16)


def inbound_receipt(actor_id: str, lots, note: str, created_at: int = 0, rng=None,
                    parameters=()) -> ProcessTransaction:
    return ProcessTransaction(
        tx_id=new_tx_id(rng), process_type=ProcessType.INBOUND_RECEIPT,
        actor_id=actor_id, role=Role.PRODUCER, input_lots=tuple(lots),
        delivery_note=note, created_at=created_at, parameters=parameters,
    )


def production(actor_id: str, inputs, output: str, created_at: int = 0, rng=None,
               parameters=(), supersedes: bytes | None = None) -> ProcessTransaction:
    return ProcessTransaction(
        tx_id=new_tx_id(rng), process_type=ProcessType.PRODUCTION,
        actor_id=actor_id, role=Role.PRODUCER, input_lots=tuple(inputs),
        output_lot=output, created_at=created_at, parameters=parameters,
        supersedes=supersedes,
    )


def transport_start(actor_id: str, lots, created_at: int = 0, rng=None,
                    parameters=()) -> ProcessTransaction:
    return ProcessTransaction(
        tx_id=new_tx_id(rng), process_type=ProcessType.TRANSPORT_START,
        actor_id=actor_id, role=Role.TRANSPORTER, input_lots=tuple(lots),
        created_at=created_at, parameters=parameters,
    )


def transport_end(actor_id: str, lots, start_tx_id: bytes, created_at: int = 0,
                  rng=None, sensor_series: bytes | None = None,
                  parameters=()) -> ProcessTransaction:
    return ProcessTransaction(
        tx_id=new_tx_id(rng), process_type=ProcessType.TRANSPORT_END,
        actor_id=actor_id, role=Role.TRANSPORTER, input_lots=tuple(lots),
        transport_ref=start_tx_id, sensor_series=sensor_series,
        created_at=created_at, parameters=parameters,
    )


def outbound_delivery(actor_id: str, lots, note: str, created_at: int = 0, rng=None,
                      parameters=()) -> ProcessTransaction:
    return ProcessTransaction(
        tx_id=new_tx_id(rng), process_type=ProcessType.OUTBOUND_DELIVERY,
        actor_id=actor_id, role=Role.PRODUCER, input_lots=tuple(lots),
        delivery_note=note, created_at=created_at, parameters=parameters,
    )


def sign_submission(tx: ProcessTransaction, key: SigningKey) -> bytes:
    return key.sign(canonical_serialize(tx))


class DirectChain:
    """Commit transactions straight through consensus with local keys."""

    def __init__(self, state: ChainState, authority_keys):
        self.state = state
        self.keys = {k.fingerprint: k for k in authority_keys}

    def commit(self, tx: ProcessTransaction, timestamp: int | None = None) -> Block:
        head = self.state.head
        height = head.header.height + 1
        proposer_id = consensus.proposer_for_height(self.state.authorities, height)
        proposer = self.keys[proposer_id]
        self.state.validate_submission(tx)
        ts = timestamp if timestamp is not None else max(tx.created_at, head.header.timestamp)
        proposal = consensus.propose_block(tx, head, proposer, self.state.authorities, ts)
        shares = []
        for fp, key in self.keys.items():
            if fp == proposer_id:
                continue
            shares.append(consensus.countersign(proposal, key, self.state.authorities))
        block = consensus.finalize(proposal, shares, self.state.authorities)
        self.state.append(block)
        return block
