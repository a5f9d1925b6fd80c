"""Proposer scheduling, countersigning, finalization, and fork choice.

A fixed authority set rotates block proposal round-robin.  A block is final
once distinct valid signers (proposer plus countersigners) reach
``floor(N/2) + 1``.  There is no view change: if the scheduled proposer is
down the height stalls until it returns.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ledger
from .errors import (
    BadProposer,
    BadSignature,
    BelowThreshold,
    DuplicateSigner,
    InvariantError,
    NotMyTurn,
)
from .keys import SigningKey, fingerprint, verify_signature
from .ledger import Block, BlockHeader, ProcessTransaction


@dataclass(frozen=True)
class AuthoritySet:
    """Ordered validator set, fixed at genesis (epoch 0, no rotation)."""

    members: tuple  # of (authority_id, public_key, endpoint)
    epoch: int = 0

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(tuple(m) for m in self.members))
        ids = [m[0] for m in self.members]
        if len(self.members) < ledger.MIN_AUTHORITIES:
            raise InvariantError(
                f"authority set needs at least {ledger.MIN_AUTHORITIES} members"
            )
        if len(set(ids)) != len(ids):
            raise InvariantError("authority ids must be unique")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def ids(self) -> tuple:
        return tuple(m[0] for m in self.members)

    def contains(self, authority_id: str) -> bool:
        return authority_id in self.ids

    def public_key(self, authority_id: str) -> bytes:
        for aid, pub, _ in self.members:
            if aid == authority_id:
                return pub
        raise InvariantError(f"unknown authority {authority_id}")

    def endpoint(self, authority_id: str) -> str:
        for aid, _, ep in self.members:
            if aid == authority_id:
                return ep
        raise InvariantError(f"unknown authority {authority_id}")

    @classmethod
    def from_genesis(cls, genesis: Block) -> "AuthoritySet":
        tx = genesis.transaction
        count = tx.param("authority.count")
        if not isinstance(count, int) or count < ledger.MIN_AUTHORITIES:
            raise InvariantError("genesis lacks a valid authority set")
        members = []
        for i in range(count):
            aid = tx.param(f"authority.{i}.id")
            pub = tx.param(f"authority.{i}.pubkey")
            endpoint = tx.param(f"authority.{i}.endpoint", "")
            if not isinstance(aid, str) or not isinstance(pub, bytes):
                raise InvariantError(f"genesis authority {i} malformed")
            if fingerprint(pub) != aid:
                raise InvariantError(f"genesis authority {i} id/key mismatch")
            members.append((aid, pub, endpoint))
        return cls(members=tuple(members))


@dataclass(frozen=True)
class BlockProposal:
    """A block lacking countersignatures; proposer must match the schedule."""

    header: BlockHeader
    transaction: ProcessTransaction
    proposer_signature: bytes

    @property
    def height(self) -> int:
        return self.header.height

    def to_block(self, countersignatures=()) -> Block:
        return Block(
            header=self.header,
            transaction=self.transaction,
            proposer_signature=self.proposer_signature,
            countersignatures=tuple(countersignatures),
        )


@dataclass(frozen=True)
class SignatureShare:
    height: int
    authority_id: str
    signature: bytes


def threshold(n_authorities: int) -> int:
    return n_authorities // 2 + 1


def proposer_for_height(authorities: AuthoritySet, height: int) -> str:
    if height < 1:
        raise InvariantError("heights start at 1; genesis has no proposer schedule")
    return authorities.ids[(height - 1) % len(authorities)]


def propose_block(
    pending: ProcessTransaction,
    head: Block,
    key: SigningKey,
    authorities: AuthoritySet,
    timestamp: int,
) -> BlockProposal:
    """Build and sign the next block; caller has already lifecycle-checked
    ``pending`` against the head state."""
    height = head.header.height + 1
    scheduled = proposer_for_height(authorities, height)
    if key.fingerprint != scheduled:
        raise NotMyTurn(f"height {height} belongs to {scheduled}")
    header = BlockHeader(
        height=height,
        prev_hash=head.block_hash,
        timestamp=max(timestamp, head.header.timestamp),
        proposer=key.fingerprint,
        tx_hash=ledger.hash_tx(pending),
    )
    signature = key.sign(ledger.serialize_header(header))
    return BlockProposal(header=header, transaction=pending, proposer_signature=signature)


def verify_proposal(proposal: BlockProposal, authorities: AuthoritySet) -> None:
    """Structural checks every authority runs before countersigning."""
    scheduled = proposer_for_height(authorities, proposal.header.height)
    if proposal.header.proposer != scheduled:
        raise BadProposer(
            f"proposer {proposal.header.proposer} not scheduled for height {proposal.header.height}"
        )
    if not authorities.contains(proposal.header.proposer):
        raise BadProposer(f"{proposal.header.proposer} is not an authority")
    if proposal.header.tx_hash != ledger.hash_tx(proposal.transaction):
        raise BadSignature("tx hash does not match proposal transaction")
    pub = authorities.public_key(proposal.header.proposer)
    if not verify_signature(pub, ledger.serialize_header(proposal.header), proposal.proposer_signature):
        raise BadSignature("proposer signature does not verify")


def countersign(proposal: BlockProposal, key: SigningKey, authorities: AuthoritySet) -> SignatureShare:
    if not authorities.contains(key.fingerprint):
        raise BadSignature(f"{key.fingerprint} is not an authority")
    if key.fingerprint == proposal.header.proposer:
        raise DuplicateSigner("proposer cannot countersign its own proposal")
    verify_proposal(proposal, authorities)
    return SignatureShare(
        height=proposal.header.height,
        authority_id=key.fingerprint,
        signature=key.sign(ledger.serialize_header(proposal.header)),
    )


def finalize(proposal: BlockProposal, shares, authorities: AuthoritySet) -> Block:
    """Assemble a block once distinct valid signers reach the threshold."""
    header_bytes = ledger.serialize_header(proposal.header)
    seen = {proposal.header.proposer}
    counters = []
    for share in shares:
        if share.authority_id in seen:
            raise DuplicateSigner(f"duplicate signer {share.authority_id}")
        if not authorities.contains(share.authority_id):
            raise BadSignature(f"{share.authority_id} is not an authority")
        if share.height != proposal.header.height:
            raise BadSignature("share height does not match proposal")
        pub = authorities.public_key(share.authority_id)
        if not verify_signature(pub, header_bytes, share.signature):
            raise BadSignature(f"share from {share.authority_id} does not verify")
        seen.add(share.authority_id)
        counters.append((share.authority_id, share.signature))
    if len(seen) < threshold(len(authorities)):
        raise BelowThreshold(
            f"{len(seen)} signers < threshold {threshold(len(authorities))}"
        )
    counters.sort(key=lambda c: c[0])
    return proposal.to_block(countersignatures=tuple(counters))


def validate_block(block: Block, parent: Block, authorities: AuthoritySet) -> None:
    """Full structural + consensus validation of a committed block.

    Raises the distinct error for the first failed rule: bad-link,
    bad-height, bad-timestamp, bad-tx-hash, bad-proposer, bad-signature,
    duplicate-signer, below-threshold.
    """
    ledger.check_header_links(block, parent)
    scheduled = proposer_for_height(authorities, block.header.height)
    if block.header.proposer != scheduled:
        raise BadProposer(
            f"proposer {block.header.proposer} not scheduled for height {block.header.height}"
        )
    header_bytes = ledger.serialize_header(block.header)
    pub = authorities.public_key(block.header.proposer)
    if not verify_signature(pub, header_bytes, block.proposer_signature):
        raise BadSignature("proposer signature does not verify")
    seen = {block.header.proposer}
    for authority_id, signature in block.countersignatures:
        if authority_id in seen:
            raise DuplicateSigner(f"duplicate signer {authority_id}")
        if not authorities.contains(authority_id):
            raise BadSignature(f"countersigner {authority_id} is not an authority")
        if not verify_signature(authorities.public_key(authority_id), header_bytes, signature):
            raise BadSignature(f"countersignature from {authority_id} does not verify")
        seen.add(authority_id)
    if len(seen) < threshold(len(authorities)):
        raise BelowThreshold(
            f"{len(seen)} signers < threshold {threshold(len(authorities))}"
        )


def fork_choice(heads) -> Block:
    """Deterministic, order-independent head selection.

    Max height, then max total signature count, then lexicographically
    smallest block hash.
    """
    heads = list(heads)
    if not heads:
        raise InvariantError("fork_choice requires at least one head")
    return min(
        heads,
        key=lambda b: (-b.header.height, -b.signer_count(), b.block_hash),
    )
