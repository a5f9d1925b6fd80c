"""Chain state: committed blocks, lot index, actor registry, fork handling.

Append is single-writer; readers take the same coarse lock briefly to
snapshot.  Fork siblings are kept until fork choice abandons them; adopting
a different branch replays it from genesis (desk-scale chains, so a full
replay is cheap and keeps the code obvious).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from decimal import Decimal

from . import consensus, ledger, traceability
from .coldchain import ColdChainPolicy
from .consensus import AuthoritySet
from .errors import BadLink, InvariantError
from .ledger import Block, ChainId, ProcessTransaction
from .traceability import LotIndex, index_block


@dataclass
class ActorRecord:
    actor_id: str
    public_key: bytes
    roles: set
    display_name: str = ""


@dataclass(frozen=True)
class AppendResult:
    duplicate: bool = False
    head_changed: bool = False
    reorged: bool = False


class ChainState:
    """All state derived from the committed chain of one deployment."""

    def __init__(self, genesis: Block):
        if genesis.header.height != 0 or genesis.header.prev_hash != ledger.ZERO_DIGEST:
            raise InvariantError("genesis must be a height-0 block with zero prev_hash")
        self.lock = threading.RLock()
        self.genesis = genesis
        self.chain_id = ChainId(genesis_hash=genesis.block_hash)
        self.authorities = AuthoritySet.from_genesis(genesis)
        self.blocks: dict = {}
        self.canonical: list = []
        self.lot_index = LotIndex()
        self.lot_states: dict = {}
        self.actors: dict = {}
        self.policy = _policy_from_genesis(genesis)
        self._adopt_branch([genesis])

    # -- read accessors ------------------------------------------------------

    @property
    def head(self) -> Block:
        with self.lock:
            return self.blocks[self.canonical[-1]]

    @property
    def height(self) -> int:
        with self.lock:
            return len(self.canonical) - 1

    def block_at(self, height: int) -> Block | None:
        with self.lock:
            if 0 <= height < len(self.canonical):
                return self.blocks[self.canonical[height]]
            return None

    def block_by_hash(self, block_hash: bytes) -> Block | None:
        with self.lock:
            block = self.blocks.get(block_hash)
            if block is None:
                return None
            # only canonical blocks are served as committed
            h = block.header.height
            if h < len(self.canonical) and self.canonical[h] == block_hash:
                return block
            return None

    def actor(self, actor_id: str) -> ActorRecord | None:
        with self.lock:
            return self.actors.get(actor_id)

    # -- validation ----------------------------------------------------------

    def validate_submission(self, tx: ProcessTransaction) -> None:
        """Shape + lifecycle against the current head state."""
        with self.lock:
            ledger.validate_tx_shape(tx)
            traceability.lot_lifecycle_validate(
                tx, self.lot_index, self.lot_states, self.authorities.ids
            )

    def validate_block_full(self, block: Block) -> None:
        """Consensus rules plus business rules at the trust boundary."""
        with self.lock:
            parent = self.blocks.get(block.header.prev_hash)
            if parent is None:
                raise BadLink("unknown parent block")
            consensus.validate_block(block, parent, self.authorities)
            index, states = self._state_at(parent)
            traceability.lot_lifecycle_validate(
                block.transaction, index, states, self.authorities.ids
            )

    # -- append --------------------------------------------------------------

    def append(self, block: Block) -> AppendResult:
        with self.lock:
            if block.block_hash in self.blocks:
                return AppendResult(duplicate=True)
            self.validate_block_full(block)
            self.blocks[block.block_hash] = block

            old_head = self.head
            extends_head = block.header.prev_hash == old_head.block_hash
            if extends_head:
                candidate = block
            else:
                candidate = consensus.fork_choice([old_head, block])
            if candidate.block_hash == old_head.block_hash:
                return AppendResult()  # stored as a fork sibling

            if extends_head:
                self.canonical.append(block.block_hash)
                self._apply_block(block)
                return AppendResult(head_changed=True)

            self._adopt_branch(self._branch_of(block))
            return AppendResult(head_changed=True, reorged=True)

    # -- internals -------------------------------------------------------------

    def _branch_of(self, tip: Block) -> list:
        branch = [tip]
        while branch[-1].header.height > 0:
            parent = self.blocks.get(branch[-1].header.prev_hash)
            if parent is None:
                raise BadLink("branch has an unknown ancestor")
            branch.append(parent)
        branch.reverse()
        return branch

    def _adopt_branch(self, branch: list) -> None:
        self.canonical = []
        self.lot_index = LotIndex()
        self.lot_states = {}
        self.actors = {}
        for block in branch:
            self.blocks[block.block_hash] = block
            self.canonical.append(block.block_hash)
            self._apply_block(block)

    def _apply_block(self, block: Block) -> None:
        index_block(self.lot_index, block)
        if block.header.height > 0:
            traceability.apply_lot_transitions(block.transaction, self.lot_states)
        self._apply_grants(block)

    def _apply_grants(self, block: Block) -> None:
        tx = block.transaction
        if block.header.height == 0:
            prefix = "actor."
        elif traceability.is_admin_grant(tx):
            prefix = "grant."
        else:
            return
        fingerprints = set()
        for key, _ in tx.parameters:
            if key.startswith(prefix) and key.endswith(".pubkey"):
                fingerprints.add(key[len(prefix) : -len(".pubkey")])
        for fp in sorted(fingerprints):
            pub = tx.param(f"{prefix}{fp}.pubkey")
            roles_text = tx.param(f"{prefix}{fp}.roles", "")
            name = tx.param(f"{prefix}{fp}.name", "")
            if not isinstance(pub, bytes):
                continue
            roles = set()
            for part in roles_text.split(","):
                part = part.strip()
                if part:
                    roles.add(ledger.Role.from_json(part))
            self.actors[fp] = ActorRecord(
                actor_id=fp, public_key=pub, roles=roles, display_name=name
            )

    def _state_at(self, parent: Block):
        """Lot index and states as of ``parent`` (head fast path, else replay)."""
        if parent.block_hash == self.canonical[-1]:
            return self.lot_index, self.lot_states
        branch = self._branch_of(parent)
        index = LotIndex()
        states: dict = {}
        for block in branch:
            index_block(index, block)
            if block.header.height > 0:
                traceability.apply_lot_transitions(block.transaction, states)
        return index, states


def _policy_from_genesis(genesis: Block) -> ColdChainPolicy | None:
    tx = genesis.transaction
    min_temp = tx.param("coldchain.min_temp")
    max_temp = tx.param("coldchain.max_temp")
    cap = tx.param("coldchain.max_excursion_seconds")
    if min_temp is None or max_temp is None or cap is None:
        return None
    return ColdChainPolicy(
        min_temp=Decimal(min_temp), max_temp=Decimal(max_temp), max_excursion_seconds=cap
    )
