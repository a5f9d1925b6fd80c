"""Node engine: mempool, proposal rounds, block ingestion, replica sync.

The engine is transport-agnostic: ``handle_message``/``tick`` consume
events and queue ``(peer_id, message)`` pairs on ``outbox`` for whatever
transport drives the node (the in-process simulator in tests, TCP in
deployments).  All state mutation happens on the caller's single event
thread; the HTTP layer only calls the explicitly thread-safe entry points.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from . import consensus, netsync
from .chain import ChainState
from .errors import BiotrakError, LifecycleError, NotMyTurn, Unavailable
from .keys import SigningKey
from .ledger import Block, ProcessTransaction, canonical_serialize
from .netsync import (
    BlockAnnounce,
    BlockRequest,
    BlockResponse,
    Hello,
    NodeMode,
    Proposal,
    Share,
    SYNC_WINDOW,
    TxSubmit,
)

log = logging.getLogger("biotrak.node")

MIN_REACHABLE_AUTHORITIES = 3
REQUEST_TIMEOUT = 2.0
MAX_SYNC_ATTEMPTS = 3
REFLOOD_AGE = 2.0
MEMPOOL_CAP = 4096


@dataclass
class NodeConfig:
    node_id: str
    mode: NodeMode
    key: SigningKey | None = None
    peers: tuple = ()


@dataclass(frozen=True)
class SubmitReceipt:
    tx_id: bytes
    status: str  # accepted | queued | rejected
    error: str | None = None
    error_message: str | None = None


@dataclass
class _PendingProposal:
    proposal: consensus.BlockProposal
    tx_id: bytes
    shares: dict = field(default_factory=dict)
    last_sent: float = 0.0


@dataclass
class _MempoolEntry:
    tx: ProcessTransaction
    submitter_id: str
    signature: bytes
    received_at: float
    last_flooded: float = 0.0


@dataclass
class _Inflight:
    to_height: int
    attempts: int
    deadline: float


class Node:
    def __init__(self, config: NodeConfig, genesis: Block, store=None, clock=None):
        self.config = config
        self.clock = clock or time.time
        self.state = ChainState(genesis)
        self.store = store
        self.mode = config.mode
        self.key = config.key
        if self.mode == NodeMode.AUTHORITATIVE:
            if self.key is None:
                raise BiotrakError("authoritative nodes need a signing key")
            if not self.state.authorities.contains(self.key.fingerprint):
                raise BiotrakError(
                    f"key {self.key.fingerprint} is not in the chain's authority set"
                )
        self.sessions: dict = {}
        self.known_peers: set = set(config.peers)
        self.last_hello_sent: dict = {}
        self.quarantined: set = set()
        self.mempool: dict = {}
        self.pending: _PendingProposal | None = None
        self.countersigned: dict = {}  # height -> header hash we signed
        self.sync_inflight: dict = {}
        self.outbox: list = []
        self.degraded_alarm = False
        if store is not None:
            self._load_store(store)
            if len(store) == 0:
                store.put_block(genesis)

    # -- identity ----------------------------------------------------------------

    @property
    def authority_id(self) -> str | None:
        return self.key.fingerprint if self.key else None

    @property
    def chain_id(self) -> bytes:
        return self.state.chain_id.genesis_hash

    def _load_store(self, store) -> None:
        for block in store.iter_blocks():
            if block.header.height == 0:
                if block.block_hash != self.chain_id:
                    raise BiotrakError("stored chain does not match the genesis file")
                continue
            self.state.append(block)

    # -- outbound helpers ----------------------------------------------------------

    def _send(self, peer_id: str, msg) -> None:
        self.outbox.append((peer_id, msg))

    def _hello(self) -> Hello:
        return netsync.make_hello(
            self.chain_id,
            self.mode,
            self.state.height,
            int(self.clock()),
            key=self.key if self.mode == NodeMode.AUTHORITATIVE else None,
        )

    def on_peer_connected(self, peer_id: str) -> None:
        if peer_id in self.quarantined:
            return
        self.known_peers.add(peer_id)
        self._greet(peer_id)

    def _greet(self, peer_id: str, min_gap: float = 0.0) -> None:
        now = self.clock()
        last = self.last_hello_sent.get(peer_id)
        if last is not None and now - last < min_gap:
            return
        self.last_hello_sent[peer_id] = now
        self._send(peer_id, self._hello())

    def on_peer_disconnected(self, peer_id: str) -> None:
        self.sessions.pop(peer_id, None)
        self.last_hello_sent.pop(peer_id, None)
        self.sync_inflight.pop(peer_id, None)

    def _quarantine(self, peer_id: str, why: str) -> None:
        log.warning("quarantining peer %s: %s", peer_id, why)
        self.quarantined.add(peer_id)
        self.on_peer_disconnected(peer_id)

    # -- message handling ------------------------------------------------------------

    def handle_message(self, peer_id: str, msg) -> None:
        if peer_id in self.quarantined:
            return
        try:
            if isinstance(msg, Hello):
                self._on_hello(peer_id, msg)
            elif isinstance(msg, BlockAnnounce):
                self._on_announce(peer_id, msg)
            elif isinstance(msg, BlockRequest):
                self._on_block_request(peer_id, msg)
            elif isinstance(msg, BlockResponse):
                self._on_block_response(peer_id, msg)
            elif isinstance(msg, TxSubmit):
                self._on_tx_submit(peer_id, msg)
            elif isinstance(msg, Proposal):
                self._on_proposal(peer_id, msg)
            elif isinstance(msg, Share):
                self._on_share(peer_id, msg)
        except BiotrakError as exc:
            self._quarantine(peer_id, str(exc))

    def _on_hello(self, peer_id: str, hello: Hello) -> None:
        session = netsync.handshake(
            self.chain_id, self.state.authorities, peer_id, hello, int(self.clock())
        )
        self.sessions[peer_id] = session
        self.known_peers.add(peer_id)
        # answer unless our own greeting just went out; covers lost replies
        self._greet(peer_id, min_gap=0.2)
        if session.head_height > self.state.height:
            self._request_blocks(peer_id, session.head_height)

    def _on_announce(self, peer_id: str, msg: BlockAnnounce) -> None:
        session = self.sessions.get(peer_id)
        block = msg.block
        if session is not None:
            if session.mode == NodeMode.NON_AUTHORITATIVE:
                self._quarantine(peer_id, "read-only peer announced a block")
                return
            session.head_height = max(session.head_height, block.header.height)
        if block.header.height > self.state.height + 1:
            self._request_blocks(peer_id, block.header.height)
            return
        self._ingest(peer_id, block)

    def _on_block_request(self, peer_id: str, msg: BlockRequest) -> None:
        from_h = max(0, msg.from_height)
        to_h = min(msg.to_height, self.state.height, from_h + SYNC_WINDOW)
        blocks = []
        for h in range(from_h, to_h + 1):
            block = self.state.block_at(h)
            if block is None:
                break
            blocks.append(block)
        self._send(peer_id, BlockResponse(blocks=tuple(blocks)))

    def _on_block_response(self, peer_id: str, msg: BlockResponse) -> None:
        self.sync_inflight.pop(peer_id, None)
        for block in msg.blocks:
            if not self._ingest(peer_id, block):
                if peer_id in self.quarantined:
                    return  # sync aborted, peer flagged
        session = self.sessions.get(peer_id)
        if session and session.head_height > self.state.height:
            self._request_blocks(peer_id, session.head_height)

    def _on_tx_submit(self, peer_id: str, msg: TxSubmit) -> None:
        self._admit_tx(msg.tx, msg.submitter_id, msg.signature)

    def _on_proposal(self, peer_id: str, msg: Proposal) -> None:
        if self.mode != NodeMode.AUTHORITATIVE:
            return  # replicas never countersign
        proposal = msg.proposal
        head = self.state.head
        if proposal.header.height > self.state.height + 1:
            self._request_blocks(peer_id, proposal.header.height - 1)
            return
        if (
            proposal.header.height != head.header.height + 1
            or proposal.header.prev_hash != head.block_hash
        ):
            return  # stale proposal; proposer will move on
        already = self.countersigned.get(proposal.header.height)
        header_hash = proposal.to_block().block_hash
        if already is not None and already != header_hash:
            log.warning("refusing to countersign conflicting proposal at height %d",
                        proposal.header.height)
            return
        try:
            self.state.validate_submission(proposal.transaction)
            share = consensus.countersign(proposal, self.key, self.state.authorities)
        except BiotrakError as exc:
            log.info("declining countersignature: %s", exc)
            return
        self.countersigned[proposal.header.height] = header_hash
        self._send(peer_id, Share(share=share))

    def _on_share(self, peer_id: str, msg: Share) -> None:
        pending = self.pending
        if pending is None or msg.share.height != pending.proposal.header.height:
            return
        share = msg.share
        if share.authority_id in pending.shares:
            return
        try:
            block = consensus.finalize(
                pending.proposal,
                list(pending.shares.values()) + [share],
                self.state.authorities,
            )
        except BiotrakError as exc:
            if exc.code == "below-threshold":
                pending.shares[share.authority_id] = share
            return
        self.pending = None
        if self._ingest(self.config.node_id, block):
            for peer in list(self.sessions):
                self._send(peer, BlockAnnounce(block=block))

    # -- ingestion ---------------------------------------------------------------

    def _ingest(self, origin: str, block: Block) -> bool:
        try:
            result = self.state.append(block)
        except BiotrakError as exc:
            if origin != self.config.node_id:
                self._quarantine(origin, f"invalid block: {exc}")
            return False
        if result.duplicate:
            return False
        self._after_commit(result)
        return True

    def _after_commit(self, result) -> None:
        head = self.state.head
        committed = self.state.lot_index.by_tx
        for tx_id in [t for t in self.mempool if t in committed]:
            self.mempool.pop(tx_id, None)
        if self.pending and head.header.height >= self.pending.proposal.header.height:
            self.pending = None
        if self.store is not None:
            if result.reorged:
                self._rebuild_store()
            else:
                while len(self.store) <= head.header.height:
                    self.store.put_block(self.state.block_at(len(self.store)))
                self.store.prune_forks(head.header.height)

    def _rebuild_store(self) -> None:
        data_dir = self.store.data_dir
        self.store.close()
        for seg in sorted(data_dir.glob("segment-*.seg")):
            seg.unlink()
        from .store import BlockStore

        self.store = BlockStore(data_dir)
        for h in range(self.state.height + 1):
            self.store.put_block(self.state.block_at(h))

    # -- transaction intake ------------------------------------------------------

    def _verify_submitter(self, tx: ProcessTransaction, submitter_id: str, signature: bytes) -> bool:
        from .keys import verify_signature

        payload = canonical_serialize(tx)
        if submitter_id == tx.actor_id:
            record = self.state.actor(tx.actor_id)
            if record is not None and verify_signature(record.public_key, payload, signature):
                return True
        if self.state.authorities.contains(submitter_id):
            pub = self.state.authorities.public_key(submitter_id)
            return verify_signature(pub, payload, signature)
        return False

    def _admit_tx(self, tx: ProcessTransaction, submitter_id: str, signature: bytes) -> SubmitReceipt:
        if tx.tx_id in self.state.lot_index.by_tx:
            return SubmitReceipt(tx_id=tx.tx_id, status="accepted")
        if tx.tx_id in self.mempool:
            return SubmitReceipt(tx_id=tx.tx_id, status="queued")
        if not self._verify_submitter(tx, submitter_id, signature):
            return SubmitReceipt(
                tx_id=tx.tx_id, status="rejected", error="bad-signature",
                error_message="submitter signature does not verify",
            )
        try:
            self.state.validate_submission(tx)
            status = "accepted"
        except LifecycleError:
            status = "queued"  # may become valid once earlier events commit
        except BiotrakError as exc:
            return SubmitReceipt(
                tx_id=tx.tx_id, status="rejected", error=exc.code, error_message=exc.message
            )
        if len(self.mempool) >= MEMPOOL_CAP:
            return SubmitReceipt(
                tx_id=tx.tx_id, status="rejected", error="unavailable",
                error_message="mempool full",
            )
        self.mempool[tx.tx_id] = _MempoolEntry(
            tx=tx, submitter_id=submitter_id, signature=signature,
            received_at=self.clock(),
        )
        self._flood_tx(self.mempool[tx.tx_id])
        return SubmitReceipt(tx_id=tx.tx_id, status=status)

    def submit_local(self, tx: ProcessTransaction, submitter_id: str, signature: bytes) -> SubmitReceipt:
        """Entry point for the HTTP service on authoritative nodes.

        Unlike gossip intake, a locally submitted transaction that fails
        lifecycle validation right now is rejected with its typed code so
        the client can fix it.
        """
        if self.mode != NodeMode.AUTHORITATIVE:
            raise Unavailable("read-only replica; submit to an authoritative node")
        if tx.tx_id not in self.state.lot_index.by_tx and tx.tx_id not in self.mempool:
            if self._verify_submitter(tx, submitter_id, signature):
                try:
                    self.state.validate_submission(tx)
                except BiotrakError as exc:
                    return SubmitReceipt(
                        tx_id=tx.tx_id, status="rejected", error=exc.code,
                        error_message=exc.message,
                    )
        return self._admit_tx(tx, submitter_id, signature)

    def _flood_tx(self, entry: _MempoolEntry) -> None:
        entry.last_flooded = self.clock()
        for peer_id, session in self.sessions.items():
            if session.mode == NodeMode.AUTHORITATIVE:
                self._send(peer_id, TxSubmit(
                    tx=entry.tx, submitter_id=entry.submitter_id, signature=entry.signature
                ))

    # -- sync ------------------------------------------------------------------------

    def _request_blocks(self, peer_id: str, upto: int) -> None:
        if peer_id in self.sync_inflight or peer_id not in self.sessions:
            inflight = self.sync_inflight.get(peer_id)
            if inflight is None or self.clock() < inflight.deadline:
                return
        from_h = self.state.height + 1
        to_h = min(upto, from_h + SYNC_WINDOW)
        if to_h < from_h:
            return
        prior = self.sync_inflight.get(peer_id)
        attempts = prior.attempts + 1 if prior else 1
        timeout = REQUEST_TIMEOUT * (2 ** (attempts - 1))
        self.sync_inflight[peer_id] = _Inflight(
            to_height=to_h, attempts=attempts, deadline=self.clock() + timeout
        )
        self._send(peer_id, BlockRequest(from_height=from_h, to_height=to_h))

    # -- periodic work ------------------------------------------------------------------

    def reachable_authorities(self) -> int:
        seen = {s.authority_id for s in self.sessions.values() if s.authority_id}
        if self.mode == NodeMode.AUTHORITATIVE:
            seen.add(self.authority_id)
        return len(seen)

    def tick(self) -> None:
        now = self.clock()
        for peer_id in self.known_peers - set(self.sessions) - self.quarantined:
            self._greet(peer_id, min_gap=REFLOOD_AGE)
        self._tick_sync(now)
        if self.mode == NodeMode.AUTHORITATIVE:
            self._tick_flood(now)
            self._tick_propose(now)
            self._tick_reannounce()

    def _tick_sync(self, now: float) -> None:
        for peer_id, inflight in list(self.sync_inflight.items()):
            if now >= inflight.deadline:
                if inflight.attempts >= MAX_SYNC_ATTEMPTS:
                    self.sync_inflight.pop(peer_id)
                else:
                    self._request_blocks(peer_id, inflight.to_height)
        for peer_id, session in self.sessions.items():
            if peer_id not in self.sync_inflight and session.head_height > self.state.height:
                self._request_blocks(peer_id, session.head_height)

    def _tick_flood(self, now: float) -> None:
        for entry in list(self.mempool.values()):
            if now - entry.last_flooded >= REFLOOD_AGE:
                self._flood_tx(entry)

    def _tick_propose(self, now: float) -> None:
        if self.pending is not None:
            if now - self.pending.last_sent >= REFLOOD_AGE:
                self._broadcast_proposal(now)
            return
        if self.reachable_authorities() < MIN_REACHABLE_AUTHORITIES:
            if not self.degraded_alarm:
                self.degraded_alarm = True
                log.warning(
                    "degraded mode: only %d authorities reachable; refusing to propose",
                    self.reachable_authorities(),
                )
            return
        self.degraded_alarm = False
        head = self.state.head
        next_height = head.header.height + 1
        if consensus.proposer_for_height(self.state.authorities, next_height) != self.authority_id:
            return
        for tx_id, entry in list(self.mempool.items()):
            try:
                self.state.validate_submission(entry.tx)
            except BiotrakError:
                continue
            try:
                proposal = consensus.propose_block(
                    entry.tx, head, self.key, self.state.authorities, int(now)
                )
            except NotMyTurn:
                return
            self.pending = _PendingProposal(proposal=proposal, tx_id=tx_id)
            self._broadcast_proposal(now)
            return

    def _broadcast_proposal(self, now: float) -> None:
        self.pending.last_sent = now
        have = set(self.pending.shares)
        for peer_id, session in self.sessions.items():
            if session.authority_id and session.authority_id not in have:
                self._send(peer_id, Proposal(proposal=self.pending.proposal))

    def _tick_reannounce(self) -> None:
        head = self.state.head
        for peer_id, session in self.sessions.items():
            if session.head_height < head.header.height:
                self._send(peer_id, BlockAnnounce(block=head))
