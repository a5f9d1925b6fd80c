"""Lot lifecycle rules and process-tree reconstruction.

Lots move along Registered -> InTransit -> Delivered (repeatable per
transport leg) and terminally to Consumed when a production uses them as
input.  Only Production mints new lot codes; transport legs never change
lot identity.  The process tree for a lot is rebuilt by walking lot
references backwards through committed transactions: custody events
(inbound, transport, outbound) chain along the focused lot, productions
fan out across all of their input lots.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import (
    DanglingTransportRef,
    DepthExceeded,
    DuplicateOutputLot,
    DuplicateTx,
    LifecycleError,
    LotConsumed,
    LotInTransit,
    MissingDeliveryNote,
    RoleForbidden,
    SupersedeMismatch,
    TransportAlreadyTerminated,
    TransportLotMismatch,
    UnknownInputLot,
    UnknownLot,
    UnknownTx,
    WrongHolder,
)
from .ledger import Block, ProcessTransaction, ProcessType, Role, is_admin_grant

DEFAULT_MAX_DEPTH = 64


class LotStatus(enum.Enum):
    REGISTERED = "registered"
    IN_TRANSIT = "in_transit"
    DELIVERED = "delivered"
    CONSUMED = "consumed"


@dataclass
class LotState:
    lot: str
    status: LotStatus
    origin_tx: bytes
    holder: str


@dataclass
class TransportLeg:
    start_tx: bytes
    lots: tuple
    end_tx: bytes | None = None

    @property
    def open(self) -> bool:
        return self.end_tx is None


REQUIRED_ROLE = {
    ProcessType.INBOUND_RECEIPT: Role.PRODUCER,
    ProcessType.PRODUCTION: Role.PRODUCER,
    ProcessType.TRANSPORT_START: Role.TRANSPORTER,
    ProcessType.TRANSPORT_END: Role.TRANSPORTER,
    ProcessType.OUTBOUND_DELIVERY: Role.PRODUCER,
}




@dataclass
class LotIndex:
    """Lookup structures maintained on the committed chain.

    ``by_output`` is injective (one minting production per lot code);
    ``by_reference`` lists are ordered by block height.  Supersede
    transactions are tracked in ``by_tx``/``superseded_by`` only: they
    amend an existing event rather than adding a new one.
    """

    by_output: dict = field(default_factory=dict)
    by_reference: dict = field(default_factory=dict)
    by_tx: dict = field(default_factory=dict)
    txs: dict = field(default_factory=dict)
    transports: dict = field(default_factory=dict)
    superseded_by: dict = field(default_factory=dict)
    indexed_blocks: set = field(default_factory=set)

    def tx(self, tx_id: bytes) -> ProcessTransaction:
        try:
            return self.txs[tx_id]
        except KeyError:
            raise UnknownTx(f"unknown transaction {tx_id.hex()}")

    def height_of(self, tx_id: bytes) -> int:
        return self.by_tx[tx_id]

    def events_for(self, lot: str) -> list:
        """Transaction ids touching the lot, ordered by block height."""
        ids = []
        if lot in self.by_output:
            ids.append(self.by_output[lot])
        ids.extend(self.by_reference.get(lot, ()))
        ids.sort(key=lambda t: self.by_tx[t])
        return ids


def index_block(index: LotIndex, block: Block) -> LotIndex:
    """Register a committed block; idempotent per block hash."""
    block_hash = block.block_hash
    if block_hash in index.indexed_blocks:
        return index
    tx = block.transaction
    height = block.header.height
    index.by_tx[tx.tx_id] = height
    index.txs[tx.tx_id] = tx
    if tx.supersedes is not None:
        index.superseded_by[tx.supersedes] = tx.tx_id
    else:
        if tx.output_lot is not None:
            index.by_output[tx.output_lot] = tx.tx_id
        for lot in tx.input_lots:
            index.by_reference.setdefault(lot, []).append(tx.tx_id)
        if tx.process_type == ProcessType.TRANSPORT_START:
            index.transports[tx.tx_id] = TransportLeg(
                start_tx=tx.tx_id, lots=tuple(tx.input_lots)
            )
        elif tx.process_type == ProcessType.TRANSPORT_END:
            leg = index.transports.get(tx.transport_ref)
            if leg is not None:
                leg.end_tx = tx.tx_id
    index.indexed_blocks.add(block_hash)
    return index


# ---------------------------------------------------------------------------
# lifecycle validation

def lot_lifecycle_validate(
    tx: ProcessTransaction,
    index: LotIndex,
    states: dict,
    authority_ids=(),
) -> None:
    """Validate one transaction against the committed lot state machine.

    Raises a LifecycleError subclass with a distinct code on the first
    violated rule.  ``authority_ids`` is required to accept role-grant
    transactions, which only authorities may sign.
    """
    if tx.tx_id in index.by_tx:
        raise DuplicateTx(f"transaction {tx.tx_id.hex()} is already committed")
    required = REQUIRED_ROLE[tx.process_type]
    if is_admin_grant(tx):
        if tx.actor_id not in authority_ids:
            raise RoleForbidden("role grants must be signed by an authority")
        if tx.supersedes is not None:
            raise SupersedeMismatch("role grants cannot supersede")
        return
    if tx.role != required:
        raise RoleForbidden(
            f"{tx.process_type.json_name} requires role {required.json_name}"
        )

    if tx.supersedes is not None:
        _validate_supersede(tx, index)
        return

    handler = {
        ProcessType.INBOUND_RECEIPT: _validate_inbound,
        ProcessType.PRODUCTION: _validate_production,
        ProcessType.TRANSPORT_START: _validate_transport_start,
        ProcessType.TRANSPORT_END: _validate_transport_end,
        ProcessType.OUTBOUND_DELIVERY: _validate_outbound,
    }[tx.process_type]
    handler(tx, index, states)


def _require_lots(tx: ProcessTransaction) -> None:
    if not tx.input_lots:
        raise LifecycleError(f"{tx.process_type.json_name} requires input lots")


def _check_usable(tx: ProcessTransaction, lot: str, state: LotState, need_holder: bool) -> None:
    if state.status == LotStatus.IN_TRANSIT:
        raise LotInTransit(f"lot {lot} is in transit")
    if state.status == LotStatus.CONSUMED:
        raise LotConsumed(f"lot {lot} was consumed")
    if need_holder and state.holder != tx.actor_id:
        raise WrongHolder(f"lot {lot} is held by {state.holder}")


def _validate_inbound(tx, index, states) -> None:
    _require_lots(tx)
    if tx.delivery_note is None:
        raise MissingDeliveryNote("inbound receipt requires the supplier delivery note")
    for lot in tx.input_lots:
        state = states.get(lot)
        if state is None:
            continue  # chain-external introduction
        if state.status == LotStatus.IN_TRANSIT:
            raise LotInTransit(f"lot {lot} is in transit")
        if state.status == LotStatus.CONSUMED:
            raise LotConsumed(f"lot {lot} was consumed")
        if state.status == LotStatus.REGISTERED:
            raise WrongHolder(f"lot {lot} is already registered to {state.holder}")


def _validate_production(tx, index, states) -> None:
    for lot in tx.input_lots:
        state = states.get(lot)
        if state is None:
            raise UnknownInputLot(f"input lot {lot} has no on-chain state")
        _check_usable(tx, lot, state, need_holder=True)
    if tx.output_lot in states or tx.output_lot in index.by_output:
        raise DuplicateOutputLot(f"output lot {tx.output_lot} already exists")


def _validate_transport_start(tx, index, states) -> None:
    _require_lots(tx)
    for lot in tx.input_lots:
        state = states.get(lot)
        if state is None:
            raise UnknownInputLot(f"input lot {lot} has no on-chain state")
        _check_usable(tx, lot, state, need_holder=False)


def _validate_transport_end(tx, index, states) -> None:
    leg = index.transports.get(tx.transport_ref)
    if leg is None:
        raise DanglingTransportRef(
            f"transport_ref {tx.transport_ref.hex()} is not a committed transport start"
        )
    if not leg.open:
        raise TransportAlreadyTerminated(
            f"transport {tx.transport_ref.hex()} was already terminated"
        )
    if tuple(sorted(tx.input_lots)) != tuple(sorted(leg.lots)):
        raise TransportLotMismatch("transport end lots differ from the start leg")
    for lot in tx.input_lots:
        state = states.get(lot)
        if state is None or state.status != LotStatus.IN_TRANSIT:
            raise TransportLotMismatch(f"lot {lot} is not in transit on this leg")


def _validate_outbound(tx, index, states) -> None:
    _require_lots(tx)
    if tx.delivery_note is None:
        raise MissingDeliveryNote("outbound delivery requires a delivery note")
    for lot in tx.input_lots:
        state = states.get(lot)
        if state is None:
            raise UnknownInputLot(f"input lot {lot} has no on-chain state")
        _check_usable(tx, lot, state, need_holder=True)


def _validate_supersede(tx: ProcessTransaction, index: LotIndex) -> None:
    if tx.role != Role.PRODUCER:
        raise RoleForbidden("only producers may supersede")
    if tx.supersedes not in index.txs:
        raise SupersedeMismatch("superseded transaction is unknown")
    if tx.supersedes in index.superseded_by:
        raise SupersedeMismatch("transaction was already superseded")
    target = index.txs[tx.supersedes]
    if target.actor_id != tx.actor_id:
        raise SupersedeMismatch("updates must come from the original actor")
    if target.process_type != tx.process_type:
        raise SupersedeMismatch("updates cannot change the process type")
    if tuple(target.input_lots) != tuple(tx.input_lots) or target.output_lot != tx.output_lot:
        raise SupersedeMismatch("updates cannot change the lots involved")


def apply_lot_transitions(tx: ProcessTransaction, states: dict) -> None:
    """Mutate ``states`` for a validated, committed transaction."""
    if is_admin_grant(tx) or tx.supersedes is not None:
        return
    pt = tx.process_type
    if pt == ProcessType.INBOUND_RECEIPT:
        for lot in tx.input_lots:
            states[lot] = LotState(
                lot=lot, status=LotStatus.REGISTERED, origin_tx=tx.tx_id, holder=tx.actor_id
            )
    elif pt == ProcessType.PRODUCTION:
        for lot in tx.input_lots:
            states[lot].status = LotStatus.CONSUMED
        if tx.output_lot is not None:
            states[tx.output_lot] = LotState(
                lot=tx.output_lot,
                status=LotStatus.REGISTERED,
                origin_tx=tx.tx_id,
                holder=tx.actor_id,
            )
    elif pt == ProcessType.TRANSPORT_START:
        for lot in tx.input_lots:
            states[lot].status = LotStatus.IN_TRANSIT
    elif pt == ProcessType.TRANSPORT_END:
        for lot in tx.input_lots:
            states[lot].status = LotStatus.DELIVERED
    # outbound delivery records the note without changing lot state


# ---------------------------------------------------------------------------
# process tree

@dataclass(frozen=True)
class ProcessTree:
    """Recursive history of the events that produced a lot."""

    root_tx: ProcessTransaction
    root_tx_id: bytes
    height: int
    input_subtrees: tuple = ()  # of (lot_code, ProcessTree), sorted by lot code
    external_inputs: tuple = ()

    def node_count(self) -> int:
        return 1 + sum(sub.node_count() for _, sub in self.input_subtrees)


def latest_version(tx_id: bytes, index: LotIndex) -> ProcessTransaction:
    """Follow supersede links forward to the newest committed version."""
    if tx_id not in index.txs:
        raise UnknownTx(f"unknown transaction {tx_id.hex()}")
    current = tx_id
    while current in index.superseded_by:
        current = index.superseded_by[current]
    return index.txs[current]


def trace_history(lot: str, index: LotIndex, max_depth: int = DEFAULT_MAX_DEPTH) -> ProcessTree:
    """Reconstruct the process tree for a lot from the committed chain.

    The root is the lot's most recent event.  Custody events recurse on the
    focused lot only; productions recurse on every input lot.  Recursion
    always moves to strictly lower heights, so the result is acyclic.
    """
    events = index.events_for(lot)
    if not events:
        raise UnknownLot(f"lot {lot} has no on-chain history")
    return _build_tree(events[-1], lot, index, 1, max_depth)


def _build_tree(tx_id: bytes, focus_lot: str, index: LotIndex, depth: int, max_depth: int) -> ProcessTree:
    if depth > max_depth:
        raise DepthExceeded(f"trace exceeds max depth {max_depth}")
    tx = index.txs[tx_id]
    height = index.by_tx[tx_id]
    if tx.process_type == ProcessType.PRODUCTION:
        expand = list(tx.input_lots)
    else:
        expand = [focus_lot] if focus_lot in tx.input_lots else []
    subtrees = []
    externals = []
    for lot in sorted(expand):
        prev = _last_event_before(lot, height, index)
        if prev is None:
            externals.append(lot)
        else:
            subtrees.append((lot, _build_tree(prev, lot, index, depth + 1, max_depth)))
    return ProcessTree(
        root_tx=latest_version(tx_id, index),
        root_tx_id=tx_id,
        height=height,
        input_subtrees=tuple(subtrees),
        external_inputs=tuple(externals),
    )


def _last_event_before(lot: str, height: int, index: LotIndex):
    best = None
    for tx_id in index.events_for(lot):
        if index.by_tx[tx_id] < height:
            best = tx_id
        else:
            break
    return best


def flatten_tree(tree: ProcessTree) -> list:
    """Deterministic pre-order listing of (depth, transaction)."""
    out = []

    def walk(node: ProcessTree, depth: int) -> None:
        out.append((depth, node.root_tx))
        for _, sub in node.input_subtrees:
            walk(sub, depth + 1)

    walk(tree, 0)
    return out


def flatten_nodes(tree: ProcessTree) -> list:
    """Pre-order (depth, keyed_lot, node) triples; used by renderers."""
    out = []

    def walk(node: ProcessTree, depth: int, keyed: str | None) -> None:
        out.append((depth, keyed, node))
        for lot, sub in node.input_subtrees:
            walk(sub, depth + 1, lot)

    walk(tree, 0, None)
    return out
