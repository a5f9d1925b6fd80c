"""Independent oracles: brute-force reimplementations used to cross-check
the production code paths.  Nothing here calls the module it verifies.
"""

from __future__ import annotations

import random

from biotrak.ledger import ProcessTransaction, ProcessType, Role
from biotrak.txbuild import (
    inbound_receipt,
    outbound_delivery,
    production,
    transport_end,
    transport_start,
)


# ---------------------------------------------------------------------------
# cold-chain: pairwise maximal-run scanner

def brute_force_compliance(samples, policy):
    """Check every (i, j) pair for being a maximal out-of-range run.

    Prefix counts make the all-out-of-range test O(1) per pair, so 10k
    random cases stay cheap while the route stays pairwise, not a scan.
    """
    def out(t):
        return not (policy.min_temp <= t <= policy.max_temp)

    def deviation(t):
        return (policy.min_temp - t) if t < policy.min_temp else (t - policy.max_temp)

    flags = [out(t) for _, t in samples]
    n = len(samples)
    prefix = [0]
    for f in flags:
        prefix.append(prefix[-1] + (1 if f else 0))
    violations = []
    for i in range(n):
        if i > 0 and flags[i - 1]:
            continue
        for j in range(i, n):
            if prefix[j + 1] - prefix[i] != j - i + 1:
                continue
            if j < n - 1 and flags[j + 1]:
                continue
            seg = samples[i : j + 1]
            extreme = max(seg, key=lambda s: deviation(s[1]))[1]
            violations.append((samples[i][0], samples[j][0], extreme))
    total = sum(e - s for s, e, _ in violations)
    compliant = all(e - s <= policy.max_excursion_seconds for s, e, _ in violations)
    return violations, total, compliant


# ---------------------------------------------------------------------------
# traceability: recursive walk straight over the committed transaction list

def oracle_tree(lot: str, committed):
    """``committed``: ascending list of (height, tx).  Returns nested dicts
    {"tx_id", "resolved_tx_id", "subtrees": {lot: node}, "external": [lots]}.
    """
    import bisect

    superseded_by = {}
    for _, tx in committed:
        if tx.supersedes is not None:
            superseded_by[tx.supersedes] = tx.tx_id
    events_by_lot: dict = {}
    for h, tx in committed:
        if tx.supersedes is not None:
            continue
        touched = set(tx.input_lots)
        if tx.output_lot is not None:
            touched.add(tx.output_lot)
        for code in touched:
            events_by_lot.setdefault(code, []).append((h, tx))

    def resolve(tx_id):
        while tx_id in superseded_by:
            tx_id = superseded_by[tx_id]
        return tx_id

    def prior_event(code, height):
        entries = events_by_lot.get(code, [])
        pos = bisect.bisect_left(entries, height, key=lambda e: e[0])
        return entries[pos - 1] if pos > 0 else None

    def build(height, tx, focus):
        if tx.process_type == ProcessType.PRODUCTION:
            expand = list(tx.input_lots)
        else:
            expand = [focus] if focus in tx.input_lots else []
        subtrees = {}
        external = []
        for code in sorted(expand):
            prior = prior_event(code, height)
            if prior is not None:
                subtrees[code] = build(prior[0], prior[1], code)
            else:
                external.append(code)
        return {
            "tx_id": tx.tx_id,
            "resolved_tx_id": resolve(tx.tx_id),
            "height": height,
            "subtrees": subtrees,
            "external": external,
        }

    evs = events_by_lot.get(lot, [])
    if not evs:
        return None
    h, tx = evs[-1]
    return build(h, tx, lot)


def tree_matches(tree, oracle) -> bool:
    """Structural equality between a ProcessTree and the oracle's dicts."""
    if oracle is None or tree is None:
        return oracle is None and tree is None
    if tree.root_tx_id != oracle["tx_id"]:
        return False
    if tree.root_tx.tx_id != oracle["resolved_tx_id"]:
        return False
    if tree.height != oracle["height"]:
        return False
    if list(tree.external_inputs) != oracle["external"]:
        return False
    if [lot for lot, _ in tree.input_subtrees] != sorted(oracle["subtrees"]):
        return False
    return all(
        tree_matches(sub, oracle["subtrees"][lot]) for lot, sub in tree.input_subtrees
    )


def count_oracle_nodes(oracle) -> int:
    return 1 + sum(count_oracle_nodes(s) for s in oracle["subtrees"].values())


# ---------------------------------------------------------------------------
# lifecycle: independent validator mirroring the documented state machine

class OracleValidator:
    """Second implementation of the lot state machine for agreement checks."""

    def __init__(self, authority_ids=()):
        self.authority_ids = set(authority_ids)
        self.status = {}
        self.holder = {}
        self.legs = {}  # start tx_id -> (lots, open?)
        self.seen_tx = set()
        self.superseded = set()
        self.txs = {}

    ROLE_FOR = {
        ProcessType.INBOUND_RECEIPT: Role.PRODUCER,
        ProcessType.PRODUCTION: Role.PRODUCER,
        ProcessType.TRANSPORT_START: Role.TRANSPORTER,
        ProcessType.TRANSPORT_END: Role.TRANSPORTER,
        ProcessType.OUTBOUND_DELIVERY: Role.PRODUCER,
    }

    def check(self, tx: ProcessTransaction) -> bool:
        if tx.tx_id in self.seen_tx:
            return False
        is_grant = (
            tx.process_type == ProcessType.PRODUCTION
            and not tx.input_lots
            and tx.output_lot is None
            and any(k.startswith("grant.") for k, _ in tx.parameters)
        )
        if is_grant:
            return tx.actor_id in self.authority_ids and tx.supersedes is None
        if tx.role != self.ROLE_FOR[tx.process_type]:
            return False
        if tx.supersedes is not None:
            if tx.role != Role.PRODUCER or tx.supersedes not in self.txs:
                return False
            if tx.supersedes in self.superseded:
                return False
            target = self.txs[tx.supersedes]
            return (
                target.actor_id == tx.actor_id
                and target.process_type == tx.process_type
                and tuple(target.input_lots) == tuple(tx.input_lots)
                and target.output_lot == tx.output_lot
            )
        pt = tx.process_type
        if pt == ProcessType.INBOUND_RECEIPT:
            if not tx.input_lots or tx.delivery_note is None:
                return False
            return all(
                self.status.get(lot) in (None, "delivered") for lot in tx.input_lots
            )
        if pt == ProcessType.PRODUCTION:
            if not tx.input_lots or tx.output_lot is None:
                return False
            if tx.output_lot in self.status:
                return False
            return all(
                self.status.get(lot) in ("registered", "delivered")
                and self.holder.get(lot) == tx.actor_id
                for lot in tx.input_lots
            )
        if pt == ProcessType.TRANSPORT_START:
            if not tx.input_lots:
                return False
            return all(
                self.status.get(lot) in ("registered", "delivered")
                for lot in tx.input_lots
            )
        if pt == ProcessType.TRANSPORT_END:
            leg = self.legs.get(tx.transport_ref)
            if leg is None or not leg[1]:
                return False
            if tuple(sorted(tx.input_lots)) != tuple(sorted(leg[0])):
                return False
            return all(self.status.get(lot) == "in_transit" for lot in tx.input_lots)
        if pt == ProcessType.OUTBOUND_DELIVERY:
            if not tx.input_lots or tx.delivery_note is None:
                return False
            return all(
                self.status.get(lot) in ("registered", "delivered")
                and self.holder.get(lot) == tx.actor_id
                for lot in tx.input_lots
            )
        return False

    def apply(self, tx: ProcessTransaction) -> None:
        self.seen_tx.add(tx.tx_id)
        self.txs[tx.tx_id] = tx
        if tx.supersedes is not None:
            self.superseded.add(tx.supersedes)
            return
        pt = tx.process_type
        if pt == ProcessType.PRODUCTION and tx.output_lot is None:
            return  # role grant
        if pt == ProcessType.INBOUND_RECEIPT:
            for lot in tx.input_lots:
                self.status[lot] = "registered"
                self.holder[lot] = tx.actor_id
        elif pt == ProcessType.PRODUCTION:
            for lot in tx.input_lots:
                self.status[lot] = "consumed"
            self.status[tx.output_lot] = "registered"
            self.holder[tx.output_lot] = tx.actor_id
        elif pt == ProcessType.TRANSPORT_START:
            for lot in tx.input_lots:
                self.status[lot] = "in_transit"
            self.legs[tx.tx_id] = (tuple(tx.input_lots), True)
        elif pt == ProcessType.TRANSPORT_END:
            for lot in tx.input_lots:
                self.status[lot] = "delivered"
            lots, _ = self.legs[tx.transport_ref]
            self.legs[tx.transport_ref] = (lots, False)


# ---------------------------------------------------------------------------
# lifecycle scenario generator with its own state machine

class ScenarioGenerator:
    """Emits lifecycle-legal transaction sequences from an independent model.

    Tracks lot status/holder itself (registered / in_transit / delivered /
    consumed) so the sequences it produces can be replayed against the real
    validator as a full-agreement check.
    """

    def __init__(self, producers, transporter, seed=0, max_inputs=3):
        self.rng = random.Random(seed)
        self.producers = list(producers)
        self.transporter = transporter
        self.max_inputs = max_inputs
        self.status = {}
        self.holder = {}
        self.open_legs = {}  # start tx_id -> lots
        self.minted = set()
        self.counter = 0
        self.note_counter = 0
        # dicts double as insertion-ordered sets, keeping runs deterministic
        self._usable_by_holder = {}  # holder -> {lot: None}
        self._usable_all = {}  # lot -> None

    def _new_lot(self) -> str:
        self.counter += 1
        return f"LOT-{self.counter:04d}"

    def _note(self) -> str:
        self.note_counter += 1
        return f"DN-{self.note_counter:04d}"

    def _mark_usable(self, lot: str, holder: str) -> None:
        self._usable_by_holder.setdefault(holder, {})[lot] = None
        self._usable_all[lot] = None

    def _mark_unusable(self, lot: str) -> None:
        holder = self.holder.get(lot)
        if holder in self._usable_by_holder:
            self._usable_by_holder[holder].pop(lot, None)
        self._usable_all.pop(lot, None)

    def _usable(self, actor=None):
        if actor is None:
            return list(self._usable_all)
        return list(self._usable_by_holder.get(actor, ()))

    def step(self) -> ProcessTransaction | None:
        rng = self.rng
        ops = ["inbound"]
        if any(self._usable(p) for p in self.producers):
            ops += ["production", "production", "outbound"]
        if self._usable():
            ops.append("start")
        if self.open_legs:
            ops += ["end", "end"]
        op = rng.choice(ops)
        ts = 1_700_000_000 + self.counter + self.note_counter

        if op == "inbound":
            actor = rng.choice(self.producers)
            lots = [self._new_lot() for _ in range(rng.randint(1, 2))]
            tx = inbound_receipt(actor, lots, self._note(), created_at=ts, rng=rng)
            for lot in lots:
                self.status[lot] = "registered"
                self.holder[lot] = actor
                self._mark_usable(lot, actor)
            return tx

        if op == "production":
            candidates = [p for p in self.producers if self._usable(p)]
            actor = rng.choice(candidates)
            usable = self._usable(actor)
            inputs = rng.sample(usable, min(len(usable), rng.randint(1, self.max_inputs)))
            output = self._new_lot()
            tx = production(actor, inputs, output, created_at=ts, rng=rng)
            for lot in inputs:
                self.status[lot] = "consumed"
                self._mark_unusable(lot)
            self.status[output] = "registered"
            self.holder[output] = actor
            self._mark_usable(output, actor)
            self.minted.add(output)
            return tx

        if op == "start":
            usable = self._usable()
            lots = rng.sample(usable, min(len(usable), rng.randint(1, 2)))
            tx = transport_start(self.transporter, lots, created_at=ts, rng=rng)
            for lot in lots:
                self.status[lot] = "in_transit"
                self._mark_unusable(lot)
            self.open_legs[tx.tx_id] = tuple(lots)
            return tx

        if op == "end":
            start_id = rng.choice(list(self.open_legs))
            lots = self.open_legs.pop(start_id)
            tx = transport_end(self.transporter, lots, start_id, created_at=ts, rng=rng)
            for lot in lots:
                self.status[lot] = "delivered"
                self._mark_usable(lot, self.holder[lot])
            return tx

        if op == "outbound":
            candidates = [p for p in self.producers if self._usable(p)]
            actor = rng.choice(candidates)
            usable = self._usable(actor)
            lots = rng.sample(usable, min(len(usable), rng.randint(1, 2)))
            return outbound_delivery(actor, lots, self._note(), created_at=ts, rng=rng)

        return None

    def sequence(self, n: int):
        out = []
        while len(out) < n:
            tx = self.step()
            if tx is not None:
                out.append(tx)
        return out
