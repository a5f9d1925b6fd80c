"""Deterministic in-process network simulation.

Implements the same peer interface the TCP transport drives: every message
crossing a link is encoded and decoded with the real wire codecs, suffers a
seeded random delay, and may be dropped.  Node clocks read simulated time,
so timeout/retry behavior runs exactly as deployed, only faster.
"""

from __future__ import annotations

import heapq
import random
from decimal import Decimal

from .chain import ChainState
from .keys import SigningKey
from .ledger import ActorGrant, AuthorityEntry, GenesisConfig, Role, make_genesis
from .netsync import NodeMode, decode_message, encode_message
from .node import Node, NodeConfig

TICK_INTERVAL = 0.5


class SimNetwork:
    def __init__(self, seed: int = 0, drop_rate: float = 0.0,
                 min_delay: float = 0.01, max_delay: float = 0.25):
        self.rng = random.Random(seed)
        self.drop_rate = drop_rate
        self.min_delay = min_delay
        self.max_delay = max_delay
        self.time = 0.0
        self._seq = 0
        self._events: list = []
        self.nodes: dict = {}
        self.down: set = set()
        self.delivered = 0
        self.dropped = 0
        self.traffic: list = []  # (src, dst, message type name)

    # -- wiring ---------------------------------------------------------------

    def add_node(self, node: Node) -> None:
        self.nodes[node.config.node_id] = node

        def tick():
            node.tick()
            self._schedule(TICK_INTERVAL, tick)

        self._schedule(TICK_INTERVAL + self.rng.random() * 0.1, tick)

    def connect(self, a: str, b: str) -> None:
        self.nodes[a].on_peer_connected(b)
        self.nodes[b].on_peer_connected(a)
        self._drain()

    # -- event loop -------------------------------------------------------------

    def _schedule(self, delay: float, callback) -> None:
        self._seq += 1
        heapq.heappush(self._events, (self.time + delay, self._seq, callback))

    def _drain(self) -> None:
        for node_id, node in self.nodes.items():
            while node.outbox:
                dst, msg = node.outbox.pop(0)
                self._transmit(node_id, dst, msg)

    def _transmit(self, src: str, dst: str, msg) -> None:
        self.traffic.append((src, dst, type(msg).__name__))
        if src in self.down or dst in self.down or dst not in self.nodes:
            self.dropped += 1
            return
        frame = encode_message(msg)
        if self.rng.random() < self.drop_rate:
            self.dropped += 1
            return
        delay = self.min_delay + self.rng.random() * (self.max_delay - self.min_delay)

        def deliver():
            if dst in self.down:
                self.dropped += 1
                return
            self.delivered += 1
            self.nodes[dst].handle_message(src, decode_message(frame))

        self._schedule(delay, deliver)

    def run(self, max_time: float = 600.0, stop_when=None) -> float:
        """Process events until the predicate holds or the time cap hits.

        Tick timers perpetuate themselves, so ``stop_when``/``max_time`` are
        the only exits while nodes are registered.  ``max_time`` is relative
        to the current simulated time.
        """
        deadline = self.time + max_time
        while self._events:
            when, _, callback = heapq.heappop(self._events)
            if when > deadline:
                self.time = deadline
                break
            self.time = when
            callback()
            self._drain()
            if stop_when is not None and stop_when():
                break
        return self.time

    def submit(self, entry_node_id: str, tx, submitter_id: str, signature: bytes):
        receipt = self.nodes[entry_node_id]._admit_tx(tx, submitter_id, signature)
        self._drain()
        return receipt


# ---------------------------------------------------------------------------
# cluster assembly

class SimCluster:
    def __init__(self, n_authorities: int = 3, n_replicas: int = 0, seed: int = 0,
                 drop_rate: float = 0.0, actors=(), policy=None):
        self.net = SimNetwork(seed=seed, drop_rate=drop_rate)
        rng = random.Random(seed ^ 0x5EED)
        self.authority_keys = [
            SigningKey.from_bytes(bytes(rng.randrange(256) for _ in range(32)))
            for _ in range(n_authorities)
        ]
        grants = tuple(
            ActorGrant(public_key=key.public_bytes, roles=tuple(roles), display_name=name)
            for key, roles, name in actors
        )
        config = GenesisConfig(
            chain_name="simnet",
            authorities=tuple(
                AuthorityEntry(public_key=k.public_bytes, endpoint=f"sim://auth{i}")
                for i, k in enumerate(self.authority_keys)
            ),
            actors=grants,
            timestamp=1_700_000_000,
            min_temp=policy.min_temp if policy else Decimal("0.0"),
            max_temp=policy.max_temp if policy else Decimal("8.0"),
            max_excursion_seconds=policy.max_excursion_seconds if policy else 600,
        )
        self.genesis = make_genesis(config)
        self.authorities: list = []
        for i, key in enumerate(self.authority_keys):
            node = Node(
                NodeConfig(node_id=f"auth{i}", mode=NodeMode.AUTHORITATIVE, key=key),
                self.genesis,
                clock=lambda: self.net.time,
            )
            self.net.add_node(node)
            self.authorities.append(node)
        self.replicas: list = []
        for i in range(n_replicas):
            node = Node(
                NodeConfig(node_id=f"replica{i}", mode=NodeMode.NON_AUTHORITATIVE),
                self.genesis,
                clock=lambda: self.net.time,
            )
            self.net.add_node(node)
            self.replicas.append(node)
        for i in range(len(self.authorities)):
            for j in range(i + 1, len(self.authorities)):
                self.net.connect(f"auth{i}", f"auth{j}")
        for i in range(n_replicas):
            for j in range(len(self.authorities)):
                self.net.connect(f"replica{i}", f"auth{j}")

    @property
    def all_nodes(self) -> list:
        return self.authorities + self.replicas

    def fresh_state(self) -> ChainState:
        return ChainState(self.genesis)

    def heads(self) -> set:
        return {n.state.head.block_hash for n in self.all_nodes}

    def converged_at(self, height: int) -> bool:
        return all(n.state.height >= height for n in self.all_nodes) and len(self.heads()) == 1
