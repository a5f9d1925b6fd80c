"""Cluster behavior on the deterministic simulated network."""

import pytest

from conftest import det_key

from biotrak import ledger
from biotrak.ledger import Role
from biotrak.netsync import BlockAnnounce, NodeMode
from biotrak.simnet import SimCluster
from biotrak.txbuild import inbound_receipt, production, sign_submission


def actors_fixture():
    producer = det_key(600)
    transporter = det_key(601)
    return producer, transporter, [
        (producer, (Role.PRODUCER,), "Farm"),
        (transporter, (Role.TRANSPORTER,), "Truck"),
    ]


def submit_all(cluster, txs_with_keys):
    for i, (tx, key) in enumerate(txs_with_keys):
        entry = cluster.authorities[i % len(cluster.authorities)]
        receipt = cluster.net.submit(entry.config.node_id, tx,
                                     key.fingerprint, sign_submission(tx, key))
        assert receipt.status in ("accepted", "queued"), receipt


class TestConvergence:
    def test_small_cluster_no_drops(self):
        producer, _, actors = actors_fixture()
        cluster = SimCluster(n_authorities=3, n_replicas=2, seed=1, drop_rate=0.0,
                             actors=actors)
        txs = [
            (inbound_receipt(producer.fingerprint, [f"CV-{i}"], f"DN-{i}",
                             created_at=1_700_000_100 + i), producer)
            for i in range(5)
        ]
        submit_all(cluster, txs)
        cluster.net.run(max_time=120, stop_when=lambda: cluster.converged_at(5))
        assert cluster.converged_at(5)

    def test_fresh_replica_syncs_to_height_100(self):
        producer, _, actors = actors_fixture()
        cluster = SimCluster(n_authorities=3, n_replicas=1, seed=2, drop_rate=0.0,
                             actors=actors)
        txs = [
            (inbound_receipt(producer.fingerprint, [f"SY-{i}"], f"DN-{i}",
                             created_at=1_700_000_100 + i), producer)
            for i in range(100)
        ]
        submit_all(cluster, txs)
        cluster.net.run(max_time=600, stop_when=lambda: cluster.converged_at(100))
        assert cluster.converged_at(100)
        replica = cluster.replicas[0]
        assert replica.state.head.block_hash == cluster.authorities[0].state.head.block_hash

    def test_replica_down_then_converges(self):
        producer, _, actors = actors_fixture()
        cluster = SimCluster(n_authorities=3, n_replicas=2, seed=3, drop_rate=0.0,
                             actors=actors)
        cluster.net.down.add("replica1")
        txs = [
            (inbound_receipt(producer.fingerprint, [f"DN-LOT-{i}"], f"DN-{i}",
                             created_at=1_700_000_100 + i), producer)
            for i in range(10)
        ]
        submit_all(cluster, txs)
        cluster.net.run(
            max_time=300,
            stop_when=lambda: all(a.state.height >= 10 for a in cluster.authorities),
        )
        assert cluster.replicas[1].state.height == 0  # missed everything while down
        cluster.net.down.discard("replica1")
        cluster.net.run(max_time=300, stop_when=lambda: cluster.converged_at(10))
        assert cluster.converged_at(10)

    def test_degraded_authority_cluster_stalls(self):
        producer, _, actors = actors_fixture()
        cluster = SimCluster(n_authorities=3, n_replicas=0, seed=4, drop_rate=0.0,
                             actors=actors)
        cluster.net.down.add("auth2")
        cluster.net.run(max_time=10)  # let sessions settle and drop
        for node in cluster.authorities[:2]:
            node.sessions.pop("auth2", None)
        tx = inbound_receipt(producer.fingerprint, ["DG-1"], "DN-1",
                             created_at=1_700_000_100)
        cluster.net.submit("auth0", tx, producer.fingerprint,
                           sign_submission(tx, producer))
        cluster.net.run(max_time=30)
        assert all(a.state.height == 0 for a in cluster.authorities[:2])
        assert cluster.authorities[0].degraded_alarm


class TestTrustBoundary:
    def _committed_cluster(self, n=3):
        producer, _, actors = actors_fixture()
        cluster = SimCluster(n_authorities=3, n_replicas=1, seed=5, drop_rate=0.0,
                             actors=actors)
        txs = [
            (inbound_receipt(producer.fingerprint, [f"TB-{i}"], f"DN-{i}",
                             created_at=1_700_000_100 + i), producer)
            for i in range(n)
        ]
        submit_all(cluster, txs)
        cluster.net.run(max_time=120, stop_when=lambda: cluster.converged_at(n))
        assert cluster.converged_at(n)
        return cluster, producer

    def test_tampered_announce_quarantines_peer(self):
        cluster, producer = self._committed_cluster()
        victim = cluster.replicas[0]
        head = victim.state.head
        forger = det_key(950)
        evil_tx = inbound_receipt(producer.fingerprint, ["EVIL-1"], "DN-X",
                                  created_at=1_700_000_100)
        from biotrak import consensus

        header = ledger.BlockHeader(
            height=head.header.height + 1,
            prev_hash=head.block_hash,
            timestamp=head.header.timestamp + 1,
            proposer=consensus.proposer_for_height(
                victim.state.authorities, head.header.height + 1),
            tx_hash=ledger.hash_tx(evil_tx),
        )
        forged = ledger.Block(
            header=header,
            transaction=evil_tx,
            proposer_signature=forger.sign(ledger.serialize_header(header)),
            countersignatures=(),
        )
        victim.handle_message("attacker", BlockAnnounce(block=forged))
        assert "attacker" in victim.quarantined
        assert victim.state.head.block_hash == head.block_hash

    def test_same_hash_different_tx_dropped_as_duplicate(self):
        # the header hash commits to the tx; equal hash means the altered
        # payload is ignored as a known block, never applied
        cluster, producer = self._committed_cluster()
        victim = cluster.replicas[0]
        good = cluster.authorities[0].state.block_at(2)
        tampered_tx = inbound_receipt(producer.fingerprint, ["EVIL-3"], "DN-X",
                                      created_at=1_700_000_100)
        tampered = ledger.Block(
            header=good.header,
            transaction=tampered_tx,
            proposer_signature=good.proposer_signature,
            countersignatures=good.countersignatures,
        )
        before = victim.state.head.block_hash
        victim.handle_message("sneak", BlockAnnounce(block=tampered))
        assert victim.state.head.block_hash == before
        assert victim.state.block_at(2) == good

    def test_corrupt_block_mid_sync_aborts(self, genesis):
        cluster, producer = self._committed_cluster(n=6)
        from biotrak.netsync import BlockResponse
        from biotrak.node import Node, NodeConfig

        fresh = Node(
            NodeConfig(node_id="probe", mode=NodeMode.NON_AUTHORITATIVE),
            cluster.genesis,
        )
        source = cluster.authorities[0].state
        blocks = [source.block_at(h) for h in range(1, 7)]
        bad_tx = inbound_receipt(producer.fingerprint, ["EVIL-2"], "DN-X",
                                 created_at=1_700_000_100)
        blocks[3] = ledger.Block(
            header=blocks[3].header,
            transaction=bad_tx,
            proposer_signature=blocks[3].proposer_signature,
            countersignatures=blocks[3].countersignatures,
        )
        fresh.handle_message("badpeer", BlockResponse(blocks=tuple(blocks)))
        assert "badpeer" in fresh.quarantined
        assert fresh.state.height == 3  # valid prefix applied, nothing past the damage

    def test_replicas_never_originate_consensus_messages(self):
        producer, _, actors = actors_fixture()
        cluster = SimCluster(n_authorities=3, n_replicas=2, seed=6, drop_rate=0.15,
                             actors=actors)
        txs = [
            (inbound_receipt(producer.fingerprint, [f"RO-{i}"], f"DN-{i}",
                             created_at=1_700_000_100 + i), producer)
            for i in range(20)
        ]
        submit_all(cluster, txs)
        cluster.net.run(max_time=600, stop_when=lambda: cluster.converged_at(20))
        assert cluster.converged_at(20)
        forbidden = {"Proposal", "Share", "BlockAnnounce"}
        for src, _, kind in cluster.net.traffic:
            if src.startswith("replica"):
                assert kind not in forbidden, (src, kind)


class TestSyncRetry:
    def test_block_requests_back_off_three_attempts(self):
        producer, _, actors = actors_fixture()
        cluster = SimCluster(n_authorities=3, n_replicas=1, seed=11, actors=actors)
        replica = cluster.replicas[0]
        clock = {"now": 0.0}
        replica.clock = lambda: clock["now"]
        from biotrak.netsync import BlockRequest, PeerSession

        replica.sessions["ghost"] = PeerSession(
            peer_id="ghost", mode=NodeMode.AUTHORITATIVE,
            chain_id=replica.chain_id, head_height=50, authority_id="00" * 8,
        )
        request_times = []
        for _ in range(60):
            clock["now"] += 0.5
            replica.tick()
            for peer, msg in replica.outbox:
                if peer == "ghost" and isinstance(msg, BlockRequest):
                    request_times.append(clock["now"])
            replica.outbox.clear()
        # per sync cycle: 3 attempts with doubling backoff (2s, 4s, 8s),
        # then the cycle restarts as background sync
        gaps = [round(b - a, 1) for a, b in zip(request_times, request_times[1:])]
        assert gaps[:6] == [2.0, 4.0, 8.0, 2.0, 4.0, 8.0], gaps


class TestSubmissionPaths:
    def test_lifecycle_reject_receipt(self):
        producer, _, actors = actors_fixture()
        cluster = SimCluster(n_authorities=3, seed=7, actors=actors)
        tx = production(producer.fingerprint, ["NOPE-1"], "OUT-1",
                        created_at=1_700_000_100)
        receipt = cluster.authorities[0].submit_local(
            tx, producer.fingerprint, sign_submission(tx, producer))
        assert receipt.status == "rejected"
        assert receipt.error == "unknown-input-lot"

    def test_bad_submitter_signature_rejected(self):
        producer, transporter, actors = actors_fixture()
        cluster = SimCluster(n_authorities=3, seed=8, actors=actors)
        tx = inbound_receipt(producer.fingerprint, ["SIG-1"], "DN-1",
                             created_at=1_700_000_100)
        receipt = cluster.authorities[0].submit_local(
            tx, producer.fingerprint, sign_submission(tx, transporter))
        assert receipt.status == "rejected"
        assert receipt.error == "bad-signature"

    def test_replica_refuses_local_submission(self):
        producer, _, actors = actors_fixture()
        cluster = SimCluster(n_authorities=3, n_replicas=1, seed=9, actors=actors)
        tx = inbound_receipt(producer.fingerprint, ["RR-1"], "DN-1",
                             created_at=1_700_000_100)
        from biotrak.errors import Unavailable

        with pytest.raises(Unavailable):
            cluster.replicas[0].submit_local(
                tx, producer.fingerprint, sign_submission(tx, producer))

    def test_duplicate_submission_idempotent(self):
        producer, _, actors = actors_fixture()
        cluster = SimCluster(n_authorities=3, seed=10, actors=actors)
        tx = inbound_receipt(producer.fingerprint, ["DUP-1"], "DN-1",
                             created_at=1_700_000_100)
        sig = sign_submission(tx, producer)
        cluster.net.submit("auth0", tx, producer.fingerprint, sig)
        cluster.net.run(max_time=60, stop_when=lambda: cluster.converged_at(1))
        assert cluster.converged_at(1)
        receipt = cluster.authorities[0]._admit_tx(tx, producer.fingerprint, sig)
        assert receipt.status == "accepted"
        cluster.net.run(max_time=20)
        assert all(n.state.height == 1 for n in cluster.authorities)
