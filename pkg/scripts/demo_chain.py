#!/usr/bin/env python3
"""Seed a demo chain and serve its HTTP API from one process.

Builds a three-authority chain with a produce-transport-deliver story:
two raw lots, a production, a cold-chain transport with a temperature
excursion (non-compliant), receipt by a second producer, and a follow-up
production plus a compliant transport leg.  All authority keys live in
this process, so submissions through the API commit immediately; this is
a demo/dev harness, not a deployment topology.

    python scripts/demo_chain.py --port 8080 --keys-out demo-keys.json
"""

import argparse
import json
import random
import sys
from decimal import Decimal
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from biotrak.api import create_app
from biotrak.chain import ChainState
from biotrak.coldchain import parse_sensor_dump, seal_series_for_chain
from biotrak.keys import SigningKey
from biotrak.ledger import ActorGrant, AuthorityEntry, GenesisConfig, Role, make_genesis
from biotrak.netsync import NodeMode
from biotrak.node import Node, NodeConfig
from biotrak.txbuild import (
    DirectChain,
    inbound_receipt,
    outbound_delivery,
    production,
    transport_end,
    transport_start,
)

BASE_TS = 1_750_000_000


def det_key(seed: int) -> SigningKey:
    rng = random.Random(seed)
    return SigningKey.from_bytes(bytes(rng.randrange(256) for _ in range(32)))


def make_dump(sensor_id: str, start_ts: int, temps) -> bytes:
    lines = [f"biotrak-sensor,v1,{sensor_id}"]
    for i, temp in enumerate(temps):
        lines.append(f"{start_ts + i * 60},{temp}")
    return "\n".join(lines).encode()


def build_demo():
    authorities = [det_key(9100 + i) for i in range(3)]
    farm = det_key(9200)
    deli = det_key(9201)
    truck = det_key(9202)

    config = GenesisConfig(
        chain_name="biotrak-demo",
        authorities=tuple(
            AuthorityEntry(public_key=k.public_bytes, endpoint="") for k in authorities
        ),
        actors=(
            ActorGrant(farm.public_bytes, (Role.PRODUCER,), "Sunfield Farm"),
            ActorGrant(deli.public_bytes, (Role.PRODUCER,), "Blue Deli"),
            ActorGrant(truck.public_bytes, (Role.TRANSPORTER,), "Coldline Logistics"),
        ),
        timestamp=BASE_TS,
        min_temp=Decimal("0.0"),
        max_temp=Decimal("8.0"),
        max_excursion_seconds=600,
    )
    genesis = make_genesis(config)
    state = ChainState(genesis)
    chain = DirectChain(state, authorities)
    F, D, T = farm.fingerprint, deli.fingerprint, truck.fingerprint

    chain.commit(inbound_receipt(F, ["RAW-TOMATO-01"], "DN-FARM-001",
                                 created_at=BASE_TS + 100))
    chain.commit(inbound_receipt(F, ["RAW-BASIL-01"], "DN-FARM-002",
                                 created_at=BASE_TS + 200))
    chain.commit(production(
        F, ["RAW-TOMATO-01", "RAW-BASIL-01"], "SAUCE-2026.A1",
        created_at=BASE_TS + 300,
        parameters=(("recipe", "passata-classica"), ("batch.kg", 420)),
    ))
    chain.commit(outbound_delivery(F, ["SAUCE-2026.A1"], "DN-SHIP-100",
                                   created_at=BASE_TS + 400))

    hot_leg = transport_start(T, ["SAUCE-2026.A1"], created_at=BASE_TS + 500)
    chain.commit(hot_leg)
    # fридge failure: 40 minutes above the 8 C ceiling
    hot_temps = ["4.0"] * 10 + ["11.5"] * 40 + ["4.5"] * 10
    hot_series = parse_sensor_dump(make_dump("NFC-TL30-77", BASE_TS + 500, hot_temps))
    digest, blob = seal_series_for_chain(hot_series)
    chain.commit(transport_end(
        T, ["SAUCE-2026.A1"], hot_leg.tx_id, created_at=BASE_TS + 500 + 60 * 60,
        sensor_series=blob,
        parameters=(("sensor_digest", digest.hex()), ("compliance", "fail")),
    ))

    chain.commit(inbound_receipt(D, ["SAUCE-2026.A1"], "DN-SHIP-100",
                                 created_at=BASE_TS + 5000))
    chain.commit(production(
        D, ["SAUCE-2026.A1"], "PIZZA-2026.P1", created_at=BASE_TS + 5100,
        parameters=(("recipe", "margherita"),),
    ))
    chain.commit(outbound_delivery(D, ["PIZZA-2026.P1"], "DN-SHIP-200",
                                   created_at=BASE_TS + 5200))

    cold_leg = transport_start(T, ["PIZZA-2026.P1"], created_at=BASE_TS + 5300)
    chain.commit(cold_leg)
    cold_series = parse_sensor_dump(
        make_dump("NFC-TL30-78", BASE_TS + 5300, ["3.5", "3.6", "4.0", "4.1", "3.9"]))
    digest2, blob2 = seal_series_for_chain(cold_series)
    chain.commit(transport_end(
        T, ["PIZZA-2026.P1"], cold_leg.tx_id, created_at=BASE_TS + 5300 + 300,
        sensor_series=blob2,
        parameters=(("sensor_digest", digest2.hex()), ("compliance", "pass")),
    ))

    return {
        "authorities": authorities,
        "farm": farm,
        "deli": deli,
        "truck": truck,
        "genesis": genesis,
        "state": state,
        "chain": chain,
        "hot_leg": hot_leg,
        "cold_leg": cold_leg,
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--keys-out", type=Path, default=None,
                        help="write demo actor keys (hex) for client use")
    parser.add_argument("--seed-only", action="store_true",
                        help="build and describe the chain, do not serve")
    args = parser.parse_args()

    demo = build_demo()
    state = demo["state"]
    node = Node(
        NodeConfig(node_id="demo", mode=NodeMode.AUTHORITATIVE,
                   key=demo["authorities"][0]),
        demo["genesis"],
    )
    for h in range(1, state.height + 1):
        node.state.append(state.block_at(h))

    chain = DirectChain(node.state, demo["authorities"])

    def direct_submit(tx, submitter_id, signature):
        receipt = node.submit_local(tx, submitter_id, signature)
        if receipt.status in ("accepted", "queued") and tx.tx_id not in node.state.lot_index.by_tx:
            chain.commit(tx)
        return receipt

    info = {
        "chain_id": node.state.chain_id.genesis_hash.hex(),
        "chain_hint": node.state.chain_id.hint,
        "head_height": node.state.height,
        "api": f"http://{args.host}:{args.port}",
        "lots": ["RAW-TOMATO-01", "RAW-BASIL-01", "SAUCE-2026.A1", "PIZZA-2026.P1"],
        "non_compliant_transport": demo["hot_leg"].tx_id.hex(),
        "compliant_transport": demo["cold_leg"].tx_id.hex(),
        "actors": {
            "producer": demo["farm"].fingerprint,
            "producer_2": demo["deli"].fingerprint,
            "transporter": demo["truck"].fingerprint,
        },
    }
    print(json.dumps(info, indent=2), flush=True)

    if args.keys_out:
        keys_doc = {
            name: {
                "fingerprint": key.fingerprint,
                "private_hex": key.private_bytes().hex(),
                "public_hex": key.public_bytes.hex(),
            }
            for name, key in (("producer", demo["farm"]), ("producer_2", demo["deli"]),
                              ("transporter", demo["truck"]))
        }
        args.keys_out.write_text(json.dumps(keys_doc, indent=2))
        print(f"demo keys written to {args.keys_out}", flush=True)

    if args.seed_only:
        return 0

    import uvicorn

    app = create_app(node, submit_fn=direct_submit)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
