import random
from decimal import Decimal

import pytest

from biotrak.chain import ChainState
from biotrak.keys import SigningKey
from biotrak.ledger import ActorGrant, AuthorityEntry, GenesisConfig, Role, make_genesis
from biotrak.txbuild import DirectChain


def det_key(seed: int) -> SigningKey:
    rng = random.Random(seed)
    return SigningKey.from_bytes(bytes(rng.randrange(256) for _ in range(32)))


@pytest.fixture(scope="session")
def authority_keys():
    return [det_key(100 + i) for i in range(3)]


@pytest.fixture(scope="session")
def producer_key():
    return det_key(200)


@pytest.fixture(scope="session")
def producer_b_key():
    return det_key(201)


@pytest.fixture(scope="session")
def transporter_key():
    return det_key(202)


@pytest.fixture(scope="session")
def dual_key():
    return det_key(203)


@pytest.fixture(scope="session")
def genesis_config(authority_keys, producer_key, producer_b_key, transporter_key, dual_key):
    return GenesisConfig(
        chain_name="testchain",
        authorities=tuple(
            AuthorityEntry(public_key=k.public_bytes, endpoint=f"http://auth{i}.test")
            for i, k in enumerate(authority_keys)
        ),
        actors=(
            ActorGrant(producer_key.public_bytes, (Role.PRODUCER,), "Farm Alpha"),
            ActorGrant(producer_b_key.public_bytes, (Role.PRODUCER,), "Mill Beta"),
            ActorGrant(transporter_key.public_bytes, (Role.TRANSPORTER,), "Coldline"),
            ActorGrant(dual_key.public_bytes, (Role.PRODUCER, Role.TRANSPORTER), "Hybrid Co"),
        ),
        timestamp=1_700_000_000,
        min_temp=Decimal("0.0"),
        max_temp=Decimal("8.0"),
        max_excursion_seconds=600,
    )


@pytest.fixture(scope="session")
def genesis(genesis_config):
    return make_genesis(genesis_config)


@pytest.fixture()
def state(genesis):
    return ChainState(genesis)


@pytest.fixture()
def chain(state, authority_keys):
    return DirectChain(state, authority_keys)


class LifecycleHarness:
    """Drives the real lifecycle validator and lot index without blocks.

    Wraps each transaction in an unsigned dummy block purely so the index
    sees heights; no consensus machinery involved.
    """

    def __init__(self, authority_ids=()):
        from biotrak.traceability import LotIndex

        self.index = LotIndex()
        self.states = {}
        self.authority_ids = tuple(authority_ids)
        self.height = 0
        self.committed = []  # (height, tx)

    def check(self, tx):
        from biotrak.errors import LifecycleError
        from biotrak.traceability import lot_lifecycle_validate

        try:
            lot_lifecycle_validate(tx, self.index, self.states, self.authority_ids)
            return True
        except LifecycleError:
            return False

    def commit(self, tx):
        import biotrak.ledger as ledger
        from biotrak.traceability import apply_lot_transitions, index_block

        self.height += 1
        header = ledger.BlockHeader(
            height=self.height,
            prev_hash=b"\x00" * 32,
            timestamp=tx.created_at,
            proposer="00" * 8,
            tx_hash=ledger.hash_tx(tx),
        )
        block = ledger.Block(header=header, transaction=tx,
                             proposer_signature=b"\x00" * 64)
        index_block(self.index, block)
        apply_lot_transitions(tx, self.states)
        self.committed.append((self.height, tx))

    def validate_and_commit(self, tx) -> bool:
        if self.check(tx):
            self.commit(tx)
            return True
        return False
