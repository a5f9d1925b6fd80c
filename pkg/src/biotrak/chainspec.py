"""Deployment files: chain spec JSON, genesis block files, node configs.

Chain spec (input to genesis creation):

    {
      "name": "my-chain",
      "timestamp": 1700000000,
      "authorities": [{"pubkey": "<hex or file path>", "endpoint": "http://..."}],
      "actors": [{"pubkey": "<hex or path>", "roles": ["producer"], "name": "Farm"}],
      "coldchain": {"min_temp": "0.0", "max_temp": "8.0", "max_excursion_seconds": 600}
    }

Genesis files carry the canonical block bytes (base64) plus a decoded view;
only the bytes are authoritative.  Node configs are ``key = value`` lines.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path

from . import jsoncodec, ledger
from .errors import BiotrakError
from .ledger import ActorGrant, AuthorityEntry, Block, GenesisConfig, Role
from .netsync import NodeMode


class SpecError(BiotrakError):
    code = "invalid-spec"


def _load_pubkey(value: str, base_dir: Path) -> bytes:
    if not isinstance(value, str):
        raise SpecError("pubkey must be a hex string or file path")
    candidate = Path(value)
    if not candidate.is_absolute():
        candidate = base_dir / value
    if candidate.exists():
        value = candidate.read_text().strip()
    try:
        raw = bytes.fromhex(value)
    except ValueError:
        raise SpecError(f"pubkey {value[:32]!r} is neither hex nor a readable file")
    if len(raw) != 32:
        raise SpecError("public keys must be 32 bytes")
    return raw


def load_chain_spec(path: str | Path, extra_authority_keys=(), timestamp: int | None = None) -> GenesisConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read chain spec: {exc}")
    if not isinstance(doc, dict) or not doc.get("name"):
        raise SpecError("chain spec needs a nonempty 'name'")
    base_dir = path.parent

    authorities = []
    for entry in doc.get("authorities", []):
        authorities.append(AuthorityEntry(
            public_key=_load_pubkey(entry.get("pubkey", ""), base_dir),
            endpoint=entry.get("endpoint", ""),
        ))
    for raw in extra_authority_keys:
        authorities.append(AuthorityEntry(public_key=raw, endpoint=""))

    actors = []
    for entry in doc.get("actors", []):
        roles = []
        for name in entry.get("roles", []):
            try:
                roles.append(Role.from_json(name))
            except BiotrakError:
                raise SpecError(f"unknown role {name!r}")
        actors.append(ActorGrant(
            public_key=_load_pubkey(entry.get("pubkey", ""), base_dir),
            roles=tuple(roles),
            display_name=entry.get("name", ""),
        ))

    cold = doc.get("coldchain") or {}
    def _dec(key):
        if key not in cold:
            return None
        try:
            return Decimal(str(cold[key]))
        except InvalidOperation:
            raise SpecError(f"coldchain.{key} is not a decimal")

    ts = timestamp if timestamp is not None else doc.get("timestamp", 0)
    if not isinstance(ts, int) or ts < 0:
        raise SpecError("timestamp must be a nonnegative integer")
    return GenesisConfig(
        chain_name=doc["name"],
        authorities=tuple(authorities),
        actors=tuple(actors),
        timestamp=ts,
        min_temp=_dec("min_temp"),
        max_temp=_dec("max_temp"),
        max_excursion_seconds=cold.get("max_excursion_seconds"),
    )


def write_genesis_file(path: str | Path, genesis: Block) -> None:
    doc = {
        "chain_id": genesis.block_hash.hex(),
        "block": base64.b64encode(ledger.serialize_block(genesis)).decode("ascii"),
        "view": jsoncodec.block_to_json(genesis),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_genesis_file(path: str | Path) -> Block:
    try:
        doc = json.loads(Path(path).read_text())
        block = ledger.deserialize_block(base64.b64decode(doc["block"]))
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise SpecError(f"cannot read genesis file: {exc}")
    claimed = doc.get("chain_id")
    if claimed and block.block_hash.hex() != claimed:
        raise SpecError("genesis file chain_id does not match the block bytes")
    if block.header.height != 0:
        raise SpecError("genesis file does not contain a height-0 block")
    return block


@dataclass
class FileConfig:
    mode: NodeMode
    data_dir: Path
    genesis_path: Path
    key_path: Path | None = None
    listen: str | None = None
    api_listen: str | None = None
    peers: tuple = ()


def load_node_config(path: str | Path) -> FileConfig:
    path = Path(path)
    values: dict = {}
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read config: {exc}")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SpecError(f"config line {lineno} is not key = value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    mode_text = values.get("mode", "").lower()
    if mode_text in ("authoritative", "authority"):
        mode = NodeMode.AUTHORITATIVE
    elif mode_text in ("non-authoritative", "nonauthoritative", "replica"):
        mode = NodeMode.NON_AUTHORITATIVE
    else:
        raise SpecError(f"mode must be authoritative or non-authoritative, got {mode_text!r}")
    if "genesis" not in values:
        raise SpecError("config needs genesis = <path to genesis file>")
    if "data_dir" not in values:
        raise SpecError("config needs data_dir = <path>")
    base = path.parent

    def _path(value):
        p = Path(value)
        return p if p.is_absolute() else base / p

    key_path = _path(values["key_path"]) if "key_path" in values else None
    if mode == NodeMode.AUTHORITATIVE and key_path is None:
        raise SpecError("authoritative mode needs key_path = <signing key file>")
    peers = tuple(p.strip() for p in values.get("peers", "").split(",") if p.strip())
    return FileConfig(
        mode=mode,
        data_dir=_path(values["data_dir"]),
        genesis_path=_path(values["genesis"]),
        key_path=key_path,
        listen=values.get("listen"),
        api_listen=values.get("api_listen"),
        peers=peers,
    )
