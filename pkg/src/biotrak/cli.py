"""Operator command line.

Exit codes are part of the contract: 0 success, 2 refusal (permission or
validation), 3 invalid spec/config, 4 not found, 5 network failure.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import sys
import time
from pathlib import Path

import click
import requests

from . import chainspec, jsoncodec, ledger, txbuild
from .api import sign_request
from .errors import BiotrakError, MinimumAuthorities
from .keys import SigningKey
from .ledger import ProcessType, Role, make_genesis
from .netsync import NodeMode
from .traceability import REQUIRED_ROLE

EXIT_OK = 0
EXIT_REFUSED = 2
EXIT_INVALID_SPEC = 3
EXIT_NOT_FOUND = 4
EXIT_NETWORK = 5

DEFAULT_API = "http://127.0.0.1:8080"


def _api_base(value: str | None) -> str:
    return (value or os.environ.get("BIOTRAK_API") or DEFAULT_API).rstrip("/")


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _request(method: str, url: str, **kwargs) -> requests.Response:
    try:
        return requests.request(method, url, timeout=30, **kwargs)
    except requests.RequestException as exc:
        _fail(EXIT_NETWORK, f"cannot reach node: {exc}")


def _check_response(resp: requests.Response) -> dict:
    if resp.status_code == 404:
        _fail(EXIT_NOT_FOUND, _response_message(resp))
    if resp.status_code >= 400:
        _fail(EXIT_REFUSED, _response_message(resp))
    return resp.json()


def _response_message(resp: requests.Response) -> str:
    try:
        doc = resp.json()
        return f"{doc.get('error', resp.status_code)}: {doc.get('message', '')}"
    except ValueError:
        return f"HTTP {resp.status_code}"


@click.group()
def main():
    """BioTrak supply-chain ledger tools."""
    logging.basicConfig(level=os.environ.get("BIOTRAK_LOG", "WARNING"))


@main.command()
@click.option("--out", "out_path", required=True, type=click.Path(), help="key file to write")
@click.option("--force", is_flag=True, help="overwrite an existing key")
def keygen(out_path: str, force: bool):
    """Generate an Ed25519 signing key and print its fingerprint."""
    path = Path(out_path)
    if (path.exists() or Path(str(path) + ".pub").exists()) and not force:
        _fail(EXIT_REFUSED, f"{path} exists; use --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    key = SigningKey.generate()
    key.save(path)
    click.echo(key.fingerprint)


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help="chain spec JSON")
@click.option("--authority", "authority_files", multiple=True, type=click.Path(exists=True),
              help="extra authority public key file (repeatable)")
@click.option("--timestamp", type=int, default=None,
              help="fix the genesis timestamp for reproducible chain ids")
@click.option("--out", "out_path", required=True, type=click.Path(), help="genesis file to write")
def genesis(spec_path: str, authority_files, timestamp, out_path: str):
    """Build the genesis block and print the chain id."""
    try:
        extra = [chainspec._load_pubkey(f, Path(".")) for f in authority_files]
        config = chainspec.load_chain_spec(spec_path, extra_authority_keys=extra,
                                           timestamp=timestamp)
        block = make_genesis(config)
    except MinimumAuthorities as exc:
        _fail(EXIT_INVALID_SPEC, str(exc))
    except BiotrakError as exc:
        _fail(EXIT_INVALID_SPEC, str(exc))
    chainspec.write_genesis_file(out_path, block)
    click.echo(block.block_hash.hex())


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="node config file (key = value lines)")
def run(config_path: str):
    """Run a node; mode and endpoints come from the config file."""
    from .runtime import NodeRuntime

    try:
        config = chainspec.load_node_config(config_path)
        runtime = NodeRuntime(config)
    except BiotrakError as exc:
        code = EXIT_INVALID_SPEC if exc.code == "invalid-spec" else EXIT_REFUSED
        _fail(code, str(exc))
    runtime.start()
    mode = "authoritative" if config.mode == NodeMode.AUTHORITATIVE else "non-authoritative"
    click.echo(f"node up: mode={mode} api={config.api_listen} p2p={config.listen}")
    runtime.wait()


@main.command()
@click.option("--api", "api_url", default=None, help="API base URL (env BIOTRAK_API)")
@click.option("--key", "key_path", required=True, type=click.Path(exists=True),
              help="actor signing key")
@click.option("--tx", "tx_path", required=True, type=click.Path(exists=True),
              help="transaction JSON file ('-' for stdin)")
@click.option("--created-at", type=int, default=None, help="override created_at")
def submit(api_url, key_path, tx_path, created_at):
    """Submit a process transaction."""
    key = SigningKey.load(key_path)
    text = sys.stdin.read() if tx_path == "-" else Path(tx_path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        _fail(EXIT_INVALID_SPEC, f"bad transaction JSON: {exc}")
    doc.setdefault("tx_id", txbuild.new_tx_id().hex())
    doc.setdefault("actor_id", key.fingerprint)
    if created_at is not None:
        doc["created_at"] = created_at
    else:
        doc.setdefault("created_at", int(time.time()))
    if "role" not in doc:
        try:
            ptype = ProcessType.from_json(doc.get("process_type", ""))
        except BiotrakError as exc:
            _fail(EXIT_INVALID_SPEC, str(exc))
        doc["role"] = REQUIRED_ROLE[ptype].json_name
    try:
        tx = jsoncodec.tx_from_json(doc)
        detached = key.sign(ledger.canonical_serialize(tx))
    except BiotrakError as exc:
        _fail(EXIT_INVALID_SPEC, str(exc))
    body = json.dumps({
        "tx": jsoncodec.tx_to_json(tx),
        "signature": base64.b64encode(detached).decode("ascii"),
    }).encode("utf-8")
    base = _api_base(api_url)
    headers = sign_request(key, "POST", "/v1/tx", body)
    headers["Content-Type"] = "application/json"
    resp = _request("POST", f"{base}/v1/tx", data=body, headers=headers)
    receipt = _check_response(resp)
    click.echo(json.dumps(receipt))


@main.command()
@click.argument("lot_code")
@click.option("--api", "api_url", default=None, help="API base URL (env BIOTRAK_API)")
@click.option("--json", "as_json", is_flag=True, help="emit the raw API response")
def trace(lot_code: str, api_url, as_json: bool):
    """Render the process tree for a lot."""
    base = _api_base(api_url)
    resp = _request("GET", f"{base}/v1/lots/{lot_code}/history")
    if resp.status_code == 404:
        _fail(EXIT_NOT_FOUND, _response_message(resp))
    if resp.status_code >= 400:
        _fail(EXIT_REFUSED, _response_message(resp))
    if as_json:
        click.echo(resp.text)
        return
    doc = resp.json()
    for event in doc["events"]:
        tx = event["tx"]
        lot = tx.get("output_lot") or event.get("lot") or ",".join(tx.get("input_lots", []))
        actor = tx.get("actor_name") or tx["actor_id"]
        line = (
            f"{'  ' * event['depth']}{tx['process_type']} "
            f"actor={actor} lot={lot} ts={tx['created_at']}"
        )
        if "compliance" in event:
            line += " [cold-chain: " + ("ok" if event["compliance"]["compliant"] else "VIOLATED") + "]"
        click.echo(line)
        for ext in event.get("external_inputs", []):
            click.echo(f"{'  ' * (event['depth'] + 1)}external input lot={ext}")


@main.command("ingest-sensor")
@click.option("--api", "api_url", default=None, help="API base URL (env BIOTRAK_API)")
@click.option("--key", "key_path", required=True, type=click.Path(exists=True),
              help="transporter signing key")
@click.option("--transport", "transport_id", required=True, help="transport start tx id (hex)")
@click.option("--dump", "dump_path", required=True, type=click.Path(exists=True),
              help="sensor dump CSV file")
def ingest_sensor(api_url, key_path, transport_id, dump_path):
    """Terminate a transport leg with a temperature logger dump."""
    key = SigningKey.load(key_path)
    dump = Path(dump_path).read_bytes()
    boundary = "biotrakform"
    body = (
        f"--{boundary}\r\n"
        f'Content-Disposition: form-data; name="dump"; filename="dump.csv"\r\n'
        f"Content-Type: text/csv\r\n\r\n"
    ).encode() + dump + f"\r\n--{boundary}--\r\n".encode()
    path = f"/v1/transport/{transport_id}/terminate"
    headers = sign_request(key, "POST", path, body)
    headers["Content-Type"] = f"multipart/form-data; boundary={boundary}"
    base = _api_base(api_url)
    resp = _request("POST", f"{base}{path}", data=body, headers=headers)
    doc = _check_response(resp)
    click.echo(json.dumps({k: doc[k] for k in ("tx_id", "status", "sensor_id", "sensor_digest") if k in doc}))
    report = doc.get("report")
    if report:
        state = "compliant" if report["compliant"] else "NON-COMPLIANT"
        click.echo(f"cold chain {state}: {len(report['violations'])} violation(s), "
                   f"{report['total_excursion_seconds']}s total excursion")


if __name__ == "__main__":
    main()
