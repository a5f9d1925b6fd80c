"""HTTP service: transaction submission, transport termination with sensor
uploads, and anonymous traceability/temperature/block queries.

Writes are authenticated with detached request signatures: the actor signs
``method \\n path \\n sha256(body) \\n timestamp`` with the Ed25519 key whose
fingerprint is registered on-chain, and sends the parts in the
``X-Biotrak-Actor`` / ``X-Biotrak-Timestamp`` / ``X-Biotrak-Signature``
headers.  Reads never require authentication.
"""

from __future__ import annotations

import base64
import hashlib
import json
import time

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import codes as codes_mod
from . import coldchain, jsoncodec, traceability
from .errors import BiotrakError, SerializationError
from .keys import SigningKey, verify_signature
from .ledger import (
    ProcessTransaction,
    ProcessType,
    Role,
    canonical_serialize,
    serialize_block,
)
from .netsync import NodeMode
from .node import Node, SubmitReceipt

AUTH_MAX_SKEW = 300


def auth_message(method: str, path: str, body: bytes, timestamp: str) -> bytes:
    digest = hashlib.sha256(body).hexdigest()
    return f"{method}\n{path}\n{digest}\n{timestamp}".encode("utf-8")


def sign_request(key: SigningKey, method: str, path: str, body: bytes,
                 timestamp: int | None = None) -> dict:
    """Client-side helper producing the three auth headers."""
    ts = str(timestamp if timestamp is not None else int(time.time()))
    sig = key.sign(auth_message(method, path, body, ts))
    return {
        "X-Biotrak-Actor": key.fingerprint,
        "X-Biotrak-Timestamp": ts,
        "X-Biotrak-Signature": base64.b64encode(sig).decode("ascii"),
    }


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, **extra):
        self.status = status
        self.code = code
        self.message = message
        self.extra = extra


def _error_response(exc: ApiError) -> JSONResponse:
    body = {"error": exc.code, "message": exc.message}
    body.update(exc.extra)
    return JSONResponse(status_code=exc.status, content=body)


class NodeGateway:
    """Submission path indirection so a runtime can funnel writes onto the
    node's single event thread; reads go straight to chain snapshots."""

    def __init__(self, node: Node, submit_fn=None):
        self.node = node
        self._submit = submit_fn

    def submit(self, tx: ProcessTransaction, submitter_id: str, signature: bytes) -> SubmitReceipt:
        if self._submit is not None:
            return self._submit(tx, submitter_id, signature)
        return self.node.submit_local(tx, submitter_id, signature)


def create_app(node: Node, submit_fn=None) -> FastAPI:
    app = FastAPI(title="biotrak", docs_url=None, redoc_url=None)
    gateway = NodeGateway(node, submit_fn)
    state = node.state

    @app.exception_handler(ApiError)
    async def _on_api_error(request: Request, exc: ApiError):
        return _error_response(exc)

    # -- auth -------------------------------------------------------------------

    def authenticate(request: Request, body: bytes) -> str:
        actor_id = request.headers.get("X-Biotrak-Actor", "")
        timestamp = request.headers.get("X-Biotrak-Timestamp", "")
        signature_b64 = request.headers.get("X-Biotrak-Signature", "")
        if not actor_id or not timestamp or not signature_b64:
            raise ApiError(401, "missing-auth", "authentication headers required")
        try:
            skew = abs(int(time.time()) - int(timestamp))
        except ValueError:
            raise ApiError(401, "bad-timestamp", "timestamp must be unix seconds")
        if skew > AUTH_MAX_SKEW:
            raise ApiError(401, "stale-timestamp", f"timestamp skew {skew}s exceeds {AUTH_MAX_SKEW}s")
        try:
            signature = base64.b64decode(signature_b64, validate=True)
        except Exception:
            raise ApiError(401, "bad-signature", "signature is not valid base64")
        public_key = None
        record = state.actor(actor_id)
        if record is not None:
            public_key = record.public_key
        elif state.authorities.contains(actor_id):
            public_key = state.authorities.public_key(actor_id)
        if public_key is None:
            raise ApiError(401, "unknown-actor", f"actor {actor_id} is not registered")
        message = auth_message(request.method, request.url.path, body, timestamp)
        if not verify_signature(public_key, message, signature):
            raise ApiError(401, "bad-signature", "request signature does not verify")
        return actor_id

    def actor_roles(actor_id: str) -> set:
        record = state.actor(actor_id)
        return set(record.roles) if record else set()

    def require_role(actor_id: str, role: Role) -> None:
        if role not in actor_roles(actor_id):
            raise ApiError(
                403, "role-forbidden",
                f"actor {actor_id} does not hold the {role.json_name} role",
            )

    def require_writable() -> None:
        if node.mode != NodeMode.AUTHORITATIVE:
            hints = [ep for _, _, ep in state.authorities.members if ep]
            raise ApiError(
                503, "read-only-replica",
                "this node is a read-only replica; submit to an authoritative node",
                forward=hints,
            )

    def receipt_response(receipt: SubmitReceipt) -> JSONResponse:
        if receipt.status == "rejected":
            status = 401 if receipt.error == "bad-signature" else 422
            raise ApiError(status, receipt.error or "rejected",
                           receipt.error_message or "transaction rejected")
        return JSONResponse({
            "tx_id": receipt.tx_id.hex(),
            "status": receipt.status,
        })

    # -- write endpoints -----------------------------------------------------------

    @app.post("/v1/tx")
    async def submit_tx(request: Request):
        require_writable()
        body = await request.body()
        actor_id = authenticate(request, body)
        try:
            doc = json.loads(body)
        except json.JSONDecodeError:
            raise ApiError(422, "bad-json", "body must be a JSON transaction")
        detached_sig = None
        if isinstance(doc, dict) and "tx" in doc:
            sig_b64 = doc.get("signature")
            if sig_b64:
                try:
                    detached_sig = base64.b64decode(sig_b64, validate=True)
                except Exception:
                    raise ApiError(401, "bad-signature", "detached signature is not base64")
            doc = doc["tx"]
        try:
            tx = jsoncodec.tx_from_json(doc)
        except SerializationError as exc:
            raise ApiError(422, exc.code, exc.message or str(exc))
        if tx.actor_id != actor_id:
            raise ApiError(403, "actor-mismatch",
                           "transaction actor_id must match the authenticated actor")
        if traceability.is_admin_grant(tx):
            if not state.authorities.contains(actor_id):
                raise ApiError(403, "role-forbidden", "role grants require an authority key")
        else:
            needed = traceability.REQUIRED_ROLE[tx.process_type]
            require_role(actor_id, needed)
            if tx.supersedes is not None:
                require_role(actor_id, Role.PRODUCER)
        if detached_sig is not None:
            submitter_id, signature = actor_id, detached_sig
        else:
            submitter_id, signature = node.authority_id, node.key.sign(canonical_serialize(tx))
        receipt = gateway.submit(tx, submitter_id, signature)
        return receipt_response(receipt)

    @app.post("/v1/transport/{tx_id}/terminate")
    async def terminate_transport(tx_id: str, request: Request):
        require_writable()
        body = await request.body()
        actor_id = authenticate(request, body)
        require_role(actor_id, Role.TRANSPORTER)
        try:
            start_id = bytes.fromhex(tx_id)
        except ValueError:
            raise ApiError(404, "unknown-tx", f"{tx_id} is not a transaction id")
        form = await request.form()
        upload = form.get("dump")
        if upload is None:
            raise ApiError(422, "missing-dump", "multipart field 'dump' required")
        dump_bytes = await upload.read() if hasattr(upload, "read") else str(upload).encode()

        with state.lock:
            leg = state.lot_index.transports.get(start_id)
            if leg is None:
                raise ApiError(404, "unknown-tx", "no such transport start")
            if not leg.open:
                raise ApiError(409, "transport-already-terminated",
                               "this transport was already terminated")
            lots = leg.lots
        try:
            series = coldchain.parse_sensor_dump(dump_bytes)
            digest, blob = coldchain.seal_series_for_chain(series)
        except BiotrakError as exc:
            raise ApiError(422, exc.code, exc.message, **exc.details)
        policy = state.policy
        report = coldchain.evaluate_compliance(series, policy) if policy else None

        timestamp = int(request.headers.get("X-Biotrak-Timestamp"))
        params = [
            ("sensor_digest", digest.hex()),
            ("auth.body_digest", hashlib.sha256(body).hexdigest()),
            ("auth.request_signature", base64.b64decode(request.headers["X-Biotrak-Signature"])),
            ("auth.timestamp", timestamp),
        ]
        if report is not None:
            params.append(("compliance", "pass" if report.compliant else "fail"))
            params.append(("excursion_seconds", report.total_excursion_seconds))
            params.append(("violation_count", len(report.violations)))
        end_id = hashlib.sha256(
            b"biotrak-transport-end" + start_id + digest + timestamp.to_bytes(8, "big")
        ).digest()[:16]
        tx = ProcessTransaction(
            tx_id=end_id,
            process_type=ProcessType.TRANSPORT_END,
            actor_id=actor_id,
            role=Role.TRANSPORTER,
            input_lots=lots,
            transport_ref=start_id,
            sensor_series=blob,
            parameters=tuple(params),
            created_at=timestamp,
        )
        receipt = gateway.submit(tx, node.authority_id, node.key.sign(canonical_serialize(tx)))
        if receipt.status == "rejected":
            if receipt.error == "transport-already-terminated":
                raise ApiError(409, receipt.error, receipt.error_message or "")
            raise ApiError(422, receipt.error or "rejected", receipt.error_message or "")
        out = {
            "tx_id": receipt.tx_id.hex(),
            "status": receipt.status,
            "sensor_id": series.sensor_id,
            "sensor_digest": digest.hex(),
            "samples": jsoncodec.series_to_json(series)["samples"],
        }
        if report is not None:
            out["report"] = jsoncodec.report_to_json(report)
        return JSONResponse(out)

    # -- read endpoints ---------------------------------------------------------------

    def tx_view(tx: ProcessTransaction) -> dict:
        doc = jsoncodec.tx_to_json(tx)
        record = state.actor(tx.actor_id)
        doc["actor_name"] = record.display_name if record else ""
        return doc

    def leg_report(tx: ProcessTransaction):
        if tx.process_type != ProcessType.TRANSPORT_END or tx.sensor_series is None:
            return None
        if state.policy is None:
            return None
        series = coldchain.decode_series(tx.sensor_series)
        return jsoncodec.report_to_json(coldchain.evaluate_compliance(series, state.policy))

    def tree_view(tree: traceability.ProcessTree) -> dict:
        node_doc = {
            "tx": tx_view(tree.root_tx),
            "tx_id": tree.root_tx_id.hex(),
            "height": tree.height,
            "input_subtrees": [
                {"lot": lot, "node": tree_view(sub)} for lot, sub in tree.input_subtrees
            ],
            "external_inputs": list(tree.external_inputs),
        }
        report = leg_report(tree.root_tx)
        if report is not None:
            node_doc["compliance"] = report
        return node_doc

    @app.get("/v1/lots/{code}/history")
    def get_history(code: str):
        with state.lock:
            try:
                tree = traceability.trace_history(code, state.lot_index)
            except BiotrakError as exc:
                if exc.code == "unknown-lot":
                    raise ApiError(404, exc.code, exc.message)
                raise ApiError(422, exc.code, exc.message)
            events = []
            for depth, keyed, node_ in traceability.flatten_nodes(tree):
                entry = {
                    "depth": depth,
                    "lot": keyed,
                    "tx": tx_view(node_.root_tx),
                    "height": node_.height,
                    "external_inputs": list(node_.external_inputs),
                }
                report = leg_report(node_.root_tx)
                if report is not None:
                    entry["compliance"] = report
                events.append(entry)
            return JSONResponse({
                "lot": code,
                "tree": tree_view(tree),
                "events": events,
            })

    @app.get("/v1/lots/{code}/transports/{tx_id}/temperature")
    def get_temperature(code: str, tx_id: str):
        try:
            ref = bytes.fromhex(tx_id)
        except ValueError:
            raise ApiError(404, "unknown-tx", f"{tx_id} is not a transaction id")
        with state.lock:
            index = state.lot_index
            end_tx = None
            if ref in index.transports:
                leg = index.transports[ref]
                if code not in leg.lots:
                    raise ApiError(404, "unknown-lot", f"lot {code} not on this transport")
                if leg.end_tx is None:
                    return Response(status_code=204)
                end_tx = traceability.latest_version(leg.end_tx, index)
            elif ref in index.txs:
                candidate = traceability.latest_version(ref, index)
                if candidate.process_type != ProcessType.TRANSPORT_END:
                    raise ApiError(404, "unknown-tx", "transaction is not a transport leg")
                if code not in candidate.input_lots:
                    raise ApiError(404, "unknown-lot", f"lot {code} not on this transport")
                end_tx = candidate
            else:
                raise ApiError(404, "unknown-tx", "no such transport leg")
        if end_tx.sensor_series is None:
            return Response(status_code=204)
        series = coldchain.decode_series(end_tx.sensor_series)
        doc = jsoncodec.series_to_json(series)
        doc["tx_id"] = end_tx.tx_id.hex()
        if state.policy is not None:
            doc["report"] = jsoncodec.report_to_json(
                coldchain.evaluate_compliance(series, state.policy)
            )
            doc["policy"] = {
                "min_temp": coldchain.format_temp(state.policy.min_temp),
                "max_temp": coldchain.format_temp(state.policy.max_temp),
                "max_excursion_seconds": state.policy.max_excursion_seconds,
            }
        return JSONResponse(doc)

    def block_doc(block) -> dict:
        return {
            "block": jsoncodec.block_to_json(block),
            "canonical": base64.b64encode(serialize_block(block)).decode("ascii"),
            "block_hash": block.block_hash.hex(),
        }

    @app.get("/v1/blocks/{ref}")
    def get_block(ref: str):
        with state.lock:
            block = None
            if ref.isdigit():
                block = state.block_at(int(ref))
            elif len(ref) == 64:
                try:
                    block = state.block_by_hash(bytes.fromhex(ref))
                except ValueError:
                    block = None
            if block is None:
                raise ApiError(404, "not-found", f"no committed block {ref}")
            return JSONResponse(block_doc(block))

    @app.get("/v1/chain/head")
    def get_head():
        with state.lock:
            head = state.head
            doc = block_doc(head)
            doc["height"] = head.header.height
            doc["chain_id"] = state.chain_id.genesis_hash.hex()
            return JSONResponse(doc)

    @app.get("/v1/codes/lot/{code}")
    def get_lot_code(code: str):
        with state.lock:
            if not state.lot_index.events_for(code):
                raise ApiError(404, "unknown-lot", f"lot {code} has no on-chain history")
        try:
            payload = codes_mod.encode_payload(codes_mod.CodePayload(
                kind=codes_mod.CodeKind.LOT,
                subject_id=code,
                chain_hint=state.chain_id.hint,
            ))
        except BiotrakError as exc:
            raise ApiError(422, exc.code, exc.message)
        return JSONResponse({"lot": code, "payload": payload})

    @app.get("/v1/actors/{actor_id}")
    def get_actor(actor_id: str):
        record = state.actor(actor_id)
        if record is None:
            raise ApiError(404, "unknown-actor", f"actor {actor_id} is not registered")
        return JSONResponse({
            "actor_id": record.actor_id,
            "display_name": record.display_name,
            "roles": sorted(r.json_name for r in record.roles),
        })

    return app
