"""Textual payloads carried by QR codes.

Grammar (normative, versionless):

    biotrak://lot/<id>?c=<hint>
    biotrak://note/<id>?c=<hint>
    biotrak://sensor/<sensor_id>/lot/<lot>?c=<hint>

``hint`` is the 8-hex-char prefix of the deployment's genesis hash and
binds a scanned code to one chain.  Image rendering and camera decoding
live outside the core; this module only handles the strings.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .errors import InvalidId, MissingChainHint, UnsupportedPayload
from .ledger import LOT_CODE_RE

_HINT_RE = re.compile(r"^[0-9a-f]{8}$")


class CodeKind(enum.Enum):
    LOT = "lot"
    DELIVERY_NOTE = "note"
    SENSOR = "sensor"


@dataclass(frozen=True)
class CodePayload:
    kind: CodeKind
    subject_id: str
    chain_hint: str
    lot: str | None = None  # sensor codes carry the lot they travel with

    def __post_init__(self):
        if not LOT_CODE_RE.match(self.subject_id or ""):
            raise InvalidId(f"bad subject id {self.subject_id!r}")
        if not _HINT_RE.match(self.chain_hint or ""):
            raise MissingChainHint(f"bad chain hint {self.chain_hint!r}")
        if self.kind == CodeKind.SENSOR:
            if self.lot is None or not LOT_CODE_RE.match(self.lot):
                raise InvalidId("sensor codes require a valid lot code")
        elif self.lot is not None:
            raise InvalidId("only sensor codes carry a lot field")


def encode_payload(p: CodePayload) -> str:
    if p.kind == CodeKind.SENSOR:
        return f"biotrak://sensor/{p.subject_id}/lot/{p.lot}?c={p.chain_hint}"
    return f"biotrak://{p.kind.value}/{p.subject_id}?c={p.chain_hint}"


def parse_payload(s: str) -> CodePayload:
    """Total parser: any input yields a CodePayload or a typed error."""
    if not isinstance(s, str):
        raise UnsupportedPayload("payload must be a string")
    m = re.match(r"^biotrak://([a-z]+)/(.*)$", s)
    if m is None:
        raise UnsupportedPayload(f"not a biotrak payload: {s[:64]!r}")
    kind_name, rest = m.group(1), m.group(2)

    if "?" in rest:
        rest, _, query = rest.partition("?")
        qm = re.match(r"^c=([0-9a-f]{8})$", query)
        if qm is None:
            raise MissingChainHint(f"bad chain hint query {query!r}")
        hint = qm.group(1)
    else:
        raise MissingChainHint("payload lacks the ?c= chain hint")

    if kind_name == "sensor":
        sm = re.match(r"^([^/]*)/lot/([^/]*)$", rest)
        if sm is None:
            raise UnsupportedPayload("sensor payloads need /lot/ segments")
        return CodePayload(
            kind=CodeKind.SENSOR, subject_id=sm.group(1), chain_hint=hint, lot=sm.group(2)
        )
    if kind_name == "lot":
        kind = CodeKind.LOT
    elif kind_name == "note":
        kind = CodeKind.DELIVERY_NOTE
    else:
        raise UnsupportedPayload(f"unknown payload kind {kind_name!r}")
    if "/" in rest:
        raise InvalidId(f"unexpected path segment in {rest!r}")
    return CodePayload(kind=kind, subject_id=rest, chain_hint=hint)
