"""Error taxonomy shared across the node.

Every rejection carries a stable machine-readable ``code`` so that peers,
the HTTP service, and the CLI can react without parsing prose.
"""

from __future__ import annotations


class BiotrakError(Exception):
    """Base error; ``code`` is a stable kebab-case identifier."""

    code = "internal-error"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def __str__(self) -> str:
        if self.details:
            extras = ", ".join(f"{k}={v}" for k, v in self.details.items())
            return f"{self.code}: {self.message} ({extras})"
        return f"{self.code}: {self.message}"


class SerializationError(BiotrakError):
    code = "bad-serialization"


class InvariantError(BiotrakError):
    """A domain type invariant was violated at construction time."""

    code = "invariant-violation"


class ValidationError(BiotrakError):
    """Base for block/transaction rule failures; subclasses pin the code."""

    code = "validation-failed"


# -- block structural rules ------------------------------------------------

class BadLink(ValidationError):
    code = "bad-link"


class BadHeight(ValidationError):
    code = "bad-height"


class BadTimestamp(ValidationError):
    code = "bad-timestamp"


class BadProposer(ValidationError):
    code = "bad-proposer"


class BadSignature(ValidationError):
    code = "bad-signature"


class BelowThreshold(ValidationError):
    code = "below-threshold"


class BadTxHash(ValidationError):
    code = "bad-tx-hash"


class DuplicateSigner(ValidationError):
    code = "duplicate-signer"


class NotMyTurn(ValidationError):
    code = "not-my-turn"


class MinimumAuthorities(ValidationError):
    code = "minimum-authority"


# -- lot lifecycle ----------------------------------------------------------

class LifecycleError(ValidationError):
    code = "lifecycle-failed"


class UnknownInputLot(LifecycleError):
    code = "unknown-input-lot"


class LotInTransit(LifecycleError):
    code = "lot-in-transit"


class LotConsumed(LifecycleError):
    code = "lot-consumed"


class DuplicateOutputLot(LifecycleError):
    code = "duplicate-output-lot"


class DanglingTransportRef(LifecycleError):
    code = "dangling-transport-ref"


class TransportAlreadyTerminated(LifecycleError):
    code = "transport-already-terminated"


class TransportLotMismatch(LifecycleError):
    code = "transport-lot-mismatch"


class WrongHolder(LifecycleError):
    code = "wrong-holder"


class MissingDeliveryNote(LifecycleError):
    code = "missing-delivery-note"


class RoleForbidden(LifecycleError):
    code = "role-forbidden"


class SupersedeMismatch(LifecycleError):
    code = "supersede-mismatch"


class DuplicateTx(LifecycleError):
    code = "duplicate-tx"


class UnknownTx(BiotrakError):
    code = "unknown-tx"


class UnknownLot(BiotrakError):
    code = "unknown-lot"


class DepthExceeded(BiotrakError):
    code = "depth-exceeded"


# -- cold chain -------------------------------------------------------------

class MalformedHeader(BiotrakError):
    code = "malformed-header"


class MalformedSample(BiotrakError):
    code = "malformed-sample"


class NonMonotonicTimestamps(BiotrakError):
    code = "non-monotonic-timestamps"


class OutOfBoundsTemperature(BiotrakError):
    code = "out-of-bounds-temperature"


class SeriesTooLarge(BiotrakError):
    code = "too-large"


# -- QR payloads ------------------------------------------------------------

class UnsupportedPayload(BiotrakError):
    code = "unsupported-payload"


class InvalidId(BiotrakError):
    code = "invalid-id"


class MissingChainHint(BiotrakError):
    code = "missing-chain-hint"


# -- networking -------------------------------------------------------------

class ChainMismatch(BiotrakError):
    code = "chain-mismatch"


class AuthorityImpersonation(BiotrakError):
    code = "authority-impersonation"


class PeerMisbehaved(BiotrakError):
    code = "peer-misbehaved"


class Unavailable(BiotrakError):
    code = "unavailable"


# -- storage ----------------------------------------------------------------

class NotFound(BiotrakError):
    code = "not-found"


class HashMismatchOnRead(BiotrakError):
    code = "hash-mismatch-on-read"


class CorruptBeyondTail(BiotrakError):
    code = "corrupt-beyond-tail"
