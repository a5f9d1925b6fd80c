"""Ed25519 key handling.

Actor and authority identities are the first 8 bytes of the SHA-256 of the
raw public key, hex encoded (16 lowercase hex chars).
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

FINGERPRINT_BYTES = 8


def fingerprint(public_key: bytes) -> str:
    return hashlib.sha256(public_key).digest()[:FINGERPRINT_BYTES].hex()


class SigningKey:
    """Wrapper around an Ed25519 private key with raw-bytes persistence."""

    def __init__(self, private: Ed25519PrivateKey):
        self._private = private
        self.public_bytes = private.public_key().public_bytes_raw()
        self.fingerprint = fingerprint(self.public_bytes)

    @classmethod
    def generate(cls) -> "SigningKey":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SigningKey":
        return cls(Ed25519PrivateKey.from_private_bytes(raw))

    @classmethod
    def load(cls, path: str | Path) -> "SigningKey":
        raw = bytes.fromhex(Path(path).read_text().strip())
        return cls.from_bytes(raw)

    def private_bytes(self) -> bytes:
        return self._private.private_bytes_raw()

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text(self.private_bytes().hex() + "\n")
        os.chmod(path, 0o600)
        pub = Path(str(path) + ".pub")
        pub.write_text(self.public_bytes.hex() + "\n")
        os.chmod(pub, 0o600)

    def sign(self, message: bytes) -> bytes:
        return self._private.sign(message)


def load_public_key(path: str | Path) -> bytes:
    return bytes.fromhex(Path(path).read_text().strip())


def verify_signature(public_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False
