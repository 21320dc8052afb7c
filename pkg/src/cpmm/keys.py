"""Ed25519 signing helpers.

One signature primitive serves the whole stack: record commitments, payment
headers, protocol message envelopes and attestation certificates. Ed25519 is
a Schnorr-family scheme with 64-byte signatures and 32-byte public keys;
signing is deterministic, so fixture bytes are reproducible from seed keys.
"""

from __future__ import annotations

import base64
import hashlib

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

SIGNATURE_LEN = 64
PUBLIC_KEY_LEN = 32


class SigningKey:
    """Private Ed25519 key wrapper with base64 public-key export."""

    def __init__(self, private: Ed25519PrivateKey):
        self._private = private
        self._public_bytes = private.public_key().public_bytes(
            Encoding.Raw, PublicFormat.Raw
        )

    @classmethod
    def generate(cls) -> "SigningKey":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes | str) -> "SigningKey":
        """Deterministic key from an arbitrary seed label (for fixtures/tests)."""
        if isinstance(seed, str):
            seed = seed.encode("utf-8")
        material = hashlib.sha256(b"cpmm-key|" + seed).digest()
        return cls(Ed25519PrivateKey.from_private_bytes(material))

    @property
    def public_bytes(self) -> bytes:
        return self._public_bytes

    @property
    def public_b64(self) -> str:
        return base64.b64encode(self._public_bytes).decode("ascii")

    def private_bytes(self) -> bytes:
        return self._private.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())

    def sign(self, message: bytes) -> bytes:
        return self._private.sign(message)

    def sign_b64(self, message: bytes) -> str:
        return base64.b64encode(self.sign(message)).decode("ascii")


def verify(public_key: bytes | str, signature: bytes | str, message: bytes) -> bool:
    """True iff `signature` is a valid Ed25519 signature by `public_key` over `message`."""
    try:
        if isinstance(public_key, str):
            public_key = base64.b64decode(public_key, validate=True)
        if isinstance(signature, str):
            signature = base64.b64decode(signature, validate=True)
        if len(signature) != SIGNATURE_LEN or len(public_key) != PUBLIC_KEY_LEN:
            return False
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False
