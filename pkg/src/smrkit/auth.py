"""Pluggable message authentication.

The ordering protocol signs every frame. The default scheme is a keyed hash
(HMAC-SHA256) where the "public" key equals the secret key: cheap and fully
deterministic, standing in for per-channel transport authentication. The
Ed25519 scheme provides real asymmetric material for deployment bundles,
where secret-key confinement is the point.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)


@dataclass(frozen=True)
class KeyPair:
    scheme: str
    secret: bytes
    public: bytes


class SignScheme:
    name = "abstract"

    def generate(self, seed: bytes) -> KeyPair:
        """Derive a key pair deterministically from a seed."""
        raise NotImplementedError

    def sign(self, secret: bytes, data: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, public: bytes, data: bytes, tag: bytes) -> bool:
        raise NotImplementedError


class HmacSigner(SignScheme):
    name = "hmac-sha256"

    def generate(self, seed: bytes) -> KeyPair:
        key = hashlib.sha256(b"hmac-key:" + seed).digest()
        return KeyPair(self.name, secret=key, public=key)

    def sign(self, secret: bytes, data: bytes) -> bytes:
        return hmac.new(secret, data, hashlib.sha256).digest()

    def verify(self, public: bytes, data: bytes, tag: bytes) -> bool:
        return hmac.compare_digest(self.sign(public, data), tag)


class Ed25519Signer(SignScheme):
    name = "ed25519"

    def generate(self, seed: bytes) -> KeyPair:
        raw = hashlib.sha256(b"ed25519-key:" + seed).digest()
        sk = Ed25519PrivateKey.from_private_bytes(raw)
        return KeyPair(
            self.name,
            secret=raw,
            public=sk.public_key().public_bytes_raw(),
        )

    def sign(self, secret: bytes, data: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(secret).sign(data)

    def verify(self, public: bytes, data: bytes, tag: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(public).verify(tag, data)
            return True
        except InvalidSignature:
            return False


SCHEMES: dict[str, SignScheme] = {s.name: s for s in (HmacSigner(), Ed25519Signer())}


def get_scheme(name: str) -> SignScheme:
    try:
        return SCHEMES[name]
    except KeyError:
        raise KeyError(f"unknown signature scheme {name!r}") from None


class KeyTable:
    """Public keys of every signing entity, shared by verifiers."""

    def __init__(self, scheme: SignScheme) -> None:
        self.scheme = scheme
        self.publics: dict[str, bytes] = {}

    def add(self, entity: str, public: bytes) -> None:
        self.publics[entity] = public

    def verify(self, entity: str, data: bytes, tag: bytes) -> bool:
        public = self.publics.get(entity)
        if public is None:
            return False
        return self.scheme.verify(public, data, tag)
