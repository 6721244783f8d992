"""Pluggable signature schemes.

``SimScheme`` is the default: deterministic HMAC tags keyed by per-node
secrets derived from the run seed. Only the simulator holds the keyring;
byzantine code receives a :class:`Signer` restricted to byzantine
identities, so honest signatures cannot be produced outside honest nodes.
"""

from __future__ import annotations

import hashlib
import hmac
from typing import Iterable, Protocol

from .messages import NodeId, Signature


class ForgeryError(RuntimeError):
    """Raised when code tries to sign for an identity it does not own."""


class SignatureScheme(Protocol):
    def sign(self, node: NodeId, payload: bytes) -> Signature: ...

    def verify(self, node: NodeId, payload: bytes, sig: Signature) -> bool: ...


class SimScheme:
    """Deterministic HMAC-SHA256 scheme for simulation runs."""

    def __init__(self, n: int, seed: int = 0):
        self.n = n
        self._keys = [
            hashlib.sha256(b"permitbft-key|%d|%d" % (seed, i)).digest() for i in range(n)
        ]

    def sign(self, node: NodeId, payload: bytes) -> Signature:
        return Signature(node, hmac.new(self._keys[node], payload, hashlib.sha256).digest())

    def verify(self, node: NodeId, payload: bytes, sig: Signature) -> bool:
        if sig.signer != node or not 0 <= node < self.n:
            return False
        expected = hmac.new(self._keys[node], payload, hashlib.sha256).digest()
        return hmac.compare_digest(expected, sig.tag)


class Ed25519Scheme:
    """Real public-key signatures (``cryptography`` package)."""

    def __init__(self, n: int, seed: int = 0):
        from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

        self.n = n
        self._private = [
            Ed25519PrivateKey.from_private_bytes(
                hashlib.sha256(b"permitbft-ed25519|%d|%d" % (seed, i)).digest())
            for i in range(n)
        ]
        self._public = [k.public_key() for k in self._private]

    def sign(self, node: NodeId, payload: bytes) -> Signature:
        return Signature(node, self._private[node].sign(payload))

    def verify(self, node: NodeId, payload: bytes, sig: Signature) -> bool:
        from cryptography.exceptions import InvalidSignature

        if sig.signer != node or not 0 <= node < self.n:
            return False
        try:
            self._public[node].verify(sig.tag, payload)
        except InvalidSignature:
            return False
        return True


class Signer:
    """Signing capability bound to a fixed set of identities."""

    def __init__(self, scheme: SignatureScheme, identities: Iterable[NodeId]):
        self._scheme = scheme
        self.identities = frozenset(identities)

    def sign(self, node: NodeId, payload: bytes) -> Signature:
        if node not in self.identities:
            raise ForgeryError(f"signature for node {node} requested by {sorted(self.identities)}")
        return self._scheme.sign(node, payload)
