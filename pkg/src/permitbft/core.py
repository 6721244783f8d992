"""Round-robin creators, quorum arithmetic and proof validation."""

from __future__ import annotations

from typing import Iterable

from .crypto import SignatureScheme, Signer
from .messages import (
    Block,
    NodeId,
    Permit,
    Position,
    Proof,
    Proposal,
    Round,
    TimeoutMsg,
    block_payload,
    permit_payload,
    proposal_payload,
    timeout_payload,
)


def creator_of(round_: Round, n: int) -> NodeId:
    if n < 1:
        raise ValueError("n must be positive")
    return round_ % n


def max_faulty(n: int) -> int:
    """Largest f with n >= 3f + 1."""
    return (n - 1) // 3


def quorum(f: int) -> int:
    return 2 * f + 1


class ProofError(ValueError):
    """Base class for rejected permit sets."""


class InsufficientPermits(ProofError):
    pass


class DuplicateIssuer(ProofError):
    pass


class MixedRound(ProofError):
    pass


class MixedPosition(ProofError):
    pass


class BadSignature(ProofError):
    pass


def check_permits(permits: Iterable[Permit], n: int, f: int, scheme: SignatureScheme,
                  *, same_position: bool) -> Round:
    """Shared checks for proofs and proposals; returns the common round."""
    permits = sorted(permits, key=lambda p: (p.issuer, p.encoded))
    issuers = [p.issuer for p in permits]
    if len(set(issuers)) != len(issuers):
        raise DuplicateIssuer(f"issuers {issuers}")
    if len(permits) < quorum(f):
        raise InsufficientPermits(f"{len(permits)} < {quorum(f)}")
    rounds = {p.round for p in permits}
    if len(rounds) != 1:
        raise MixedRound(f"rounds {sorted(rounds)}")
    if same_position and len({p.position for p in permits}) != 1:
        raise MixedPosition("permits endorse different positions")
    for p in permits:
        if not 0 <= p.issuer < n or not p.position:
            raise BadSignature(f"malformed permit from {p.issuer}")
        if not scheme.verify(p.issuer, p.signing_bytes, p.signature):
            raise BadSignature(f"permit from {p.issuer}")
    return rounds.pop()


def validate_proof(proof: Proof, n: int, f: int, scheme: SignatureScheme) -> tuple[Round, Position]:
    """Return the proof's common (round, position) or raise a :class:`ProofError`."""
    round_ = check_permits(proof.permits, n, f, scheme, same_position=True)
    return round_, proof.position


# --------------------------------------------------------------------------
# signed constructors

def make_permit(signer: Signer, issuer: NodeId, round_: Round, pos: Position) -> Permit:
    return Permit(round_, pos, signer.sign(issuer, permit_payload(round_, pos)))


def make_block(signer: Signer, creator: NodeId, proof: Proof, transactions: tuple) -> Block:
    return Block(proof, transactions, signer.sign(creator, block_payload(proof, transactions)))


def make_proposal(signer: Signer, creator: NodeId, pos: Position, permits: frozenset) -> Proposal:
    return Proposal(pos, permits, signer.sign(creator, proposal_payload(pos, permits)))


def make_timeout(signer: Signer, issuer: NodeId, round_: Round) -> TimeoutMsg:
    return TimeoutMsg(round_, signer.sign(issuer, timeout_payload(round_)))


def make_genesis(mints: Iterable = ()) -> Block:
    """Genesis block carrying the initial mint transactions."""
    return Block(None, tuple(mints), None)
