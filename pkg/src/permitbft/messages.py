"""Protocol messages and their canonical binary encoding.

Every message is an immutable dataclass. The canonical encoding is
``tag (1 byte) || little-endian fixed-width fields || length-prefixed
sorted collections`` and is used both for digests (block ids, tx ids,
signature payloads) and for trace records, so it must be byte-stable.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Union

NodeId = int
Round = int
BlockId = bytes
Position = frozenset  # frozenset[BlockId], never empty

DIGEST_SIZE = 32

TAG_PERMIT = 0x01
TAG_PROOF = 0x02
TAG_BLOCK = 0x03
TAG_PROPOSAL = 0x04
TAG_TIMEOUT = 0x05
TAG_BUNDLE = 0x06
TAG_TX = 0x07
TAG_FETCH_REQUEST = 0x08
TAG_FETCH_RESPONSE = 0x09


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def short(block_id: bytes) -> str:
    """Abbreviated hex form used in logs and traces."""
    return block_id.hex()[:8]


def position(*block_ids: BlockId) -> Position:
    if not block_ids:
        raise ValueError("a position needs at least one block")
    return frozenset(block_ids)


@dataclass(frozen=True)
class Signature:
    signer: NodeId
    tag: bytes


@dataclass(frozen=True, order=True)
class OutputRef:
    tx_id: bytes
    index: int


@dataclass(frozen=True)
class TxOutput:
    owner: str
    amount: int


@dataclass(frozen=True)
class Transaction:
    """UTXO transaction. A transaction without inputs is a mint."""

    inputs: frozenset = frozenset()  # frozenset[OutputRef]
    outputs: tuple = ()  # tuple[TxOutput, ...]
    nonce: int = 0

    @cached_property
    def encoded(self) -> bytes:
        return encode(self)

    @cached_property
    def tx_id(self) -> bytes:
        return digest(self.encoded)

    @property
    def is_mint(self) -> bool:
        return not self.inputs

    def output_ref(self, index: int) -> OutputRef:
        return OutputRef(self.tx_id, index)


@dataclass(frozen=True)
class Permit:
    round: Round
    position: Position
    signature: Signature

    @property
    def issuer(self) -> NodeId:
        return self.signature.signer

    @cached_property
    def encoded(self) -> bytes:
        return encode(self)

    @cached_property
    def signing_bytes(self) -> bytes:
        return permit_payload(self.round, self.position)


@dataclass(frozen=True)
class Proof:
    permits: frozenset  # frozenset[Permit]

    @cached_property
    def _first(self) -> Permit:
        return min(self.permits, key=lambda p: (p.issuer, p.encoded))

    @property
    def round(self) -> Round:
        return self._first.round

    @property
    def position(self) -> Position:
        return self._first.position


@dataclass(frozen=True)
class Block:
    """A block; the genesis block is the only one without proof and signature."""

    proof: Proof | None
    transactions: tuple = ()  # tuple[Transaction, ...]
    signature: Signature | None = None

    @cached_property
    def encoded(self) -> bytes:
        return encode(self)

    @cached_property
    def block_id(self) -> BlockId:
        return digest(self.encoded)

    @cached_property
    def signing_bytes(self) -> bytes:
        return block_payload(self.proof, self.transactions)

    @property
    def is_genesis(self) -> bool:
        return self.proof is None

    @property
    def round(self) -> Round:
        # genesis sorts before every real round
        return -1 if self.proof is None else self.proof.round

    @property
    def position(self) -> Position:
        return frozenset() if self.proof is None else self.proof.position

    @property
    def creator(self) -> NodeId:
        return -1 if self.signature is None else self.signature.signer


@dataclass(frozen=True)
class Proposal:
    position: Position
    permits: frozenset  # frozenset[Permit]
    signature: Signature

    @cached_property
    def encoded(self) -> bytes:
        return encode(self)

    @cached_property
    def signing_bytes(self) -> bytes:
        return proposal_payload(self.position, self.permits)

    @cached_property
    def round(self) -> Round:
        return min(self.permits, key=lambda p: (p.issuer, p.encoded)).round

    @property
    def creator(self) -> NodeId:
        return self.signature.signer


@dataclass(frozen=True)
class TimeoutMsg:
    round: Round
    signature: Signature

    @property
    def issuer(self) -> NodeId:
        return self.signature.signer

    @cached_property
    def encoded(self) -> bytes:
        return encode(self)

    @cached_property
    def signing_bytes(self) -> bytes:
        return timeout_payload(self.round)


@dataclass(frozen=True)
class TimeoutBundle:
    round: Round
    msgs: frozenset  # frozenset[TimeoutMsg]

    @cached_property
    def encoded(self) -> bytes:
        return encode(self)


@dataclass(frozen=True)
class FetchRequest:
    block_ids: frozenset

    @cached_property
    def encoded(self) -> bytes:
        return encode(self)


@dataclass(frozen=True)
class FetchResponse:
    blocks: tuple = field(default=())

    @cached_property
    def encoded(self) -> bytes:
        return encode(self)


Message = Union[Permit, Block, Proposal, TimeoutMsg, TimeoutBundle, FetchRequest, FetchResponse]
Result = Union[Block, Proposal]


def message_round(msg) -> Round | None:
    """Protocol round a message belongs to, or None for fetch plumbing."""
    if isinstance(msg, (Permit, Block, Proposal, TimeoutMsg, TimeoutBundle)):
        return msg.round
    return None


def kind_of(msg) -> str:
    return _KIND_NAMES[type(msg)]


_KIND_NAMES = {
    Permit: "permit",
    Block: "block",
    Proposal: "proposal",
    TimeoutMsg: "timeout",
    TimeoutBundle: "bundle",
    FetchRequest: "fetch_req",
    FetchResponse: "fetch_resp",
    Transaction: "tx",
}


# --------------------------------------------------------------------------
# encoding

_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def _position(pos: Iterable[bytes]) -> bytes:
    ids = sorted(pos)
    for block_id in ids:
        if len(block_id) != DIGEST_SIZE:
            raise ValueError("block ids must be 32-byte digests")
    return _U32.pack(len(ids)) + b"".join(ids)


def _signature(sig: Signature) -> bytes:
    return _U32.pack(sig.signer) + _U16.pack(len(sig.tag)) + sig.tag


def _blob(data: bytes) -> bytes:
    return _U32.pack(len(data)) + data


def _sorted_blobs(items: Iterable) -> bytes:
    encs = sorted(item.encoded for item in items)
    return _U32.pack(len(encs)) + b"".join(_blob(e) for e in encs)


def permit_payload(round_: Round, pos: Position) -> bytes:
    return _U8.pack(TAG_PERMIT) + _U64.pack(round_) + _position(pos)


def timeout_payload(round_: Round) -> bytes:
    return _U8.pack(TAG_TIMEOUT) + _U64.pack(round_)


def block_payload(proof: Proof | None, txs: tuple) -> bytes:
    out = [_U8.pack(TAG_BLOCK)]
    if proof is None:
        out.append(_U8.pack(0))
    else:
        out.append(_U8.pack(1))
        out.append(_blob(encode(proof)))
    out.append(_U32.pack(len(txs)))
    out.extend(_blob(tx.encoded) for tx in txs)
    return b"".join(out)


def proposal_payload(pos: Position, permits: frozenset) -> bytes:
    return _U8.pack(TAG_PROPOSAL) + _position(pos) + _sorted_blobs(permits)


def encode(obj) -> bytes:
    """Canonical encoding of any protocol object."""
    if isinstance(obj, Permit):
        return obj.signing_bytes + _signature(obj.signature)
    if isinstance(obj, Proof):
        return _U8.pack(TAG_PROOF) + _sorted_blobs(obj.permits)
    if isinstance(obj, Block):
        sig = obj.signature
        tail = _U8.pack(0) if sig is None else _U8.pack(1) + _signature(sig)
        return obj.signing_bytes + tail
    if isinstance(obj, Proposal):
        return obj.signing_bytes + _signature(obj.signature)
    if isinstance(obj, TimeoutMsg):
        return obj.signing_bytes + _signature(obj.signature)
    if isinstance(obj, TimeoutBundle):
        return _U8.pack(TAG_BUNDLE) + _U64.pack(obj.round) + _sorted_blobs(obj.msgs)
    if isinstance(obj, Transaction):
        refs = sorted(obj.inputs)
        out = [_U8.pack(TAG_TX), _U64.pack(obj.nonce), _U32.pack(len(refs))]
        for ref in refs:
            out.append(ref.tx_id + _U32.pack(ref.index))
        out.append(_U32.pack(len(obj.outputs)))
        for o in obj.outputs:
            owner = o.owner.encode("utf-8")
            out.append(_U16.pack(len(owner)) + owner + _U64.pack(o.amount))
        return b"".join(out)
    if isinstance(obj, FetchRequest):
        return _U8.pack(TAG_FETCH_REQUEST) + _position(obj.block_ids)
    if isinstance(obj, FetchResponse):
        return (_U8.pack(TAG_FETCH_RESPONSE) + _U32.pack(len(obj.blocks))
                + b"".join(_blob(b.encoded) for b in obj.blocks))
    raise TypeError(f"cannot encode {type(obj).__name__}")


class DecodeError(ValueError):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        end = self.pos + size
        if end > len(self.data):
            raise DecodeError("truncated input")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u8(self) -> int:
        return _U8.unpack(self.take(1))[0]

    def u16(self) -> int:
        return _U16.unpack(self.take(2))[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def position(self) -> frozenset:
        return frozenset(self.take(DIGEST_SIZE) for _ in range(self.u32()))

    def signature(self) -> Signature:
        signer = self.u32()
        return Signature(signer, self.take(self.u16()))

    def done(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError("trailing bytes")


def decode(data: bytes):
    """Inverse of :func:`encode`."""
    r = _Reader(data)
    obj = _decode_body(r)
    r.done()
    return obj


def _decode_body(r: _Reader):
    tag = r.u8()
    if tag == TAG_PERMIT:
        round_ = r.u64()
        pos = r.position()
        return Permit(round_, pos, r.signature())
    if tag == TAG_PROOF:
        return Proof(frozenset(decode(r.blob()) for _ in range(r.u32())))
    if tag == TAG_BLOCK:
        proof = decode(r.blob()) if r.u8() else None
        txs = tuple(decode(r.blob()) for _ in range(r.u32()))
        sig = r.signature() if r.u8() else None
        return Block(proof, txs, sig)
    if tag == TAG_PROPOSAL:
        pos = r.position()
        permits = frozenset(decode(r.blob()) for _ in range(r.u32()))
        return Proposal(pos, permits, r.signature())
    if tag == TAG_TIMEOUT:
        round_ = r.u64()
        return TimeoutMsg(round_, r.signature())
    if tag == TAG_BUNDLE:
        round_ = r.u64()
        return TimeoutBundle(round_, frozenset(decode(r.blob()) for _ in range(r.u32())))
    if tag == TAG_TX:
        nonce = r.u64()
        inputs = frozenset(OutputRef(r.take(DIGEST_SIZE), r.u32()) for _ in range(r.u32()))
        outputs = []
        for _ in range(r.u32()):
            owner = r.take(r.u16()).decode("utf-8")
            outputs.append(TxOutput(owner, r.u64()))
        return Transaction(inputs, tuple(outputs), nonce)
    if tag == TAG_FETCH_REQUEST:
        return FetchRequest(r.position())
    if tag == TAG_FETCH_RESPONSE:
        return FetchResponse(tuple(decode(r.blob()) for _ in range(r.u32())))
    raise DecodeError(f"unknown tag {tag:#x}")
