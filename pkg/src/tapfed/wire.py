"""Binary serialization for keys, ciphertexts and protocol envelopes.

Record layout::

    tag:u8 | field_count:u32be | (len:u32be | bytes) * field_count

Integers are big-endian. Scalars use the minimal width (at least one byte);
group elements use the fixed width of the modulus so message sizes depend
only on the shapes involved. Labels are raw bytes, identifiers UTF-8.

Envelope layout::

    kind:u8 | round:u64be | sender_len:u32be | sender utf-8 | payload
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List

from .codec import FusionSpec
from .errors import SerializationError
from .group_math import GroupParams
from .tmcfe import (
    BatchKeyShare,
    BatchPartial,
    Ciphertext,
    FunctionalKeyShare,
    PartialDecryption,
    PartySecretKey,
    PublicParams,
)

TAG_PARTY_KEY = 0x01
TAG_KEY_SHARE = 0x02
TAG_CIPHERTEXT = 0x03
TAG_PARTIAL = 0x04
TAG_BATCH_KEY = 0x05
TAG_BATCH_PARTIAL = 0x06
TAG_FUSION = 0x07
TAG_UPDATE = 0x08
TAG_REQUEST = 0x09
TAG_ABORT = 0x0A

KIND_UPDATE = 1
KIND_DK_REQUEST = 2
KIND_DK_GRANT = 3
KIND_PARTIAL = 4
KIND_ABORT = 5
KIND_NAMES = {
    KIND_UPDATE: "ProtectedUpdate",
    KIND_DK_REQUEST: "DkRequest",
    KIND_DK_GRANT: "DkGrant",
    KIND_PARTIAL: "Partial",
    KIND_ABORT: "Abort",
}

RECORD_HEADER = 5
FIELD_HEADER = 4
ENVELOPE_HEADER = 1 + 8 + 4


def int_bytes(x: int) -> bytes:
    if x < 0:
        raise SerializationError("negative integers are not encodable")
    return x.to_bytes(max(1, (x.bit_length() + 7) // 8), "big")


def elem_bytes(x: int, width: int) -> bytes:
    return int(x).to_bytes(width, "big")


def pack_record(tag: int, fields: List[bytes]) -> bytes:
    out = [struct.pack(">BI", tag, len(fields))]
    for f in fields:
        out.append(struct.pack(">I", len(f)))
        out.append(f)
    return b"".join(out)


def unpack_record(data: bytes, expected_tag: int = None):
    if len(data) < RECORD_HEADER:
        raise SerializationError("truncated record header")
    tag, count = struct.unpack_from(">BI", data, 0)
    if expected_tag is not None and tag != expected_tag:
        raise SerializationError(f"expected tag {expected_tag:#04x}, got {tag:#04x}")
    pos = RECORD_HEADER
    fields = []
    for _ in range(count):
        if pos + FIELD_HEADER > len(data):
            raise SerializationError("truncated field header")
        (n,) = struct.unpack_from(">I", data, pos)
        pos += FIELD_HEADER
        if pos + n > len(data):
            raise SerializationError("truncated field")
        fields.append(bytes(data[pos:pos + n]))
        pos += n
    if pos != len(data):
        raise SerializationError("trailing bytes after record")
    return tag, fields


class _Reader:
    def __init__(self, fields):
        self.fields = fields
        self.pos = 0

    def raw(self) -> bytes:
        if self.pos >= len(self.fields):
            raise SerializationError("record has too few fields")
        f = self.fields[self.pos]
        self.pos += 1
        return f

    def int(self) -> int:
        return int.from_bytes(self.raw(), "big")

    def ints(self, n: int) -> tuple:
        return tuple(self.int() for _ in range(n))

    def text(self) -> str:
        return self.raw().decode("utf-8")

    def done(self):
        if self.pos != len(self.fields):
            raise SerializationError("record has unexpected extra fields")


def to_debug_text(blob: bytes) -> str:
    """Hex mirror of a binary record: header line, then one field per line."""
    tag, fields = unpack_record(blob)
    lines = [f"{tag:02x} {len(fields)}"]
    lines += [f.hex() for f in fields]
    return "\n".join(lines) + "\n"


def from_debug_text(text: str) -> bytes:
    lines = text.strip("\n").split("\n")
    tag_s, count_s = lines[0].split()
    fields = [bytes.fromhex(ln) for ln in lines[1:]]
    if int(count_s) != len(fields):
        raise SerializationError("field count does not match")
    return pack_record(int(tag_s, 16), fields)


# -- tmcfe values ----------------------------------------------------------


def encode_ciphertext(ct: Ciphertext, group: GroupParams) -> bytes:
    w = group.element_bytes
    fields = [int_bytes(ct.client_index), ct.label, int_bytes(len(ct.ct0))]
    fields += [elem_bytes(c, w) for c in ct.ct0]
    fields.append(elem_bytes(ct.ct1, w))
    return pack_record(TAG_CIPHERTEXT, fields)


def decode_ciphertext(blob: bytes) -> Ciphertext:
    _, fields = unpack_record(blob, TAG_CIPHERTEXT)
    r = _Reader(fields)
    idx, label, eta = r.int(), r.raw(), r.int()
    ct0 = r.ints(eta)
    ct1 = r.int()
    r.done()
    return Ciphertext(idx, label, ct0, ct1)


def encode_party_key(sk: PartySecretKey) -> bytes:
    w = sk.pp.group.element_bytes
    fields = [int_bytes(sk.client_index), int_bytes(len(sk.g_alpha))]
    fields += [elem_bytes(x, w) for x in sk.g_alpha]
    fields.append(int_bytes(len(sk.masked_bases)))
    fields += [elem_bytes(x, w) for x in sk.masked_bases]
    fields += [int_bytes(u) for u in sk.U]
    return pack_record(TAG_PARTY_KEY, fields)


def decode_party_key(blob: bytes, pp: PublicParams) -> PartySecretKey:
    _, fields = unpack_record(blob, TAG_PARTY_KEY)
    r = _Reader(fields)
    idx = r.int()
    g_alpha = r.ints(r.int())
    eta = r.int()
    masked = r.ints(eta)
    U = r.ints(eta)
    r.done()
    return PartySecretKey(idx, pp, g_alpha, masked, U)


def encode_key_share(share: FunctionalKeyShare) -> bytes:
    fields = [int_bytes(share.share_index), share.label, int_bytes(share.v0),
              int_bytes(len(share.v1))]
    fields += [int_bytes(v) for v in share.v1]
    fields.append(int_bytes(len(share.weight_vector_y)))
    fields += [int_bytes(v) for v in share.weight_vector_y]
    return pack_record(TAG_KEY_SHARE, fields)


def decode_key_share(blob: bytes) -> FunctionalKeyShare:
    _, fields = unpack_record(blob, TAG_KEY_SHARE)
    r = _Reader(fields)
    j, label, v0 = r.int(), r.raw(), r.int()
    v1 = r.ints(r.int())
    y = r.ints(r.int())
    r.done()
    return FunctionalKeyShare(j, v0, v1, y, label)


def encode_partial(part: PartialDecryption, group: GroupParams) -> bytes:
    w = group.element_bytes
    fields = [int_bytes(part.share_index), part.label, elem_bytes(part.ct0_agg, w),
              int_bytes(len(part.ct1_shares))]
    fields += [elem_bytes(x, w) for x in part.ct1_shares]
    fields.append(elem_bytes(part.ct2_share, w))
    return pack_record(TAG_PARTIAL, fields)


def decode_partial(blob: bytes) -> PartialDecryption:
    _, fields = unpack_record(blob, TAG_PARTIAL)
    r = _Reader(fields)
    j, label, c0 = r.int(), r.raw(), r.int()
    c1 = r.ints(r.int())
    c2 = r.int()
    r.done()
    return PartialDecryption(j, c0, c1, c2, label)


def encode_batch_key(key: BatchKeyShare) -> bytes:
    L, n = len(key.v0), len(key.weights)
    fields = [int_bytes(key.share_index), key.label, int_bytes(L), int_bytes(n)]
    fields += [int_bytes(w) for w in key.weights]
    fields += [int_bytes(v) for v in key.v0]
    fields += [int_bytes(v) for row in key.v1 for v in row]
    return pack_record(TAG_BATCH_KEY, fields)


def decode_batch_key(blob: bytes) -> BatchKeyShare:
    _, fields = unpack_record(blob, TAG_BATCH_KEY)
    r = _Reader(fields)
    j, label, L, n = r.int(), r.raw(), r.int(), r.int()
    weights = r.ints(n)
    v0 = r.ints(L)
    v1 = tuple(r.ints(n) for _ in range(L))
    r.done()
    return BatchKeyShare(j, v0, v1, weights, label)


def encode_batch_partial(part: BatchPartial, group: GroupParams) -> bytes:
    w = group.element_bytes
    L = part.length
    n = len(part.ct1_shares[0]) if L else 0
    fields = [int_bytes(part.share_index), part.label, int_bytes(L), int_bytes(n)]
    fields += [elem_bytes(x, w) for x in part.ct0_agg]
    fields += [elem_bytes(x, w) for row in part.ct1_shares for x in row]
    fields += [elem_bytes(x, w) for x in part.ct2_shares]
    return pack_record(TAG_BATCH_PARTIAL, fields)


def decode_batch_partial(blob: bytes) -> BatchPartial:
    _, fields = unpack_record(blob, TAG_BATCH_PARTIAL)
    r = _Reader(fields)
    j, label, L, n = r.int(), r.raw(), r.int(), r.int()
    c0 = r.ints(L)
    c1 = tuple(r.ints(n) for _ in range(L))
    c2 = r.ints(L)
    r.done()
    return BatchPartial(j, c0, c1, c2, label)


def encode_fusion(spec: FusionSpec) -> bytes:
    scaled = dict(spec.scaled_weights)
    fields = [spec.label, int_bytes(len(spec.weights))]
    for i, w in spec.weights:
        fields += [int_bytes(i), repr(float(w)).encode("ascii"), int_bytes(scaled[i])]
    fields.append(int_bytes(len(spec.participant_mask)))
    fields += [int_bytes(i) for i in sorted(spec.participant_mask)]
    return pack_record(TAG_FUSION, fields)


def decode_fusion(blob: bytes) -> FusionSpec:
    _, fields = unpack_record(blob, TAG_FUSION)
    r = _Reader(fields)
    label = r.raw()
    weights, scaled = [], []
    for _ in range(r.int()):
        i = r.int()
        weights.append((i, float(r.text())))
        scaled.append((i, r.int()))
    mask = frozenset(r.ints(r.int()))
    r.done()
    return FusionSpec(tuple(weights), tuple(scaled), label, mask)


# -- envelopes ---------------------------------------------------------------


@dataclass(frozen=True)
class Envelope:
    kind: int
    round_index: int
    sender: str
    payload: bytes

    def to_bytes(self) -> bytes:
        s = self.sender.encode("utf-8")
        return struct.pack(">BQI", self.kind, self.round_index, len(s)) + s + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        if len(data) < ENVELOPE_HEADER:
            raise SerializationError("truncated envelope")
        kind, rnd, n = struct.unpack_from(">BQI", data, 0)
        if kind not in KIND_NAMES:
            raise SerializationError(f"unknown message kind {kind}")
        start = ENVELOPE_HEADER
        if start + n > len(data):
            raise SerializationError("truncated sender id")
        sender = data[start:start + n].decode("utf-8")
        return cls(kind, rnd, sender, bytes(data[start + n:]))


def envelope_overhead(sender: str) -> int:
    return ENVELOPE_HEADER + len(sender.encode("utf-8"))


def ciphertext_size(eta: int, label_len: int, group: GroupParams, client_index: int) -> int:
    """Exact encoded size of a ciphertext record (used by payload checks)."""
    n_fields = 3 + eta + 1
    return (RECORD_HEADER + n_fields * FIELD_HEADER + len(int_bytes(client_index)) + label_len
            + len(int_bytes(eta)) + (eta + 1) * group.element_bytes)
