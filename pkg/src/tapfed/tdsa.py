"""Threshold decentralized secure aggregation: party, aggregator and key service.

Model vectors of length ``L`` are handled as ``L`` coordinate functionals
over one ciphertext per party (``eta_i = L``) that share one label and one
fusion spec; see :func:`tapfed.tmcfe.dk_generate_batch`.
"""
from __future__ import annotations

import logging
import struct
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import tmcfe, wire
from .codec import EncodingConfig, FusionSpec, decode_result, encode_vector, make_fusion_spec
from .errors import (
    CompliancePending,
    InsufficientShares,
    LabelMismatch,
    LabelReuse,
    SerializationError,
)
from .group_math import RandomSource, make_rng
from .tmcfe import BatchKeyShare, BatchPartial, Ciphertext, PublicParams

logger = logging.getLogger(__name__)

GRANTED = "granted"
PENDING = "pending"
REJECTED = "rejected"


@dataclass(frozen=True)
class RoundLabel:
    round_index: int
    scope: Optional[str] = None

    def __post_init__(self):
        if self.round_index < 1:
            raise ValueError("round index starts at 1")

    @property
    def bytes(self) -> bytes:
        head = b"tapfed/round/" + struct.pack(">Q", self.round_index)
        if self.scope is None:
            return head + b"\x00"
        s = self.scope.encode("utf-8")
        return head + b"\x01" + struct.pack(">I", len(s)) + s


@dataclass(frozen=True)
class DkRequest:
    aggregator_id: str
    fusion: FusionSpec
    label: RoundLabel


@dataclass(frozen=True)
class Decision:
    status: str
    share: Optional[BatchKeyShare] = None
    reason: str = ""


@dataclass(frozen=True)
class ProtectedUpdate:
    party_id: str
    party_index: int
    label: RoundLabel
    ciphertext: Ciphertext
    sample_count: int
    dp_applied: bool = False


@dataclass
class DPConfig:
    """Additive noise hook; each party adds ``noise / n`` before encoding."""

    mechanism: str = "gaussian"
    scale: float = 0.0

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.mechanism == "gaussian":
            return rng.normal(0.0, self.scale, size)
        if self.mechanism == "laplace":
            return rng.laplace(0.0, self.scale, size)
        raise ValueError(f"unknown DP mechanism {self.mechanism!r}")


@dataclass
class PartyState:
    party_id: str
    party_index: int
    sk: tmcfe.PartySecretKey
    encoding: EncodingConfig
    n_parties: int
    sample_count: int = 1
    dp: Optional[DPConfig] = None
    noise_rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng())
    used_labels: set = field(default_factory=set)
    last_noise: Optional[np.ndarray] = None

    @property
    def pp(self) -> PublicParams:
        return self.sk.pp


@dataclass
class AggregatorState:
    aggregator_id: str
    share_index: int
    pp: PublicParams
    encoding: EncodingConfig
    fusion_mode: str = "fedavg"
    personal_weights: Optional[Dict[int, float]] = None
    # every object this aggregator has seen; inspected by the privacy probe
    transcript: list = field(default_factory=list)


def tdsa_protect(party: PartyState, model_update: Sequence[float], label: RoundLabel,
                 dp: Optional[DPConfig] = None, seed: RandomSource = None) -> ProtectedUpdate:
    if label.bytes in party.used_labels:
        raise LabelReuse(f"{party.party_id} already encrypted under round {label.round_index}")
    values = np.asarray(model_update, dtype=float)
    dp = dp if dp is not None else party.dp
    noise = None
    if dp is not None and dp.scale > 0:
        noise = dp.sample(values.size, party.noise_rng)
        values = values + noise / party.n_parties
    party.last_noise = noise
    x = encode_vector(values, party.encoding, party.pp.group.order_p)
    ct = tmcfe.encrypt(party.sk, x, label.bytes, seed)
    party.used_labels.add(label.bytes)
    return ProtectedUpdate(party.party_id, party.party_index, label, ct,
                           party.sample_count, noise is not None)


class CryptoInfrastructure:
    """Trusted key service holding the master secret and the DK compliance ledger.

    A fusion spec is granted once some group of identical requests is at least
    ``trust_threshold`` strong and a strict majority of the expected
    aggregators (or, after :meth:`finalize`, of those that actually asked).
    Exactly one spec is ever issued per label; its key shares are generated
    once and cached.
    """

    def __init__(self, pp: PublicParams, msk: tmcfe.MasterSecretKey,
                 aggregator_ids: Sequence[str], trust_threshold: Optional[int] = None,
                 seed: RandomSource = None):
        if len(aggregator_ids) != pp.share_count_s:
            raise ValueError("need exactly one aggregator id per key share")
        self.pp = pp
        self._msk = msk
        self.share_index = {a: j for j, a in enumerate(aggregator_ids, start=1)}
        self.trust_threshold = pp.threshold_t if trust_threshold is None else trust_threshold
        self._rng = make_rng(seed)
        self._lock = threading.Lock()
        self.pending: Dict[bytes, Dict[str, DkRequest]] = {}
        self.issued: Dict[bytes, FusionSpec] = {}
        self._shares: Dict[bytes, list] = {}
        self._decisions: Dict[bytes, Dict[str, Decision]] = {}
        self.generation_count = Counter()

    def _malformed(self, request: DkRequest) -> Optional[str]:
        if request.aggregator_id not in self.share_index:
            return "unknown aggregator"
        if request.fusion.label != request.label.bytes:
            return "malformed: fusion label differs from request label"
        n = self.pp.client_count_n
        if any(not 1 <= i <= n for i, _ in request.fusion.scaled_weights):
            return "malformed: weight for unknown party"
        if not any(w for _, w in request.fusion.scaled_weights):
            return "malformed: all weights zero"
        return None

    def _issue(self, label: bytes, spec: FusionSpec):
        self.issued[label] = spec
        weights = spec.key_weights(self.pp.client_count_n)
        self._shares[label] = tmcfe.dk_generate_batch(self.pp, self._msk, weights, label, self._rng)
        self.generation_count[label] += 1

    def _grant(self, label: bytes, agg_id: str) -> Decision:
        share = self._shares[label][self.share_index[agg_id] - 1]
        return Decision(GRANTED, share)

    def _resolve(self, label: bytes, all_expected: Optional[Iterable[str]], closing: bool):
        reqs = self.pending.get(label, {})
        decided = self._decisions.setdefault(label, {})
        if label not in self.issued:
            groups = Counter(r.fusion for r in reqs.values())
            if groups:
                ranked = groups.most_common()
                spec, size = ranked[0]
                tie = len(ranked) > 1 and ranked[1][1] == size
                if closing:
                    quorum = len(reqs)
                else:
                    expected = set(all_expected) if all_expected else set(self.share_index)
                    quorum = len(expected | set(reqs))
                if not tie and size >= self.trust_threshold and 2 * size > quorum:
                    self._issue(label, spec)
        spec = self.issued.get(label)
        for agg_id, req in reqs.items():
            if agg_id in decided and decided[agg_id].status != PENDING:
                continue
            if spec is not None:
                if req.fusion == spec:
                    decided[agg_id] = self._grant(label, agg_id)
                else:
                    decided[agg_id] = Decision(REJECTED, reason="non-compliant fusion spec")
            elif closing:
                decided[agg_id] = Decision(REJECTED, reason="no compliant majority")
            else:
                decided[agg_id] = Decision(PENDING)

    def compliance_submit(self, request: DkRequest,
                          all_expected: Optional[Iterable[str]] = None) -> Decision:
        label = request.label.bytes
        with self._lock:
            bad = self._malformed(request)
            if bad:
                return Decision(REJECTED, reason=bad)
            prior = self._decisions.get(label, {}).get(request.aggregator_id)
            if prior is not None and prior.status != PENDING:
                # one decision per aggregator per label; a changed request is not re-judged
                old = self.pending[label][request.aggregator_id]
                if old == request:
                    return prior
                return Decision(REJECTED, reason="request changed after decision")
            if label in self.issued and request.fusion != self.issued[label]:
                self.pending.setdefault(label, {})[request.aggregator_id] = request
                d = Decision(REJECTED, reason="one-key-per-label: a different spec was issued")
                self._decisions.setdefault(label, {})[request.aggregator_id] = d
                return d
            self.pending.setdefault(label, {})[request.aggregator_id] = request
            self._resolve(label, all_expected, closing=False)
            return self._decisions[label][request.aggregator_id]

    def finalize(self, label: RoundLabel) -> Dict[str, Decision]:
        """Close the request window for ``label`` and decide on every request."""
        key = label.bytes
        with self._lock:
            self._resolve(key, None, closing=True)
            return dict(self._decisions.get(key, {}))

    def decision_for(self, aggregator_id: str, label: RoundLabel) -> Decision:
        with self._lock:
            return self._decisions.get(label.bytes, {}).get(aggregator_id, Decision(PENDING))


def prepare_fusion(agg: AggregatorState, updates: Sequence[ProtectedUpdate],
                   label: RoundLabel) -> FusionSpec:
    active = [u.party_index for u in updates]
    if agg.fusion_mode == "personalized":
        stats = dict(agg.personal_weights or {})
    else:
        stats = {u.party_index: u.sample_count for u in updates}
    return make_fusion_spec(agg.fusion_mode, stats, label.bytes, agg.encoding, active=active)


def _check_update_labels(updates: Sequence[ProtectedUpdate], label: RoundLabel):
    for u in updates:
        if u.label != label:
            raise LabelMismatch(f"update from {u.party_id} is for round {u.label.round_index}")


def build_request(agg: AggregatorState, updates: Sequence[ProtectedUpdate],
                  label: RoundLabel) -> DkRequest:
    _check_update_labels(updates, label)
    return DkRequest(agg.aggregator_id, prepare_fusion(agg, updates, label), label)


def tdsa_aggregate(agg: AggregatorState, updates: Sequence[ProtectedUpdate], label: RoundLabel,
                   infra: CryptoInfrastructure, all_expected: Optional[Iterable[str]] = None,
                   *, request: Optional[DkRequest] = None) -> Optional[BatchPartial]:
    """Request the round key and share-decrypt; ``None`` when the key is denied.

    Raises :class:`CompliancePending` when the key service has not decided
    yet; callers that drive several aggregators submit every request first.
    """
    _check_update_labels(updates, label)
    request = request if request is not None else build_request(agg, updates, label)
    agg.transcript.append(request)
    decision = infra.compliance_submit(request, all_expected)
    if decision.status == PENDING:
        raise CompliancePending(f"{agg.aggregator_id}: key decision pending")
    if decision.status == REJECTED:
        logger.info("%s denied key for round %d: %s", agg.aggregator_id,
                    label.round_index, decision.reason)
        return None
    agg.transcript.append(decision.share)
    return aggregate_with_key(agg, updates, request, decision.share)


def aggregate_with_key(agg: AggregatorState, updates: Sequence[ProtectedUpdate],
                       request: DkRequest, share: BatchKeyShare) -> BatchPartial:
    """Share-decrypt the round's ciphertexts with an already granted key share."""
    weights = request.fusion.key_weights(agg.pp.client_count_n)
    partial = tmcfe.share_decrypt_batch(agg.pp, [u.ciphertext for u in updates], weights, share)
    agg.transcript.append(partial)
    return partial


def tdsa_recover(party: PartyState, partials: Sequence[Optional[BatchPartial]],
                 cfg: Optional[EncodingConfig] = None) -> List[float]:
    cfg = cfg or party.encoding
    present = [p for p in partials if p is not None]
    if len(present) < party.pp.threshold_t:
        raise InsufficientShares(f"{len(present)} partials, threshold is {party.pp.threshold_t}")
    raw = tmcfe.combine_decrypt_batch(party.pp, present, cfg.dlog_bound(party.n_parties))
    return [decode_result(v, cfg) for v in raw]


# -- wire messages -------------------------------------------------------------


def encode_update(update: ProtectedUpdate, pp: PublicParams) -> bytes:
    payload = wire.pack_record(wire.TAG_UPDATE, [
        update.party_id.encode("utf-8"),
        wire.int_bytes(update.party_index),
        update.label.bytes,
        wire.int_bytes(update.sample_count),
        b"\x01" if update.dp_applied else b"\x00",
        wire.encode_ciphertext(update.ciphertext, pp.group),
    ])
    return wire.Envelope(wire.KIND_UPDATE, update.label.round_index, update.party_id,
                         payload).to_bytes()


def decode_update(data: bytes) -> ProtectedUpdate:
    env = wire.Envelope.from_bytes(data)
    if env.kind != wire.KIND_UPDATE:
        raise SerializationError("not a ProtectedUpdate envelope")
    _, fields = wire.unpack_record(env.payload, wire.TAG_UPDATE)
    if len(fields) != 6:
        raise SerializationError("ProtectedUpdate needs 6 fields")
    label = parse_round_label(fields[2])
    ct = wire.decode_ciphertext(fields[5])
    return ProtectedUpdate(fields[0].decode("utf-8"), int.from_bytes(fields[1], "big"), label, ct,
                           int.from_bytes(fields[3], "big"), fields[4] == b"\x01")


def parse_round_label(data: bytes) -> RoundLabel:
    head = b"tapfed/round/"
    if not data.startswith(head) or len(data) < len(head) + 9:
        raise SerializationError("not a round label")
    pos = len(head)
    (k,) = struct.unpack_from(">Q", data, pos)
    pos += 8
    if data[pos] == 0:
        return RoundLabel(k)
    (n,) = struct.unpack_from(">I", data, pos + 1)
    return RoundLabel(k, data[pos + 5:pos + 5 + n].decode("utf-8"))


def encode_request(request: DkRequest) -> bytes:
    payload = wire.pack_record(wire.TAG_REQUEST, [
        request.aggregator_id.encode("utf-8"),
        request.label.bytes,
        wire.encode_fusion(request.fusion),
    ])
    return wire.Envelope(wire.KIND_DK_REQUEST, request.label.round_index,
                         request.aggregator_id, payload).to_bytes()


def decode_request(data: bytes) -> DkRequest:
    env = wire.Envelope.from_bytes(data)
    if env.kind != wire.KIND_DK_REQUEST:
        raise SerializationError("not a DkRequest envelope")
    _, fields = wire.unpack_record(env.payload, wire.TAG_REQUEST)
    return DkRequest(fields[0].decode("utf-8"), wire.decode_fusion(fields[2]),
                     parse_round_label(fields[1]))


def encode_grant(share: BatchKeyShare, round_index: int, sender: str = "infra") -> bytes:
    return wire.Envelope(wire.KIND_DK_GRANT, round_index, sender,
                         wire.encode_batch_key(share)).to_bytes()


def encode_partial(partial: BatchPartial, round_index: int, sender: str, pp: PublicParams) -> bytes:
    return wire.Envelope(wire.KIND_PARTIAL, round_index, sender,
                         wire.encode_batch_partial(partial, pp.group)).to_bytes()


def encode_abort(reason: str, round_index: int, sender: str) -> bytes:
    payload = wire.pack_record(wire.TAG_ABORT, [reason.encode("utf-8")])
    return wire.Envelope(wire.KIND_ABORT, round_index, sender, payload).to_bytes()
