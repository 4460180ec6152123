"""In-process simulation of federated training over threshold secure aggregation."""
from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .. import tdsa, tmcfe, wire
from ..codec import make_fusion_spec
from ..errors import (
    InsufficientShares,
    LabelMismatch,
    ResultOutOfRange,
    SerializationError,
    TamperDetected,
    TapfedError,
)
from ..group_math import gen_group
from ..tdsa import AggregatorState, CryptoInfrastructure, PartyState, RoundLabel
from .config import ExperimentConfig
from .data import load_csv, make_linear, make_two_class, partition_data, train_test_split
from .trainer import ToyModel, train_local
from .transport import INFRA_ID, Transport

logger = logging.getLogger(__name__)

PHASES = ("train", "protect", "request", "compliance", "share_decrypt", "recover")


@dataclass
class RoundRecord:
    round_index: int
    status: str = "ok"
    participants: List[str] = field(default_factory=list)
    responders: List[str] = field(default_factory=list)
    train_loss: Dict[str, float] = field(default_factory=dict)
    global_update: Optional[np.ndarray] = None
    plaintext_update: Optional[np.ndarray] = None
    max_deviation: Optional[float] = None
    test_loss: Optional[float] = None
    test_accuracy: Optional[float] = None
    bytes_by_edge: Dict[tuple, int] = field(default_factory=dict)
    update_bytes: Dict[str, int] = field(default_factory=dict)
    partial_bytes: Dict[str, int] = field(default_factory=dict)
    phase_ms: Dict[str, float] = field(default_factory=dict)
    events: List[str] = field(default_factory=list)

    @property
    def bytes_total(self) -> int:
        return sum(self.bytes_by_edge.values())

    def bytes_of_kind(self, sender_role: str, receiver_role: str) -> int:
        def role(e):
            return "infra" if e == INFRA_ID else ("party" if e[0] == "p" else "aggregator")
        return sum(b for (s, r), b in self.bytes_by_edge.items()
                   if role(s) == sender_role and role(r) == receiver_role)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: List[RoundRecord]
    final_model: ToyModel


def build_datasets(cfg: ExperimentConfig):
    spec = cfg.trainer
    if spec.dataset_csv:
        data = load_csv(spec.dataset_csv)
    elif spec.family == "logistic-regression":
        data = make_two_class(spec.n_samples, spec.n_features, spec.class_separation, spec.data_seed)
    else:
        data = make_linear(spec.n_samples, spec.n_features, seed=spec.data_seed)
    train, test = train_test_split(data, spec.test_fraction, spec.data_seed)
    parts = partition_data(train, cfg.n_parties, spec.partition, spec.concentration, spec.data_seed)
    return parts, test


class Simulation:
    """Parties, aggregators and the key service stepped on one timeline.

    The simulator itself keeps plaintext local models so it can report the
    lockstep plaintext average; protocol entities never see them.
    """

    def __init__(self, cfg: ExperimentConfig, interceptor=None):
        self.cfg = cfg.validate()
        seed = cfg.seed
        self.group = gen_group(cfg.lambda_bits, seed=seed)
        self.parts, self.test = build_datasets(cfg)
        self.dim = self.parts[0].X.shape[1] + 1
        self.pp, msk = tmcfe.setup(cfg.lambda_bits, [self.dim] * cfg.n_parties, cfg.threshold_t,
                                   cfg.s_aggregators, seed=random.Random(seed + 1), group=self.group)
        self.infra = CryptoInfrastructure(self.pp, msk, cfg.aggregator_ids, cfg.trust_threshold,
                                          seed=random.Random(seed + 2))
        self.parties: Dict[str, PartyState] = {}
        self.models: Dict[str, ToyModel] = {}
        self.enc_rng: Dict[str, random.Random] = {}
        for i, pid in enumerate(cfg.party_ids, start=1):
            self.parties[pid] = PartyState(
                pid, i, tmcfe.sk_distribute(self.pp, msk, i), cfg.encoding, cfg.n_parties,
                sample_count=len(self.parts[i - 1]), dp=cfg.dp,
                noise_rng=np.random.default_rng([seed, 3, i]))
            self.models[pid] = ToyModel.zeros(self.dim - 1, cfg.trainer.family)
            self.enc_rng[pid] = random.Random(seed * 7919 + i)
        self.aggregators: Dict[str, AggregatorState] = {
            aid: AggregatorState(aid, j, self.pp, cfg.encoding, cfg.fusion_mode)
            for j, aid in enumerate(cfg.aggregator_ids, start=1)
        }
        self.transport = Transport()
        self.transport.interceptor = interceptor
        self.global_model = ToyModel.zeros(self.dim - 1, cfg.trainer.family)
        self.round_updates: Dict[int, Dict[str, tdsa.ProtectedUpdate]] = {}
        self.round_plain: Dict[int, Dict[str, np.ndarray]] = {}
        self.completed = 0

    # -- phases ---------------------------------------------------------------

    def run_round(self, k: int) -> RoundRecord:
        if k != self.completed + 1:
            raise ValueError(f"round {k} requested after round {self.completed}")
        cfg = self.cfg
        label = RoundLabel(k)
        rec = RoundRecord(k)
        drops = cfg.dropout.get(k, ())
        dropped_parties = {d.entity for d in drops if d.entity[0] == "p"}
        agg_before = {d.entity for d in drops if d.entity[0] == "a" and d.phase == "before"}
        agg_after = {d.entity for d in drops if d.entity[0] == "a" and d.phase == "after"}
        for ent in sorted(dropped_parties | agg_before):
            rec.events.append(f"dropout:{ent}:before")
        self.transport.reset_counters()
        self.transport.offline = set(agg_before) | set(dropped_parties)
        live_parties = [p for p in cfg.party_ids if p not in dropped_parties]
        rec.participants = list(live_parties)

        t0 = time.perf_counter()
        local = {}
        for pid in live_parties:
            party_data = self.parts[self.parties[pid].party_index - 1]
            model = train_local(self.models[pid], party_data, cfg.local_epochs,
                                cfg.trainer.learning_rate, cfg.trainer.l2, cfg.encoding.value_bound)
            local[pid] = model
            rec.train_loss[pid] = model.loss(party_data, cfg.trainer.l2)
        rec.phase_ms["train"] = 1e3 * (time.perf_counter() - t0)

        t0 = time.perf_counter()
        self.round_updates[k] = {}
        self.round_plain[k] = {}
        for pid in live_parties:
            party = self.parties[pid]
            upd = tdsa.tdsa_protect(party, local[pid].weights, label, seed=self.enc_rng[pid])
            self.round_updates[k][pid] = upd
            noise = party.last_noise
            plain = local[pid].weights if noise is None else local[pid].weights + noise / cfg.n_parties
            self.round_plain[k][pid] = plain
            data = tdsa.encode_update(upd, self.pp)
            rec.update_bytes[pid] = len(data)
            for aid in cfg.aggregator_ids:
                self.transport.send(pid, aid, data)
        rec.phase_ms["protect"] = 1e3 * (time.perf_counter() - t0)

        t0 = time.perf_counter()
        received: Dict[str, list] = {}
        requests: Dict[str, tdsa.DkRequest] = {}
        for aid in cfg.aggregator_ids:
            if aid in agg_before:
                continue
            agg = self.aggregators[aid]
            updates = []
            for msg in self.transport.deliver(aid):
                try:
                    upd = tdsa.decode_update(msg.data)
                except SerializationError as exc:
                    rec.events.append(f"malformed:{msg.sender}->{aid}:{exc}")
                    continue
                agg.transcript.append(upd)
                if upd.label != label:
                    rec.events.append(f"stale-update:{upd.party_id}->{aid}")
                    continue
                updates.append(upd)
            received[aid] = updates
            if aid in agg_after:
                rec.events.append(f"dropout:{aid}:after")
                continue
            if not updates:
                rec.events.append(f"no-updates:{aid}")
                continue
            request = tdsa.build_request(agg, updates, label)
            agg.transcript.append(request)
            requests[aid] = request
            self.transport.send(aid, INFRA_ID, tdsa.encode_request(request))
        rec.phase_ms["request"] = 1e3 * (time.perf_counter() - t0)

        t0 = time.perf_counter()
        for msg in self.transport.deliver(INFRA_ID):
            try:
                req = tdsa.decode_request(msg.data)
            except SerializationError as exc:
                rec.events.append(f"malformed-request:{msg.sender}:{exc}")
                continue
            if req.aggregator_id != msg.sender:
                rec.events.append(f"rejected:{msg.sender}:sender mismatch")
                continue
            # the request the aggregator will act on is the one that reached the service
            requests[msg.sender] = req
            self.infra.compliance_submit(req, cfg.aggregator_ids)
        decisions = self.infra.finalize(label)
        for aid, decision in sorted(decisions.items()):
            if decision.status == tdsa.GRANTED:
                self.transport.send(INFRA_ID, aid, tdsa.encode_grant(decision.share, k))
            else:
                rec.events.append(f"rejected:{aid}:{decision.reason}")
                self.transport.send(INFRA_ID, aid, tdsa.encode_abort(decision.reason, k, INFRA_ID))
        rec.phase_ms["compliance"] = 1e3 * (time.perf_counter() - t0)

        t0 = time.perf_counter()
        for aid in cfg.aggregator_ids:
            if aid in agg_before:
                continue
            msgs = self.transport.deliver(aid)
            if aid in agg_after or aid not in requests:
                continue
            agg = self.aggregators[aid]
            share = None
            for msg in msgs:
                env = wire.Envelope.from_bytes(msg.data)
                if env.kind == wire.KIND_DK_GRANT:
                    share = wire.decode_batch_key(env.payload)
            if share is None:
                continue
            agg.transcript.append(share)
            try:
                partial = tdsa.aggregate_with_key(agg, received[aid], requests[aid], share)
            except LabelMismatch as exc:
                rec.events.append(f"label-mismatch:{aid}:{exc}")
                continue
            except TapfedError as exc:
                rec.events.append(f"aggregate-error:{aid}:{exc}")
                continue
            data = tdsa.encode_partial(partial, k, aid, self.pp)
            rec.partial_bytes[aid] = len(data)
            rec.responders.append(aid)
            for pid in live_parties:
                self.transport.send(aid, pid, data)
        rec.phase_ms["share_decrypt"] = 1e3 * (time.perf_counter() - t0)

        t0 = time.perf_counter()
        recovered = {}
        outcomes = set()
        for pid in live_parties:
            partials = []
            for msg in self.transport.deliver(pid):
                env = wire.Envelope.from_bytes(msg.data)
                if env.kind == wire.KIND_PARTIAL and env.round_index == k:
                    partials.append(wire.decode_batch_partial(env.payload))
            try:
                vec = tdsa.tdsa_recover(self.parties[pid], partials)
            except TamperDetected as exc:
                outcomes.add("aborted")
                rec.events.append(f"abort:{pid}:{exc}")
                continue
            except InsufficientShares as exc:
                outcomes.add("failed")
                rec.events.append(f"insufficient:{pid}:{exc}")
                continue
            except (ResultOutOfRange, LabelMismatch) as exc:
                outcomes.add("failed")
                rec.events.append(f"recover-error:{pid}:{exc}")
                continue
            recovered[pid] = np.asarray(vec)
        rec.phase_ms["recover"] = 1e3 * (time.perf_counter() - t0)

        if recovered:
            vectors = list(recovered.values())
            if any(not np.array_equal(vectors[0], v) for v in vectors[1:]):
                rec.events.append("inconsistent-recovery")
            rec.global_update = vectors[0]
            for pid, vec in recovered.items():
                self.models[pid] = ToyModel(vec.copy(), cfg.trainer.family)
            self.global_model = ToyModel(vectors[0].copy(), cfg.trainer.family)
        for pid in live_parties:
            if pid not in recovered:
                # a party that could not recover keeps its local model
                self.models[pid] = local[pid]
        if not recovered:
            rec.status = "aborted" if "aborted" in outcomes else "failed"
            rec.events.append("round-failed")
        elif len(recovered) < len(live_parties):
            rec.status = "partial"

        rec.plaintext_update = self.plaintext_average(k, live_parties)
        if rec.global_update is not None:
            rec.max_deviation = float(np.max(np.abs(rec.global_update - rec.plaintext_update)))
        rec.test_loss = self.global_model.loss(self.test)
        rec.test_accuracy = self.global_model.accuracy(self.test)
        rec.bytes_by_edge = dict(self.transport.bytes_by_edge)
        self.completed = k
        return rec

    def plaintext_average(self, k: int, parties) -> np.ndarray:
        """Float-weighted average of what each live party protected this round."""
        stats = {self.parties[p].party_index: self.parties[p].sample_count for p in parties}
        spec = make_fusion_spec(self.cfg.fusion_mode if self.cfg.fusion_mode != "personalized"
                                else "iter-avg", stats, RoundLabel(k).bytes, self.cfg.encoding)
        w = spec.weight_map
        plain = self.round_plain[k]
        return sum(w[self.parties[p].party_index] * plain[p] for p in parties)

    def run(self) -> ExperimentResult:
        records = [self.run_round(k) for k in range(self.completed + 1, self.cfg.max_rounds + 1)]
        return ExperimentResult(self.cfg, records, self.global_model.copy())


def run_round(sim: Simulation, k: int) -> RoundRecord:
    return sim.run_round(k)


def run_experiment(cfg: ExperimentConfig, interceptor=None) -> ExperimentResult:
    return Simulation(cfg, interceptor).run()


@dataclass
class PlainRecord:
    round_index: int
    global_update: np.ndarray
    test_loss: float
    test_accuracy: float
    train_loss: Dict[str, float]


def run_plaintext_fedavg(cfg: ExperimentConfig):
    """Reference FedAvg without encryption under the same data and dropout schedule."""
    cfg = cfg.validate()
    parts, test = build_datasets(cfg)
    dim = parts[0].X.shape[1] + 1
    models = {pid: ToyModel.zeros(dim - 1, cfg.trainer.family) for pid in cfg.party_ids}
    global_model = ToyModel.zeros(dim - 1, cfg.trainer.family)
    records = []
    for k in range(1, cfg.max_rounds + 1):
        dropped = {d.entity for d in cfg.dropout.get(k, ()) if d.entity[0] == "p"}
        live = [p for p in cfg.party_ids if p not in dropped]
        local, losses = {}, {}
        for pid in live:
            idx = int(pid[1:])
            local[pid] = train_local(models[pid], parts[idx - 1], cfg.local_epochs,
                                     cfg.trainer.learning_rate, cfg.trainer.l2,
                                     cfg.encoding.value_bound)
            losses[pid] = local[pid].loss(parts[idx - 1], cfg.trainer.l2)
        mode = cfg.fusion_mode if cfg.fusion_mode != "personalized" else "iter-avg"
        spec = make_fusion_spec(mode, {int(p[1:]): len(parts[int(p[1:]) - 1]) for p in live},
                                RoundLabel(k).bytes, cfg.encoding)
        w = spec.weight_map
        avg = sum(w[int(p[1:])] * local[p].weights for p in live)
        global_model = ToyModel(avg.copy(), cfg.trainer.family)
        for pid in live:
            models[pid] = global_model.copy()
        records.append(PlainRecord(k, avg, global_model.loss(test), global_model.accuracy(test),
                                   losses))
    return records, global_model
