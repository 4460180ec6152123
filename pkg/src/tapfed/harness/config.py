"""Experiment configuration and its flat, sectioned text file format."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional

from ..codec import FUSION_MODES, EncodingConfig
from ..errors import ConfigError
from ..tdsa import DPConfig

PHASES = ("before", "after")
SCENARIOS = ("isolation", "replay", "collusion", "disaggregation-probe", "tamper")


@dataclass(frozen=True)
class DropEvent:
    """``entity`` is a party (``p3``) or aggregator (``a2``) id.

    Aggregators drop ``before`` receiving updates or ``after`` receipt but
    before sharing; parties always drop before protecting their update.
    """

    entity: str
    phase: str = "before"

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ConfigError(f"drop phase must be one of {PHASES}")
        if not self.entity or self.entity[0] not in "pa":
            raise ConfigError(f"drop entity {self.entity!r} must be a party or aggregator id")


@dataclass(frozen=True)
class AdversarySpec:
    behavior: str
    round_index: int = 1
    aggregator: str = "a1"
    target_party: str = "p1"
    coalition_size: Optional[int] = None


@dataclass(frozen=True)
class TrainerSpec:
    family: str = "logistic-regression"
    n_samples: int = 1000
    n_features: int = 10
    test_fraction: float = 0.2
    partition: str = "iid"
    concentration: float = 1.0
    data_seed: int = 0
    class_separation: float = 1.5
    learning_rate: float = 0.5
    l2: float = 1e-3
    dataset_csv: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    n_parties: int = 5
    s_aggregators: int = 2
    threshold_t: int = 2
    max_rounds: int = 20
    local_epochs: int = 1
    lambda_bits: int = 256
    seed: int = 0
    fusion_mode: str = "fedavg"
    trust_threshold: Optional[int] = None
    # quorum sizes for parties / aggregators; kept as knobs only
    party_quorum: int = 1
    aggregator_quorum: Optional[int] = None
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    trainer: TrainerSpec = field(default_factory=TrainerSpec)
    dropout: Dict[int, tuple] = field(default_factory=dict)
    adversary: Optional[AdversarySpec] = None
    dp: Optional[DPConfig] = None

    def validate(self) -> "ExperimentConfig":
        if self.n_parties < 1:
            raise ConfigError("n_parties must be >= 1")
        if not 1 <= self.threshold_t <= self.s_aggregators:
            raise ConfigError("need 1 <= threshold_t <= s_aggregators")
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be >= 1")
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"fusion_mode must be one of {FUSION_MODES}")
        if self.trainer.family not in ("logistic-regression", "linear-regression"):
            raise ConfigError(f"unknown model family {self.trainer.family!r}")
        if self.lambda_bits < 16:
            raise ConfigError("lambda_bits must be >= 16")
        bound = self.encoding.dlog_bound(self.n_parties)
        # 2B + 1 must fit in the group order, whose top bit is set
        if (2 * bound + 1).bit_length() >= self.lambda_bits:
            raise ConfigError(
                f"dlog bound {bound} does not fit a {self.lambda_bits}-bit group; "
                "lower the precision or raise lambda_bits")
        for rnd, events in self.dropout.items():
            for ev in events:
                idx = int(ev.entity[1:])
                limit = self.n_parties if ev.entity[0] == "p" else self.s_aggregators
                if not 1 <= idx <= limit:
                    raise ConfigError(f"round {rnd}: unknown entity {ev.entity}")
        if self.adversary is not None and self.adversary.behavior not in SCENARIOS:
            raise ConfigError(f"unknown adversary behavior {self.adversary.behavior!r}")
        return self

    @property
    def party_ids(self) -> List[str]:
        return [f"p{i}" for i in range(1, self.n_parties + 1)]

    @property
    def aggregator_ids(self) -> List[str]:
        return [f"a{j}" for j in range(1, self.s_aggregators + 1)]


def _coerce(value: str, current):
    if isinstance(current, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value.strip()


def _parse_drop_list(text: str) -> tuple:
    events = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        entity, _, phase = item.partition("@")
        events.append(DropEvent(entity.strip(), phase.strip() or "before"))
    return tuple(events)


_EXPERIMENT_KEYS = {f.name for f in fields(ExperimentConfig)} - {
    "encoding", "trainer", "dropout", "adversary", "dp"}
_INT_OPTIONAL = {"trust_threshold", "aggregator_quorum", "coalition_size"}


def _section_values(section, template, optional_ints=()):
    out = {}
    names = {f.name: f for f in fields(template)}
    for key, raw in section.items():
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        if key in optional_ints or key in _INT_OPTIONAL:
            out[key] = None if raw.strip().lower() in ("", "none") else int(raw)
        elif key == "dataset_csv":
            out[key] = raw.strip() or None
        else:
            try:
                out[key] = _coerce(raw, getattr(template, key))
            except ValueError as exc:
                raise ConfigError(f"[{section.name}] {key}: {exc}") from None
    return out


def parse_config(text: str, overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    """Parse the sectioned key-value format; ``overrides`` use ``section.key`` names."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    if not parser.sections():
        raise ConfigError("config file has no sections")
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.rpartition(".")
        if not section:
            section = "experiment"
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)

    known = {"experiment", "encoding", "trainer", "dropout", "adversary", "dp"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    try:
        return _build(parser).validate()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _build(parser) -> ExperimentConfig:
    base = ExperimentConfig()
    kwargs = {}
    if parser.has_section("experiment"):
        kwargs.update(_section_values(parser["experiment"], base))
    if parser.has_section("encoding"):
        kwargs["encoding"] = EncodingConfig(**_section_values(parser["encoding"], base.encoding))
    if parser.has_section("trainer"):
        kwargs["trainer"] = TrainerSpec(**_section_values(parser["trainer"], base.trainer))
    if parser.has_section("dropout"):
        drops = {}
        for key, raw in parser["dropout"].items():
            if not key.startswith("round."):
                raise ConfigError(f"dropout keys look like round.N, got {key!r}")
            drops[int(key[len("round."):])] = _parse_drop_list(raw)
        kwargs["dropout"] = drops
    if parser.has_section("adversary"):
        sec = dict(parser["adversary"])
        if "behavior" not in sec:
            raise ConfigError("[adversary] needs a behavior")
        kwargs["adversary"] = AdversarySpec(
            behavior=sec["behavior"].strip(),
            round_index=int(sec.get("round", 1)),
            aggregator=sec.get("aggregator", "a1").strip(),
            target_party=sec.get("target_party", "p1").strip(),
            coalition_size=int(sec["coalition_size"]) if sec.get("coalition_size") else None,
        )
    if parser.has_section("dp"):
        sec = parser["dp"]
        kwargs["dp"] = DPConfig(sec.get("mechanism", "gaussian").strip(),
                                float(sec.get("scale", "0")))
    return ExperimentConfig(**kwargs)


def load_config(path, overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, overrides)


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, **changes).validate()
