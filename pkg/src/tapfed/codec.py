"""Fixed-point bridge between float model updates and the integer key space."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import DegenerateWeights, EncodingRangeError

FUSION_MODES = ("iter-avg", "fedavg", "personalized")


@dataclass(frozen=True)
class EncodingConfig:
    """Precision knobs; ``pr`` digits for values, ``prw`` digits for weights."""

    value_precision: int = 4
    weight_precision: int = 4
    value_bound: float = 10.0
    max_weight: float = 1.0

    def __post_init__(self):
        if self.value_precision < 1:
            raise ValueError("value_precision must be >= 1")
        if self.weight_precision < 0:
            raise ValueError("weight_precision must be >= 0")
        if not self.value_bound > 0:
            raise ValueError("value_bound must be positive")

    @property
    def value_scale(self) -> int:
        return 10 ** self.value_precision

    @property
    def weight_scale(self) -> int:
        return 10 ** self.weight_precision

    def dlog_bound(self, n_parties: int) -> int:
        # per-factor rounding slack of one unit keeps the bound strict
        per_value = int(np.ceil(self.value_bound * self.value_scale)) + 1
        per_weight = int(np.ceil(self.max_weight * self.weight_scale)) + 1
        return n_parties * per_value * per_weight


def _round_half_away(x: float) -> int:
    return int(np.sign(x) * np.floor(abs(x) + 0.5))


def encode_scalars(values: Iterable[float], cfg: EncodingConfig) -> list:
    """Signed fixed-point integers, ``round(v * 10^pr)``."""
    out = []
    scale = cfg.value_scale
    for v in values:
        v = float(v)
        if not np.isfinite(v) or abs(v) > cfg.value_bound:
            raise EncodingRangeError(f"value {v} outside +/-{cfg.value_bound}")
        out.append(_round_half_away(v * scale))
    return out


def encode_vector(values: Iterable[float], cfg: EncodingConfig, modulus: int) -> list:
    """Encode into ``Z_modulus`` with negatives represented as ``modulus - |m|``."""
    return [m % modulus for m in encode_scalars(values, cfg)]


def decode_scalar(value: int, cfg: EncodingConfig) -> float:
    return value / cfg.value_scale


def decode_result(raw: int, cfg: EncodingConfig, fusion: Optional["FusionSpec"] = None) -> float:
    """Undo both the value and the weight scale in one division."""
    return raw / 10 ** (cfg.value_precision + cfg.weight_precision)


@dataclass(frozen=True)
class FusionSpec:
    """Fusion weights for one round label; ``weights`` is keyed by party index."""

    weights: tuple  # ((party_index, float weight), ...) sorted by party
    scaled_weights: tuple  # ((party_index, int), ...)
    label: bytes
    participant_mask: frozenset = field(default_factory=frozenset)

    @property
    def weight_map(self) -> dict:
        return dict(self.weights)

    def key_weights(self, n_parties: int) -> list:
        """Dense integer weight per client index 1..n (0 when excluded)."""
        scaled = dict(self.scaled_weights)
        return [scaled.get(i, 0) for i in range(1, n_parties + 1)]

    @property
    def scaled_sum(self) -> int:
        return sum(v for _, v in self.scaled_weights)


def make_fusion_spec(mode: str, party_stats: Mapping, label: bytes, cfg: EncodingConfig,
                     active: Optional[Iterable[int]] = None) -> FusionSpec:
    """Build the round's fusion weights over the active parties.

    ``party_stats`` maps party index to its sample count (``fedavg``), its
    weight (``personalized``), or anything (``iter-avg``). Parties outside
    ``active`` are dropped and the remaining weights renormalised to sum to 1.
    """
    if mode not in FUSION_MODES:
        raise ValueError(f"unknown fusion mode {mode!r}")
    parties = sorted(party_stats) if active is None else sorted(set(active))
    if not parties:
        raise DegenerateWeights("no active parties")
    if mode == "iter-avg":
        raw = {i: 1.0 for i in parties}
    else:
        raw = {i: float(party_stats[i]) for i in parties}
        if any(v < 0 for v in raw.values()):
            raise DegenerateWeights("weights and sample counts must be non-negative")
    total = sum(raw.values())
    if total <= 0:
        raise DegenerateWeights("weights sum to zero")
    if mode == "personalized" and active is None:
        weights = raw
    else:
        weights = {i: v / total for i, v in raw.items()}
    scaled = {i: _round_half_away(w * cfg.weight_scale) for i, w in weights.items()}
    return FusionSpec(
        weights=tuple(sorted(weights.items())),
        scaled_weights=tuple(sorted(scaled.items())),
        label=bytes(label),
        participant_mask=frozenset(parties),
    )
