"""Schnorr-group arithmetic, label hashing, Shamir sharing and bounded dlog.

All group elements live in the order-``p`` subgroup of quadratic residues of
``Z_q*`` with ``q = 2p + 1``. Exponents are scalars mod ``p``.
"""
from __future__ import annotations

import hashlib
import random
import secrets
from dataclasses import dataclass
from functools import lru_cache
from math import isqrt
from typing import Iterable, Sequence, Union

import gmpy2

from .errors import (
    DlogOutOfBound,
    GenerationTimeout,
    InvalidIndex,
    InvalidLabel,
    SerializationError,
    ThresholdError,
)

GROUP_FORMAT_TAG = "tapfed-group-v1"
HASH_ID = "shake256-zp-v1"
_HASH_DOMAIN = b"tapfed/hash-to-scalar/v1"

# baby-step table is capped so a single cached table stays in the tens of MB
MAX_BABY_STEPS = 1 << 17

RandomSource = Union[None, int, random.Random]


def make_rng(seed: RandomSource = None) -> random.Random:
    """Return a reproducible RNG for an int seed, else a CSPRNG.

    Passing an existing ``random.Random`` returns it unchanged so callers can
    thread one generator through several operations.
    """
    if isinstance(seed, random.Random):
        return seed
    if seed is None:
        return secrets.SystemRandom()
    return random.Random(seed)


@dataclass(frozen=True)
class GroupParams:
    modulus_q: int
    order_p: int
    generator_g: int
    lambda_bits: int

    def __post_init__(self):
        q, p, g = self.modulus_q, self.order_p, self.generator_g
        if q != 2 * p + 1:
            raise ValueError("modulus must equal 2 * order + 1")
        if not (gmpy2.is_prime(p) and gmpy2.is_prime(q)):
            raise ValueError("modulus and order must both be prime")
        if not 2 <= g <= q - 1 or g == 1 or pow(g, p, q) != 1:
            raise ValueError("generator must have order p")
        if p.bit_length() != self.lambda_bits:
            raise ValueError("order bit length does not match lambda_bits")

    @property
    def element_bytes(self) -> int:
        """Fixed byte width used to serialize group elements."""
        return (self.modulus_q.bit_length() + 7) // 8

    @property
    def scalar_bytes(self) -> int:
        return (self.order_p.bit_length() + 7) // 8

    def is_element(self, x: int) -> bool:
        return 1 <= x < self.modulus_q and pow(x, self.order_p, self.modulus_q) == 1

    def random_scalar(self, rng: RandomSource = None) -> int:
        return make_rng(rng).randrange(self.order_p)

    def to_text(self) -> str:
        return "\n".join(
            [
                GROUP_FORMAT_TAG,
                str(self.modulus_q),
                str(self.order_p),
                str(self.generator_g),
                str(self.lambda_bits),
            ]
        ) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GroupParams":
        lines = [ln.strip() for ln in text.strip().splitlines()]
        if len(lines) != 5 or lines[0] != GROUP_FORMAT_TAG:
            raise SerializationError(f"expected {GROUP_FORMAT_TAG!r} with 4 fields")
        try:
            q, p, g, bits = (int(x) for x in lines[1:])
        except ValueError as exc:
            raise SerializationError(str(exc)) from None
        return cls(q, p, g, bits)


def gen_group(lambda_bits: int = 256, seed: RandomSource = None,
              max_iterations: int = 2_000_000) -> GroupParams:
    """Sample a safe prime ``q = 2p + 1`` with ``p`` of exactly ``lambda_bits`` bits."""
    if lambda_bits < 3:
        raise ValueError("lambda_bits must be at least 3")
    rng = make_rng(seed)
    top = 1 << (lambda_bits - 1)
    for _ in range(max_iterations):
        p = rng.getrandbits(lambda_bits) | top | 1
        # q = 2p+1 is divisible by 3 whenever p = 1 mod 3
        if p > 3 and p % 3 == 1:
            continue
        if gmpy2.is_prime(p, 40) and gmpy2.is_prime(2 * p + 1, 40):
            break
    else:
        raise GenerationTimeout(f"no {lambda_bits}-bit safe prime in {max_iterations} tries")
    q = 2 * p + 1
    while True:
        h = rng.randrange(2, q - 1)
        g = pow(h, 2, q)
        if g != 1:
            return GroupParams(q, p, g, lambda_bits)


def mod_exp(base: int, exponent: int, params: GroupParams) -> int:
    return int(gmpy2.powmod(base, exponent % params.order_p, params.modulus_q))


def mod_inv(x: int, params: GroupParams) -> int:
    return int(gmpy2.invert(x, params.modulus_q))


def multi_exp(bases: Sequence[int], exponents: Sequence[int], params: GroupParams) -> int:
    """Product of ``base ** exponent`` over paired sequences, zero exponents skipped."""
    q, p = params.modulus_q, params.order_p
    acc = gmpy2.mpz(1)
    for b, e in zip(bases, exponents):
        e %= p
        if e:
            acc = acc * gmpy2.powmod(b, e, q) % q
    return int(acc)


def hash_to_scalar(label: bytes, params: GroupParams) -> int:
    """Hash a label to a scalar in ``[1, p - 1]``.

    SHAKE-256 over a domain-separated, length-prefixed label; 128 extra output
    bits keep the modular bias negligible.
    """
    if isinstance(label, str):
        label = label.encode("utf-8")
    if not label:
        raise InvalidLabel("label must be non-empty")
    n_out = params.scalar_bytes + 16
    h = hashlib.shake_256()
    h.update(_HASH_DOMAIN)
    h.update(len(label).to_bytes(8, "big"))
    h.update(label)
    digest = int.from_bytes(h.digest(n_out), "big")
    return digest % (params.order_p - 1) + 1


@dataclass(frozen=True)
class ShamirShareSet:
    threshold_t: int
    share_count_s: int
    shares: tuple  # ((index, value), ...)

    def subset(self, indices: Iterable[int]) -> dict:
        table = dict(self.shares)
        return {j: table[j] for j in indices}


def eval_poly(coeffs: Sequence[int], x: int, modulus: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % modulus
    return acc


def random_poly(constant: int, degree: int, params: GroupParams, rng: RandomSource = None) -> list:
    rng = make_rng(rng)
    p = params.order_p
    return [constant % p] + [rng.randrange(p) for _ in range(degree)]


def shamir_share(secret: int, t: int, s: int, params: GroupParams,
                 seed: RandomSource = None) -> ShamirShareSet:
    if t < 1:
        raise ThresholdError("threshold must be >= 1")
    if t > s:
        raise ThresholdError(f"threshold {t} exceeds share count {s}")
    if s >= params.order_p:
        raise ThresholdError("share count must be below the group order")
    coeffs = random_poly(secret, t - 1, params, seed)
    shares = tuple((j, eval_poly(coeffs, j, params.order_p)) for j in range(1, s + 1))
    return ShamirShareSet(t, s, shares)


def lagrange_coeff_at_zero(subset: Iterable[int], j: int, params: GroupParams) -> int:
    """Weight of share ``j`` when interpolating the points in ``subset`` at x = 0."""
    indices = set(subset)
    if j not in indices:
        raise InvalidIndex(f"index {j} not in subset {sorted(indices)}")
    p = params.order_p
    num, den = 1, 1
    for other in indices:
        if other == j:
            continue
        num = num * (-other) % p
        den = den * (j - other) % p
    if den == 0:
        raise InvalidIndex("subset indices collide modulo the group order")
    return num * int(gmpy2.invert(den, p)) % p


def shamir_recombine(shares: dict, params: GroupParams) -> int:
    """Interpolate ``{index: value}`` at zero."""
    if not shares:
        raise ThresholdError("need at least one share")
    p = params.order_p
    idx = list(shares)
    return sum(lagrange_coeff_at_zero(idx, j, params) * v for j, v in shares.items()) % p


@lru_cache(maxsize=16)
def _baby_steps(base: int, q: int, m: int) -> dict:
    table = {}
    e = gmpy2.mpz(1)
    b = gmpy2.mpz(base)
    for j in range(m):
        table.setdefault(int(e), j)
        e = e * b % q
    return table


def bsgs_dlog(target: int, base: int, bound: int, params: GroupParams,
              max_table: int = MAX_BABY_STEPS) -> int:
    """Signed discrete log of ``target`` to ``base`` within ``[-bound, bound]``.

    Giant steps walk outward from zero in both directions, so the cost grows
    with ``|v|`` rather than with the bound.
    """
    if bound < 0:
        raise ValueError("bound must be non-negative")
    if 2 * bound + 1 > params.order_p:
        raise ValueError("bound too large for a unique answer in this group")
    q = params.modulus_q
    target %= q
    if target == 1:
        return 0
    m = min(isqrt(2 * bound + 1) + 1, max_table)
    table = _baby_steps(base, q, m)
    step_down = gmpy2.powmod(base, (-m) % params.order_p, q)
    step_up = gmpy2.powmod(base, m, q)
    up = gmpy2.mpz(target)  # target * base^(-i*m), i >= 0
    down = up * step_up % q  # target * base^(i*m), i >= 1
    n_giant = bound // m + 1
    for i in range(n_giant + 1):
        j = table.get(int(up))
        if j is not None:
            v = i * m + j
            if v <= bound:
                return v
        j = table.get(int(down))
        if j is not None:
            v = -(i + 1) * m + j
            if v >= -bound:
                return v
        up = up * step_down % q
        down = down * step_up % q
    raise DlogOutOfBound(f"no discrete log within +/-{bound}")


def to_hex(x: int) -> str:
    """Lowercase big-endian hex without leading zeros (``0`` for zero)."""
    return format(x, "x")


def from_hex(s: str) -> int:
    return int(s, 16)
