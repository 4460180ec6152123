"""t-of-s threshold multi-client functional encryption for inner products.

Six algorithms: :func:`setup`, :func:`sk_distribute`, :func:`dk_generate`,
:func:`encrypt`, :func:`share_decrypt` and :func:`combine_decrypt`.

Two deliberate departures from the textbook description:

* Lagrange coefficients are applied in :func:`combine_decrypt` over the
  responders actually present, not inside :func:`share_decrypt`. A partial
  decryption therefore carries raw share-index exponents and any ``t`` of the
  ``s`` partials recombine.
* Each mask cancels exactly once, so the combined value is ``g^<x, y>`` and
  is read out with a plain bounded dlog (no squaring, no halving).

The ``*_batch`` variants evaluate ``L`` coordinate-wise functionals at once:
functional ``k`` puts party weight ``w_i`` on coordinate ``k`` of client ``i``
and zero elsewhere. They are equivalent to ``L`` calls of the dense API with
sparse weight vectors but never materialise those vectors.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import gmpy2

from . import group_math as gm
from .errors import (
    ArityError,
    DlogOutOfBound,
    IncompleteInput,
    InsufficientShares,
    InvalidIndex,
    InvalidLabel,
    KeyMismatch,
    LabelMismatch,
    ResultOutOfRange,
    TamperDetected,
    ThresholdError,
)
from .group_math import GroupParams, RandomSource, make_rng


def _as_label(label) -> bytes:
    if isinstance(label, str):
        label = label.encode("utf-8")
    if not isinstance(label, (bytes, bytearray)) or not label:
        raise InvalidLabel("label must be a non-empty byte string")
    return bytes(label)


@dataclass(frozen=True)
class PublicParams:
    group: GroupParams
    threshold_t: int
    share_count_s: int
    client_count_n: int
    vector_lengths: tuple
    hash_id: str = gm.HASH_ID

    def __post_init__(self):
        if not 1 <= self.threshold_t <= self.share_count_s:
            raise ThresholdError(f"need 1 <= t <= s, got t={self.threshold_t}, s={self.share_count_s}")
        if self.client_count_n < 1 or len(self.vector_lengths) != self.client_count_n:
            raise ArityError("client count must match the number of vector lengths")
        if any(eta < 1 for eta in self.vector_lengths):
            raise ArityError("every client vector length must be >= 1")

    @property
    def total_length(self) -> int:
        return sum(self.vector_lengths)

    def offsets(self) -> list:
        out, acc = [], 0
        for eta in self.vector_lengths:
            out.append(acc)
            acc += eta
        return out

    def split(self, y: Sequence[int]) -> list:
        """Split a concatenated weight vector into per-client blocks."""
        if len(y) != self.total_length:
            raise ArityError(f"weight vector has length {len(y)}, expected {self.total_length}")
        return [list(y[o:o + eta]) for o, eta in zip(self.offsets(), self.vector_lengths)]


@dataclass(frozen=True, repr=False)
class MasterSecretKey:
    W: tuple
    U: tuple
    alpha: tuple
    alpha_sum: int
    g_alpha: tuple
    masked_bases: tuple

    def __repr__(self):
        return "MasterSecretKey(<redacted>)"


@dataclass(frozen=True)
class PartySecretKey:
    client_index: int
    pp: PublicParams
    g_alpha: tuple
    masked_bases: tuple
    U: tuple


@dataclass(frozen=True)
class FunctionalKeyShare:
    share_index: int
    v0: int
    v1: tuple
    weight_vector_y: tuple
    label: bytes


@dataclass(frozen=True)
class Ciphertext:
    client_index: int
    label: bytes
    ct0: tuple
    ct1: int


@dataclass(frozen=True)
class PartialDecryption:
    share_index: int
    ct0_agg: int
    ct1_shares: tuple
    ct2_share: int
    label: bytes


def setup(lambda_bits: int, vector_lengths: Sequence[int], t: int, s: int,
          n: Optional[int] = None, seed: RandomSource = None,
          group: Optional[GroupParams] = None):
    """Generate public parameters and the master secret key.

    ``group`` skips safe-prime generation (useful when many instances share
    one group); otherwise a fresh group of ``lambda_bits`` is sampled.
    """
    vector_lengths = tuple(int(e) for e in vector_lengths)
    if not vector_lengths:
        raise ArityError("need at least one client")
    if n is not None and n != len(vector_lengths):
        raise ArityError(f"n={n} but {len(vector_lengths)} vector lengths given")
    if t > s:
        raise ThresholdError(f"threshold {t} exceeds share count {s}")
    rng = make_rng(seed)
    if group is None:
        group = gm.gen_group(lambda_bits, rng)
    pp = PublicParams(group, t, s, len(vector_lengths), vector_lengths)

    p, q, g = group.order_p, group.modulus_q, group.generator_g
    eta_max = max(vector_lengths)
    alpha = tuple(rng.randrange(p) for _ in range(eta_max))
    W = tuple(tuple(rng.randrange(p) for _ in range(eta)) for eta in vector_lengths)
    U = tuple(tuple(rng.randrange(p) for _ in range(eta)) for eta in vector_lengths)
    A = sum(alpha) % p
    g_alpha = tuple(int(gmpy2.powmod(g, a, q)) for a in alpha)
    g_A = gmpy2.powmod(g, A, q)
    masked = tuple(tuple(int(gmpy2.powmod(g_A, w, q)) for w in row) for row in W)
    return pp, MasterSecretKey(W, U, alpha, A, g_alpha, masked)


def sk_distribute(pp: PublicParams, msk: MasterSecretKey, client_index: int) -> PartySecretKey:
    if not 1 <= client_index <= pp.client_count_n:
        raise InvalidIndex(f"client index {client_index} outside [1, {pp.client_count_n}]")
    i = client_index - 1
    return PartySecretKey(client_index, pp, msk.g_alpha, msk.masked_bases[i], msk.U[i])


def _inner(a: Sequence[int], b: Sequence[int], p: int) -> int:
    return sum(x * y for x, y in zip(a, b) if x and y) % p


def dk_generate(pp: PublicParams, msk: MasterSecretKey, weight_vector_y: Sequence[int],
                label, seed: RandomSource = None) -> list:
    """All ``s`` functional key shares for ``(y, label)`` from one polynomial draw.

    Clients whose block of ``y`` is entirely zero get the zero polynomial: their
    constant term is publicly zero, so no randomness is needed to hide it and
    their ciphertexts become optional at decryption time.
    """
    label = _as_label(label)
    group = pp.group
    p = group.order_p
    y = tuple(int(v) % p for v in weight_vector_y)
    blocks = pp.split(y)
    rng = make_rng(seed)
    h = gm.hash_to_scalar(label, group)
    a0 = h * sum(_inner(b, u, p) for b, u in zip(blocks, msk.U)) % p
    f0 = gm.random_poly(a0, pp.threshold_t - 1, group, rng)
    fi = []
    for b, w in zip(blocks, msk.W):
        if any(b):
            fi.append(gm.random_poly(_inner(b, w, p), pp.threshold_t - 1, group, rng))
        else:
            fi.append([0] * pp.threshold_t)
    shares = []
    for j in range(1, pp.share_count_s + 1):
        v0 = gm.eval_poly(f0, j, p)
        v1 = tuple(gm.eval_poly(c, j, p) for c in fi)
        shares.append(FunctionalKeyShare(j, v0, v1, y, label))
    return shares


def encrypt(sk: PartySecretKey, x: Sequence[int], label, seed: RandomSource = None,
            *, randomness: Optional[int] = None) -> Ciphertext:
    """Encrypt ``x`` under ``label``.

    ``randomness`` pins the encryption nonce and exists for tests only.
    """
    label = _as_label(label)
    pp = sk.pp
    group = pp.group
    p, q, g = group.order_p, group.modulus_q, group.generator_g
    if len(x) != len(sk.masked_bases):
        raise ArityError(f"plaintext length {len(x)} != {len(sk.masked_bases)}")
    r = make_rng(seed).randrange(p) if randomness is None else randomness % p
    h = gm.hash_to_scalar(label, group)
    ct0 = tuple(
        int(gmpy2.powmod(g, (xk + h * uk) % p, q) * gmpy2.powmod(mb, r, q) % q)
        for xk, uk, mb in zip(x, sk.U, sk.masked_bases)
    )
    # product over the full alpha vector; alpha has length max(eta)
    g_A = 1
    for ga in sk.g_alpha:
        g_A = g_A * ga % q
    ct1 = int(gmpy2.powmod(g_A, r, q))
    return Ciphertext(sk.client_index, label, ct0, ct1)


def _index_ciphertexts(pp: PublicParams, ciphertexts, label: bytes, required, check_labels: bool):
    by_client = {}
    for ct in ciphertexts:
        if check_labels and ct.label != label:
            raise LabelMismatch("ciphertext label does not match the key label")
        if ct.client_index in by_client:
            raise IncompleteInput(f"duplicate ciphertext for client {ct.client_index}")
        by_client[ct.client_index] = ct
    missing = [i for i in required if i not in by_client]
    if missing:
        raise IncompleteInput(f"missing ciphertexts for clients {missing}")
    return by_client


def share_decrypt(pp: PublicParams, ciphertexts: Sequence[Ciphertext],
                  weight_vector_y: Sequence[int], dk_share: FunctionalKeyShare,
                  *, check_labels: bool = True) -> PartialDecryption:
    """One decryptor's partial decryption.

    ``check_labels=False`` skips the label guard; it exists so tests can show
    that mixed-label batches fail at combine time anyway.
    """
    group = pp.group
    p, q, g = group.order_p, group.modulus_q, group.generator_g
    y = tuple(int(v) % p for v in weight_vector_y)
    if y != dk_share.weight_vector_y:
        raise KeyMismatch("weight vector differs from the one the key was issued for")
    blocks = pp.split(y)
    if check_labels:
        labels = {ct.label for ct in ciphertexts}
        if len(labels) > 1:
            raise LabelMismatch("ciphertexts carry different labels")
    required = [i + 1 for i, b in enumerate(blocks) if any(b)]
    by_client = _index_ciphertexts(pp, ciphertexts, dk_share.label, required, check_labels)

    acc = gmpy2.mpz(1)
    for i in required:
        ct = by_client[i]
        if len(ct.ct0) != pp.vector_lengths[i - 1]:
            raise ArityError(f"client {i} ciphertext has wrong length")
        for c, w in zip(ct.ct0, blocks[i - 1]):
            if w:
                acc = acc * gmpy2.powmod(c, w, q) % q
    ct1_shares = []
    for i in range(1, pp.client_count_n + 1):
        e = dk_share.v1[i - 1]
        if i in by_client and e:
            ct1_shares.append(int(gmpy2.powmod(by_client[i].ct1, e, q)))
        else:
            ct1_shares.append(1)
    ct2 = int(gmpy2.powmod(g, dk_share.v0, q))
    return PartialDecryption(dk_share.share_index, int(acc), tuple(ct1_shares), ct2, dk_share.label)


def select_responders(indices, t: int) -> list:
    """Deterministic decryption subset: the ``t`` lowest share indices."""
    return sorted(indices)[:t]


def _check_partials(pp: PublicParams, partials, t: int):
    by_index = {}
    for part in partials:
        if part.share_index in by_index:
            raise InvalidIndex(f"duplicate partial for share {part.share_index}")
        if not 1 <= part.share_index <= pp.share_count_s:
            raise InvalidIndex(f"share index {part.share_index} outside [1, {pp.share_count_s}]")
        by_index[part.share_index] = part
    if len(by_index) < t:
        raise InsufficientShares(f"{len(by_index)} partials, threshold is {t}")
    labels = {part.label for part in partials}
    if len(labels) > 1:
        raise LabelMismatch("partials carry different labels")
    return by_index


def combine_decrypt(pp: PublicParams, partials: Sequence[PartialDecryption],
                    weight_vector_y: Sequence[int], dlog_bound: int,
                    subset: Optional[Sequence[int]] = None) -> int:
    """Verify agreement, recombine ``t`` partials and read ``sum_i <x_i, y_i>``.

    ``subset`` overrides the default choice of the ``t`` lowest indices.
    """
    group = pp.group
    q = group.modulus_q
    t = pp.threshold_t
    by_index = _check_partials(pp, partials, t)
    if len({part.ct0_agg for part in partials}) != 1:
        raise TamperDetected("partial decryptions disagree on the aggregated ciphertext")
    chosen = select_responders(by_index, t) if subset is None else list(subset)
    if len(chosen) < t or any(j not in by_index for j in chosen):
        raise InsufficientShares("requested subset is not covered by the partials")
    chosen = chosen[:t]
    C = by_index[chosen[0]].ct0_agg
    denom = gmpy2.mpz(1)
    for j in chosen:
        coeff = gm.lagrange_coeff_at_zero(chosen, j, group)
        part = by_index[j]
        inner = part.ct2_share
        for e in part.ct1_shares:
            inner = inner * e % q
        denom = denom * gmpy2.powmod(inner, coeff, q) % q
    D = C * gmpy2.invert(denom, q) % q
    try:
        return gm.bsgs_dlog(int(D), group.generator_g, dlog_bound, group)
    except DlogOutOfBound as exc:
        raise ResultOutOfRange(str(exc)) from None


def all_subsets(indices, t: int):
    return [list(c) for c in combinations(sorted(indices), t)]


# -- coordinate-wise batch API -------------------------------------------


@dataclass(frozen=True)
class BatchKeyShare:
    """Share ``j`` of ``L`` coordinate-wise functional keys.

    ``weights`` holds one scaled weight per client (0 for excluded clients);
    ``v0[k]`` and ``v1[k][i]`` are the share values of functional ``k``.
    """
    share_index: int
    v0: tuple
    v1: tuple
    weights: tuple
    label: bytes


@dataclass(frozen=True)
class BatchPartial:
    share_index: int
    ct0_agg: tuple
    ct1_shares: tuple
    ct2_shares: tuple
    label: bytes

    @property
    def length(self) -> int:
        return len(self.ct0_agg)


def _uniform_length(pp: PublicParams) -> int:
    lengths = set(pp.vector_lengths)
    if len(lengths) != 1:
        raise ArityError("coordinate-wise keys need equal vector lengths for every client")
    return lengths.pop()


def expand_weights(pp: PublicParams, weights: Sequence[int], coordinate: int) -> list:
    """Dense weight vector of the coordinate-``k`` functional (test oracle helper)."""
    L = _uniform_length(pp)
    y = [0] * pp.total_length
    for i, w in enumerate(weights):
        y[i * L + coordinate] = w
    return y


def dk_generate_batch(pp: PublicParams, msk: MasterSecretKey, weights: Sequence[int],
                      label, seed: RandomSource = None) -> list:
    label = _as_label(label)
    group = pp.group
    p = group.order_p
    L = _uniform_length(pp)
    if len(weights) != pp.client_count_n:
        raise ArityError(f"{len(weights)} weights for {pp.client_count_n} clients")
    weights = tuple(int(w) % p for w in weights)
    rng = make_rng(seed)
    h = gm.hash_to_scalar(label, group)
    deg = pp.threshold_t - 1
    active = [i for i, w in enumerate(weights) if w]
    f0, fi = [], []
    for k in range(L):
        a0 = h * sum(weights[i] * msk.U[i][k] for i in active) % p
        f0.append(gm.random_poly(a0, deg, group, rng))
        row = []
        for i, w in enumerate(weights):
            if w:
                row.append(gm.random_poly(w * msk.W[i][k] % p, deg, group, rng))
            else:
                row.append(None)
        fi.append(row)
    shares = []
    for j in range(1, pp.share_count_s + 1):
        v0 = tuple(gm.eval_poly(c, j, p) for c in f0)
        v1 = tuple(
            tuple(0 if c is None else gm.eval_poly(c, j, p) for c in row) for row in fi
        )
        shares.append(BatchKeyShare(j, v0, v1, weights, label))
    return shares


def share_decrypt_batch(pp: PublicParams, ciphertexts: Sequence[Ciphertext],
                        weights: Sequence[int], key: BatchKeyShare,
                        *, check_labels: bool = True) -> BatchPartial:
    group = pp.group
    p, q, g = group.order_p, group.modulus_q, group.generator_g
    L = _uniform_length(pp)
    weights = tuple(int(w) % p for w in weights)
    if weights != key.weights:
        raise KeyMismatch("weights differ from the ones the key was issued for")
    if check_labels and len({ct.label for ct in ciphertexts}) > 1:
        raise LabelMismatch("ciphertexts carry different labels")
    required = [i + 1 for i, w in enumerate(weights) if w]
    by_client = _index_ciphertexts(pp, ciphertexts, key.label, required, check_labels)
    for i in required:
        if len(by_client[i].ct0) != L:
            raise ArityError(f"client {i} ciphertext has wrong length")
    ct0_agg, ct1_shares, ct2 = [], [], []
    for k in range(L):
        acc = gmpy2.mpz(1)
        row = []
        for i in range(1, pp.client_count_n + 1):
            w = weights[i - 1]
            if w:
                ct = by_client[i]
                acc = acc * gmpy2.powmod(ct.ct0[k], w, q) % q
                row.append(int(gmpy2.powmod(ct.ct1, key.v1[k][i - 1], q)))
            else:
                row.append(1)
        ct0_agg.append(int(acc))
        ct1_shares.append(tuple(row))
        ct2.append(int(gmpy2.powmod(g, key.v0[k], q)))
    return BatchPartial(key.share_index, tuple(ct0_agg), tuple(ct1_shares), tuple(ct2), key.label)


def combine_decrypt_batch(pp: PublicParams, partials: Sequence[BatchPartial], dlog_bound: int,
                          subset: Optional[Sequence[int]] = None) -> list:
    """Signed inner product of every coordinate functional."""
    group = pp.group
    q = group.modulus_q
    t = pp.threshold_t
    by_index = _check_partials(pp, partials, t)
    if len({part.ct0_agg for part in partials}) != 1:
        raise TamperDetected("partial decryptions disagree on the aggregated ciphertext")
    chosen = select_responders(by_index, t) if subset is None else list(subset)[:t]
    if len(chosen) < t or any(j not in by_index for j in chosen):
        raise InsufficientShares("requested subset is not covered by the partials")
    coeffs = {j: gm.lagrange_coeff_at_zero(chosen, j, group) for j in chosen}
    first = by_index[chosen[0]]
    out = []
    for k in range(first.length):
        denom = gmpy2.mpz(1)
        for j in chosen:
            part = by_index[j]
            inner = gmpy2.mpz(part.ct2_shares[k])
            for e in part.ct1_shares[k]:
                inner = inner * e % q
            denom = denom * gmpy2.powmod(inner, coeffs[j], q) % q
        D = first.ct0_agg[k] * gmpy2.invert(denom, q) % q
        try:
            out.append(gm.bsgs_dlog(int(D), group.generator_g, dlog_bound, group))
        except DlogOutOfBound as exc:
            raise ResultOutOfRange(f"coordinate {k}: {exc}") from None
    return out
