import hashlib
import random
from itertools import combinations

import pytest
from hypothesis import given, strategies as st

from tapfed.errors import DlogOutOfBound, InvalidIndex, InvalidLabel, ThresholdError
from tapfed.group_math import (
    GroupParams,
    bsgs_dlog,
    eval_poly,
    gen_group,
    hash_to_scalar,
    lagrange_coeff_at_zero,
    mod_exp,
    mod_inv,
    multi_exp,
    shamir_recombine,
    shamir_share,
)

from conftest import TINY, sieve


# -- group generation --------------------------------------------------------


def eight_bit_safe_primes():
    flags = sieve(600)
    return {p for p in range(128, 256) if flags[p] and flags[2 * p + 1]}


def test_eight_bit_safe_primes_oracle():
    assert eight_bit_safe_primes() == {131, 173, 179, 191, 233, 239, 251}


def test_gen_group_8_bit_lands_in_sieve_set():
    valid = eight_bit_safe_primes()
    for seed in range(30):
        grp = gen_group(8, seed=seed)
        assert grp.order_p in valid
        assert grp.modulus_q == 2 * grp.order_p + 1


def test_gen_group_8_bit_seed_6_matches_179():
    grp = gen_group(8, seed=6)
    assert (grp.order_p, grp.modulus_q) == (179, 359)
    # every residue other than 1 generates the order-179 subgroup
    residues = {x * x % 359 for x in range(1, 359)} - {1}
    assert grp.generator_g in residues
    for h in residues:
        GroupParams(359, 179, h, 8)


def test_gen_group_32_seed_7(g32):
    assert g32.order_p.bit_length() == 32
    assert g32.modulus_q == 2 * g32.order_p + 1
    assert pow(g32.generator_g, g32.order_p, g32.modulus_q) == 1
    assert g32 == gen_group(32, seed=7)


def test_gen_group_256_bits():
    grp = gen_group(256, seed=1)
    assert grp.order_p.bit_length() == 256
    assert grp.element_bytes == 33


def test_gen_group_unseeded_differs():
    assert gen_group(64) != gen_group(64)


def test_group_text_round_trip(g32):
    assert GroupParams.from_text(g32.to_text()) == g32


@pytest.mark.parametrize("bad", [
    dict(modulus_q=2039, order_p=1019, generator_g=1, lambda_bits=10),
    dict(modulus_q=2039, order_p=1019, generator_g=2038, lambda_bits=10),  # order 2
    dict(modulus_q=2041, order_p=1020, generator_g=4, lambda_bits=10),
    dict(modulus_q=2039, order_p=1019, generator_g=4, lambda_bits=11),
])
def test_group_params_rejects_bad_triples(bad):
    with pytest.raises(ValueError):
        GroupParams(**bad)


# -- exponentiation ----------------------------------------------------------


def test_mod_exp_identities(g32):
    assert mod_exp(g32.generator_g, 0, g32) == 1
    assert mod_exp(g32.generator_g, g32.order_p, g32) == 1


@given(a=st.integers(0, 2**40), b=st.integers(0, 2**40))
def test_mod_exp_additive(a, b):
    grp = gen_group(32, seed=7)
    g, q = grp.generator_g, grp.modulus_q
    lhs = mod_exp(g, a + b, grp)
    assert lhs == pow(g, a, q) * pow(g, b, q) % q


def test_mod_inv_and_multi_exp(g32):
    rng = random.Random(0)
    q, g = g32.modulus_q, g32.generator_g
    xs = [rng.randrange(g32.order_p) for _ in range(5)]
    bases = [pow(g, x, q) for x in xs]
    es = [rng.randrange(g32.order_p) for _ in range(5)]
    expected = 1
    for b, e in zip(bases, es):
        expected = expected * pow(b, e, q) % q
    assert multi_exp(bases, es, g32) == expected
    assert bases[0] * mod_inv(bases[0], g32) % q == 1


# -- label hashing -----------------------------------------------------------


def test_hash_to_scalar_golden(g32):
    # frozen after cross-checking against a direct hashlib computation below
    assert g32.order_p == 2450686541
    assert hash_to_scalar(b"round-1", g32) == 1225872220


def test_hash_to_scalar_matches_direct_shake(g32):
    for label in (b"round-1", b"x", bytes(range(40))):
        h = hashlib.shake_256()
        h.update(b"tapfed/hash-to-scalar/v1" + len(label).to_bytes(8, "big") + label)
        digest = int.from_bytes(h.digest(g32.scalar_bytes + 16), "big")
        assert hash_to_scalar(label, g32) == digest % (g32.order_p - 1) + 1


def test_hash_to_scalar_determinism_and_separation(g32):
    assert hash_to_scalar(b"round-1", g32) == hash_to_scalar(b"round-1", g32)
    assert hash_to_scalar(b"round-1", g32) != hash_to_scalar(b"round-2", g32)


def test_hash_to_scalar_range(g32):
    rng = random.Random(1)
    for _ in range(1000):
        label = rng.randbytes(rng.randrange(1, 32))
        assert 1 <= hash_to_scalar(label, g32) < g32.order_p


def test_hash_to_scalar_empty_label(g32):
    with pytest.raises(InvalidLabel):
        hash_to_scalar(b"", g32)


# -- Shamir sharing ----------------------------------------------------------


def test_shamir_constant_polynomial(g32):
    shares = shamir_share(5, 1, 3, g32, seed=0)
    assert [v for _, v in shares.shares] == [5, 5, 5]


def test_shamir_two_of_three_by_hand(g32):
    p = g32.order_p
    shares = shamir_share(5, 2, 3, g32, seed=11)
    a1 = random.Random(11).randrange(p)  # the single seeded coefficient
    assert dict(shares.shares) == {j: (5 + a1 * j) % p for j in (1, 2, 3)}
    # f(0) = 2 f(1) - f(2)
    f1, f2 = shares.subset([1, 2]).values()
    assert (2 * f1 - f2) % p == 5
    assert shamir_recombine(shares.subset([1, 2]), g32) == 5


def test_shamir_threshold_errors(g32):
    with pytest.raises(ThresholdError):
        shamir_share(1, 3, 2, g32)
    with pytest.raises(ThresholdError):
        shamir_share(1, 0, 2, g32)


def test_shamir_t_minus_one_shares_hide_secret():
    # tiny group: each candidate secret has exactly one completing polynomial
    grp = gen_group(8, seed=6)
    p = grp.order_p
    shares = shamir_share(42, 3, 4, grp, seed=2)
    seen = shares.subset([1, 3])
    for secret in range(p):
        completions = 0
        for a1 in range(p):
            a2 = (seen[1] - secret - a1) % p
            if eval_poly([secret, a1, a2], 3, p) == seen[3]:
                completions += 1
        assert completions == 1


@pytest.mark.parametrize("s", range(1, 7))
def test_shamir_round_trip_exhaustive(s, g32):
    rng = random.Random(s)
    for t in range(1, s + 1):
        secret = rng.randrange(g32.order_p)
        shares = shamir_share(secret, t, s, g32, seed=rng)
        for size in range(t, s + 1):
            for subset in combinations(range(1, s + 1), size):
                assert shamir_recombine(shares.subset(subset), g32) == secret


@given(secret=st.integers(0, 2**31), data=st.data())
def test_shamir_round_trip_property(secret, data):
    grp = gen_group(32, seed=7)
    s = data.draw(st.integers(1, 6))
    t = data.draw(st.integers(1, s))
    seed = data.draw(st.integers(0, 2**16))
    shares = shamir_share(secret, t, s, grp, seed=seed)
    subset = data.draw(st.sets(st.integers(1, s), min_size=t, max_size=s))
    assert shamir_recombine(shares.subset(subset), grp) == secret % grp.order_p


# -- Lagrange coefficients ---------------------------------------------------


def test_lagrange_examples(g32):
    p = g32.order_p
    assert lagrange_coeff_at_zero({1}, 1, g32) == 1
    assert lagrange_coeff_at_zero({1, 2}, 1, g32) == 2
    assert lagrange_coeff_at_zero({1, 2}, 2, g32) == p - 1
    got = [lagrange_coeff_at_zero({1, 2, 3}, j, g32) for j in (1, 2, 3)]
    assert got == [3, p - 3, 1]


def test_lagrange_index_outside_subset(g32):
    with pytest.raises(InvalidIndex):
        lagrange_coeff_at_zero({1, 2}, 3, g32)


@given(data=st.data())
def test_exponent_homomorphism(data):
    grp = gen_group(32, seed=7)
    p, q, g = grp.order_p, grp.modulus_q, grp.generator_g
    s = data.draw(st.integers(1, 6))
    t = data.draw(st.integers(1, s))
    coeffs = data.draw(st.lists(st.integers(0, p - 1), min_size=t, max_size=t))
    subset = data.draw(st.sets(st.integers(1, s), min_size=t, max_size=t))
    acc = 1
    for j in subset:
        lifted = pow(g, eval_poly(coeffs, j, p), q)
        acc = acc * pow(lifted, lagrange_coeff_at_zero(subset, j, grp), q) % q
    assert acc == pow(g, coeffs[0], q)


# -- bounded dlog ------------------------------------------------------------


def test_bsgs_examples(g32):
    g, q, p = g32.generator_g, g32.modulus_q, g32.order_p
    assert bsgs_dlog(1, g, 10, g32) == 0
    target = pow(pow(g, 7, q), -1, q)
    assert target == pow(g, p - 7, q)
    assert bsgs_dlog(target, g, 10, g32) == -7
    with pytest.raises(DlogOutOfBound):
        bsgs_dlog(pow(g, 11, q), g, 10, g32)
    with pytest.raises(DlogOutOfBound):
        bsgs_dlog(pow(g, p - 11, q), g, 10, g32)


def test_bsgs_exhaustive_1000(g32):
    g, q, p = g32.generator_g, g32.modulus_q, g32.order_p
    B = 1000
    for v in range(-B, B + 1):
        assert bsgs_dlog(pow(g, v % p, q), g, B, g32) == v


@given(v=st.integers(-(10**6), 10**6))
def test_bsgs_large_bound(v):
    grp = gen_group(64, seed=3)
    target = mod_exp(grp.generator_g, v, grp)
    assert bsgs_dlog(target, grp.generator_g, 10**6, grp) == v


def test_bsgs_small_table_still_correct(g32):
    g = g32.generator_g
    for v in (-5000, -1, 0, 17, 4999):
        assert bsgs_dlog(mod_exp(g, v, g32), g, 5000, g32, max_table=8) == v


def test_bsgs_bound_too_large():
    with pytest.raises(ValueError):
        bsgs_dlog(4, 4, 600, TINY)
