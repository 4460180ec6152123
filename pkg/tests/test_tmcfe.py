import random
from itertools import combinations

import pytest

from tapfed import tmcfe
from tapfed.errors import (
    ArityError,
    IncompleteInput,
    InsufficientShares,
    InvalidIndex,
    KeyMismatch,
    LabelMismatch,
    ResultOutOfRange,
    TamperDetected,
    ThresholdError,
)
from tapfed.group_math import hash_to_scalar, shamir_recombine


def dot(xs, y):
    flat = [v for x in xs for v in x]
    return sum(a * b for a, b in zip(flat, y))


def full_pipeline(pp, msk, xs, y, label, seed=0):
    rng = random.Random(seed)
    cts = [tmcfe.encrypt(tmcfe.sk_distribute(pp, msk, i + 1), x, label, rng)
           for i, x in enumerate(xs)]
    shares = tmcfe.dk_generate(pp, msk, y, label, rng)
    return cts, shares, [tmcfe.share_decrypt(pp, cts, y, sh) for sh in shares]


@pytest.fixture
def small(g32):
    pp, msk = tmcfe.setup(32, [2, 2], 2, 3, seed=5, group=g32)
    return pp, msk


def test_two_of_three_example(small):
    pp, msk = small
    xs = [(1, 2), (3, 4)]
    y = (1, 1, 1, 1)
    _, _, parts = full_pipeline(pp, msk, xs, y, b"round-1")
    for subset in combinations(range(3), 2):
        assert tmcfe.combine_decrypt(pp, [parts[j] for j in subset], y, 100) == 10


def test_setup_masked_bases_recomputable(g32):
    pp, msk = tmcfe.setup(32, [3, 3], 2, 3, n=2, seed=1, group=g32)
    q, p, g = g32.modulus_q, g32.order_p, g32.generator_g
    A = sum(msk.alpha) % p
    assert A == msk.alpha_sum
    for i in range(2):
        for k in range(3):
            assert msk.masked_bases[i][k] == pow(g, A * msk.W[i][k] % p, q)
    assert list(msk.g_alpha) == [pow(g, a, q) for a in msk.alpha]


def test_setup_argument_errors(g32):
    with pytest.raises(ThresholdError):
        tmcfe.setup(32, [2], 3, 2, group=g32)
    with pytest.raises(ArityError):
        tmcfe.setup(32, [2, 2], 1, 1, n=3, group=g32)


def test_master_key_repr_is_redacted(small):
    _, msk = small
    assert str(msk.W[0][0]) not in repr(msk)


def test_sk_distribute_index_checked(small):
    pp, msk = small
    with pytest.raises(InvalidIndex):
        tmcfe.sk_distribute(pp, msk, 0)
    sk = tmcfe.sk_distribute(pp, msk, 2)
    assert sk.U == msk.U[1] and sk.masked_bases == msk.masked_bases[1]


def test_dk_shares_interpolate_to_constant_terms(small):
    pp, msk = small
    p = pp.group.order_p
    y = (3, 1, 4, 1)
    label = b"round-7"
    shares = tmcfe.dk_generate(pp, msk, y, label, seed=9)
    h = hash_to_scalar(label, pp.group)
    blocks = pp.split(y)
    expect0 = h * sum(a * b for bl, u in zip(blocks, msk.U) for a, b in zip(bl, u)) % p
    got0 = shamir_recombine({sh.share_index: sh.v0 for sh in shares[:2]}, pp.group)
    assert got0 == expect0
    for i in range(2):
        expect = sum(a * b for a, b in zip(blocks[i], msk.W[i])) % p
        got = shamir_recombine({sh.share_index: sh.v1[i] for sh in shares[1:]}, pp.group)
        assert got == expect


def test_dk_different_seeds_same_constants(small):
    pp, msk = small
    y = (1, 2, 3, 4)
    a = tmcfe.dk_generate(pp, msk, y, b"l", seed=1)
    b = tmcfe.dk_generate(pp, msk, y, b"l", seed=2)
    assert [s.v0 for s in a] != [s.v0 for s in b]
    rec = lambda sh: shamir_recombine({s.share_index: s.v0 for s in sh}, pp.group)
    assert rec(a) == rec(b)


def test_ciphertext_exponent_single_client(g32):
    pp, msk = tmcfe.setup(32, [1], 1, 1, seed=4, group=g32)
    q, p, g = g32.modulus_q, g32.order_p, g32.generator_g
    label = b"lab"
    r = 123456
    ct = tmcfe.encrypt(tmcfe.sk_distribute(pp, msk, 1), [5], label, randomness=r)
    h = hash_to_scalar(label, g32)
    expected = (5 + h * msk.U[0][0] + msk.alpha_sum * msk.W[0][0] * r) % p
    assert ct.ct0[0] == pow(g, expected, q)
    shares = tmcfe.dk_generate(pp, msk, [1], label, seed=0)
    part = tmcfe.share_decrypt(pp, [ct], [1], shares[0])
    assert part.ct0_agg == pow(g, expected, q)


def test_labels_separate_ciphertexts(small):
    pp, msk = small
    sk = tmcfe.sk_distribute(pp, msk, 1)
    a = tmcfe.encrypt(sk, (1, 2), b"round-1", randomness=7)
    b = tmcfe.encrypt(sk, (1, 2), b"round-2", randomness=7)
    assert a.ct1 == b.ct1 and a.ct0 != b.ct0


def test_encrypt_arity(small):
    pp, msk = small
    with pytest.raises(ArityError):
        tmcfe.encrypt(tmcfe.sk_distribute(pp, msk, 1), (1, 2, 3), b"l")


@pytest.mark.parametrize("seed", range(8))
def test_random_instances_all_subsets(seed, g32):
    rng = random.Random(seed)
    n = rng.randint(1, 3)
    etas = [rng.randint(1, 4) for _ in range(n)]
    s = rng.randint(1, 4)
    t = rng.randint(1, s)
    pp, msk = tmcfe.setup(32, etas, t, s, seed=rng, group=g32)
    xs = [[rng.randint(-50, 50) for _ in range(e)] for e in etas]
    y = [rng.randint(-50, 50) for _ in range(sum(etas))]
    _, _, parts = full_pipeline(pp, msk, xs, y, b"x", seed)
    expected = dot(xs, y)
    for subset in tmcfe.all_subsets(range(1, s + 1), t):
        assert tmcfe.combine_decrypt(pp, parts, y, 10**5, subset=subset) == expected


def test_label_mismatch_rejected(small):
    pp, msk = small
    y = (1, 1, 1, 1)
    sks = [tmcfe.sk_distribute(pp, msk, i) for i in (1, 2)]
    cts = [tmcfe.encrypt(sks[0], (1, 2), b"A", 1), tmcfe.encrypt(sks[1], (3, 4), b"B", 2)]
    key = tmcfe.dk_generate(pp, msk, y, b"A", seed=0)
    with pytest.raises(LabelMismatch):
        tmcfe.share_decrypt(pp, cts, y, key[0])
    # with the guard disabled the mix still fails at combine
    parts = [tmcfe.share_decrypt(pp, cts, y, k, check_labels=False) for k in key]
    with pytest.raises(ResultOutOfRange):
        tmcfe.combine_decrypt(pp, parts, y, 10**4)


def test_key_for_other_label_fails(small):
    pp, msk = small
    y = (1, 1, 1, 1)
    cts, _, _ = full_pipeline(pp, msk, [(1, 2), (3, 4)], y, b"A")
    key = tmcfe.dk_generate(pp, msk, y, b"B", seed=0)
    with pytest.raises(LabelMismatch):
        tmcfe.share_decrypt(pp, cts, y, key[0])


def test_key_mismatch_and_missing_input(small):
    pp, msk = small
    cts, shares, _ = full_pipeline(pp, msk, [(1, 2), (3, 4)], (1, 1, 1, 1), b"A")
    with pytest.raises(KeyMismatch):
        tmcfe.share_decrypt(pp, cts, (1, 1, 1, 2), shares[0])
    with pytest.raises(IncompleteInput):
        tmcfe.share_decrypt(pp, cts[:1], (1, 1, 1, 1), shares[0])


def test_zero_block_client_optional(small):
    pp, msk = small
    y = (2, 3, 0, 0)
    cts, _, _ = full_pipeline(pp, msk, [(1, 2), (3, 4)], (1, 1, 1, 1), b"A")
    shares = tmcfe.dk_generate(pp, msk, y, b"A", seed=1)
    parts = [tmcfe.share_decrypt(pp, cts[:1], y, sh) for sh in shares]
    assert tmcfe.combine_decrypt(pp, parts, y, 100) == 8


def test_insufficient_and_duplicate_partials(small):
    pp, msk = small
    y = (1, 1, 1, 1)
    _, _, parts = full_pipeline(pp, msk, [(1, 2), (3, 4)], y, b"A")
    with pytest.raises(InsufficientShares):
        tmcfe.combine_decrypt(pp, parts[:1], y, 100)
    with pytest.raises(InvalidIndex):
        tmcfe.combine_decrypt(pp, [parts[0], parts[0]], y, 100)


def test_tampered_partial_detected(small):
    pp, msk = small
    y = (1, 1, 1, 1)
    _, _, parts = full_pipeline(pp, msk, [(1, 2), (3, 4)], y, b"A")
    q = pp.group.modulus_q
    bad = tmcfe.PartialDecryption(parts[1].share_index, parts[1].ct0_agg * pp.group.generator_g % q,
                                  parts[1].ct1_shares, parts[1].ct2_share, parts[1].label)
    with pytest.raises(TamperDetected):
        tmcfe.combine_decrypt(pp, [parts[0], bad], y, 100)


def test_forged_share_gives_wrong_or_out_of_range(small):
    pp, msk = small
    y = (1, 1, 1, 1)
    _, _, parts = full_pipeline(pp, msk, [(1, 2), (3, 4)], y, b"A")
    rng = random.Random(0)
    q, g = pp.group.modulus_q, pp.group.generator_g
    hits = 0
    for _ in range(50):
        forged = tmcfe.PartialDecryption(
            2, parts[0].ct0_agg, tuple(pow(g, rng.randrange(pp.group.order_p), q) for _ in range(2)),
            pow(g, rng.randrange(pp.group.order_p), q), parts[0].label)
        try:
            hits += tmcfe.combine_decrypt(pp, [parts[0], forged], y, 1000) == 10
        except ResultOutOfRange:
            pass
    assert hits == 0


def test_batch_matches_dense_oracle(g32):
    rng = random.Random(3)
    n, L = 3, 4
    pp, msk = tmcfe.setup(32, [L] * n, 2, 3, seed=rng, group=g32)
    xs = [[rng.randint(-40, 40) for _ in range(L)] for _ in range(n)]
    weights = [3, 0, 5]
    cts = [tmcfe.encrypt(tmcfe.sk_distribute(pp, msk, i + 1), xs[i], b"b", rng)
           for i in range(n)]
    keys = tmcfe.dk_generate_batch(pp, msk, weights, b"b", seed=rng)
    parts = [tmcfe.share_decrypt_batch(pp, [cts[0], cts[2]], weights, k) for k in keys]
    got = tmcfe.combine_decrypt_batch(pp, parts, 10**4)
    for k in range(L):
        y = tmcfe.expand_weights(pp, weights, k)
        dense_keys = tmcfe.dk_generate(pp, msk, y, b"b", seed=k)
        dense = [tmcfe.share_decrypt(pp, cts, y, dk) for dk in dense_keys]
        assert got[k] == tmcfe.combine_decrypt(pp, dense, y, 10**4) == dot(xs, y)
    for subset in tmcfe.all_subsets([1, 2, 3], 2):
        assert tmcfe.combine_decrypt_batch(pp, parts, 10**4, subset=subset) == got


def test_batch_key_mismatch(g32):
    pp, msk = tmcfe.setup(32, [2, 2], 1, 1, seed=0, group=g32)
    keys = tmcfe.dk_generate_batch(pp, msk, [1, 1], b"b", seed=0)
    with pytest.raises(KeyMismatch):
        tmcfe.share_decrypt_batch(pp, [], [1, 2], keys[0])


def test_master_secrets_absent_from_issued_material(small):
    pp, msk = small
    y = (1, 0, 0, 1)
    cts, shares, parts = full_pipeline(pp, msk, [(1, 2), (3, 4)], y, b"A")
    secrets = {msk.alpha_sum, *msk.alpha, *(w for row in msk.W for w in row)}
    issued = set()
    for sh in shares:
        issued |= {sh.v0, *sh.v1}
    for i in (1, 2):
        sk = tmcfe.sk_distribute(pp, msk, i)
        issued |= {*sk.g_alpha, *sk.masked_bases}
    for obj in (*cts, *parts):
        issued |= {v for v in vars(obj).values() if isinstance(v, int)}
    assert not secrets & issued
