"""
Labels bind ciphertexts to a round
==================================

A ciphertext from round 1 cannot be mixed into round 2. The decryptors refuse
the batch outright, and even with that check switched off the mixed batch
decrypts to garbage that falls outside the search range.
"""

import random

from tapfed import tmcfe
from tapfed.errors import LabelMismatch, ResultOutOfRange

rng = random.Random(1)
pp, msk = tmcfe.setup(64, [3, 3], t=2, s=2, seed=rng)
sks = [tmcfe.sk_distribute(pp, msk, i) for i in (1, 2)]

old = tmcfe.encrypt(sks[1], [9, 9, 9], b"round-1", rng)
fresh = tmcfe.encrypt(sks[0], [1, 2, 3], b"round-2", rng)
y = [1, 1, 1, 1, 1, 1]
keys = tmcfe.dk_generate(pp, msk, y, b"round-2", rng)

try:
    tmcfe.share_decrypt(pp, [fresh, old], y, keys[0])
except LabelMismatch as exc:
    print("guard:", exc)

parts = [tmcfe.share_decrypt(pp, [fresh, old], y, k, check_labels=False) for k in keys]
try:
    tmcfe.combine_decrypt(pp, parts, y, dlog_bound=10_000)
except ResultOutOfRange as exc:
    print("no guard:", exc)

# the same plaintext under two labels gives unrelated ciphertexts
a = tmcfe.encrypt(sks[0], [1, 2, 3], b"round-3", randomness=42)
b = tmcfe.encrypt(sks[0], [1, 2, 3], b"round-4", randomness=42)
print("ct0 equal across labels:", a.ct0 == b.ct0)
