"""
Threshold inner-product decryption
==================================

Two clients encrypt short integer vectors under a round label. Three
decryptors each hold one share of the functional key, and any two of them
are enough to recover the weighted sum, never the individual vectors.
"""

import random
from itertools import combinations

from tapfed import tmcfe

rng = random.Random(0)

# a 64-bit group keeps the demo instant; production runs use 256 bits
pp, msk = tmcfe.setup(64, vector_lengths=[2, 2], t=2, s=3, seed=rng)
print(pp.group)

# each client only ever sees its own secret key
sk1 = tmcfe.sk_distribute(pp, msk, 1)
sk2 = tmcfe.sk_distribute(pp, msk, 2)
label = b"round-1"
ct1 = tmcfe.encrypt(sk1, [1, 2], label, rng)
ct2 = tmcfe.encrypt(sk2, [3, 4], label, rng)

# the functional key for y = (1, 1, 1, 1) is split into three shares
y = [1, 1, 1, 1]
shares = tmcfe.dk_generate(pp, msk, y, label, rng)
partials = [tmcfe.share_decrypt(pp, [ct1, ct2], y, sh) for sh in shares]

for pair in combinations(partials, 2):
    value = tmcfe.combine_decrypt(pp, pair, y, dlog_bound=100)
    print("shares", [p.share_index for p in pair], "->", value)

# one share alone is not enough
try:
    tmcfe.combine_decrypt(pp, partials[:1], y, dlog_bound=100)
except Exception as exc:
    print(type(exc).__name__, exc)
