"""Threshold multi-client functional encryption and secure aggregation for FL."""
from .codec import EncodingConfig, FusionSpec, decode_result, encode_vector, make_fusion_spec
from .group_math import GroupParams, bsgs_dlog, gen_group, hash_to_scalar
from .tmcfe import (
    combine_decrypt,
    dk_generate,
    encrypt,
    setup,
    share_decrypt,
    sk_distribute,
)

__all__ = [
    "EncodingConfig", "FusionSpec", "GroupParams", "bsgs_dlog", "combine_decrypt",
    "decode_result", "dk_generate", "encode_vector", "encrypt", "gen_group", "hash_to_scalar",
    "make_fusion_spec", "setup", "share_decrypt", "sk_distribute",
]
__version__ = "0.1.0"
