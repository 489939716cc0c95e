import hashlib

import numpy as np


def derive_seed(master, *path):
    """Stable 63-bit seed from a master seed and a path of keys.

    Unlike ``hash()`` this does not depend on PYTHONHASHSEED, so the value
    can be recomputed from a manifest in any process.
    """
    key = "/".join(str(p) for p in (int(master), *path)).encode("ascii")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big") & ((1 << 63) - 1)


def make_rng(seed):
    return np.random.default_rng(int(seed))
