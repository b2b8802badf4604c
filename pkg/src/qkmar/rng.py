"""Named random streams derived from a single root seed.

Every pipeline stage draws from its own counter-based generator keyed by
``(seed, name)``, so adding or reordering stages never perturbs another
stage's randomness.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, name: str) -> np.random.Generator:
    """Return a Philox generator keyed by the root seed and a stage name."""
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    key = np.array([int(seed) & _MASK64, int.from_bytes(digest, "little")], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
