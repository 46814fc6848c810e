import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary printable parts (not ``hash()``, which is salted)."""
    h = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "big") >> 1


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


def unit_draw(*parts) -> float:
    """Deterministic uniform draw in [0, 1) keyed by ``parts``."""
    return derive_seed(*parts) / float(1 << 63)
