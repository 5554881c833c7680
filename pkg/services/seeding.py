"""Stable seed derivation so results never depend on execution order or worker count."""
import hashlib
from typing import Union

import numpy as np

SeedKey = Union[int, str]


def _key_to_int(key: SeedKey) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"seed keys must be non-negative, got {key}")
        return int(key)
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(root_seed: int, *keys: SeedKey) -> int:
    """64-bit seed for the task identified by ``keys`` under ``root_seed``."""
    seq = np.random.SeedSequence(int(root_seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    lo, hi = seq.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def make_rng(seed: int) -> np.random.Generator:
    # Philox: counter-based, so streams for distinct keys never overlap
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
