"""Keyed random streams.

Every stochastic component draws from a generator keyed by the run seed plus
the identity of the object being drawn for (motion group, video, tone pair).
Results are therefore independent of iteration order and of how work is split
across workers: the same (seed, key) always yields the same stream.

The derivation is fully documented so any rerun reproduces it: the key parts
are joined with an ASCII unit separator, hashed with BLAKE2b (16-byte digest),
and the digest seeds a NumPy PCG64 generator through SeedSequence.
"""
from __future__ import annotations

import hashlib

import numpy as np

_SEP = "\x1f"


def keyed_generator(*key_parts: object) -> np.random.Generator:
    """Return a PCG64 generator deterministically derived from the key parts."""
    token = _SEP.join(str(part) for part in key_parts).encode("utf-8")
    digest = hashlib.blake2b(token, digest_size=16).digest()
    entropy = int.from_bytes(digest, "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(*key_parts: object) -> int:
    """Collapse key parts into a 64-bit seed (for per-model simulator runs)."""
    token = _SEP.join(str(part) for part in key_parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(token, digest_size=8).digest(), "little")
