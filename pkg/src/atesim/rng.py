"""Counter-based splittable random streams.

Every random draw in the engine flows from a Philox counter-based generator
whose 128-bit key is derived by hashing a (seed, *path) tuple. Two calls with
the same key yield the same stream regardless of scheduling, which is what
makes replicate-level results independent of worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "derive_seed"]


def _digest(seed: int, path: tuple) -> bytes:
    text = str(int(seed)) + "".join(f"|{p}" for p in path)
    return hashlib.sha256(text.encode("utf-8")).digest()


def substream(seed: int, *path) -> np.random.Generator:
    """Return a Generator keyed by (seed, *path).

    Path elements may be ints or short strings; they are folded into a
    SHA-256 digest whose low 128 bits key a Philox4x64 stream.
    """
    key = int.from_bytes(_digest(seed, path)[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, *path) -> int:
    """Derive a 64-bit child seed from (seed, *path), for APIs that take ints."""
    return int.from_bytes(_digest(seed, path)[16:24], "little")
