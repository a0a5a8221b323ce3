"""Seeded random streams.

Every random draw in the package goes through :func:`rng_for`.  A stream is
identified by a 64-bit user seed plus a named purpose; the pair is mapped to
an independent PCG64 generator via ``SeedSequence(seed, spawn_key=(id,))``.
Streams with different purposes never overlap, so e.g. the Gaussian operator
built with seed 7 is unaffected by how many noise draws also used seed 7.
"""
from __future__ import annotations

import hashlib
import struct

import numpy as np

STREAMS = {
    "gaussian": 1,
    "entry-sampling": 2,
    "identity": 3,
    "scaled-identity": 4,
    "noise": 5,
    "power-iteration": 6,
    "rip-ascent": 7,
    "rip-pairs": 8,
    "solver-init": 9,
    "ground-truth": 10,
    "lemma-suite": 11,
}

MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)


def rng_for(seed: int, stream: str, *keys: int) -> np.random.Generator:
    """Generator for ``(seed, stream)``; extra integer ``keys`` split it further."""
    seq = np.random.SeedSequence(check_seed(seed), spawn_key=(STREAMS[stream], *keys))
    return np.random.Generator(np.random.PCG64(seq))


def hash64(*parts) -> int:
    """Stable 64-bit hash of a tuple of ints, floats and strings."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        if isinstance(p, bool):
            p = int(p)
        if isinstance(p, int):
            h.update(b"i" + p.to_bytes(16, "little", signed=True))
        elif isinstance(p, float):
            h.update(b"f" + struct.pack("<d", p))
        else:
            h.update(b"s" + str(p).encode("utf-8") + b"\x00")
    return int.from_bytes(h.digest(), "little")
