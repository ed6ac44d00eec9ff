"""Deterministic random streams.

A scenario owns one 64-bit master seed.  Every consumer asks for a *named*
stream; the name is hashed (CRC-32) into the ``spawn_key`` of a
:class:`numpy.random.SeedSequence` which keys a counter-based Philox
generator.  Streams are therefore independent of the order in which they are
requested, and adding a new consumer never shifts the draws of existing ones.
Sub-streams such as ``"camera/frame/17"`` are simply longer names.
"""
from __future__ import annotations

import numbers
import zlib

import numpy as np

SEED_MAX = 2**64 - 1


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str) -> np.random.Generator:
    """Generator for stream ``name`` under master ``seed``."""
    if not isinstance(seed, numbers.Integral) or not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    parts = tuple(stream_key(p) for p in name.split("/"))
    seq = np.random.SeedSequence(int(seed), spawn_key=parts)
    return np.random.Generator(np.random.Philox(seq))


def as_generator(rng) -> np.random.Generator:
    """Accept ``None``, an integer seed or a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, numbers.Integral):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")
