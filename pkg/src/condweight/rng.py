"""Hierarchical random streams.

A stream is addressed by ``(master seed, path)`` where the path is a tuple of
integers and string tags. Each address maps to an independent
``numpy.random.Generator`` (PCG64 bit generator seeded through
``SeedSequence`` with the path as spawn key), so a replicate's randomness
does not depend on how many other replicates ran before it or on which
worker ran it.

Variate algorithms used downstream are numpy's: uniforms are 53-bit doubles
from ``Generator.random``, normals come from the ziggurat sampler behind
``Generator.standard_normal``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


def _key(part: int | str) -> int:
    if isinstance(part, str):
        # tags hash into a range disjoint from small replicate indices
        return (1 << 32) + zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError("stream indices must be non-negative")
    return int(part)


@dataclass(frozen=True)
class Stream:
    seed: int
    path: tuple = ()

    def child(self, *parts: int | str) -> "Stream":
        return Stream(self.seed, self.path + tuple(parts))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_key(p) for p in self.path))
        return np.random.Generator(np.random.PCG64(ss))


def as_stream(seed_or_stream) -> Stream:
    if isinstance(seed_or_stream, Stream):
        return seed_or_stream
    return Stream(int(seed_or_stream))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, Stream):
        return rng.generator()
    return np.random.default_rng(rng)
