"""Named, independent random streams derived from one master seed.

Every consumer asks for a stream by name plus integer coordinates
(round, device, ...). Streams never share state, so the order in which
they are drawn (e.g. by parallel local training) cannot change results.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(name: str, idx: tuple[int, ...]) -> tuple[int, ...]:
    return (zlib.crc32(name.encode("utf-8")), *(int(i) for i in idx))


def stream(seed: int, name: str, *idx: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_key(name, idx))
    return np.random.default_rng(ss)


def derive_seed(seed: int, name: str, *idx: int) -> int:
    """A 63-bit integer seed for APIs that take plain integer seeds."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_key(name, idx))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
