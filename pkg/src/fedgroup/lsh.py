"""Gaussian (2-stable) LSH: h(v) = floor((a . v + b) / r).

A family of ``h`` such functions turns a feature vector into an integer
code of length ``h``. Nearby vectors collide with high probability, and
the collision probability decays with Euclidean distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractError, FormatError, NumericDivergenceError

_INT64_LIMIT = 2.0 ** 63


@dataclass(frozen=True, eq=False)
class LshFamily:
    """``a`` is (h, d) with N(0,1) rows; ``b`` holds offsets in [0, r]."""

    a: np.ndarray
    b: np.ndarray
    r: float
    seed: int | None = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=np.float64))
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if not self.r > 0:
            raise ConfigurationError(f"window size r must be positive, got {self.r}")
        if a.shape[0] < 1 or a.shape[0] != b.shape[0]:
            raise ConfigurationError(f"family needs matching a rows and b entries, got {a.shape} and {b.shape}")
        if np.any(b < 0) or np.any(b > self.r):
            raise ConfigurationError("every offset b must lie in [0, r]")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "r", float(self.r))

    @property
    def size(self) -> int:
        return self.a.shape[0]

    @property
    def dim(self) -> int:
        return self.a.shape[1]

    def hash_many(self, vs: np.ndarray) -> np.ndarray:
        return evaluate(self.a, self.b, self.r, vs)

    def dumps(self) -> str:
        """One line per function: ``r b a_1 ... a_d`` (repr floats, exact round trip)."""
        lines = []
        for a_j, b_j in zip(self.a, self.b):
            lines.append(" ".join(repr(float(v)) for v in (self.r, b_j, *a_j)))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> LshFamily:
        rows = []
        offset = 0
        for line in text.splitlines(keepends=True):
            stripped = line.strip()
            if stripped:
                try:
                    rows.append([float(tok) for tok in stripped.split()])
                except ValueError:
                    raise FormatError("non-numeric token in LSH family", offset) from None
                if len(rows[-1]) < 3 or len(rows[-1]) != len(rows[0]):
                    raise FormatError("LSH family line has the wrong number of fields", offset)
            offset += len(line.encode("utf-8"))
        if not rows:
            raise FormatError("empty LSH family", 0)
        arr = np.array(rows)
        if np.any(arr[:, 0] != arr[0, 0]):
            raise FormatError("functions in one family must share r", 0)
        return cls(arr[:, 2:], arr[:, 1], float(arr[0, 0]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> LshFamily:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def evaluate(a: np.ndarray, b: np.ndarray, r: float, vs: np.ndarray) -> np.ndarray:
    """floor((a . v + b) / r) for each row v of ``vs``; no range check on ``b``."""
    vs = np.atleast_2d(np.asarray(vs, dtype=np.float64))
    if vs.shape[1] != a.shape[1]:
        raise ContractError(f"vector dim {vs.shape[1]} != family dim {a.shape[1]}")
    q = np.floor((vs @ a.T + b) / r)
    if not np.all(np.abs(q) < _INT64_LIMIT):
        raise NumericDivergenceError("hash value does not fit in a signed 64-bit integer")
    return q.astype(np.int64)


def sample_family(h: int, d: int, r: float, seed: int) -> LshFamily:
    if h < 1 or d < 1:
        raise ConfigurationError(f"LSH family needs h >= 1 and d >= 1, got h={h}, d={d}")
    if not r > 0:
        raise ConfigurationError(f"window size r must be positive, got {r}")
    rng = np.random.default_rng([int(seed), 4])
    a = rng.standard_normal((h, d))
    b = rng.uniform(0.0, r, size=h)
    return LshFamily(a, b, r, seed)


def hash(fam: LshFamily, v: np.ndarray) -> np.ndarray:  # noqa: A001 - mirrors the operation name
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ContractError("hash takes a single feature vector")
    return fam.hash_many(v[None, :])[0]


def min_family_size(r: float, k: int) -> int:
    """Smallest h with r**h >= k, i.e. ceil(log_r k), for r > 1.

    Computed by integer search so exact powers (r=2, k=8) do not round up.
    Returns 1 when r <= 1, where the logarithmic bound says nothing.
    """
    if k <= 1 or r <= 1:
        return 1
    h = max(1, math.ceil(math.log(k, r)) - 1)
    while r ** h < k:
        h += 1
    while h > 1 and r ** (h - 1) >= k:
        h -= 1
    return h


def collision_rate(d: int, r: float, distance: float, trials: int, seed: int) -> float:
    """Monte-Carlo estimate of Pr[h(x) == h(y)] for ||x - y|| = distance.

    Each trial draws a fresh single-function family, a point x ~ N(0, I)
    and y = x + distance * u for a uniformly random unit vector u.
    """
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    if distance == 0:
        return 1.0
    rng = np.random.default_rng([int(seed), 5])
    a = rng.standard_normal((trials, d))
    b = rng.uniform(0.0, r, size=trials)
    x = rng.standard_normal((trials, d))
    u = rng.standard_normal((trials, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    y = x + distance * u
    hx = np.floor((np.einsum("ij,ij->i", a, x) + b) / r)
    hy = np.floor((np.einsum("ij,ij->i", a, y) + b) / r)
    return float(np.mean(hx == hy))

