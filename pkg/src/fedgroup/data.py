"""Datasets, IDX loading, synthetic Gaussian classes and the non-IID partitioner."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import CapacityError, ConfigurationError, ContractError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled samples stored as an (n, input_dim) matrix and a label vector."""

    x: np.ndarray
    y: np.ndarray
    class_count: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ContractError(f"inconsistent dataset shapes x={x.shape} y={y.shape}")
        if self.class_count < 1:
            raise ContractError("class_count must be positive")
        if y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise ContractError(f"labels must lie in [0, {self.class_count})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def input_dim(self) -> int:
        return self.x.shape[1]

    @property
    def samples(self) -> list[tuple[np.ndarray, int]]:
        return [(self.x[i], int(self.y[i])) for i in range(len(self))]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.class_count)


@dataclass(frozen=True, eq=False)
class DeviceDataset:
    """One device's samples. ``indices`` point back into the source Dataset."""

    device_id: int
    x: np.ndarray
    y: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        if self.y.shape[0] == 0:
            raise ContractError(f"device {self.device_id} has no samples")

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def samples(self) -> list[tuple[np.ndarray, int]]:
        return [(self.x[i], int(self.y[i])) for i in range(len(self))]

    def majority_label(self) -> int:
        return int(np.argmax(np.bincount(self.y)))


class NonIidCase(str, Enum):
    CASE1 = "case1"  # 100% one label
    CASE2 = "case2"  # 50/50 two labels
    CASE3 = "case3"  # 80% one label, rest spread over the others
    CASE4 = "case4"  # 50% one label, rest spread over the others
    IID = "iid"

    @classmethod
    def parse(cls, value: str | NonIidCase) -> NonIidCase:
        if isinstance(value, NonIidCase):
            return value
        v = str(value).strip().lower()
        if v.isdigit():
            v = f"case{v}"
        try:
            return cls(v)
        except ValueError:
            choices = ", ".join(c.value for c in cls)
            raise ConfigurationError(f"unknown non-IID case {value!r} (choose from {choices})") from None


_DOMINANT_SHARE = {NonIidCase.CASE3: 0.8, NonIidCase.CASE4: 0.5}


# --- IDX --------------------------------------------------------------------

def _read_idx(path: str | Path, magic: int, ndim: int) -> tuple[tuple[int, ...], bytes]:
    raw = Path(path).read_bytes()
    header_len = 4 + 4 * ndim
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated magic number", len(raw))
    got = int.from_bytes(raw[:4], "big")
    if got != magic:
        raise FormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}", 0)
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated header", len(raw))
    dims = tuple(int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim))
    need = header_len + math.prod(dims)
    if len(raw) < need:
        raise FormatError(f"{path}: truncated payload, expected {need} bytes, found {len(raw)}", len(raw))
    if len(raw) > need:
        raise FormatError(f"{path}: {len(raw) - need} trailing bytes after payload", need)
    return dims, raw[header_len:]


def load_idx(images_path: str | Path, labels_path: str | Path, class_count: int = 10) -> Dataset:
    """Read an IDX image/label file pair (MNIST, Fashion-MNIST layout).

    Pixels are scaled to [0, 1] and each image is flattened row-major.
    """
    (n_img, rows, cols), pixels = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    (n_lab,), labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if n_img != n_lab:
        # the count field sits right after the magic number
        raise FormatError(f"image count {n_img} != label count {n_lab}", 4)
    x = np.frombuffer(pixels, dtype=np.uint8).reshape(n_img, rows * cols) / 255.0
    y = np.frombuffer(labels, dtype=np.uint8).astype(np.int64)
    if y.size and y.max() >= class_count:
        bad = int(np.argmax(y >= class_count))
        raise FormatError(f"label {y[bad]} outside [0, {class_count})", 8 + bad)
    return Dataset(x, y, class_count)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path: str | Path, labels_path: str | Path) -> None:
    """Write uint8 images (n, rows, cols) and labels (n,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(np.array([IDX_IMAGES_MAGIC, n, rows, cols], dtype=">u4").tobytes())
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(np.array([IDX_LABELS_MAGIC, labels.shape[0]], dtype=">u4").tobytes())
        f.write(labels.tobytes())


# --- synthetic --------------------------------------------------------------

def class_means(class_count: int, input_dim: int, seed: int, sigma: float = 1.0,
                separation: float = 4.0, spread: float = 1.5) -> np.ndarray:
    """Seeded class centers with every pairwise distance >= separation * sigma.

    Centers are drawn from N(0, s^2 I) with s chosen so the typical pairwise
    distance is ``spread`` times the minimum; draws that violate the bound
    are redrawn (with s growing 1% per redraw) from the same stream.
    """
    rng = np.random.default_rng([int(seed), 0])
    min_dist = separation * sigma
    scale = spread * min_dist / math.sqrt(2 * input_dim)
    for _ in range(10_000):
        mu = rng.normal(0.0, scale, size=(class_count, input_dim))
        if class_count == 1:
            return mu
        diff = mu[:, None, :] - mu[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        if dist[np.triu_indices(class_count, 1)].min() >= min_dist:
            return mu
        scale *= 1.01
    raise ConfigurationError("could not place class means; increase input_dim")


def gen_synthetic(class_count: int, input_dim: int, per_class: int, seed: int, *,
                  sigma: float = 1.0, separation: float = 4.0, spread: float = 1.5,
                  split: int = 0) -> Dataset:
    """Gaussian class clusters N(mu_c, sigma^2 I), ``per_class`` samples each.

    Means depend only on ``seed``; ``split`` selects an independent sample
    stream so a train set and a test set can share the same class means.
    """
    if min(class_count, input_dim, per_class) < 1:
        raise ConfigurationError("class_count, input_dim and per_class must be positive")
    mu = class_means(class_count, input_dim, seed, sigma, separation, spread)
    rng = np.random.default_rng([int(seed), 1, int(split)])
    y = np.repeat(np.arange(class_count), per_class)
    x = mu[y] + sigma * rng.standard_normal((y.shape[0], input_dim))
    return Dataset(x, y, class_count)


def dump_csv(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["label", *(f"pixel{i}" for i in range(ds.input_dim))])
        for xi, yi in zip(ds.x, ds.y):
            w.writerow([int(yi), *(repr(float(v)) for v in xi)])


# --- partitioning -----------------------------------------------------------

def device_composition(case: NonIidCase, device: int, per_device: int, class_count: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Per-label sample counts for one device under ``case``."""
    c = class_count
    counts = np.zeros(c, dtype=np.int64)
    dominant = device % c
    if case is NonIidCase.CASE1:
        counts[dominant] = per_device
    elif case is NonIidCase.CASE2:
        if per_device % 2:
            raise ContractError(f"case2 needs an even per_device, got {per_device}")
        if c < 2:
            raise ConfigurationError("case2 needs at least two classes")
        counts[dominant] += per_device // 2
        counts[(device + 1) % c] += per_device // 2
    elif case in _DOMINANT_SHARE:
        # the 1e-9 guards against ceil(0.8 * 5) == 5.000000001 style artefacts
        major = min(per_device, math.ceil(_DOMINANT_SHARE[case] * per_device - 1e-9))
        counts[dominant] = major
        rest = per_device - major
        if rest:
            if c < 2:
                raise ConfigurationError(f"{case.value} needs at least two classes")
            others = np.array([k for k in range(c) if k != dominant])
            counts += np.bincount(others[rng.integers(0, c - 1, size=rest)], minlength=c)
    else:
        counts += np.bincount(rng.integers(0, c, size=per_device), minlength=c)
    return counts


def partition(ds: Dataset, n_devices: int, per_device: int, case: NonIidCase | str, seed: int,
              *, replace: bool = False) -> list[DeviceDataset]:
    """Split ``ds`` across ``n_devices`` devices following a non-IID case.

    Device ``i`` has dominant label ``i mod C`` (case2 adds ``(i+1) mod C``).
    Samples are never repeated inside a device. With ``replace=False`` no
    sample is shared between devices either; ``replace=True`` lets each
    device draw from the full class pool, which is needed when a class is
    smaller than the demand placed on it (e.g. MNIST digit 5 under case1).
    """
    case = NonIidCase.parse(case)
    if n_devices < 1 or per_device < 1:
        raise ConfigurationError("n_devices and per_device must be positive")
    rng = np.random.default_rng([int(seed), 2])
    c = ds.class_count
    comps = [device_composition(case, i, per_device, c, rng) for i in range(n_devices)]

    available = ds.class_counts()
    demand = np.max(comps, axis=0) if replace else np.sum(comps, axis=0)
    short = demand - available
    if np.any(short > 0):
        label = int(np.argmax(short > 0))
        raise CapacityError(label, int(short[label]))

    pools = [rng.permutation(np.flatnonzero(ds.y == k)) for k in range(c)]
    cursor = np.zeros(c, dtype=np.int64)
    devices = []
    for i, comp in enumerate(comps):
        picks = []
        for k in np.flatnonzero(comp):
            if replace:
                picks.append(rng.choice(pools[k], size=comp[k], replace=False))
            else:
                picks.append(pools[k][cursor[k]:cursor[k] + comp[k]])
                cursor[k] += comp[k]
        idx = np.concatenate(picks)
        idx = idx[rng.permutation(idx.shape[0])]
        devices.append(DeviceDataset(i, ds.x[idx], ds.y[idx], idx))
    return devices
