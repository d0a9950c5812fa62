"""Per-sample feature extractors and per-device averaged features.

Both extractors are linear maps, so averaging features equals featurizing
the average input; ``device_avg_feature`` still goes sample by sample in
spirit (it averages extracted rows) to keep the slot open for nonlinear
extractors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DeviceDataset
from .errors import ConfigurationError, ContractError

EXTRACTORS = ("identity-mean", "random-projection")


@dataclass(frozen=True, eq=False)
class FeatureExtractor:
    kind: str
    input_dim: int
    output_dim: int | None = None
    seed: int = 0
    projection: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in EXTRACTORS:
            raise ConfigurationError(f"unknown extractor {self.kind!r} (choose from {', '.join(EXTRACTORS)})")
        if self.input_dim < 1:
            raise ConfigurationError("extractor input_dim must be positive")
        if self.kind == "identity-mean":
            if self.output_dim not in (None, self.input_dim):
                raise ConfigurationError("identity-mean output_dim must equal input_dim")
            object.__setattr__(self, "output_dim", self.input_dim)
            return
        d = 64 if self.output_dim is None else int(self.output_dim)
        if d < 1:
            raise ConfigurationError("random-projection output_dim must be positive")
        rng = np.random.default_rng([int(self.seed), 3])
        p = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, self.input_dim))
        p.flags.writeable = False
        object.__setattr__(self, "output_dim", d)
        object.__setattr__(self, "projection", p)

    def extract_many(self, inputs: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ContractError(f"sample dim {x.shape[1]} != extractor input dim {self.input_dim}")
        if self.projection is None:
            return x.copy()
        return x @ self.projection.T


def extract(ex: FeatureExtractor, sample_input: np.ndarray) -> np.ndarray:
    x = np.asarray(sample_input, dtype=np.float64)
    if x.ndim != 1:
        raise ContractError("extract takes a single sample vector")
    return ex.extract_many(x[None, :])[0]


def device_avg_feature(ex: FeatureExtractor, data: DeviceDataset) -> np.ndarray:
    """Mean of the extracted features over all of a device's samples."""
    if len(data) == 0:
        raise ContractError(f"device {data.device_id} has no samples")
    return ex.extract_many(data.x).mean(axis=0)
