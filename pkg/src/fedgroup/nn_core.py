"""Dense ReLU network with softmax cross-entropy, trained by plain SGD.

Parameters live in one flat float64 vector so that weight deltas,
aggregation and byte accounting never need to know the layer layout.
Layout per layer: weight matrix (fan_in x fan_out, row-major) followed by
the bias vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigurationError, ContractError, NumericDivergenceError

if TYPE_CHECKING:
    from .data import DeviceDataset

ACTIVATIONS = ("relu",)
LOSSES = ("softmax-cross-entropy",)


@dataclass(frozen=True)
class ModelSpec:
    layer_dims: tuple[int, ...]
    activation: str = "relu"
    loss: str = "softmax-cross-entropy"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ConfigurationError(f"layer_dims needs at least 2 entries, got {dims}")
        if any(d < 1 for d in dims):
            raise ConfigurationError(f"layer_dims entries must be >= 1, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def class_count(self) -> int:
        return self.layer_dims[-1]

    @property
    def param_count(self) -> int:
        return sum(i * o + o for i, o in zip(self.layer_dims[:-1], self.layer_dims[1:]))

    def layer_slices(self) -> list[tuple[slice, slice, tuple[int, int]]]:
        """(weight slice, bias slice, weight shape) for each layer."""
        out = []
        pos = 0
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            w = slice(pos, pos + fan_in * fan_out)
            pos += fan_in * fan_out
            b = slice(pos, pos + fan_out)
            pos += fan_out
            out.append((w, b, (fan_in, fan_out)))
        return out


def _check_vector(vec: np.ndarray, spec: ModelSpec, what: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != spec.param_count:
        raise ContractError(
            f"{what} must be a flat vector of length {spec.param_count}, got shape {vec.shape}"
        )
    if not np.all(np.isfinite(vec)):
        raise ContractError(f"{what} contains non-finite entries")
    return vec


@dataclass(frozen=True, eq=False)
class ModelWeights:
    params: np.ndarray
    spec: ModelSpec

    def __post_init__(self):
        params = _check_vector(self.params, self.spec, "params").copy()
        params.flags.writeable = False
        object.__setattr__(self, "params", params)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [
            (self.params[ws].reshape(shape), self.params[bs])
            for ws, bs, shape in self.spec.layer_slices()
        ]

    @property
    def nbytes(self) -> int:
        return self.spec.param_count * 8


@dataclass(frozen=True, eq=False)
class WeightDelta:
    delta: np.ndarray
    spec: ModelSpec

    def __post_init__(self):
        delta = _check_vector(self.delta, self.spec, "delta").copy()
        delta.flags.writeable = False
        object.__setattr__(self, "delta", delta)

    @property
    def nbytes(self) -> int:
        return self.spec.param_count * 8


@dataclass(frozen=True, eq=False)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        y = np.asarray(self.labels)
        if y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ContractError(f"batch of {x.shape[0]} inputs has labels of shape {y.shape}")
        if y.shape[0] < 1:
            raise ContractError("batch must hold at least one sample")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(y == np.round(y)):
                raise ContractError("labels must be integer class indices")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y.astype(np.int64))


def init_weights(spec: ModelSpec, seed: int) -> ModelWeights:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    if not isinstance(spec, ModelSpec):
        raise ConfigurationError("init_weights needs a ModelSpec")
    rng = np.random.default_rng(seed)
    params = np.zeros(spec.param_count)
    for ws, _, (fan_in, fan_out) in spec.layer_slices():
        bound = 1.0 / np.sqrt(fan_in)
        params[ws] = rng.uniform(-bound, bound, size=fan_in * fan_out)
    return ModelWeights(params, spec)


def _check_batch(w: ModelWeights, b: Batch) -> None:
    if b.inputs.shape[1] != w.spec.input_dim:
        raise ContractError(
            f"batch input dim {b.inputs.shape[1]} does not match model input dim {w.spec.input_dim}"
        )
    if b.labels.min() < 0 or b.labels.max() >= w.spec.class_count:
        raise ContractError(f"labels must lie in [0, {w.spec.class_count})")


def _unflatten(spec: ModelSpec, params: np.ndarray):
    return [(params[ws].reshape(shape), params[bs]) for ws, bs, shape in spec.layer_slices()]


def _forward(layers, x):
    """Returns the list of layer inputs (activations) and the logits."""
    acts = [x]
    h = x
    for i, (W, bias) in enumerate(layers):
        z = h @ W + bias
        if i < len(layers) - 1:
            h = np.maximum(z, 0.0)
            acts.append(h)
        else:
            h = z
    return acts, h


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _grad(spec: ModelSpec, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    layers = _unflatten(spec, params)
    acts, logits = _forward(layers, x)
    n = y.shape[0]
    probs = np.exp(_log_softmax(logits))
    probs[np.arange(n), y] -= 1.0
    dz = probs / n

    grad = np.empty(spec.param_count)
    slices = spec.layer_slices()
    for i in range(len(layers) - 1, -1, -1):
        ws, bs, _ = slices[i]
        grad[ws] = (acts[i].T @ dz).ravel()
        grad[bs] = dz.sum(axis=0)
        if i > 0:
            # ReLU derivative taken as 0 at the kink
            dz = (dz @ layers[i][0].T) * (acts[i] > 0)
    return grad


def predict(w: ModelWeights, inputs: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    _, logits = _forward(w.layers(), np.atleast_2d(np.asarray(inputs, dtype=np.float64)))
    return np.argmax(logits, axis=1)


def forward_loss(w: ModelWeights, b: Batch) -> tuple[float, float]:
    """Mean softmax cross-entropy and top-1 accuracy over the batch."""
    _check_batch(w, b)
    _, logits = _forward(w.layers(), b.inputs)
    logp = _log_softmax(logits)
    n = b.labels.shape[0]
    loss = float(-logp[np.arange(n), b.labels].mean())
    acc = float(np.mean(np.argmax(logits, axis=1) == b.labels))
    return max(loss, 0.0), acc


def gradient(w: ModelWeights, b: Batch) -> np.ndarray:
    """Backprop gradient of the mean batch loss, flat like ``w.params``."""
    _check_batch(w, b)
    return _grad(w.spec, w.params, b.inputs, b.labels)


def local_train(
    w_global: ModelWeights,
    data: DeviceDataset,
    epochs: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
    *,
    round_index: int | None = None,
) -> WeightDelta:
    """Run ``epochs`` of shuffled mini-batch SGD from ``w_global``.

    Returns the trained weights minus ``w_global``; ``w_global`` itself is
    left untouched. The final mini-batch of an epoch may be short.
    """
    n = len(data)
    if n == 0:
        raise ContractError(f"device {data.device_id} has no samples")
    if epochs < 1 or batch_size < 1:
        raise ConfigurationError("epochs and batch_size must be positive")
    if not lr >= 0:
        raise ConfigurationError(f"learning rate must be non-negative, got {lr}")

    spec = w_global.spec
    if data.x.shape[1] != spec.input_dim:
        raise ContractError(
            f"device {data.device_id} inputs have dim {data.x.shape[1]}, model expects {spec.input_dim}"
        )
    params = w_global.params.copy()
    x, y = data.x, data.y
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            params -= lr * _grad(spec, params, x[idx], y[idx])
            if not np.all(np.isfinite(params)):
                where = f"device {data.device_id}"
                if round_index is not None:
                    where = f"round {round_index}, {where}"
                raise NumericDivergenceError(
                    f"non-finite weights during local training ({where}, epoch {epoch + 1})"
                )
    return WeightDelta(params - w_global.params, spec)
