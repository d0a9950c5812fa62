"""The federated training loop: grouping, client selection, aggregation.

One experiment = optional preprocessing (device grouping, run once) and
then R rounds of select -> dispatch -> local training -> weighted
aggregation -> evaluation on the held-out test set.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple

import numpy as np

from . import rng as rngs
from .clustering import DeviceGroups, kmeans
from .config import ExperimentConfig
from .data import Dataset, DeviceDataset, gen_synthetic, load_idx, partition
from .errors import ConfigurationError, ContractError, FedGroupError
from .features import FeatureExtractor, device_avg_feature
from .lsh import min_family_size, sample_family
from .nn_core import (Batch, ModelSpec, ModelWeights, WeightDelta, forward_loss,
                      init_weights, local_train)

log = logging.getLogger(__name__)

GROUPED = ("fldg", "fldg-l")


@dataclass(frozen=True)
class LshConfig:
    h: int
    r: float
    seed: int


class DeviceUpdate(NamedTuple):
    device_id: int
    delta: WeightDelta
    n_samples: int


@dataclass(frozen=True)
class RoundRecord:
    round: int
    selected: tuple[int, ...]
    test_accuracy: float
    test_loss: float
    uplink_bytes: int
    downlink_bytes: int
    # feature/hash upload before round 1 (fldg, fldg-l) or the full-weight
    # upload of a k-center recluster round; not part of the CSV
    grouping_bytes: int = 0


# --- preprocessing ----------------------------------------------------------

def device_features(devices: list[DeviceDataset], ex: FeatureExtractor) -> np.ndarray:
    return np.stack([device_avg_feature(ex, d) for d in devices])


def preprocess(devices: list[DeviceDataset], ex: FeatureExtractor, k: int, mode: str = "plain",
               lsh_cfg: LshConfig | None = None, seed: int = 0, max_iters: int = 100,
               n_init: int = 10, enforce_bound: bool = True) -> DeviceGroups:
    """Group devices by their averaged features (``plain``) or LSH codes (``lsh``).

    ``enforce_bound=False`` allows families smaller than ceil(log_r K),
    which is only useful when studying how purity degrades with h.
    """
    if k > len(devices):
        raise ConfigurationError(f"cannot form {k} groups from {len(devices)} devices")
    if mode not in ("plain", "lsh"):
        raise ConfigurationError(f"unknown preprocessing mode {mode!r}")
    feats = device_features(devices, ex)
    if mode == "lsh":
        if lsh_cfg is None:
            raise ConfigurationError("mode=lsh needs an LSH configuration")
        need = min_family_size(lsh_cfg.r, k)
        if enforce_bound and lsh_cfg.h < need:
            raise ConfigurationError(
                f"h={lsh_cfg.h} is below the family-size bound ceil(log_r K) = {need} "
                f"for K={k}, r={lsh_cfg.r}"
            )
        fam = sample_family(lsh_cfg.h, feats.shape[1], lsh_cfg.r, lsh_cfg.seed)
        feats = fam.hash_many(feats)
    return kmeans(feats, k, seed, max_iters, n_init)


# --- selection --------------------------------------------------------------

@dataclass
class SelectionState:
    """What each strategy needs to pick devices.

    ``latest_weights`` (N x P) is only used by k-center: the most recent
    full model each device has reported, w_0 for devices never selected.
    """

    n_devices: int
    k: int
    groups: DeviceGroups | None = None
    latest_weights: np.ndarray | None = None
    recluster_period: int = 10
    kmeans_iters: int = 100
    kmeans_restarts: int = 10
    seed: int = 0


def is_recluster_round(t: int, period: int) -> bool:
    return (t - 1) % period == 0


def select(strategy: str, t: int, state: SelectionState, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices of the devices taking part in round ``t`` (1-based)."""
    if strategy == "fedavg-random":
        if state.k > state.n_devices:
            raise ConfigurationError("K exceeds the device count")
        return np.sort(rng.choice(state.n_devices, size=state.k, replace=False))
    if strategy == "k-center":
        if state.latest_weights is None:
            raise ContractError("k-center needs the devices' latest weights")
        if state.groups is None or is_recluster_round(t, state.recluster_period):
            state.groups = kmeans(state.latest_weights, state.k,
                                  rngs.derive_seed(state.seed, "kcenter", t),
                                  state.kmeans_iters, state.kmeans_restarts)
    elif strategy not in GROUPED:
        raise ConfigurationError(f"unknown strategy {strategy!r}")
    if state.groups is None:
        raise ContractError(f"{strategy} needs device groups")
    picks = [int(rng.choice(members)) for members in state.groups.groups()]
    return np.sort(np.array(picks))


# --- aggregation ------------------------------------------------------------

def aggregate(w_t: ModelWeights, updates: Iterable[DeviceUpdate]) -> ModelWeights:
    """w_t + sum(D_i * delta_i) / sum(D_i), summed in device-index order."""
    ups = sorted(updates, key=lambda u: u.device_id)
    if not ups:
        raise ContractError("aggregate needs at least one update")
    for u in ups:
        if u.delta.spec != w_t.spec:
            raise ContractError(f"delta from device {u.device_id} does not match the model shape")
        if u.n_samples < 1:
            raise ContractError(f"device {u.device_id} reports {u.n_samples} samples")
    acc = np.zeros_like(w_t.params)
    if all(u.n_samples == ups[0].n_samples for u in ups):
        for u in ups:
            acc += u.delta.delta
        return ModelWeights(w_t.params + acc / len(ups), w_t.spec)
    total = 0
    for u in ups:
        acc += u.n_samples * u.delta.delta
        total += u.n_samples
    return ModelWeights(w_t.params + acc / total, w_t.spec)


# --- experiment -------------------------------------------------------------

@dataclass
class Setup:
    cfg: ExperimentConfig
    devices: list[DeviceDataset]
    test: Dataset
    spec: ModelSpec
    extractor: FeatureExtractor
    w0: ModelWeights = field(repr=False)


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.dataset == "idx":
        train = load_idx(cfg.train_images, cfg.train_labels, cfg.classes)
        test = load_idx(cfg.test_images, cfg.test_labels, cfg.classes)
        return train, test
    data_seed = rngs.derive_seed(cfg.seed, "data")
    kw = dict(sigma=cfg.sigma, separation=cfg.separation, spread=cfg.spread)
    train = gen_synthetic(cfg.classes, cfg.input_dim, cfg.per_class, data_seed, split=0, **kw)
    test = gen_synthetic(cfg.classes, cfg.input_dim, cfg.test_per_class, data_seed, split=1, **kw)
    return train, test


def setup(cfg: ExperimentConfig) -> Setup:
    train, test = load_datasets(cfg)
    devices = partition(train, cfg.N, cfg.per_device, cfg.case,
                        rngs.derive_seed(cfg.seed, "partition"), replace=cfg.replace)
    spec = ModelSpec((train.input_dim, *cfg.hidden, train.class_count))
    ex = FeatureExtractor(cfg.extractor, train.input_dim,
                          cfg.feature_dim if cfg.extractor == "random-projection" else None,
                          rngs.derive_seed(cfg.seed, "extractor"))
    w0 = init_weights(spec, rngs.derive_seed(cfg.seed, "init"))
    return Setup(cfg, devices, test, spec, ex, w0)


def group_devices(s: Setup) -> DeviceGroups:
    cfg = s.cfg
    mode = "lsh" if cfg.strategy == "fldg-l" else "plain"
    lsh_cfg = LshConfig(cfg.h, cfg.r, rngs.derive_seed(cfg.seed, "lsh"))
    return preprocess(s.devices, s.extractor, cfg.K, mode, lsh_cfg,
                      rngs.derive_seed(cfg.seed, "kmeans"), cfg.kmeans_iters, cfg.kmeans_restarts)


def thread_count() -> int:
    raw = os.environ.get("FEDGROUP_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"FEDGROUP_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def run_experiment(cfg: ExperimentConfig, on_round: Callable[[RoundRecord], None] | None = None,
                   threads: int | None = None) -> list[RoundRecord]:
    """Run one experiment; fully determined by ``cfg`` (thread count included)."""
    cfg.validate()
    s = setup(cfg)
    return run_rounds(s, on_round, threads)


def run_rounds(s: Setup, on_round=None, threads: int | None = None) -> list[RoundRecord]:
    cfg = s.cfg
    threads = thread_count() if threads is None else max(1, threads)
    n = len(s.devices)
    state = SelectionState(n, cfg.K, recluster_period=cfg.recluster_period,
                           kmeans_iters=cfg.kmeans_iters, kmeans_restarts=cfg.kmeans_restarts,
                           seed=rngs.derive_seed(cfg.seed, "select-state"))
    pre_bytes = 0
    if cfg.strategy in GROUPED:
        state.groups = group_devices(s)
        frozen = state.groups.assignment.copy()
        width = cfg.h if cfg.strategy == "fldg-l" else s.extractor.output_dim
        pre_bytes = n * width * 8
    elif cfg.strategy == "k-center":
        state.latest_weights = np.tile(s.w0.params, (n, 1))

    test_batch = Batch(s.test.x, s.test.y)
    w = s.w0
    records: list[RoundRecord] = []

    def train_one(t: int, w_t: ModelWeights, dev: int) -> DeviceUpdate:
        data = s.devices[dev]
        delta = local_train(w_t, data, cfg.E, cfg.lr, cfg.batch_size,
                            rngs.stream(cfg.seed, "shuffle", t, dev), round_index=t)
        return DeviceUpdate(dev, delta, len(data))

    with ThreadPoolExecutor(max_workers=threads) as pool:
        for t in range(1, cfg.R + 1):
            grouping_bytes = pre_bytes if t == 1 else 0
            if cfg.strategy == "k-center" and is_recluster_round(t, cfg.recluster_period):
                grouping_bytes = n * s.spec.param_count * 8
            selected = select(cfg.strategy, t, state, rngs.stream(cfg.seed, "select", t))
            if len(selected) != cfg.K:
                raise FedGroupError(f"round {t}: selected {len(selected)} devices, expected {cfg.K}")
            updates = list(pool.map(lambda d, w_t=w: train_one(t, w_t, int(d)), selected))
            if state.latest_weights is not None:
                for u in updates:
                    state.latest_weights[u.device_id] = w.params + u.delta.delta
            w = aggregate(w, updates)
            loss, acc = forward_loss(w, test_batch)
            rec = RoundRecord(
                round=t,
                selected=tuple(int(d) for d in selected),
                test_accuracy=acc,
                test_loss=loss,
                uplink_bytes=sum(u.delta.nbytes for u in updates),
                downlink_bytes=len(selected) * s.w0.nbytes,
                grouping_bytes=grouping_bytes,
            )
            records.append(rec)
            log.debug("round %d acc=%.4f loss=%.4f", t, acc, loss)
            if on_round is not None:
                on_round(rec)
            if cfg.strategy in GROUPED:
                assert np.array_equal(state.groups.assignment, frozen), "device groups changed"
    return records
