"""Experiment configuration: a flat ``key=value`` text format.

Blank lines and ``#`` comments are ignored. Unknown keys are rejected.
Defaults follow the usual FLDG setup: 100 devices, 10 groups, lr 0.01,
5 local epochs, batch 50, LSH window 3.0 with 5 hash functions.
"""

from __future__ import annotations

import dataclasses
import shlex
from dataclasses import dataclass, field
from pathlib import Path

from .data import NonIidCase
from .errors import ConfigurationError
from .features import EXTRACTORS
from .lsh import min_family_size

STRATEGIES = ("fedavg-random", "fldg", "fldg-l", "k-center")
_STRATEGY_ALIASES = {"fedavg": "fedavg-random", "kcenter": "k-center", "fldgl": "fldg-l"}
DATASETS = ("synthetic", "idx")


def parse_strategy(value: str) -> str:
    v = value.strip().lower()
    v = _STRATEGY_ALIASES.get(v, v)
    if v not in STRATEGIES:
        raise ConfigurationError(f"unknown strategy {value!r} (choose from {', '.join(STRATEGIES)})")
    return v


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_dims(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(p) for p in text.split(","))


@dataclass(frozen=True)
class ExperimentConfig:
    # data source
    dataset: str = "synthetic"
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    classes: int = 10
    input_dim: int = 20
    per_class: int = 6000
    test_per_class: int = 1000
    sigma: float = 1.0
    separation: float = 4.0
    spread: float = 1.5
    # partitioning
    case: str = "case1"
    per_device: int = 600
    replace: bool = False
    # model and training
    hidden: tuple[int, ...] = (32,)
    N: int = 100
    K: int = 10
    R: int = 100
    E: int = 5
    lr: float = 0.01
    batch_size: int = 50
    # grouping
    strategy: str = "fldg"
    extractor: str = "identity-mean"
    feature_dim: int = 64
    h: int = 5
    r: float = 3.0
    kmeans_iters: int = 100
    kmeans_restarts: int = 10
    recluster_period: int = 10
    seed: int = 0
    out: str = "results.csv"

    def __post_init__(self):
        object.__setattr__(self, "case", NonIidCase.parse(self.case).value)
        object.__setattr__(self, "strategy", parse_strategy(self.strategy))

    def validate(self) -> ExperimentConfig:
        def bad(key, why):
            raise ConfigurationError(f"{key}: {why}")

        if self.dataset not in DATASETS:
            bad("dataset", f"must be one of {', '.join(DATASETS)}")
        if self.dataset == "idx":
            for key in ("train_images", "train_labels", "test_images", "test_labels"):
                if not getattr(self, key):
                    bad(key, "required when dataset=idx")
        for key in ("classes", "input_dim", "per_class", "test_per_class", "per_device",
                    "N", "K", "E", "batch_size", "feature_dim", "kmeans_iters", "kmeans_restarts",
                    "recluster_period"):
            if getattr(self, key) < 1:
                bad(key, "must be a positive integer")
        if self.R < 0:
            bad("R", "must be >= 0")
        if any(d < 1 for d in self.hidden):
            bad("hidden", "layer widths must be positive")
        if not self.lr > 0:
            bad("lr", "must be positive")
        if not self.r > 0:
            bad("r", "must be positive")
        if not self.sigma > 0:
            bad("sigma", "must be positive")
        if self.K > self.N:
            bad("K", f"cannot exceed the device count N={self.N}")
        if self.extractor not in EXTRACTORS:
            bad("extractor", f"must be one of {', '.join(EXTRACTORS)}")
        if self.case == "case2" and self.per_device % 2:
            bad("per_device", "case2 needs an even sample count per device")
        if self.h < 1:
            bad("h", "LSH output dimension must be >= 1")
        if self.strategy == "fldg-l":
            need = min_family_size(self.r, self.K)
            if self.h < need:
                bad("h", f"{self.K} groups at window r={self.r} need at least ceil(log_r K) = {need} hash functions")
        return self

    # -- text form ---------------------------------------------------------

    def items(self) -> list[tuple[str, str]]:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                text = "true" if v else "false"
            elif isinstance(v, tuple):
                text = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            out.append((f.name, text))
        return out

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.items())

    def comment_line(self) -> str:
        """Single-line echo for the top of a CSV; see ``parse_comment_line``."""
        return "# config: " + " ".join(shlex.quote(f"{k}={v}") for k, v in self.items())


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _convert(key: str, text: str):
    default = _FIELDS[key].default
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text.strip())
    if isinstance(default, float):
        return float(text.strip())
    if isinstance(default, tuple):
        return _parse_dims(text)
    return text.strip()


def parse_pairs(lines, source: str = "<config>") -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, text)
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return values


def parse_config(path: str | Path | None = None, overrides: dict | None = None,
                 text: str | None = None) -> ExperimentConfig:
    """Build a validated config from a file (or text), then apply overrides.

    ``overrides`` maps keys to already-typed values or strings (CLI flags).
    """
    values: dict[str, object] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        values.update(parse_pairs(text.splitlines(), str(path)))
    elif text is not None:
        values.update(parse_pairs(text.splitlines()))
    for key, v in (overrides or {}).items():
        if v is None:
            continue
        if key not in _FIELDS:
            raise ConfigurationError(f"unknown key {key!r}")
        if isinstance(v, str):
            try:
                v = _convert(key, v)
            except ValueError as exc:
                raise ConfigurationError(f"bad value for {key!r}: {exc}") from None
        values[key] = v
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None
    return cfg.validate()


def parse_comment_line(line: str) -> ExperimentConfig:
    prefix = "# config:"
    if not line.startswith(prefix):
        raise ConfigurationError("not a '# config:' line")
    return parse_config(text="\n".join(shlex.split(line[len(prefix):])))
