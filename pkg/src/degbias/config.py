"""Flat ``key = value`` run configuration.

Schema (every key optional; defaults below)::

    dataset          path to a dataset directory; empty means "synthetic"
    num_nodes        synthetic graph size before the component filter
    num_classes      synthetic class count
    intra_edge_prob  base edge probability within a class
    inter_edge_prob  base edge probability across classes
    degree_skew      Pareto shape of the degree weights (<= 0 disables)
    feature_noise    uniform noise amplitude added to one-hot features
    feature_dim      feature width (>= num_classes; 0 means num_classes)
    graph_seed       seed for the synthetic generator
    split_seed       seed of the fixed train/val/test split
    test_size        test nodes (default 1000)
    val_size         validation nodes (default 500)
    filters          comma list of rw, sym, att
    model            linear | general
    hops             L for the linearized model
    layers, hidden   general model depth and width
    learning_rate, epochs, optimizer    training (optimizer: adam | gd)
    seeds            comma list of model seeds; overrides num_seeds
    num_seeds        seeds 0..num_seeds-1 when ``seeds`` is empty
    resamples        Monte Carlo feature resamples
    num_bins         degree bins
    group_size       nodes in the low/high degree groups
    bound_steps      gradient-descent steps for the per-step bounds
    bound_lr         learning rate of that sweep
    keep_self_loops  true | false
    out              output directory (not part of the config hash)
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str = ""
    num_nodes: int = 2000
    num_classes: int = 4
    intra_edge_prob: float = 0.01
    inter_edge_prob: float = 0.001
    degree_skew: float = 1.5
    feature_noise: float = 1.0
    feature_dim: int = 8
    graph_seed: int = 0
    split_seed: int = 0
    test_size: int = 1000
    val_size: int = 500
    filters: list = field(default_factory=lambda: ["rw", "sym"])
    model: str = "general"
    hops: int = 2
    layers: int = 3
    hidden: int = 64
    learning_rate: float = 5e-3
    epochs: int = 500
    optimizer: str = "adam"
    seeds: list = field(default_factory=list)
    num_seeds: int = 10
    resamples: int = 200
    num_bins: int = 10
    group_size: int = 100
    bound_steps: int = 50
    bound_lr: float = 5e-3
    keep_self_loops: bool = False
    out: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.num_seeds < 1 and not self.seeds:
            raise ConfigError("num_seeds must be >= 1")
        if self.model not in ("linear", "general"):
            raise ConfigError(f"model must be linear or general, got {self.model!r}")
        for f in self.filters:
            if f not in ("rw", "sym", "att"):
                raise ConfigError(f"unknown filter {f!r}")
        if self.model == "linear" and "att" in self.filters:
            raise ConfigError("the linearized model supports rw and sym only")
        if self.optimizer not in ("adam", "gd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0 or self.epochs < 0:
            raise ConfigError("learning_rate and epochs must be >= 0")
        if self.dataset and not Path(self.dataset).exists():
            raise ConfigError(f"dataset path {self.dataset} does not exist")

    @property
    def seed_list(self) -> list:
        return list(self.seeds) if self.seeds else list(range(self.num_seeds))

    def semantic(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return d

    def hash(self) -> str:
        payload = json.dumps(self.semantic(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


_TYPES = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    f = _TYPES[key]
    sample = f.default_factory() if f.default is MISSING else f.default
    raw = raw.strip()
    try:
        if isinstance(sample, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(sample, int):
            return int(raw)
        if isinstance(sample, float):
            return float(raw)
        if isinstance(sample, list):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return [int(s) for s in items] if key == "seeds" else items
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def parse_pairs(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """File values first, then ``overrides`` (already-typed or string values)."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values = {k: _coerce(k, v) for k, v in parse_pairs(text).items()}
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in _TYPES:
            raise ConfigError(f"unknown key {k!r}")
        values[k] = _coerce(k, v) if isinstance(v, str) else v
    return RunConfig(**values)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for k, v in asdict(cfg).items():
        if isinstance(v, list):
            v = ",".join(map(str, v))
        elif isinstance(v, bool):
            v = str(v).lower()
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
