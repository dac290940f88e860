"""Full-batch training with plain gradient descent or Adam."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import Split
from .models import GeneralParams, LinearizedParams, node_losses


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    learning_rate: float = 5e-3
    epochs: int = 500
    optimizer: str = "adam"  # or "gd"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainTrace:
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    mean_abs_grad: list = field(default_factory=list)
    group_loss: dict = field(default_factory=dict)
    best_epoch: int = -1
    stop_reason: str = ""

    @property
    def epochs(self) -> int:
        return len(self.train_loss)


class GradientDescent:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for k, p in params.items():
            p -= self.lr * grads[k]


class Adam:
    """Adam with the usual defaults (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        for k, p in params.items():
            g = grads[k]
            m = self.m.setdefault(k, np.zeros_like(p))
            v = self.v.setdefault(k, np.zeros_like(p))
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1 ** self.t)
            vhat = v / (1 - self.b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(cfg: TrainConfig):
    return Adam(cfg.learning_rate) if cfg.optimizer == "adam" else GradientDescent(cfg.learning_rate)


def accuracy(Z: np.ndarray, y: np.ndarray, rows) -> float:
    if len(rows) == 0:
        return float("nan")
    return float(np.mean(Z[rows].argmax(axis=1) == y[rows]))


def train(model, y: np.ndarray, split: Split, cfg: TrainConfig, tracked_groups: dict | None = None,
          ceiling: float | None = None, num_classes: int | None = None, params=None):
    """Train ``model`` on ``split.train`` and return ``(best_params, trace)``.

    The returned snapshot has the highest validation accuracy seen (first on
    ties).  Training stops when training accuracy reaches ``ceiling`` (the
    MAJ_WL accuracy) or the epoch budget runs out; ``trace.stop_reason``
    says which.  Metrics at epoch ``t`` are measured before update ``t``.
    """
    if len(split.train) == 0:
        raise ValueError("empty training set")
    y = np.asarray(y)
    num_classes = num_classes or int(y.max()) + 1
    rng = np.random.default_rng(cfg.seed)
    params = params if params is not None else model.init_params(num_classes, rng)
    mask = split.mask("train", len(y))
    opt = make_optimizer(cfg)
    trace = TrainTrace(group_loss={name: [] for name in (tracked_groups or {})})
    best, best_val = params.copy(), -np.inf
    trace.stop_reason = "epoch budget"
    for epoch in range(cfg.epochs + 1):
        loss, grads, Z = model.loss_and_grad(params, y, mask)
        if not np.isfinite(loss):
            raise TrainingDivergence(epoch, loss)
        train_acc = accuracy(Z, y, split.train)
        val_acc = accuracy(Z, y, split.val)
        trace.train_loss.append(loss)
        trace.train_acc.append(train_acc)
        trace.val_acc.append(val_acc)
        flat = np.concatenate([g.ravel() for g in grads.values()])
        trace.mean_abs_grad.append(float(np.mean(np.abs(flat))))
        if tracked_groups:
            per_node = node_losses(Z, y)
            for name, nodes in tracked_groups.items():
                trace.group_loss[name].append(float(per_node[nodes].mean()))
        score = val_acc if len(split.val) else train_acc
        if score > best_val:
            best_val, best, trace.best_epoch = score, params.copy(), epoch
        if ceiling is not None and train_acc >= ceiling - 1e-12:
            trace.stop_reason = "reached MAJ_WL ceiling"
            break
        if epoch == cfg.epochs:
            break
        opt.step(params.named(), grads)
    return best, trace


def trace_rows(trace: TrainTrace):
    """Yield one dict per epoch, suitable for csv.DictWriter."""
    for t in range(trace.epochs):
        row = {"epoch": t, "train_loss": trace.train_loss[t], "train_acc": trace.train_acc[t],
               "val_acc": trace.val_acc[t], "mean_abs_grad": trace.mean_abs_grad[t]}
        for name, vals in trace.group_loss.items():
            row[f"loss_{name}"] = vals[t]
        yield row


# checkpoints ----------------------------------------------------------------

def config_hash(obj) -> str:
    payload = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def save_checkpoint(path, params, family: str, kind: str, seed: int, cfg_hash: str) -> Path:
    """Write ``<path>.npz`` with the named matrices and ``<path>.manifest`` beside it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    named = params.named()
    np.savez(path.with_suffix(".npz"), **named)
    lines = [f"family={family}", f"kind={kind}", f"seed={seed}", f"config_hash={cfg_hash}"]
    lines += [f"matrix {k} {'x'.join(map(str, v.shape))}" for k, v in named.items()]
    path.with_suffix(".manifest").write_text("\n".join(lines) + "\n")
    return path.with_suffix(".npz")


def load_checkpoint(path):
    """Return ``(params, manifest_dict)``."""
    path = Path(path)
    manifest = {}
    for line in path.with_suffix(".manifest").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            manifest[k] = v
    with np.load(path.with_suffix(".npz")) as data:
        arrays = {k: data[k] for k in data.files}
    if manifest["family"] == "general":
        params = GeneralParams.from_named(manifest["kind"], arrays)
    else:
        params = LinearizedParams.from_named(arrays)
    return params, manifest


def config_dict(cfg) -> dict:
    return asdict(cfg)
