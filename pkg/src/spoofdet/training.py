"""Mini-batch Adam training with validation ROC AUC early stopping."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from . import metrics
from .data.labels import Label
from .models.base import TensorModel
from .rng import Seed
from .tensor import Tape, Tensor, cross_entropy

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    class_weighting: bool = False
    seed: int = 0
    eval_batch_size: int = 64

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("lr must be >= 0 and batch_size, max_epochs, patience positive")
        if self.patience > self.max_epochs:
            raise ValueError(f"patience {self.patience} exceeds max_epochs {self.max_epochs}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("Adam betas must be in [0, 1) and eps positive")

    @classmethod
    def from_dict(cls, d: dict, path: str = "") -> "TrainConfig":
        """Strict construction: unknown keys are an error naming the key path."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            where = f"{path}." if path else ""
            raise KeyError(f"unknown config key {where}{unknown[0]}")
        return cls(**d)

    @classmethod
    def preset(cls, name: str) -> "TrainConfig":
        """``paper``: the plain defaults. ``desk``: a short class-weighted run for one CPU core."""
        if name == "paper":
            return cls()
        if name == "desk":
            return cls(max_epochs=15, patience=5, class_weighting=True)
        raise ValueError(f"unknown preset {name!r}")


class Adam:
    def __init__(self, params: list[Tensor], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(p.shape) for p in params]
        self.v = [np.zeros(p.shape) for p in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    validation: dict
    param_norm: float
    wall_time: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def append(self, record: EpochRecord) -> None:
        expected = len(self.records) + 1
        if record.epoch != expected:
            raise ValueError(f"epoch {record.epoch} recorded out of order, expected {expected}")
        self.records.append(record)

    def deterministic_view(self) -> list[dict]:
        """Records without wall-clock fields, for reproducibility checks."""
        return [{k: v for k, v in r.to_dict().items() if k != "wall_time"} for r in self.records]

    def write_jsonl(self, path: Union[str, Path]) -> None:
        with open(path, "w") as f:
            for r in self.records:
                f.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")

    @property
    def best(self) -> Optional[EpochRecord]:
        return self.records[self.best_epoch - 1] if self.best_epoch else None


def class_weights(y: np.ndarray) -> list[float]:
    counts = np.bincount(np.asarray(y, dtype=np.int64), minlength=2).astype(np.float64)
    return (counts.sum() / (2.0 * counts)).tolist()


def predict(model: TensorModel, x: np.ndarray, batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """(labels, P(genuine)) for prepared inputs; ties go to genuine."""
    from .tensor import softmax

    logits = np.concatenate(
        [model.forward(Tensor(x[i : i + batch_size]))[0].data for i in range(0, len(x), batch_size)]
    )
    p = softmax(Tensor(logits)).data[:, int(Label.GENUINE)]
    return (p >= 0.5).astype(np.int64), p


def param_norm(model: TensorModel) -> float:
    return float(np.sqrt(sum(float((p.data * p.data).sum()) for p in model.parameters())))


def train(
    model: TensorModel,
    train_grids: np.ndarray,
    train_labels: np.ndarray,
    val_grids: np.ndarray,
    val_labels: np.ndarray,
    config: TrainConfig = TrainConfig(),
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> tuple[TensorModel, RunLog]:
    """Fit ``model`` and restore the parameters of its best validation epoch.

    Batches are drawn from a permutation that depends only on (seed, epoch).
    Training stops after ``patience`` epochs without a validation ROC AUC
    improvement.

    Raises:
        TrainingDivergedError: a batch loss became non-finite.
    """
    y = np.asarray(train_labels, dtype=np.int64)
    yv = np.asarray(val_labels, dtype=np.int64)
    if len(set(y.tolist())) < 2:
        raise ValueError("training set must contain both classes")
    x = model.prepare(train_grids)
    xv = model.prepare(val_grids)
    weights = class_weights(y) if config.class_weighting else None
    params = list(model.parameters())
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.eps)
    seed = Seed(config.seed)
    dropout = getattr(getattr(model, "config", None), "dropout", 0.0) > 0
    log = RunLog()
    best_auc, best_state, wait = -np.inf, model.state(), 0
    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        order = seed.stream("shuffle", epoch).permutation(len(y))
        drop_rng = seed.stream("dropout", epoch) if dropout else None
        total, count = 0.0, 0
        for lo in range(0, len(y), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            with Tape() as tape:
                logits = model.forward(Tensor(x[idx]), rng=drop_rng)[0]
                loss = cross_entropy(logits, y[idx], weights)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss {value} in epoch {epoch}, batch starting at {lo}")
            tape.backward(loss)
            opt.step()
            model.zero_grad()
            total += value * len(idx)
            count += len(idx)
        labels, scores = predict(model, xv, config.eval_batch_size)
        report = metrics.evaluate(yv, labels, scores)
        record = EpochRecord(epoch, total / count, report.to_dict(), param_norm(model), time.perf_counter() - start)
        log.append(record)
        logger.info("epoch %d loss %.4f val auc %.4f", epoch, record.train_loss, report.roc_auc)
        if on_epoch:
            on_epoch(record)
        if report.roc_auc > best_auc:
            best_auc, best_state, wait = report.roc_auc, model.state(), 0
            log.best_epoch = epoch
        else:
            wait += 1
            if wait >= config.patience:
                log.stopped_early = True
                break
    model.load_state(best_state)
    return model, log
