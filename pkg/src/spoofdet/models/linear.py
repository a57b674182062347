"""Logistic regression and linear SVM on flattened spectrograms, trained by SGD."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..rng import Seed


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearHyperparams:
    lr: float = 0.01
    epochs: int = 20
    batch_size: int = 32
    l2: float = 1e-4
    class_weighting: bool = False
    seed: int = 0


@dataclass
class LinearModel:
    """``score = w . x + b``, larger meaning more likely genuine."""

    weights: np.ndarray
    bias: float
    kind: str
    hyperparams: LinearHyperparams = field(default_factory=LinearHyperparams)

    def __post_init__(self):
        if self.kind not in ("logistic", "svm"):
            raise ValueError(f"unknown linear model kind {self.kind!r}")

    def decision(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x.reshape(x.shape[0], -1) @ self.weights + self.bias

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """P(genuine). The SVM margin is squashed through the same sigmoid."""
        return sigmoid(self.decision(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.decision(x) >= 0).astype(np.int64)


def flatten_spectrogram(grid: np.ndarray) -> np.ndarray:
    """Row-major concatenation: ``grid[r, c]`` lands at ``r * width + c``."""
    return np.ascontiguousarray(grid, dtype=np.float64).reshape(-1)


def unflatten_spectrogram(vector: np.ndarray, side: int = 128) -> np.ndarray:
    return np.asarray(vector, dtype=np.float64).reshape(side, side)


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _sample_weights(y: np.ndarray, balanced: bool) -> np.ndarray:
    if not balanced:
        return np.ones(y.size)
    counts = np.bincount(y, minlength=2).astype(np.float64)
    return (y.size / (2.0 * counts))[y]


def objective(kind: str, w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, l2: float, sw=None) -> float:
    """Mean (weighted) loss plus ``l2 * |w|^2``. Labels are 0/1."""
    sw = np.ones(y.size) if sw is None else sw
    z = x @ w + b
    if kind == "logistic":
        per = np.logaddexp(0.0, z) - y * z
    else:
        per = np.maximum(0.0, 1.0 - (2 * y - 1) * z)
    return float((sw * per).sum() / sw.sum() + l2 * (w @ w))


def gradient(kind: str, w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, l2: float, sw=None):
    """Analytic gradient of :func:`objective` with respect to (w, b)."""
    sw = np.ones(y.size) if sw is None else sw
    z = x @ w + b
    if kind == "logistic":
        dz = sigmoid(z) - y
    else:
        s = 2 * y - 1
        dz = np.where(s * z < 1.0, -s, 0.0).astype(np.float64)
    dz = dz * sw / sw.sum()
    return x.T @ dz + 2 * l2 * w, float(dz.sum())


def train_linear(
    x: np.ndarray,
    y: np.ndarray,
    kind: str = "logistic",
    hp: LinearHyperparams = LinearHyperparams(),
    on_epoch: Optional[Callable[[int, "LinearModel", float], None]] = None,
) -> LinearModel:
    """Mini-batch SGD on log loss (``logistic``) or L2-regularised hinge loss (``svm``).

    Deterministic under ``hp.seed``; the shuffle of epoch e draws from the
    ("shuffle", e) stream of that seed. ``on_epoch(epoch, model, loss)``
    sees a snapshot after every epoch, with the full training objective.
    """
    if kind not in ("logistic", "svm"):
        raise ValueError(f"unknown linear model kind {kind!r}")
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    y = np.asarray(y, dtype=np.int64)
    if len(set(y.tolist())) < 2:
        raise TrainingError("training data must contain both classes")
    sw_all = _sample_weights(y, hp.class_weighting)
    w = np.zeros(x.shape[1])
    b = 0.0
    seed = Seed(hp.seed)
    for epoch in range(hp.epochs):
        order = seed.stream("shuffle", epoch).permutation(y.size)
        for lo in range(0, y.size, hp.batch_size):
            idx = order[lo : lo + hp.batch_size]
            gw, gb = gradient(kind, w, b, x[idx], y[idx], hp.l2, sw_all[idx])
            w -= hp.lr * gw
            b -= hp.lr * gb
        if not (np.isfinite(w).all() and np.isfinite(b)):
            raise TrainingError(f"{kind} training diverged in epoch {epoch + 1}")
        if on_epoch is not None:
            loss = objective(kind, w, b, x, y, hp.l2, sw_all)
            on_epoch(epoch + 1, LinearModel(w.copy(), float(b), kind, hp), loss)
    return LinearModel(w, float(b), kind, hp)
