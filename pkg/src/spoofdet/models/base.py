"""Parameter containers and helpers shared by the tensor-based models."""

from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from ..tensor import Tensor, conv2d, maxpool2, relu, softmax
from ..tensor.core import DimensionError

GRID = 128


def glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def zeros(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def downsample(grids: np.ndarray, side: int) -> np.ndarray:
    """Block-average (N, 128, 128) spectrograms to (N, 1, side, side)."""
    grids = np.asarray(grids, dtype=np.float64)
    if grids.ndim == 2:
        grids = grids[None]
    n, h, w = grids.shape
    if h != w or h % side:
        raise DimensionError(f"cannot reduce {h}x{w} spectrograms to {side}x{side}")
    f = h // side
    if f == 1:
        return grids[:, None].copy()
    return grids.reshape(n, side, f, side, f).mean(axis=(2, 4))[:, None]


class TensorModel:
    """Base for models whose parameters live in an ordered name -> Tensor map."""

    kind: str = ""
    input_side: int = GRID
    conv_prefix: str = "conv"

    def __init__(self) -> None:
        self.params: dict[str, Tensor] = {}

    def add(self, name: str, t: Tensor) -> Tensor:
        t.name = name
        t.requires_grad = True
        self.params[name] = t
        return t

    def parameters(self) -> Iterator[Tensor]:
        return iter(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            if k not in state:
                raise KeyError(f"missing parameter {k!r}")
            value = np.asarray(state[k], dtype=np.float64)
            if value.shape != p.shape:
                raise DimensionError(f"parameter {k!r}: shape {value.shape} != {p.shape}")
            p.data = value.copy()
        extra = set(state) - set(self.params)
        if extra:
            raise KeyError(f"unexpected parameters {sorted(extra)}")

    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None):
        raise NotImplementedError

    def prepare(self, grids: np.ndarray) -> np.ndarray:
        return downsample(grids, self.input_side)

    def logits(self, grids: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Inference over raw 128x128 spectrograms, no tape."""
        x = self.prepare(grids)
        out = [self.forward(Tensor(x[i : i + batch_size]))[0].data for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def predict_proba(self, grids: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """P(genuine) per spectrogram."""
        return softmax(Tensor(self.logits(grids, batch_size))).data[:, 1]


    def place_biases_in_gaps(self, x: np.ndarray, band: float = 0.3) -> float:
        """Move the conv stack to a point where finite differences are valid.

        ReLU has a kink at zero, so a central difference across it measures
        neither one-sided slope. For the batch ``x`` each conv bias is set so
        that zero sits in the middle of the widest gap between that channel's
        pre-activations, searched within the central ``band`` quantiles on
        both sides of the median. Returns the narrowest half-gap, i.e. how far
        a perturbation may move a pre-activation before crossing a kink.
        """
        h = np.asarray(x, dtype=np.float64)
        margin = np.inf
        i = 0
        while f"{self.conv_prefix}{i}.weight" in self.params:
            w = self.params[f"{self.conv_prefix}{i}.weight"]
            b = self.params[f"{self.conv_prefix}{i}.bias"]
            z = conv2d(Tensor(h), w, Tensor(np.zeros(b.shape))).data
            for c in range(z.shape[1]):
                v = np.sort(z[:, c].reshape(-1))
                lo, hi = int((0.5 - band / 2) * v.size), int((0.5 + band / 2) * v.size)
                gaps = np.diff(v[lo : hi + 1])
                k = int(gaps.argmax())
                b.data[c] = -(v[lo + k] + v[lo + k + 1]) / 2.0
                margin = min(margin, float(gaps[k]) / 2.0)
            h = maxpool2(relu(conv2d(Tensor(h), w, b))).data
            i += 1
        return margin
