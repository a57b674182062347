from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from ..rng import Seed
from ..tensor import Tensor, conv2d, linear, maxpool2, relu
from ..tensor.core import ConfigurationError, DimensionError
from .base import TensorModel, glorot, zeros


@dataclass(frozen=True)
class CnnConfig:
    """Small convolutional baseline: conv(3x3)+ReLU+pool stages, then a two-layer MLP."""

    input_side: int = 128
    in_channels: int = 1
    conv_channels: tuple[int, ...] = (16, 32, 64)
    hidden: int = 128
    num_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if self.input_side % (2 ** len(self.conv_channels)):
            raise ConfigurationError(f"input side {self.input_side} does not survive {len(self.conv_channels)} pools")

    @property
    def flat_dim(self) -> int:
        return self.conv_channels[-1] * (self.input_side // 2 ** len(self.conv_channels)) ** 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CnnConfig":
        return cls(**d)

    @classmethod
    def preset(cls, name: str) -> "CnnConfig":
        if name == "paper":
            return cls()
        if name == "desk":
            return cls(input_side=64, conv_channels=(8, 16, 32), hidden=64)
        raise ConfigurationError(f"unknown preset {name!r}")


class CnnOutput(NamedTuple):
    logits: Tensor


class CnnModel(TensorModel):
    kind = "cnn"

    def __init__(self, config: CnnConfig = CnnConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        self.input_side = config.input_side
        rng = Seed(seed).stream("init", 0)
        c_in = config.in_channels
        for i, c in enumerate(config.conv_channels):
            self.add(f"conv{i}.weight", glorot(rng, (c, c_in, 3, 3), c_in * 9, c * 9))
            self.add(f"conv{i}.bias", zeros((c,)))
            c_in = c
        self.add("fc0.weight", glorot(rng, (config.flat_dim, config.hidden), config.flat_dim, config.hidden))
        self.add("fc0.bias", zeros((config.hidden,)))
        self.add("fc1.weight", glorot(rng, (config.hidden, config.num_classes), config.hidden, config.num_classes))
        self.add("fc1.bias", zeros((config.num_classes,)))

    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> CnnOutput:
        cfg, p = self.config, self.params
        if x.ndim == 3:
            x = x.reshape(1, *x.shape)
        if x.ndim != 4 or tuple(x.shape[1:]) != (cfg.in_channels, cfg.input_side, cfg.input_side):
            raise DimensionError(f"CNN expects (B, {cfg.in_channels}, {cfg.input_side}, {cfg.input_side}), got {x.shape}")
        h = x
        for i in range(len(cfg.conv_channels)):
            h = maxpool2(relu(conv2d(h, p[f"conv{i}.weight"], p[f"conv{i}.bias"])))
        h = h.reshape(x.shape[0], cfg.flat_dim)
        h = relu(linear(h, p["fc0.weight"], p["fc0.bias"]))
        return CnnOutput(linear(h, p["fc1.weight"], p["fc1.bias"]))

    def config_dict(self) -> dict:
        return self.config.to_dict()
