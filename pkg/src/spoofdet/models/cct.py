"""Compact Convolutional Transformer over spectrograms.

A conv+ReLU+maxpool tokenizer turns each final feature map into one token
(the row-concatenated map), a learnable positional embedding is added, two
pre-norm transformer encoder layers follow, and sequence pooling replaces the
class token: a learned scalar score per token, softmax over tokens, and the
weighted token sum feeds the classification head.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ..rng import Seed
from ..tensor import (
    AttentionParams,
    Tensor,
    conv2d,
    gelu,
    layer_norm,
    linear,
    matmul,
    maxpool2,
    multi_head_attention,
    relu,
    softmax,
)
from ..tensor.core import ConfigurationError, DimensionError, mul
from .base import TensorModel, glorot, ones, zeros


@dataclass(frozen=True)
class CctConfig:
    input_side: int = 128
    in_channels: int = 1
    conv_channels: tuple[int, ...] = (64, 128)
    layers: int = 2
    heads: int = 4
    ff_dim: int = 2048
    head_hidden: tuple[int, ...] = ()
    num_classes: int = 2
    dropout: float = 0.0
    ln_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "head_hidden", tuple(int(c) for c in self.head_hidden))
        if not self.conv_channels:
            raise ConfigurationError("at least one convolution stage is required")
        if self.input_side % (2 ** len(self.conv_channels)):
            raise ConfigurationError(
                f"input side {self.input_side} does not survive {len(self.conv_channels)} 2x pools"
            )
        if self.token_dim % self.heads:
            raise ConfigurationError(f"token dim {self.token_dim} is not divisible by {self.heads} heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must be in [0, 1)")

    @property
    def map_side(self) -> int:
        return self.input_side // 2 ** len(self.conv_channels)

    @property
    def token_count(self) -> int:
        return self.conv_channels[-1]

    @property
    def token_dim(self) -> int:
        return self.map_side**2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        d["head_hidden"] = list(self.head_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CctConfig":
        return cls(**d)

    @classmethod
    def paper(cls) -> "CctConfig":
        """128x128 input, 64/128 maps -> 128 tokens of 1024 dims."""
        return cls()

    @classmethod
    def desk(cls) -> "CctConfig":
        """64x64 input, 16/32 maps -> 32 tokens of 256 dims; trains on one CPU core."""
        return cls(input_side=64, conv_channels=(16, 32), heads=4, ff_dim=512)

    @classmethod
    def preset(cls, name: str) -> "CctConfig":
        try:
            return {"paper": cls.paper, "desk": cls.desk}[name]()
        except KeyError:
            raise ConfigurationError(f"unknown preset {name!r}; expected 'paper' or 'desk'") from None


class CctOutput(NamedTuple):
    logits: Tensor
    pool_weights: Tensor
    attention: list


class CctModel(TensorModel):
    conv_prefix = "tok.conv"
    kind = "cct"

    def __init__(self, config: CctConfig = CctConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        self.input_side = config.input_side
        rng = Seed(seed).stream("init", 0)
        c_in = config.in_channels
        for i, c in enumerate(config.conv_channels):
            self.add(f"tok.conv{i}.weight", glorot(rng, (c, c_in, 3, 3), c_in * 9, c * 9))
            self.add(f"tok.conv{i}.bias", zeros((c,)))
            c_in = c
        T, d, f = config.token_count, config.token_dim, config.ff_dim
        self.add("pos_embedding", Tensor(rng.normal(0.0, 0.02, size=(T, d))))
        for l in range(config.layers):
            p = f"enc{l}."
            self.add(p + "ln1.gain", ones((d,)))
            self.add(p + "ln1.shift", zeros((d,)))
            for proj in ("wq", "wk", "wv", "wo"):
                self.add(p + f"attn.{proj}", glorot(rng, (d, d), d, d))
                if proj != "wk":
                    self.add(p + f"attn.b{proj[1]}", zeros((d,)))
            self.add(p + "ln2.gain", ones((d,)))
            self.add(p + "ln2.shift", zeros((d,)))
            self.add(p + "ff1.weight", glorot(rng, (d, f), d, f))
            self.add(p + "ff1.bias", zeros((f,)))
            self.add(p + "ff2.weight", glorot(rng, (f, d), f, d))
            self.add(p + "ff2.bias", zeros((d,)))
        self.add("norm.gain", ones((d,)))
        self.add("norm.shift", zeros((d,)))
        # no bias: a constant added to every token score cancels in the softmax
        self.add("pool.weight", glorot(rng, (d, 1), d, 1))
        width = d
        for i, h in enumerate(config.head_hidden + (config.num_classes,)):
            self.add(f"head{i}.weight", glorot(rng, (width, h), width, h))
            self.add(f"head{i}.bias", zeros((h,)))
            width = h

    def _attn(self, l: int) -> AttentionParams:
        p = self.params
        q = f"enc{l}.attn."
        return AttentionParams(p[q + "wq"], p[q + "bq"], p[q + "wk"], p[q + "wv"], p[q + "bv"], p[q + "wo"], p[q + "bo"])

    def _dropout(self, x: Tensor, rng: Optional[np.random.Generator]) -> Tensor:
        rate = self.config.dropout
        if rng is None or rate == 0.0:
            return x
        keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
        return mul(x, Tensor(keep))

    def tokenize(self, x: Tensor) -> Tensor:
        """(B, C, S, S) or (C, S, S) -> (B, T, d) or (T, d) tokens."""
        cfg = self.config
        expected = (cfg.in_channels, cfg.input_side, cfg.input_side)
        if tuple(x.shape[-3:]) != expected or x.ndim not in (3, 4):
            raise DimensionError(f"CCT expects input (B, {expected}) , got {x.shape}")
        p = self.params
        h = x
        for i in range(len(cfg.conv_channels)):
            h = maxpool2(relu(conv2d(h, p[f"tok.conv{i}.weight"], p[f"tok.conv{i}.bias"])))
        return h.reshape(*h.shape[:-2], cfg.token_dim)

    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> CctOutput:
        """Logits (B, num_classes) for a (B, C, S, S) batch.

        ``rng`` switches dropout on (training); without it the pass is
        deterministic.
        """
        cfg, p = self.config, self.params
        if x.ndim == 3:
            x = x.reshape(1, *x.shape)
        B = x.shape[0]
        h = self.tokenize(x) + p["pos_embedding"]
        h = self._dropout(h, rng)
        attention = []
        for l in range(cfg.layers):
            q = f"enc{l}."
            a, weights = multi_head_attention(layer_norm(h, p[q + "ln1.gain"], p[q + "ln1.shift"], cfg.ln_eps), self._attn(l), cfg.heads)
            attention.append(weights)
            h = h + self._dropout(a, rng)
            z = layer_norm(h, p[q + "ln2.gain"], p[q + "ln2.shift"], cfg.ln_eps)
            z = linear(gelu(linear(z, p[q + "ff1.weight"], p[q + "ff1.bias"])), p[q + "ff2.weight"], p[q + "ff2.bias"])
            h = h + self._dropout(z, rng)
        h = layer_norm(h, p["norm.gain"], p["norm.shift"], cfg.ln_eps)
        scores = matmul(h, p["pool.weight"]).reshape(B, cfg.token_count)
        weights = softmax(scores)
        pooled = matmul(weights.reshape(B, 1, cfg.token_count), h).reshape(B, cfg.token_dim)
        out = pooled
        n_head = len(cfg.head_hidden) + 1
        for i in range(n_head):
            out = linear(out, p[f"head{i}.weight"], p[f"head{i}.bias"])
            if i < n_head - 1:
                out = relu(out)
        return CctOutput(out, weights, attention)

    def config_dict(self) -> dict:
        return self.config.to_dict()
