"""Finite-difference verification of every differentiable primitive and a full model."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .models.cct import CctConfig, CctModel
from .rng import Seed
from .tensor import (
    AttentionParams,
    Tensor,
    concat,
    conv2d,
    cross_entropy,
    gelu,
    grad_check,
    inject_fault,
    layer_norm,
    linear,
    matmul,
    maxpool2,
    multi_head_attention,
    relu,
    softmax,
)

TOLERANCE = 1e-4
OP_NAMES = (
    "add", "concat", "conv2d", "cross_entropy", "gelu", "layer_norm", "matmul", "maxpool2",
    "mul", "neg", "relu", "reshape", "softmax", "sum", "transpose",
)


@dataclass
class GradReport:
    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = TOLERANCE
    # coordinates left out because their perturbation crossed a relu or pool kink
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.errors.values())

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    def to_dict(self) -> dict:
        return {"errors": self.errors, "skipped": self.skipped, "tolerance": self.tolerance, "passed": self.passed}


def _weighted_sum(t: Tensor, w: np.ndarray) -> Tensor:
    # a fixed random projection keeps every output coordinate in the loss
    return (t * Tensor(w)).sum()


def _away_from_zero(rng: np.random.Generator, shape, low: float = 0.05) -> np.ndarray:
    # keeps ReLU inputs off the kink
    mag = rng.uniform(low, 1.0, size=shape)
    return mag * rng.choice([-1.0, 1.0], size=shape)


def primitive_cases(rng: np.random.Generator) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    """Scalar-valued closures over fresh random inputs, one per primitive."""
    cases = {}

    def add_case(name, build, *arrays):
        ts = [Tensor(a) for a in arrays]
        proj = rng.normal(size=build(*ts).shape)
        cases[name] = (lambda: _weighted_sum(build(*ts), proj), ts)

    add_case("add", lambda a, b: a + b, rng.normal(size=(3, 4)), rng.normal(size=(4,)))
    add_case("sub", lambda a, b: a - b, rng.normal(size=(2, 3)), rng.normal(size=(2, 3)))
    add_case("mul", lambda a, b: a * b, rng.normal(size=(3, 4)), rng.normal(size=(3, 1)))
    add_case("div", lambda a: a / 3.0, rng.normal(size=(5,)))
    add_case("matmul", matmul, rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5)))
    add_case("linear", linear, rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 6)), rng.normal(size=(6,)))
    add_case("reshape", lambda a: a.reshape(6, 2), rng.normal(size=(3, 4)))
    add_case("transpose", lambda a: a.transpose(0, 2, 1), rng.normal(size=(2, 3, 4)))
    add_case("sum", lambda a: a.sum(axis=1), rng.normal(size=(3, 4)))
    add_case("mean", lambda a: a.mean(axis=0), rng.normal(size=(3, 4)))
    add_case("concat", lambda a, b: concat([a, b], axis=1), rng.normal(size=(2, 3)), rng.normal(size=(2, 2)))
    add_case(
        "conv2d", conv2d, rng.normal(size=(2, 2, 6, 6)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=(3,))
    )
    # distinct values in every window: no argmax ties
    pool_in = rng.permutation(2 * 3 * 6 * 6).reshape(2, 3, 6, 6) / 10.0
    add_case("maxpool2", maxpool2, pool_in)
    add_case("relu", relu, _away_from_zero(rng, (4, 5)))
    add_case("gelu", gelu, rng.normal(size=(4, 5)))
    add_case("layer_norm", layer_norm, rng.normal(size=(3, 8)), rng.normal(size=(8,)), rng.normal(size=(8,)))
    add_case("softmax", softmax, rng.normal(size=(3, 5)))

    logits = Tensor(rng.normal(size=(6, 2)))
    labels = rng.integers(0, 2, size=6)
    cases["cross_entropy"] = (lambda: cross_entropy(logits, labels), [logits])
    weighted = Tensor(rng.normal(size=(6, 2)))
    cases["cross_entropy_weighted"] = (lambda: cross_entropy(weighted, labels, [0.7, 2.5]), [weighted])

    d, heads = 8, 2
    x = Tensor(rng.normal(size=(2, 5, d)))
    mats = [Tensor(rng.normal(size=(d, d)) / np.sqrt(d)) for _ in range(4)]
    vecs = [Tensor(0.1 * rng.normal(size=(d,))) for _ in range(3)]
    params = AttentionParams(mats[0], vecs[0], mats[1], mats[2], vecs[1], mats[3], vecs[2])
    proj = rng.normal(size=(2, 5, d))
    cases["multi_head_attention"] = (
        lambda: _weighted_sum(multi_head_attention(x, params, heads)[0], proj),
        [x, *mats, *vecs],
    )
    return cases


def model_case(
    config: CctConfig, seed: int, batch: int = 2
) -> tuple[CctModel, Callable[[], Tensor], float]:
    """Full CCT loss on ``batch`` random spectrograms at a kink-free point."""
    model = CctModel(config, seed=seed)
    rng = Seed(seed).stream("gradcheck", 1)
    x = rng.random((batch, config.in_channels, config.input_side, config.input_side))
    margin = model.place_biases_in_gaps(x)
    labels = np.arange(batch) % 2
    xt = Tensor(x)
    return model, (lambda: cross_entropy(model.forward(xt)[0], labels)), margin


def run_gradcheck(
    preset: str = "desk",
    seed: int = 0,
    fault: bool = False,
    coords: int = 4,
    log: Callable[[str], None] = lambda _: None,
) -> GradReport:
    """Check all primitives exhaustively and the preset model on sampled coordinates.

    The model check perturbs ``coords`` coordinates of every parameter
    tensor (always including its largest-gradient one). ``fault`` scales the
    backward pass of every op by 1.5 and must make the report fail.
    """
    report = GradReport()
    ctx = inject_fault(*OP_NAMES) if fault else contextlib.nullcontext()
    with ctx:
        for name, (fn, inputs) in primitive_cases(Seed(seed).stream("gradcheck", 0)).items():
            stats = {}
            report.errors[f"op.{name}"] = grad_check(fn, inputs, stats=stats)
            report.skipped[f"op.{name}"] = stats["skipped"]
            log(f"op.{name}: {report.errors[f'op.{name}']:.3e}")
        model, loss, margin = model_case(CctConfig.preset(preset), seed)
        log(f"model kink margin {margin:.2e}")
        pick = Seed(seed).stream("gradcheck", 2)
        for name, p in model.params.items():
            key = f"model.{name}"
            stats = {}
            report.errors[key] = grad_check(loss, [p], coords=coords, rng=pick, stats=stats)
            report.skipped[key] = stats["skipped"]
            log(f"{key}: {report.errors[key]:.3e}")
    return report
