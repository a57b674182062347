from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ..data.labels import Label
from ..rng import Seed

KINDS = ("minority", "majority", "prior")


class TrivialPrediction(NamedTuple):
    labels: np.ndarray
    scores: np.ndarray


@dataclass(frozen=True)
class TrivialBaseline:
    """Label-only classifiers.

    ``minority`` always answers genuine, ``majority`` always synthesized, and
    ``prior`` draws each label independently with P(synthesized) equal to
    the training synthesized fraction.
    """

    kind: str
    genuine_prior: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}; expected one of {KINDS}")
        if self.kind == "prior":
            if self.genuine_prior is None:
                raise ValueError("the prior baseline needs the training genuine fraction")
            if not 0.0 < self.genuine_prior < 1.0:
                raise ValueError(f"prior fraction must be in (0, 1), got {self.genuine_prior}")

    @classmethod
    def fit(cls, kind: str, train_labels, seed: int = 0) -> "TrivialBaseline":
        y = np.asarray(train_labels)
        return cls(kind, float((y == Label.GENUINE).mean()) if kind == "prior" else None, seed)

    def predict(self, n: int) -> TrivialPrediction:
        return trivial_predict(self, n)


def trivial_predict(baseline: TrivialBaseline, n: int, seed: Optional[int] = None) -> TrivialPrediction:
    """Labels for ``n`` items plus a constant 0.5 score for curve computation."""
    if baseline.kind == "minority":
        labels = np.full(n, int(Label.GENUINE), dtype=np.int64)
    elif baseline.kind == "majority":
        labels = np.full(n, int(Label.SYNTHESIZED), dtype=np.int64)
    else:
        rng = Seed(baseline.seed if seed is None else seed).stream("prior")
        p_synth = 1.0 - baseline.genuine_prior
        labels = np.where(rng.random(n) < p_synth, int(Label.SYNTHESIZED), int(Label.GENUINE)).astype(np.int64)
    return TrivialPrediction(labels, np.full(n, 0.5))
