"""Desk-scale stand-in corpus of "genuine" and "synthesized" voiced signals.

Genuine signals are harmonic tones with natural-looking irregularities.
Synthesized signals share the construction but carry vocoder-like artifacts:
no harmonics above a cutoff, alternate 512-sample blocks with flattened
magnitude spectra, and periodic phase resets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dsp.fft import fft
from ..dsp.spectrogram import AudioSignal
from ..rng import Seed
from .labels import Label

DEFAULT_GENUINE_FRACTION = 0.1032


@dataclass(frozen=True)
class SyntheticRecipe:
    n_total: int
    genuine_fraction: float = DEFAULT_GENUINE_FRACTION
    duration: float = 2.0
    sample_rate: int = 16000
    seed: int = 0
    f0_range: tuple[float, float] = (80.0, 300.0)
    harmonics: tuple[int, int] = (3, 8)
    jitter: float = 0.05
    am_rate: tuple[float, float] = (0.5, 3.0)
    am_depth: float = 0.5
    noise_db: float = -30.0
    noise_spread_db: float = 10.0
    cutoff_hz: float = 4000.0
    block: int = 512
    flatten: float = 0.15
    phase_reset_s: float = 0.1
    peak: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.genuine_fraction < 1.0:
            raise ValueError(f"genuine_fraction must be in (0, 1), got {self.genuine_fraction}")
        if self.n_total < 20:
            raise ValueError(f"n_total must be at least 20, got {self.n_total}")
        if self.duration * self.sample_rate < self.block:
            raise ValueError("duration too short for one analysis frame")
        if not 0.0 <= self.flatten <= 1.0:
            raise ValueError("flatten must be in [0, 1]")

    @property
    def n_genuine(self) -> int:
        n = int(round(self.n_total * self.genuine_fraction))
        return min(max(n, 1), self.n_total - 1)

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


def labels_for(recipe: SyntheticRecipe) -> np.ndarray:
    """Class of each corpus index; genuine items are spread evenly through the order."""
    n, g = recipe.n_total, recipe.n_genuine
    labels = np.full(n, int(Label.SYNTHESIZED), dtype=np.int64)
    labels[(np.arange(g) * n) // g] = int(Label.GENUINE)
    return labels


def _harmonic_tone(rng: np.random.Generator, recipe: SyntheticRecipe, synthesized: bool) -> np.ndarray:
    sr, n = recipe.sample_rate, recipe.n_samples
    t = np.arange(n) / sr
    f0 = rng.uniform(*recipe.f0_range)
    count = int(rng.integers(recipe.harmonics[0], recipe.harmonics[1] + 1))
    phases = rng.uniform(0, 2 * np.pi, size=count)
    if synthesized and recipe.phase_reset_s > 0:
        # time restarts at every reset boundary, so all harmonics jump back to their initial phase
        period = recipe.phase_reset_s
        offset = rng.uniform(0, period)
        t = np.mod(t + offset, period)
    out = np.zeros(n)
    for k in range(1, count + 1):
        if synthesized and k * f0 > recipe.cutoff_hz:
            continue
        out += np.sin(2 * np.pi * k * f0 * t + phases[k - 1]) / k
    return out


def _flatten_blocks(x: np.ndarray, recipe: SyntheticRecipe, start: int) -> np.ndarray:
    """Pull the magnitude spectrum of every other block toward its mean, keeping phase."""
    b = recipe.block
    y = x.copy()
    starts = np.arange(start * b, x.size - b + 1, 2 * b)
    if starts.size == 0:
        return y
    idx = starts[:, None] + np.arange(b)
    spec = fft(y[idx])
    mag = np.abs(spec)
    target = (1 - recipe.flatten) * mag + recipe.flatten * mag.mean(axis=1, keepdims=True)
    unit = np.divide(spec, mag, out=np.zeros_like(spec), where=mag > 0)
    # inverse through the forward transform: ifft(X) = conj(fft(conj(X))) / N
    y[idx] = np.real(np.conj(fft(np.conj(unit * target)))) / b
    return y


def generate_one(recipe: SyntheticRecipe, index: int, label: Label) -> AudioSignal:
    rng = Seed(recipe.seed).stream("synthetic", index)
    synthesized = label == Label.SYNTHESIZED
    x = _harmonic_tone(rng, recipe, synthesized)
    n = x.size
    x = x * (1.0 + rng.uniform(-recipe.jitter, recipe.jitter, size=n))
    t = np.arange(n) / recipe.sample_rate
    am = 1.0 + recipe.am_depth * np.sin(2 * np.pi * rng.uniform(*recipe.am_rate) * t + rng.uniform(0, 2 * np.pi))
    x = x * am
    rms = np.sqrt(np.mean(x * x))
    noise_db = recipe.noise_db + rng.uniform(-recipe.noise_spread_db, recipe.noise_spread_db)
    x = x + rng.normal(0.0, rms * 10 ** (noise_db / 20), size=n)
    block_phase = int(rng.integers(0, 2))
    if synthesized and recipe.flatten > 0:
        x = _flatten_blocks(x, recipe, block_phase)
    x = x * (recipe.peak / np.max(np.abs(x)))
    return AudioSignal(x, recipe.sample_rate)


def generate_synthetic(recipe: SyntheticRecipe) -> list[tuple[AudioSignal, Label]]:
    """The full corpus, in index order. Item i depends only on (seed, i)."""
    return [(generate_one(recipe, i, Label(int(lab))), Label(int(lab))) for i, lab in enumerate(labels_for(recipe))]
