"""Audio signal to normalised 128x128 log-magnitude spectrogram."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .fft import fft_real

GRID = 128
RAW_MAGIC = b"SPGM"
RAW_VERSION = 1


class SignalTooShortError(ValueError):
    """Signal has fewer samples than one analysis frame."""


class DegenerateSignalError(ValueError):
    """Signal or spectrogram carries no usable information (silence, constant grid)."""


class SpectrogramFormatError(ValueError):
    pass


@dataclass(frozen=True)
class AudioSignal:
    """Mono PCM samples in [-1, 1].

    Samples are converted to float64 and clamped on construction; non-finite
    values are rejected.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if not np.isfinite(s).all():
            raise ValueError("audio samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        s = np.clip(s, -1.0, 1.0)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SpectrogramParams:
    frame_len: int = 512
    overlap: int = 128
    fft_size: int = 512
    db_floor: float = -80.0
    out_freq_bins: int = GRID
    out_frames: int = GRID

    def __post_init__(self):
        if not 0 <= self.overlap < self.frame_len:
            raise ValueError(f"overlap {self.overlap} must be in [0, frame_len={self.frame_len})")
        if self.fft_size != self.frame_len:
            raise ValueError("fft_size must equal frame_len")
        if (self.out_freq_bins, self.out_frames) != (GRID, GRID):
            raise ValueError(f"output grid is fixed at {GRID}x{GRID}")
        if (self.fft_size // 2) % self.out_freq_bins:
            raise ValueError(f"{self.fft_size // 2} FFT bins cannot be pooled into {self.out_freq_bins} rows")
        if self.db_floor >= 0:
            raise ValueError("db_floor must be negative")

    @property
    def hop(self) -> int:
        return self.frame_len - self.overlap


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_count(n_samples: int, params: SpectrogramParams = SpectrogramParams()) -> int:
    if n_samples < params.frame_len:
        return 0
    return (n_samples - params.frame_len) // params.hop + 1


def frame_signal(signal: AudioSignal, params: SpectrogramParams = SpectrogramParams()) -> np.ndarray:
    """Hann-windowed frames, shape (count, frame_len); frame i starts at i * hop."""
    n = len(signal)
    if n < params.frame_len:
        raise SignalTooShortError(f"need at least {params.frame_len} samples, got {n}")
    count = frame_count(n, params)
    starts = np.arange(count) * params.hop
    frames = signal.samples[starts[:, None] + np.arange(params.frame_len)]
    return frames * hann(params.frame_len)


def magnitudes_to_db(mags: np.ndarray, db_floor: float = -80.0) -> np.ndarray:
    """``20 log10(m / max)`` clamped below at ``db_floor``; zeros map to the floor."""
    mags = np.asarray(mags, dtype=np.float64)
    if (mags < 0).any():
        raise ValueError("magnitudes must be non-negative")
    peak = mags.max() if mags.size else 0.0
    if peak <= 0:
        raise DegenerateSignalError("all magnitudes are zero")
    db = np.full(mags.shape, db_floor)
    nz = mags > 0
    with np.errstate(divide="ignore"):
        db[nz] = 20.0 * np.log10(mags[nz] / peak)
    return np.maximum(db, db_floor)


def shape_to_target(db_grid: np.ndarray, db_floor: float = -80.0, params: SpectrogramParams = SpectrogramParams()) -> np.ndarray:
    """Fit a (fft_size/2 + 1, T) dB grid onto 128x128.

    The Nyquist row is dropped and adjacent bin groups are averaged down to
    128 rows. Time is centre-cropped when T > 128, otherwise padded with the
    floor value on both sides; an odd pad puts the extra column on the right.
    """
    db_grid = np.asarray(db_grid, dtype=np.float64)
    bins = params.fft_size // 2 + 1
    if db_grid.ndim != 2 or db_grid.shape[0] != bins or db_grid.shape[1] < 1:
        raise ValueError(f"expected ({bins}, T>=1) grid, got {db_grid.shape}")
    group = (bins - 1) // params.out_freq_bins
    rows = db_grid[:-1].reshape(params.out_freq_bins, group, -1).mean(axis=1)
    t = rows.shape[1]
    target = params.out_frames
    if t >= target:
        start = (t - target) // 2
        return rows[:, start : start + target].copy()
    left = (target - t) // 2
    right = target - t - left
    return np.pad(rows, ((0, 0), (left, right)), constant_values=db_floor)


def minmax_normalize(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if not np.isfinite(grid).all():
        raise ValueError("grid must be finite")
    lo, hi = grid.min(), grid.max()
    if hi == lo:
        raise DegenerateSignalError("constant spectrogram")
    out = (grid - lo) / (hi - lo)
    # exact endpoints regardless of rounding in the division
    out[grid == lo] = 0.0
    out[grid == hi] = 1.0
    return out


def magnitude_spectrogram(signal: AudioSignal, params: SpectrogramParams = SpectrogramParams()) -> np.ndarray:
    """|FFT| of each windowed frame, shape (fft_size/2 + 1, frames), frequency on rows."""
    return np.abs(fft_real(frame_signal(signal, params))).T


def featurize(signal: AudioSignal, params: SpectrogramParams = SpectrogramParams()) -> np.ndarray:
    """Full pipeline: frames -> |FFT| -> dB -> 128x128 -> [0, 1]."""
    mags = magnitude_spectrogram(signal, params)
    db = magnitudes_to_db(mags, params.db_floor)
    return minmax_normalize(shape_to_target(db, params.db_floor, params))


# -- serialisation -------------------------------------------------------------

PathLike = Union[str, Path]


def write_raw(grid: np.ndarray, path: PathLike) -> None:
    """Little-endian float32 grid, row-major, after an 8-byte magic+version header."""
    grid = np.asarray(grid)
    if grid.shape != (GRID, GRID):
        raise ValueError(f"expected a {GRID}x{GRID} grid, got {grid.shape}")
    with open(path, "wb") as f:
        f.write(RAW_MAGIC + struct.pack("<I", RAW_VERSION))
        f.write(grid.astype("<f4").tobytes(order="C"))


def read_raw(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != RAW_MAGIC:
        raise SpectrogramFormatError(f"{path}: not a spectrogram file")
    (version,) = struct.unpack("<I", data[4:8])
    if version != RAW_VERSION:
        raise SpectrogramFormatError(f"{path}: unsupported version {version}")
    body = data[8:]
    if len(body) != GRID * GRID * 4:
        raise SpectrogramFormatError(f"{path}: expected {GRID * GRID * 4} payload bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(GRID, GRID).astype(np.float64)


def write_pgm(grid: np.ndarray, path: PathLike) -> None:
    """8-bit binary graymap with low frequencies at the bottom of the image."""
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    pixels = np.round(np.clip(grid, 0.0, 1.0)[::-1] * 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
