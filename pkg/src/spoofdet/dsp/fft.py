"""Iterative radix-2 decimation-in-time FFT, vectorised over leading axes."""

from __future__ import annotations

import numpy as np


class SizeError(ValueError):
    """Transform length is not a power of two."""


def _check_length(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise SizeError(f"FFT length must be a power of two, got {n}")
    return n.bit_length() - 1


def bit_reverse_indices(n: int) -> np.ndarray:
    bits = _check_length(n)
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x: np.ndarray) -> np.ndarray:
    """Complex DFT along the last axis, ``X[k] = sum_n x[n] exp(-2j*pi*k*n/N)``."""
    x = np.asarray(x)
    n = x.shape[-1]
    _check_length(n)
    out = x[..., bit_reverse_indices(n)].astype(np.complex128)
    lead = out.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(*lead, n // size, size)
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * tw
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        size *= 2
    return out


def fft_real(frame: np.ndarray) -> np.ndarray:
    """Non-negative-frequency bins ``0..N/2`` of the transform of a real frame."""
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.shape[-1]
    return fft(frame)[..., : n // 2 + 1]


def naive_dft(x: np.ndarray) -> np.ndarray:
    """O(N^2) reference transform, used as a test oracle."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * (np.outer(k, k) % n) / n)
    return x @ basis.T
