"""16-bit PCM mono WAV reading and writing."""

from __future__ import annotations

import wave
from pathlib import Path
from typing import Union

import numpy as np

from ..dsp.spectrogram import AudioSignal


class UnsupportedFormatError(ValueError):
    pass


def read_wav(path: Union[str, Path]) -> AudioSignal:
    """Read a RIFF/WAVE PCM16 mono file; samples are scaled by 1/32768.

    Raises:
        UnsupportedFormatError: stereo, non-16-bit or non-PCM data.
        OSError: missing or truncated file.
    """
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate, n = w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()
            if channels != 1:
                raise UnsupportedFormatError(f"{path}: {channels} channels, only mono is supported")
            if width != 2:
                raise UnsupportedFormatError(f"{path}: {8 * width}-bit samples, only 16-bit PCM is supported")
            raw = w.readframes(n)
    except wave.Error as e:
        # the stdlib reader rejects float and compressed encodings here
        raise UnsupportedFormatError(f"{path}: {e}") from e
    except EOFError as e:
        raise OSError(f"{path}: truncated WAV header") from e
    if len(raw) != 2 * n:
        raise OSError(f"{path}: truncated data chunk ({len(raw)} of {2 * n} bytes)")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioSignal(samples, rate)


def quantize(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path: Union[str, Path], signal: AudioSignal) -> None:
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(signal.sample_rate)
        w.writeframes(quantize(signal.samples).tobytes())
