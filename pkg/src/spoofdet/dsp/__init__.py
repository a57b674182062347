from .fft import SizeError, fft, fft_real, naive_dft
from .spectrogram import (
    AudioSignal,
    DegenerateSignalError,
    SignalTooShortError,
    SpectrogramFormatError,
    SpectrogramParams,
    featurize,
    frame_count,
    frame_signal,
    hann,
    magnitude_spectrogram,
    magnitudes_to_db,
    minmax_normalize,
    read_raw,
    shape_to_target,
    write_pgm,
    write_raw,
)

__all__ = [
    "AudioSignal",
    "DegenerateSignalError",
    "SignalTooShortError",
    "SizeError",
    "SpectrogramFormatError",
    "SpectrogramParams",
    "featurize",
    "fft",
    "fft_real",
    "frame_count",
    "frame_signal",
    "hann",
    "magnitude_spectrogram",
    "magnitudes_to_db",
    "minmax_normalize",
    "naive_dft",
    "read_raw",
    "shape_to_target",
    "write_pgm",
    "write_raw",
]
