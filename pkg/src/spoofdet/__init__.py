"""Synthesized-speech detection from spectrograms with a compact convolutional transformer."""

__version__ = "0.1.0"
