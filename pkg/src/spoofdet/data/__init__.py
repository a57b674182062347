from .labels import Label
from .manifest import (
    SPLITS,
    ClassDistribution,
    DatasetManifest,
    ManifestEntry,
    ManifestParseError,
    ManifestValidationError,
    StratificationError,
    allocate,
    class_distribution,
    load_index,
    load_manifest,
    split,
    stratified_split,
    write_manifest,
)
from .synthetic import DEFAULT_GENUINE_FRACTION, SyntheticRecipe, generate_one, generate_synthetic, labels_for
from .wav import UnsupportedFormatError, quantize, read_wav, write_wav

__all__ = [
    "DEFAULT_GENUINE_FRACTION",
    "SPLITS",
    "ClassDistribution",
    "DatasetManifest",
    "Label",
    "ManifestEntry",
    "ManifestParseError",
    "ManifestValidationError",
    "StratificationError",
    "SyntheticRecipe",
    "UnsupportedFormatError",
    "allocate",
    "class_distribution",
    "generate_one",
    "generate_synthetic",
    "labels_for",
    "load_index",
    "load_manifest",
    "quantize",
    "read_wav",
    "split",
    "stratified_split",
    "write_manifest",
    "write_wav",
]
