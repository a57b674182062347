"""Labelled audio manifests, spectrogram cache indexes and stratified splits."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..rng import Seed
from .labels import Label

PathLike = Union[str, Path]
SPLITS = ("train", "validation", "test")


class ManifestParseError(ValueError):
    pass


class ManifestValidationError(ValueError):
    pass


class StratificationError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: Label
    cache_path: Optional[str] = None


@dataclass(frozen=True)
class DatasetManifest:
    """Immutable list of labelled entries.

    ``root`` is the directory relative paths are resolved against; it is
    the manifest file's directory when loaded from disk.
    """

    entries: tuple[ManifestEntry, ...]
    split: Optional[str] = None
    root: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen: set[str] = set()
        for e in self.entries:
            if e.path in seen:
                raise ManifestValidationError(f"duplicate path {e.path!r}")
            seen.add(e.path)
        if self.split is not None and self.split not in SPLITS:
            raise ManifestValidationError(f"unknown split {self.split!r}")
        if self.split == "train" and self.entries and len({e.label for e in self.entries}) < 2:
            raise ManifestValidationError("training manifest needs at least one entry per class")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(e.label) for e in self.entries], dtype=np.int64)

    def resolve(self, entry: ManifestEntry, cache: bool = False) -> Path:
        p = Path(entry.cache_path if cache else entry.path)
        return p if p.is_absolute() else self.root / p


def _read_rows(path: PathLike, header: Sequence[str]) -> list[tuple[int, dict]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        fields = [h.strip() for h in (reader.fieldnames or [])]
        if fields[: len(header)] != list(header):
            raise ManifestParseError(f"{path}: expected header {','.join(header)}, got {','.join(fields)}")
        return [(reader.line_num, row) for row in reader]


def _parse(path: PathLike, header: Sequence[str], split: Optional[str]) -> DatasetManifest:
    entries = []
    for line, row in _read_rows(path, header):
        try:
            label = Label.parse(row["label"] or "")
        except ValueError as e:
            raise ManifestParseError(f"{path}:{line}: {e}") from None
        cache = row.get("cache_path") if "cache_path" in header else None
        entries.append(ManifestEntry(row["path"].strip(), label, cache.strip() if cache else None))
    return DatasetManifest(tuple(entries), split=split, root=Path(path).resolve().parent)


def load_manifest(path: PathLike, split: Optional[str] = None) -> DatasetManifest:
    """Parse a ``path,label`` CSV. Labels are case-insensitive."""
    return _parse(path, ("path", "label"), split)


def load_index(path: PathLike, split: Optional[str] = None) -> DatasetManifest:
    """Parse a ``path,label,cache_path`` featurisation index."""
    return _parse(path, ("path", "label", "cache_path"), split)


def write_manifest(manifest: DatasetManifest, path: PathLike) -> None:
    with_cache = any(e.cache_path is not None for e in manifest)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["path", "label", "cache_path"] if with_cache else ["path", "label"])
        for e in manifest:
            row = [e.path, str(e.label)]
            if with_cache:
                row.append(e.cache_path or "")
            w.writerow(row)


# -- class balance -------------------------------------------------------------

@dataclass(frozen=True)
class ClassDistribution:
    counts: dict[Label, int]
    fractions: dict[Label, float]
    single_class: bool

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def class_distribution(labels: Union[DatasetManifest, Sequence[int], np.ndarray]) -> ClassDistribution:
    """Exact per-class counts and fractions.

    A single-class input is allowed but flagged (and warned about).
    """
    y = labels.labels if isinstance(labels, DatasetManifest) else np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise ManifestValidationError("empty manifest")
    counts = {lab: int((y == lab).sum()) for lab in Label}
    total = int(y.size)
    fractions = {lab: c / total for lab, c in counts.items()}
    single = sum(c > 0 for c in counts.values()) == 1
    if single:
        warnings.warn("manifest contains a single class", stacklevel=2)
    return ClassDistribution(counts, fractions, single)


# -- splitting -----------------------------------------------------------------

def allocate(n: int, fractions: Sequence[float]) -> list[int]:
    """Integer counts summing to ``n``, each within 1 of ``n * fraction``.

    Floors first, then hands the remainder to the largest fractional parts
    (earlier splits win ties).
    """
    exact = [n * f for f in fractions]
    counts = [int(np.floor(x)) for x in exact]
    rest = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts


def stratified_split(
    labels: Sequence[int],
    fractions: Sequence[float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> list[np.ndarray]:
    """Index arrays for each split, stratified by label and shuffled under ``seed``."""
    fractions = [float(f) for f in fractions]
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {fractions}")
    y = np.asarray(labels, dtype=np.int64)
    parts: list[list[int]] = [[] for _ in fractions]
    active = sum(f > 0 for f in fractions)
    for lab in sorted(set(y.tolist())):
        idx = np.flatnonzero(y == lab)
        if idx.size < active:
            raise StratificationError(f"class {Label(lab)} has {idx.size} examples for {active} splits")
        idx = idx[Seed(seed).stream("split", lab).permutation(idx.size)]
        start = 0
        for part, count in zip(parts, allocate(idx.size, fractions)):
            part.extend(idx[start : start + count].tolist())
            start += count
    return [np.array(sorted(p), dtype=np.int64) for p in parts]


def split(
    manifest: DatasetManifest,
    fractions: Sequence[float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> tuple[DatasetManifest, ...]:
    """Stratified train/validation/test manifests."""
    if len(fractions) != len(SPLITS):
        raise ValueError("expected train, validation and test fractions")
    parts = stratified_split(manifest.labels, fractions, seed)
    return tuple(
        DatasetManifest(tuple(manifest.entries[i] for i in idx), split=name, root=manifest.root)
        for name, idx in zip(SPLITS, parts)
    )
