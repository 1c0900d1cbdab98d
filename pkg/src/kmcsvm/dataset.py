"""Telemetry samples, CSV I/O and subset partitioning.

A sample is one (speed [km/h], throttle opening [0, 1]) point with a style
label: +1 for aggressive, -1 for moderate.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

AGGRESSIVE = 1
MODERATE = -1
LABELS = (AGGRESSIVE, MODERATE)
CSV_HEADER = ("speed_kmh", "throttle", "label")
DEFAULT_RATE = 50.0


class DatasetError(ValueError):
    """Invalid telemetry data or malformed data file."""


@dataclass(frozen=True)
class Sample:
    speed: float
    throttle: float
    label: int

    def __post_init__(self):
        _check_values(np.array([self.speed]), np.array([self.throttle]), np.array([self.label]))


def _check_values(speed, throttle, label, line=None):
    where = f" (line {line})" if line is not None else ""
    if not np.all(np.isfinite(speed)) or not np.all(np.isfinite(throttle)):
        raise DatasetError(f"non-finite feature value{where}")
    if np.any(speed < 0):
        raise DatasetError(f"negative speed{where}")
    if np.any((throttle < 0) | (throttle > 1)):
        raise DatasetError(f"throttle outside [0, 1]{where}")
    if not np.all(np.isin(label, LABELS)):
        raise DatasetError(f"label outside {{+1, -1}}{where}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered telemetry samples stored column-wise.

    ``X`` has shape (n, 2) with columns (speed, throttle); ``y`` holds the
    labels. Both arrays are made read-only on construction.
    """

    X: np.ndarray
    y: np.ndarray
    sample_rate: float = DEFAULT_RATE

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64).reshape(-1, 2)
        y = np.array(self.y, dtype=np.int64).reshape(-1)
        if len(X) != len(y):
            raise DatasetError(f"{len(X)} feature rows but {len(y)} labels")
        if not self.sample_rate > 0:
            raise DatasetError("sample_rate must be positive")
        _check_values(X[:, 0], X[:, 1], y)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], sample_rate: float = DEFAULT_RATE) -> Dataset:
        X = np.array([(s.speed, s.throttle) for s in samples], dtype=np.float64).reshape(-1, 2)
        y = np.array([s.label for s in samples], dtype=np.int64)
        return cls(X, y, sample_rate)

    def __len__(self) -> int:
        return len(self.y)

    def __iter__(self) -> Iterator[Sample]:
        for (speed, throttle), label in zip(self.X.tolist(), self.y.tolist()):
            yield Sample(speed, throttle, label)

    def __getitem__(self, idx) -> Sample:
        speed, throttle = self.X[idx].tolist()
        return Sample(speed, throttle, int(self.y[idx]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    def subset(self, indices) -> Dataset:
        indices = np.asarray(indices)
        return Dataset(self.X[indices], self.y[indices], self.sample_rate)

    def of_label(self, label: int) -> Dataset:
        return self.subset(np.flatnonzero(self.y == label))

    def class_counts(self) -> dict[int, int]:
        return {lab: int(np.count_nonzero(self.y == lab)) for lab in LABELS}

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()


def concat(datasets: Sequence[Dataset]) -> Dataset:
    if not datasets:
        raise DatasetError("nothing to concatenate")
    rates = {ds.sample_rate for ds in datasets}
    if len(rates) != 1:
        raise DatasetError(f"mixed sample rates {sorted(rates)}")
    return Dataset(
        np.concatenate([ds.X for ds in datasets]),
        np.concatenate([ds.y for ds in datasets]),
        rates.pop(),
    )


def load_csv(path, sample_rate: float = DEFAULT_RATE) -> Dataset:
    """Read a ``speed_kmh,throttle,label`` file, preserving row order."""
    speeds, throttles, labels = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise DatasetError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise DatasetError(f"{path}: line {line}: expected 3 fields, got {len(row)}")
            try:
                speed = float(row[0])
                throttle = float(row[1])
                label = _parse_label(row[2])
            except ValueError as exc:
                raise DatasetError(f"{path}: line {line}: malformed row: {exc}") from None
            try:
                _check_values(np.array([speed]), np.array([throttle]), np.array([label]), line)
            except DatasetError as exc:
                raise DatasetError(f"{path}: malformed row: {exc}") from None
            speeds.append(speed)
            throttles.append(throttle)
            labels.append(label)
    if not labels:
        raise DatasetError(f"{path}: empty dataset")
    return Dataset(np.column_stack([speeds, throttles]), np.array(labels), sample_rate)


def _parse_label(text: str) -> int:
    text = text.strip()
    if text in ("1", "+1"):
        return 1
    if text == "-1":
        return -1
    raise ValueError(f"label {text!r} outside {{+1, -1}}")


def save_csv(ds: Dataset, path) -> None:
    """Write ``ds`` with shortest round-trip float formatting."""
    if len(ds) == 0:
        raise DatasetError("refusing to write an empty dataset")
    lines = [",".join(CSV_HEADER)]
    for (speed, throttle), label in zip(ds.X.tolist(), ds.y.tolist()):
        lines.append(f"{speed!r},{throttle!r},{label}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass(frozen=True, eq=False)
class SubsetPartition:
    """Assignment of every sample to one of ``z`` subsets."""

    z: int
    assignments: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.assignments, dtype=np.int64).reshape(-1)
        n = len(a)
        if not 1 < self.z <= n:
            raise DatasetError(f"z={self.z} outside (1, {n}]")
        if a.min() < 0 or a.max() >= self.z:
            raise DatasetError("subset index out of range")
        sizes = np.bincount(a, minlength=self.z)
        if sizes.max() - sizes.min() > 1:
            raise DatasetError(f"subset sizes differ by more than 1: {sizes.min()}..{sizes.max()}")
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SubsetPartition):
            return NotImplemented
        return self.z == other.z and np.array_equal(self.assignments, other.assignments)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.z)

    def indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == k)

    def folds(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield (train, held-out) index arrays, holding out one subset at a time."""
        for k in range(self.z):
            held = self.assignments == k
            yield np.flatnonzero(~held), np.flatnonzero(held)


def partition(ds: Dataset | int, z: int, seed: int = 0, contiguous: bool = False) -> SubsetPartition:
    """Split ``ds`` into ``z`` subsets whose sizes differ by at most one.

    The first ``n % z`` subsets get the extra sample. With ``contiguous`` the
    subsets are consecutive time blocks; otherwise order is shuffled by seed.
    """
    n = ds if isinstance(ds, int) else len(ds)
    if not 1 < z <= n:
        raise DatasetError(f"z={z} outside (1, {n}]")
    block = np.repeat(np.arange(z), [len(c) for c in np.array_split(np.arange(n), z)])
    if contiguous:
        return SubsetPartition(z, block)
    order = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[order] = block
    return SubsetPartition(z, assignments)


@dataclass(frozen=True)
class AffineScaler:
    """Per-feature ``(x - offset) / scale`` map; not applied unless asked for."""

    offset: tuple[float, float]
    scale: tuple[float, float]

    @classmethod
    def fit(cls, X: np.ndarray) -> AffineScaler:
        X = np.asarray(X, dtype=np.float64)
        sd = X.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        return cls(tuple(X.mean(axis=0).tolist()), tuple(sd.tolist()))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - np.array(self.offset)) / np.array(self.scale)

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * np.array(self.scale) + np.array(self.offset)

