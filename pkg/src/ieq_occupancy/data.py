"""Sensor records, CSV ingestion, resampling, feature matrices and folds."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

# Canonical channel order. Feature sets are always emitted in this order.
CHANNELS: tuple[str, ...] = (
    "co2_inhale",
    "co2_bg",
    "voc",
    "light",
    "temperature",
    "humidity",
)

CSV_COLUMNS: dict[str, str] = {
    "co2_inhale": "co2_inhale_ppm",
    "co2_bg": "co2_bg_ppm",
    "voc": "voc_ppb",
    "light": "light_lux",
    "temperature": "temp_c",
    "humidity": "rh_pct",
}
CSV_HEADER: tuple[str, ...] = ("timestamp", *CSV_COLUMNS.values(), "occupied")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

DEFAULT_INTERVAL = 300
MAX_FILL_BUCKETS = 3
MAX_DROP_FRACTION = 0.5

_NON_NEGATIVE = ("co2_inhale", "co2_bg", "voc", "light")


class DataError(ValueError):
    """Base class for malformed or unusable sensor data."""


class SchemaError(DataError):
    pass


class LabelError(DataError):
    pass


class AvailabilityError(DataError):
    """A requested channel cannot be supplied for enough rows."""

    def __init__(self, channel: str, message: str | None = None):
        self.channel = channel
        super().__init__(message or f"channel {channel!r} is not available")


@dataclass(frozen=True, slots=True)
class SensorSample:
    timestamp: datetime
    occupied: int
    co2_inhale: float | None = None
    co2_bg: float | None = None
    voc: float | None = None
    light: float | None = None
    temperature: float | None = None
    humidity: float | None = None

    def __post_init__(self):
        if self.occupied not in (0, 1):
            raise LabelError(f"occupied must be 0 or 1, got {self.occupied!r}")
        for name in CHANNELS:
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value):
                raise DataError(f"{name} is not finite: {value!r}")
            if name in _NON_NEGATIVE and value < 0:
                raise DataError(f"{name} must be >= 0, got {value!r}")
            if name == "humidity" and not 0 <= value <= 100:
                raise DataError(f"humidity must lie in [0, 100], got {value!r}")

    def value(self, channel: str) -> float | None:
        return getattr(self, channel)


def canonical_features(channels: Iterable[str]) -> tuple[str, ...]:
    """Validate a channel selection and return it in canonical order."""
    chosen = list(channels)
    if not chosen:
        raise ValueError("feature set must not be empty")
    if len(set(chosen)) != len(chosen):
        raise ValueError(f"duplicate channels in feature set: {chosen}")
    unknown = [c for c in chosen if c not in CHANNELS]
    if unknown:
        raise ValueError(f"unknown channels: {unknown}")
    return tuple(c for c in CHANNELS if c in chosen)


@dataclass(frozen=True)
class FeatureMatrix:
    features: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)
        if values.ndim != 2 or values.shape[1] != len(self.features):
            raise ValueError(
                f"values shape {values.shape} does not match {len(self.features)} features"
            )
        if labels.shape != (values.shape[0],):
            raise ValueError("labels length must equal row count")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature values must be finite")
        if not np.all((labels == 0) | (labels == 1)):
            raise LabelError("labels must be 0 or 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def take(self, index: np.ndarray) -> FeatureMatrix:
        return FeatureMatrix(self.features, self.values[index], self.labels[index])

    def with_values(self, values: np.ndarray) -> FeatureMatrix:
        return FeatureMatrix(self.features, values, self.labels)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, matrix: FeatureMatrix) -> FeatureMatrix:
        return matrix.with_values(self.transform(matrix.values))

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.scale

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.scale + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> Standardizer:
        return cls(np.asarray(data["mean"], dtype=float), np.asarray(data["scale"], dtype=float))


def fit_standardizer(train: FeatureMatrix) -> Standardizer:
    """Per-column mean and population standard deviation.

    Constant columns get a scale of 1 so they map to zero.
    """
    if train.rows < 2:
        raise ValueError("need at least 2 rows to fit a standardizer")
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    # A column is constant if its spread is at roundoff level of its magnitude.
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(constant, 1.0, std)
    return Standardizer(mean, scale)


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: np.ndarray

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.assignment == fold)
        train = np.flatnonzero(self.assignment != fold)
        return train, test

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for fold in range(self.k):
            yield self.split(fold)


def split_folds(labels: Sequence[int] | np.ndarray, k: int, seed: int) -> FoldAssignment:
    """Stratified, seeded assignment of rows to k folds.

    Rows of each class are shuffled and dealt round-robin, class 1 continuing
    where class 0 stopped, so both the per-class and the total fold sizes
    differ by at most one.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = np.random.default_rng(seed)
    order = []
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        if len(members) < k:
            raise ValueError(f"class {cls} has {len(members)} rows, fewer than k={k}")
        order.append(rng.permutation(members))
    order = np.concatenate(order)
    fold_of_slot = rng.permutation(k)
    assignment = np.empty(len(labels), dtype=np.int64)
    assignment[order] = fold_of_slot[np.arange(len(order)) % k]
    return FoldAssignment(k, assignment)


# ---------------------------------------------------------------------------
# CSV


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime(TIMESTAMP_FORMAT)


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None or ts.utcoffset().total_seconds() != 0:
        raise ValueError(f"timestamp must be UTC: {text!r}")
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def load_csv(path: str | Path) -> list[SensorSample]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column {missing[0]!r}")
        unknown = [c for c in header if c not in CSV_HEADER]
        if unknown:
            raise SchemaError(f"{path}: unknown column {unknown[0]!r}")
        position = {name: header.index(name) for name in CSV_HEADER}

        samples = []
        previous = None
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"{path}: row {line_no} has {len(row)} fields, expected {len(header)}"
                )
            try:
                ts = parse_timestamp(row[position["timestamp"]])
            except ValueError as exc:
                raise DataError(f"{path}: row {line_no}, column 'timestamp': {exc}") from None
            values = {}
            for channel, column in CSV_COLUMNS.items():
                cell = row[position[column]].strip()
                if not cell:
                    values[channel] = None
                    continue
                try:
                    number = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {line_no}, column {column!r}: not a number: {cell!r}"
                    ) from None
                if not math.isfinite(number):
                    raise DataError(f"{path}: row {line_no}, column {column!r}: non-finite value")
                values[channel] = number
            label = row[position["occupied"]].strip()
            if label not in ("0", "1"):
                raise LabelError(
                    f"{path}: row {line_no}, column 'occupied': expected 0 or 1, got {label!r}"
                )
            if previous is not None and ts <= previous:
                raise DataError(f"{path}: row {line_no}: timestamps are not strictly increasing")
            previous = ts
            try:
                samples.append(SensorSample(ts, int(label), **values))
            except DataError as exc:
                raise type(exc)(f"{path}: row {line_no}: {exc}") from None
    return samples


def _format_value(value: float | None) -> str:
    return "" if value is None else f"{value:.3f}"


def write_csv(samples: Iterable[SensorSample], path: str | Path, channels: Sequence[str] = CHANNELS):
    """Write samples in the ingestion format; channels not listed are left empty."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s in samples:
            writer.writerow(
                [format_timestamp(s.timestamp)]
                + [_format_value(s.value(c) if c in channels else None) for c in CHANNELS]
                + [s.occupied]
            )


# ---------------------------------------------------------------------------
# Columnar helpers


def _epochs(samples: Sequence[SensorSample]) -> np.ndarray:
    return np.array([int(s.timestamp.timestamp()) for s in samples], dtype=np.int64)


def _channel_array(samples: Sequence[SensorSample], channel: str) -> np.ndarray:
    return np.array(
        [np.nan if (v := s.value(channel)) is None else v for s in samples], dtype=float
    )


def available_channels(samples: Sequence[SensorSample]) -> tuple[str, ...]:
    """Channels with at least one reading."""
    return tuple(c for c in CHANNELS if any(s.value(c) is not None for s in samples))


def resample(samples: Sequence[SensorSample], interval: int = DEFAULT_INTERVAL) -> list[SensorSample]:
    """Average samples into fixed buckets aligned to multiples of ``interval``.

    Occupied is 1 when at least half the bucket's inputs are occupied.
    """
    if interval <= 0:
        raise ValueError("interval must be positive")
    if not samples:
        return []
    epochs = _epochs(samples)
    if np.any(np.diff(epochs) < 0):
        raise ValueError("samples must be time ordered")
    buckets, inverse = np.unique(epochs // interval, return_inverse=True)
    counts = np.bincount(inverse)
    occupied = np.bincount(inverse, weights=[s.occupied for s in samples])
    labels = (2 * occupied >= counts).astype(int)

    means = {}
    for channel in CHANNELS:
        col = _channel_array(samples, channel)
        present = ~np.isnan(col)
        n = np.bincount(inverse, weights=present.astype(float), minlength=len(buckets))
        total = np.bincount(inverse, weights=np.where(present, col, 0.0), minlength=len(buckets))
        with np.errstate(invalid="ignore", divide="ignore"):
            means[channel] = np.where(n > 0, total / np.maximum(n, 1), np.nan)

    out = []
    for i, bucket in enumerate(buckets):
        values = {
            c: (None if np.isnan(means[c][i]) else float(means[c][i])) for c in CHANNELS
        }
        ts = datetime.fromtimestamp(int(bucket) * interval, tz=timezone.utc)
        out.append(SensorSample(ts, int(labels[i]), **values))
    return out


def _forward_fill(col: np.ndarray, limit: int) -> np.ndarray:
    valid = ~np.isnan(col)
    positions = np.arange(len(col))
    last = np.maximum.accumulate(np.where(valid, positions, -1))
    fillable = ~valid & (last >= 0) & (positions - last <= limit)
    out = col.copy()
    out[fillable] = col[last[fillable]]
    return out


def _filled_columns(samples, features, max_fill):
    columns, missing_counts = [], []
    for channel in features:
        col = _channel_array(samples, channel)
        if np.all(np.isnan(col)):
            raise AvailabilityError(channel)
        col = _forward_fill(col, max_fill)
        missing_counts.append(int(np.isnan(col).sum()))
        columns.append(col)
    return np.column_stack(columns), missing_counts


def complete_rows(
    samples: Sequence[SensorSample], feature_set: Iterable[str], max_fill: int = MAX_FILL_BUCKETS
) -> np.ndarray:
    """Indices of the samples that survive forward filling for ``feature_set``."""
    features = canonical_features(feature_set)
    if not samples:
        return np.empty(0, dtype=np.int64)
    values, _ = _filled_columns(samples, features, max_fill)
    return np.flatnonzero(~np.isnan(values).any(axis=1))


def build_matrix(
    samples: Sequence[SensorSample],
    feature_set: Iterable[str],
    max_fill: int = MAX_FILL_BUCKETS,
    max_drop_fraction: float = MAX_DROP_FRACTION,
) -> FeatureMatrix:
    """Assemble the feature matrix for a channel subset.

    Absent readings are forward filled for up to ``max_fill`` consecutive
    rows; rows still incomplete are dropped. Raises AvailabilityError when a
    channel has no readings at all or when more than ``max_drop_fraction`` of
    the rows would be dropped.
    """
    features = canonical_features(feature_set)
    if not samples:
        raise AvailabilityError(features[0], "no samples")
    values, missing_counts = _filled_columns(samples, features, max_fill)
    keep = ~np.isnan(values).any(axis=1)
    dropped = len(keep) - int(keep.sum())
    if dropped > max_drop_fraction * len(keep):
        worst = features[int(np.argmax(missing_counts))]
        raise AvailabilityError(
            worst, f"channel {worst!r} missing in too many rows ({dropped} of {len(keep)} dropped)"
        )
    labels = np.array([s.occupied for s in samples], dtype=np.int64)
    return FeatureMatrix(features, values[keep], labels[keep])


@dataclass
class Dataset:
    """A named zone's samples, convenient for experiments."""

    name: str
    samples: list[SensorSample] = field(repr=False)

    @property
    def channels(self) -> tuple[str, ...]:
        return available_channels(self.samples)
