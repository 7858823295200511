"""Cross-validation, SVM C tuning, RF feature selection and local/global runs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .classifiers import ModelSpec, RfcParams, TrainedModel, default_specs, rfc_fit
from .data import (
    CHANNELS,
    DEFAULT_INTERVAL,
    AvailabilityError,
    Dataset,
    FeatureMatrix,
    build_matrix,
    fit_standardizer,
    split_folds,
)

log = logging.getLogger(__name__)

DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)

# Six single channels and two fusions. "co2" resolves to co2_inhale when the zone has it, else co2_bg.
DEFAULT_FEATURE_ROWS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("CO2_inhale", ("co2_inhale",)),
    ("CO2_bg", ("co2_bg",)),
    ("VOC", ("voc",)),
    ("Light", ("light",)),
    ("Temperature", ("temperature",)),
    ("Humidity", ("humidity",)),
    ("CO2+VOC", ("co2", "voc")),
    ("CO2+VOC+light", ("co2", "voc", "light")),
)


def resolve_row(tokens: Iterable[str], available: Iterable[str]) -> tuple[str, ...] | None:
    """Map a feature row onto concrete channels, or None if a channel is missing."""
    available = set(available)
    channels = []
    for token in tokens:
        if token == "co2":
            if "co2_inhale" in available:
                token = "co2_inhale"
            elif "co2_bg" in available:
                token = "co2_bg"
            else:
                return None
        if token not in available:
            return None
        channels.append(token)
    return tuple(c for c in CHANNELS if c in channels)


@dataclass(frozen=True)
class ExperimentConfig:
    specs: tuple[ModelSpec, ...] = field(default_factory=lambda: tuple(default_specs()))
    feature_rows: tuple[tuple[str, tuple[str, ...]], ...] = DEFAULT_FEATURE_ROWS
    k_folds: int = 10
    seed: int = 0
    svm_c_grid: tuple[float, ...] = DEFAULT_C_GRID
    inner_folds: int = 3
    # SVM training sets are subsampled (stratified) to at most this many rows.
    svm_max_train_rows: int | None = 1000
    rf_selection_threshold: float = 0.5
    interval: int = DEFAULT_INTERVAL

    def __post_init__(self):
        if not self.specs or not self.feature_rows:
            raise ValueError("specs and feature_rows must be non-empty")
        if self.k_folds < 2 or self.inner_folds < 2:
            raise ValueError("fold counts must be >= 2")
        if not self.svm_c_grid:
            raise ValueError("svm_c_grid must be non-empty")
        labels = [label for label, _ in self.feature_rows]
        if len(set(labels)) != len(labels):
            raise ValueError("feature row labels must be unique")

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        data = dict(data)
        kwargs = {}
        if "models" in data:
            models = data.pop("models")
            kwargs["specs"] = tuple(
                ModelSpec(m) if isinstance(m, str) else ModelSpec(m["kind"], m.get("params", {}))
                for m in models
            )
        if "feature_sets" in data:
            rows = data.pop("feature_sets")
            kwargs["feature_rows"] = tuple(
                (r["label"], tuple(r["channels"])) if isinstance(r, dict) else _row_by_label(r)
                for r in rows
            )
        for key in ("k_folds", "seed", "inner_folds", "svm_max_train_rows", "interval"):
            if key in data:
                kwargs[key] = data.pop(key)
        if "svm_c_grid" in data:
            kwargs["svm_c_grid"] = tuple(float(c) for c in data.pop("svm_c_grid"))
        if "rf_selection_threshold" in data:
            kwargs["rf_selection_threshold"] = float(data.pop("rf_selection_threshold"))
        if data:
            raise ValueError(f"unknown experiment config keys: {sorted(data)}")
        return cls(**kwargs)


def _row_by_label(label: str) -> tuple[str, tuple[str, ...]]:
    for row in DEFAULT_FEATURE_ROWS:
        if row[0] == label:
            return row
    raise ValueError(f"unknown feature set {label!r}")


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------------------
# Metrics and model fitting


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    if labels.size == 0:
        raise ValueError("cannot score an empty prediction set")
    return float(np.mean(predictions == labels))


def precision_recall(predictions, labels) -> tuple[float | None, float | None]:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    predicted = int(np.sum(predictions == 1))
    actual = int(np.sum(labels == 1))
    return (tp / predicted if predicted else None, tp / actual if actual else None)


def stratified_subsample(labels: np.ndarray, size: int, seed: int) -> np.ndarray:
    """Sorted row indices of a class-proportional random subsample."""
    labels = np.asarray(labels)
    if size >= len(labels):
        return np.arange(len(labels))
    rng = np.random.default_rng(seed)
    chosen = []
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        take = int(round(size * len(members) / len(labels)))
        take = min(len(members), max(take, 1 if len(members) else 0))
        chosen.append(rng.choice(members, size=take, replace=False))
    return np.sort(np.concatenate(chosen))


@dataclass(frozen=True)
class FitOptions:
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    inner_folds: int = 3
    svm_max_train_rows: int | None = 1000

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> FitOptions:
        return cls(config.svm_c_grid, config.inner_folds, config.svm_max_train_rows)


def fit_pipeline(
    matrix: FeatureMatrix, spec: ModelSpec, seed: int, options: FitOptions | None = None
) -> TrainedModel:
    """Standardize on ``matrix`` and fit ``spec``; SVMs without a fixed C are tuned first."""
    options = options or FitOptions()
    standardizer = fit_standardizer(matrix)
    scaled = standardizer.apply(matrix)
    if spec.kind == "SVM":
        if options.svm_max_train_rows is not None and scaled.rows > options.svm_max_train_rows:
            keep = stratified_subsample(scaled.labels, options.svm_max_train_rows, _derive_seed(seed, 1))
            scaled = scaled.take(keep)
        if "C" not in spec.params:
            best = tune_svm_c(scaled, options.c_grid, options.inner_folds, _derive_seed(seed, 2), spec)
            spec = spec.with_params(C=best)
    return TrainedModel(spec.fit(scaled, seed=seed), matrix.features, standardizer)


@dataclass
class CVResult:
    fold_accs: list[float]
    predictions: np.ndarray
    labels: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accs))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_accs))


def cross_validate(
    matrix: FeatureMatrix,
    spec: ModelSpec,
    k: int = 10,
    seed: int = 0,
    options: FitOptions | None = None,
) -> CVResult:
    """Stratified k-fold accuracy.

    The standardizer (and any SVM C search) only ever sees the training
    folds.
    """
    folds = split_folds(matrix.labels, k, seed)
    predictions = np.empty(matrix.rows, dtype=np.int64)
    fold_accs = []
    for fold, (train_idx, test_idx) in enumerate(folds):
        trained = fit_pipeline(matrix.take(train_idx), spec, _derive_seed(seed, fold), options)
        test = matrix.take(test_idx)
        pred = trained.predict(test)
        predictions[test_idx] = pred
        fold_accs.append(accuracy(pred, test.labels))
    return CVResult(fold_accs, predictions, matrix.labels)


def tune_svm_c(
    matrix: FeatureMatrix,
    grid: Sequence[float],
    k: int,
    seed: int,
    spec: ModelSpec | None = None,
) -> float:
    """C with the best mean CV accuracy; ties go to the smallest C."""
    if not grid:
        raise ValueError("grid must be non-empty")
    spec = spec or ModelSpec("SVM")
    best_c, best_acc = None, -1.0
    for c in sorted(float(c) for c in grid):
        acc = cross_validate(matrix, spec.with_params(C=c), k, seed).mean
        if acc > best_acc:
            best_c, best_acc = c, acc
    return best_c


@dataclass(frozen=True)
class FeatureSelection:
    features: tuple[str, ...]
    importances: dict[str, float]
    retained: tuple[str, ...]


def select_features_rf(
    matrix: FeatureMatrix, params: RfcParams | None = None, threshold: float = 0.5
) -> FeatureSelection:
    """Keep features whose forest importance is at least ``threshold`` times the mean."""
    if matrix.n_features < 2:
        raise ValueError("feature selection needs at least 2 features")
    params = params or RfcParams()
    standardized = fit_standardizer(matrix).apply(matrix)
    importances = rfc_fit(standardized, params).importances
    cutoff = threshold * importances.mean()
    keep = importances >= cutoff
    keep[int(np.argmax(importances))] = True
    retained = tuple(f for f, k in zip(matrix.features, keep) if k)
    return FeatureSelection(
        matrix.features, {f: float(v) for f, v in zip(matrix.features, importances)}, retained
    )


# ---------------------------------------------------------------------------
# Reports


@dataclass
class LocalCell:
    zone: str
    model: str
    feature_set: str
    channels: tuple[str, ...] | None
    mean_acc: float | None = None
    fold_accs: list[float] = field(default_factory=list)
    std: float | None = None
    precision: float | None = None
    recall: float | None = None

    @property
    def present(self) -> bool:
        return self.mean_acc is not None


@dataclass
class GlobalCell:
    train_zone: str
    test_zone: str
    model: str
    feature_set: str
    channels: tuple[str, ...]
    acc: float
    local_mean_acc: float | None
    drop: float | None


@dataclass
class EvalReport:
    zones: list[str] = field(default_factory=list)
    models: list[str] = field(default_factory=list)
    feature_sets: list[str] = field(default_factory=list)
    local: list[LocalCell] = field(default_factory=list)
    global_: list[GlobalCell] = field(default_factory=list)
    selected_features: dict[str, list[str]] = field(default_factory=dict)

    def cell(self, zone: str, model: str, feature_set: str) -> LocalCell | None:
        for c in self.local:
            if (c.zone, c.model, c.feature_set) == (zone, model, feature_set):
                return c
        return None

    def local_acc(self, zone: str, model: str, feature_set: str) -> float | None:
        c = self.cell(zone, model, feature_set)
        return None if c is None else c.mean_acc

    def global_cells(self, train_zone: str, test_zone: str, feature_set: str) -> list[GlobalCell]:
        return [
            g for g in self.global_
            if (g.train_zone, g.test_zone, g.feature_set) == (train_zone, test_zone, feature_set)
        ]


def _percent(x: float | None) -> float | None:
    return None if x is None else 100.0 * x


def _matrices(dataset: Dataset, rows):
    """Feature matrix per row label, or None where channels are unavailable."""
    out = {}
    available = dataset.channels
    for label, tokens in rows:
        channels = resolve_row(tokens, available)
        if channels is None:
            out[label] = None
            continue
        try:
            out[label] = build_matrix(dataset.samples, channels)
        except AvailabilityError as exc:
            log.info("%s / %s unavailable: %s", dataset.name, label, exc)
            out[label] = None
    return out


def run_local(config: ExperimentConfig, datasets: Sequence[Dataset]) -> EvalReport:
    """Cross-validated accuracy for every zone, model and feature set.

    Datasets are expected to be resampled already. Combinations whose
    channels are missing are recorded as absent cells.
    """
    options = FitOptions.from_config(config)
    report = EvalReport(
        zones=[d.name for d in datasets],
        models=[s.kind for s in config.specs],
        feature_sets=[label for label, _ in config.feature_rows],
    )
    for z, dataset in enumerate(datasets):
        matrices = _matrices(dataset, config.feature_rows)
        for spec in config.specs:
            for label, _ in config.feature_rows:
                matrix = matrices[label]
                if matrix is None:
                    report.local.append(LocalCell(dataset.name, spec.kind, label, None))
                    continue
                log.info("local %s %s %s (%d rows)", dataset.name, spec.kind, label, matrix.rows)
                cv = cross_validate(matrix, spec, config.k_folds, config.seed, options)
                precision, recall = precision_recall(cv.predictions, cv.labels)
                report.local.append(
                    LocalCell(
                        dataset.name, spec.kind, label, matrix.features,
                        100.0 * cv.mean, [100.0 * a for a in cv.fold_accs], 100.0 * cv.std,
                        _percent(precision), _percent(recall),
                    )
                )
        selection = select_zone_features(dataset, config)
        if selection is not None:
            report.selected_features[dataset.name] = list(selection.retained)
    return report


def select_zone_features(dataset: Dataset, config: ExperimentConfig) -> FeatureSelection | None:
    available = dataset.channels
    if len(available) < 2:
        return None
    matrix = build_matrix(dataset.samples, available)
    params = RfcParams(seed=_derive_seed(config.seed, 7))
    return select_features_rf(matrix, params, config.rf_selection_threshold)


def run_global(
    config: ExperimentConfig,
    datasets: Sequence[Dataset],
    train_zone: str,
    test_zones: Sequence[str],
    local: EvalReport | None = None,
) -> list[GlobalCell]:
    """Train on all of ``train_zone`` and score every zone in ``test_zones``.

    Feature sets are resolved against the channels both zones share. Each
    result is paired with the test zone's local CV accuracy on the same
    channels so the transfer drop can be read off directly.
    """
    by_name = {d.name: d for d in datasets}
    if train_zone not in by_name:
        raise KeyError(f"unknown train zone {train_zone!r}")
    train = by_name[train_zone]
    options = FitOptions.from_config(config)
    cells = []
    for test_name in test_zones:
        test = by_name[test_name]
        shared = set(train.channels) & set(test.channels)
        if not shared:
            raise ValueError(f"{train_zone} and {test_name} share no channels")
        for label, tokens in config.feature_rows:
            channels = resolve_row(tokens, shared)
            if channels is None:
                continue
            try:
                train_m = build_matrix(train.samples, channels)
                test_m = build_matrix(test.samples, channels)
            except AvailabilityError:
                continue
            for spec in config.specs:
                log.info("global %s -> %s %s %s", train_zone, test_name, spec.kind, label)
                trained = fit_pipeline(train_m, spec, _derive_seed(config.seed, 11), options)
                acc = 100.0 * accuracy(trained.predict(test_m), test_m.labels)
                local_acc = None
                if local is not None:
                    cell = local.cell(test_name, spec.kind, label)
                    if cell is not None and cell.present and tuple(cell.channels) == channels:
                        local_acc = cell.mean_acc
                if local_acc is None:
                    local_acc = 100.0 * cross_validate(
                        test_m, spec, config.k_folds, config.seed, options
                    ).mean
                cells.append(
                    GlobalCell(train_zone, test_name, spec.kind, label, channels, acc,
                               local_acc, local_acc - acc)
                )
    return cells
