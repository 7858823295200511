from __future__ import annotations

import numpy as np

from ..data import FeatureMatrix


class SingleClassError(ValueError):
    pass


def require_both_classes(matrix: FeatureMatrix):
    counts = np.bincount(matrix.labels, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise SingleClassError("training data must contain both classes")


def check_dims(values, n_features: int) -> np.ndarray:
    X = np.asarray(values, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got shape {X.shape}")
    return X
