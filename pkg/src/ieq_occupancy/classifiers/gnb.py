"""Gaussian naive Bayes with MAP prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..data import FeatureMatrix
from ._common import check_dims, require_both_classes

VAR_SMOOTHING = 1e-9


@dataclass(frozen=True)
class GnbModel:
    priors: np.ndarray  # (2,)
    means: np.ndarray  # (2, n_features)
    variances: np.ndarray  # (2, n_features)
    var_smoothing: float = VAR_SMOOTHING

    kind = "GNB"

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def joint_log_likelihood(self, values) -> np.ndarray:
        """log P(y) + sum_i log N(x_i | mu_yi, var_yi), shape (rows, 2)."""
        X = check_dims(values, self.n_features)
        out = np.empty((X.shape[0], 2))
        for c in (0, 1):
            var = self.variances[c]
            log_pdf = -0.5 * (np.log(2.0 * np.pi * var) + (X - self.means[c]) ** 2 / var)
            out[:, c] = np.log(self.priors[c]) + log_pdf.sum(axis=1)
        return out

    def posterior(self, values) -> np.ndarray:
        jll = self.joint_log_likelihood(values)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def predict(self, values) -> np.ndarray:
        jll = self.joint_log_likelihood(values)
        # Ties go to class 0.
        return (jll[:, 1] > jll[:, 0]).astype(np.int64)

    def hyperparams(self) -> dict:
        return {"var_smoothing": self.var_smoothing}

    def parameters(self) -> dict:
        return {
            "priors": self.priors.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_parameters(cls, hyperparams: dict, params: dict) -> GnbModel:
        return cls(
            np.asarray(params["priors"], dtype=float),
            np.asarray(params["means"], dtype=float),
            np.asarray(params["variances"], dtype=float),
            float(hyperparams.get("var_smoothing", VAR_SMOOTHING)),
        )


def gnb_fit(matrix: FeatureMatrix, var_smoothing: float = VAR_SMOOTHING) -> GnbModel:
    require_both_classes(matrix)
    X, y = matrix.values, matrix.labels
    # Smoothing is relative to the widest feature so constant features stay usable.
    widest = float(X.var(axis=0).max())
    epsilon = var_smoothing * (widest if widest > 0 else 1.0)
    priors = np.array([np.mean(y == 0), np.mean(y == 1)])
    means = np.vstack([X[y == c].mean(axis=0) for c in (0, 1)])
    variances = np.vstack([X[y == c].var(axis=0) for c in (0, 1)]) + epsilon
    return GnbModel(priors, means, variances, var_smoothing)


def gnb_posterior(model: GnbModel, x) -> tuple[float, float]:
    p = model.posterior(np.atleast_2d(np.asarray(x, dtype=float)))[0]
    return float(p[0]), float(p[1])


def gnb_predict(model: GnbModel, x) -> int:
    return int(model.predict(np.atleast_2d(np.asarray(x, dtype=float)))[0])
