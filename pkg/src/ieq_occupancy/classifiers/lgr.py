"""L2-regularised logistic regression fitted with L-BFGS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..data import FeatureMatrix
from ..optim import LbfgsParams, OptimizationError, lbfgs_minimize
from ._common import check_dims, require_both_classes

DEFAULT_C = 10.0


@dataclass(frozen=True)
class LgrParams:
    C: float = DEFAULT_C
    grad_tolerance: float = 1e-6
    max_iters: int = 500

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")


@dataclass(frozen=True)
class LgrModel:
    weights: np.ndarray
    intercept: float
    C: float = DEFAULT_C

    kind = "LGR"

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def decision_function(self, values) -> np.ndarray:
        return check_dims(values, self.n_features) @ self.weights + self.intercept

    def predict_proba(self, values) -> np.ndarray:
        return expit(self.decision_function(values))

    def predict(self, values) -> np.ndarray:
        # sigma(z) >= 0.5 exactly when z >= 0
        return (self.decision_function(values) >= 0).astype(np.int64)

    def hyperparams(self) -> dict:
        return {"C": self.C}

    def parameters(self) -> dict:
        return {"weights": self.weights.tolist(), "intercept": self.intercept}

    @classmethod
    def from_parameters(cls, hyperparams: dict, params: dict) -> LgrModel:
        return cls(
            np.asarray(params["weights"], dtype=float),
            float(params["intercept"]),
            float(hyperparams["C"]),
        )


def lgr_objective(theta: np.ndarray, X: np.ndarray, y: np.ndarray, C: float) -> float:
    """C * sum of log losses + 0.5 * ||w||^2; the intercept (last entry) is unpenalised."""
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    return float(C * np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * (w @ w))


def lgr_gradient(theta: np.ndarray, X: np.ndarray, y: np.ndarray, C: float) -> np.ndarray:
    w, b = theta[:-1], theta[-1]
    r = C * (expit(X @ w + b) - y)
    return np.concatenate([X.T @ r + w, [r.sum()]])


def lgr_fit(
    matrix: FeatureMatrix,
    C: float = DEFAULT_C,
    params: LgrParams | None = None,
    x0=None,
) -> LgrModel:
    params = params or LgrParams(C=C)
    require_both_classes(matrix)
    X, y = matrix.values, matrix.labels.astype(float)
    theta0 = np.zeros(X.shape[1] + 1) if x0 is None else np.asarray(x0, dtype=float)
    result = lbfgs_minimize(
        lambda t: lgr_objective(t, X, y, params.C),
        lambda t: lgr_gradient(t, X, y, params.C),
        theta0,
        LbfgsParams(grad_tolerance=params.grad_tolerance, max_iters=params.max_iters),
    )
    if not np.all(np.isfinite(result.x)):
        raise OptimizationError("logistic regression weights diverged")
    return LgrModel(result.x[:-1].copy(), float(result.x[-1]), params.C)


def lgr_predict(model: LgrModel, x) -> int:
    return int(model.predict(np.atleast_2d(np.asarray(x, dtype=float)))[0])
