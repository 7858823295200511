"""C-support vector classification solved by SMO.

The dual is solved with pairwise updates chosen by the maximal violating
pair rule with second-order selection of the partner index, the working set
rule used by LIBSVM. The solver stops when the KKT gap between the two index
sets drops below ``tol``, which bounds ``|y_i f(x_i) - 1|`` by ``tol`` for
every free support vector.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..data import FeatureMatrix
from ._common import check_dims, require_both_classes

KERNELS = ("linear", "rbf")
LINEAR, RBF = 0, 1
_TAU = 1e-12
_GRAM_LIMIT = 4000
_CHUNK = 512


class ConvergenceWarning(UserWarning):
    pass


def auto_gamma(matrix: FeatureMatrix | np.ndarray) -> float:
    """1 / (n_features * variance of all entries pooled)."""
    X = matrix.values if isinstance(matrix, FeatureMatrix) else np.asarray(matrix, dtype=float)
    if X.size == 0:
        raise ValueError("matrix must not be empty")
    var = float(X.var())
    if not var > 0:
        raise ValueError("pooled variance is zero; gamma is undefined")
    return 1.0 / (X.shape[1] * var)


def rbf_kernel(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = x - y
    return math.exp(-gamma * float(d @ d))


def kernel_matrix(A: np.ndarray, B: np.ndarray, kind: str, gamma: float) -> np.ndarray:
    if kind == "linear":
        return A @ B.T
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    kernel: str = "rbf"
    gamma: float | str = "auto"
    tol: float = 1e-3
    max_iter: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        if self.gamma != "auto" and not (isinstance(self.gamma, (int, float)) and self.gamma > 0):
            raise ValueError("gamma must be 'auto' or a positive number")


@dataclass(frozen=True)
class SvmFitInfo:
    """Dual solution in the caller's row order, kept for diagnostics only."""

    alpha: np.ndarray
    signed_labels: np.ndarray
    iterations: int
    converged: bool
    gap: float


@dataclass(frozen=True)
class SvmModel:
    params: SvmParams
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    info: SvmFitInfo | None = field(default=None, repr=False, compare=False)

    kind = "SVM"

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, values) -> np.ndarray:
        X = check_dims(values, self.n_features)
        out = np.empty(X.shape[0])
        for start in range(0, X.shape[0], _CHUNK):
            K = kernel_matrix(X[start : start + _CHUNK], self.support_vectors, self.params.kernel, self.gamma)
            out[start : start + _CHUNK] = K @ self.dual_coef + self.bias
        return out

    def predict(self, values) -> np.ndarray:
        return (self.decision_function(values) >= 0).astype(np.int64)

    def hyperparams(self) -> dict:
        p = self.params
        return {"C": p.C, "kernel": p.kernel, "gamma": p.gamma, "tol": p.tol,
                "max_iter": p.max_iter, "seed": p.seed}

    def parameters(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "bias": self.bias,
            "gamma": self.gamma,
        }

    @classmethod
    def from_parameters(cls, hyperparams: dict, params: dict) -> SvmModel:
        coef = np.asarray(params["dual_coef"], dtype=float)
        sv = np.asarray(params["support_vectors"], dtype=float).reshape(len(coef), -1)
        return cls(SvmParams(**hyperparams), sv, coef, float(params["bias"]), float(params["gamma"]))


@njit(cache=True)
def _kernel_row(X, i, kind, gamma, out):
    n, d = X.shape
    for t in range(n):
        s = 0.0
        if kind == 0:
            for k in range(d):
                s += X[i, k] * X[t, k]
            out[t] = s
        else:
            for k in range(d):
                diff = X[i, k] - X[t, k]
                s += diff * diff
            out[t] = math.exp(-gamma * s)


@njit(cache=True)
def _smo(X, y, C, kind, gamma, tol, max_iter, gram, use_gram):
    n = X.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    Ki = np.empty(n)
    Kj = np.empty(n)
    diag = np.empty(n)
    for t in range(n):
        if use_gram:
            diag[t] = gram[t, t]
        elif kind == 0:
            s = 0.0
            for k in range(X.shape[1]):
                s += X[t, k] * X[t, k]
            diag[t] = s
        else:
            diag[t] = 1.0

    it = 0
    gap = np.inf
    converged = False
    while it < max_iter:
        # i: maximal -y G over the "up" set
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * grad[t]
                if v > gmax:
                    gmax = v
                    i = t
        if i < 0:
            gap = 0.0
            converged = True
            break
        if use_gram:
            for t in range(n):
                Ki[t] = gram[i, t]
        else:
            _kernel_row(X, i, kind, gamma, Ki)

        # j: second-order choice over the "low" set
        gmin = np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * grad[t]
                if v < gmin:
                    gmin = v
                b = gmax - v
                if b > 0:
                    a = diag[i] + diag[t] - 2.0 * Ki[t]
                    if a <= 0:
                        a = _TAU
                    obj = -(b * b) / a
                    if obj < best:
                        best = obj
                        j = t
        gap = gmax - gmin
        if gap < tol or j < 0:
            converged = True
            break
        if use_gram:
            for t in range(n):
                Kj[t] = gram[j, t]
        else:
            _kernel_row(X, j, kind, gamma, Kj)

        old_i = alpha[i]
        old_j = alpha[j]
        a = diag[i] + diag[j] - 2.0 * Ki[j]
        if a <= 0:
            a = _TAU
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / a
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (grad[i] - grad[j]) / a
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total

        di = alpha[i] - old_i
        dj = alpha[j] - old_j
        for t in range(n):
            grad[t] += y[t] * (y[i] * di * Ki[t] + y[j] * dj * Kj[t])
        it += 1

    # rho: mean of y G over free vectors, else the middle of the feasible interval
    n_free = 0
    s_free = 0.0
    ub = np.inf
    lb = -np.inf
    for t in range(n):
        yg = y[t] * grad[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            s_free += yg
    if n_free > 0:
        rho = s_free / n_free
    else:
        rho = 0.5 * (ub + lb)
    return alpha, rho, it, converged, gap


def svm_fit(matrix: FeatureMatrix, params: SvmParams | None = None) -> SvmModel:
    """Fit a C-SVC. Rows are visited in a seeded random order."""
    params = params or SvmParams()
    require_both_classes(matrix)
    gamma = auto_gamma(matrix) if params.gamma == "auto" else float(params.gamma)
    n = matrix.rows
    perm = np.random.default_rng(params.seed).permutation(n)
    X = np.ascontiguousarray(matrix.values[perm])
    y = np.where(matrix.labels[perm] == 1, 1.0, -1.0)
    kind = LINEAR if params.kernel == "linear" else RBF
    use_gram = n <= _GRAM_LIMIT
    gram = kernel_matrix(X, X, params.kernel, gamma) if use_gram else np.zeros((1, 1))
    alpha, rho, iterations, converged, gap = _smo(
        X, y, float(params.C), kind, gamma, float(params.tol), int(params.max_iter), gram, use_gram
    )
    if not converged:
        warnings.warn(
            f"SMO stopped after {iterations} iterations with KKT gap {gap:.3g}",
            ConvergenceWarning,
            stacklevel=2,
        )
    sv = alpha > 0
    alpha_orig = np.empty(n)
    alpha_orig[perm] = alpha
    info = SvmFitInfo(alpha_orig, np.where(matrix.labels == 1, 1.0, -1.0), iterations, converged, gap)
    return SvmModel(params, X[sv].copy(), (alpha * y)[sv], -rho, gamma, info)


def svm_predict(model: SvmModel, x) -> int:
    return int(model.predict(np.atleast_2d(np.asarray(x, dtype=float)))[0])
