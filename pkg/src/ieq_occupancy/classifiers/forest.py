"""Gini decision trees and a bootstrap random forest.

Trees are grown on presorted index lists: every node owns the same slice
``[start, end)`` of each feature's ordering, and a split stably partitions
all orderings so no node ever re-sorts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..data import FeatureMatrix
from ._common import check_dims, require_both_classes

NO_LIMIT = -1


@dataclass(frozen=True)
class RfcParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    features_per_split: int | None = None  # None means ceil(sqrt(n_features))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")

    def resolve_features(self, n_features: int) -> int:
        if self.features_per_split is None:
            return max(1, math.ceil(math.sqrt(n_features)))
        return min(self.features_per_split, n_features)


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


@njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@njit(cache=True)
def _grow(X, y, w, order, max_features, max_depth, min_split):
    n_features = X.shape[1]
    m = order.shape[1]
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap, dtype=np.int64)
    weight = np.zeros((cap, 2))
    importance = np.zeros(n_features)

    goes_left = np.zeros(X.shape[0], dtype=np.bool_)
    scratch = np.empty(m, dtype=np.int64)
    perm = np.arange(n_features)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    stack_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]

        w0 = 0.0
        w1 = 0.0
        for i in range(start, end):
            r = order[0, i]
            if y[r] == 1:
                w1 += w[r]
            else:
                w0 += w[r]
        total = w0 + w1
        weight[node, 0] = w0
        weight[node, 1] = w1
        value[node] = 1 if w1 > w0 else 0
        if w0 == 0.0 or w1 == 0.0 or total < min_split:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        parent_score = (w0 * w0 + w1 * w1) / total
        eps = 1e-12 * total
        best_gain = -1.0
        best_f = -1
        best_pos = -1
        best_thr = 0.0

        # Draw features without replacement until enough non-constant ones were scanned.
        for i in range(n_features):
            perm[i] = i
        visited = 0
        for i in range(n_features):
            if visited >= max_features:
                break
            j = i + np.random.randint(n_features - i)
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
            f = perm[i]
            if X[order[f, start], f] >= X[order[f, end - 1], f]:
                continue
            visited += 1
            l0 = 0.0
            l1 = 0.0
            for pos in range(start, end - 1):
                r = order[f, pos]
                if y[r] == 1:
                    l1 += w[r]
                else:
                    l0 += w[r]
                a = X[r, f]
                b = X[order[f, pos + 1], f]
                if a >= b:
                    continue
                wl = l0 + l1
                r0 = w0 - l0
                r1 = w1 - l1
                wr = r0 + r1
                score = (l0 * l0 + l1 * l1) / wl + (r0 * r0 + r1 * r1) / wr
                gain = score - parent_score
                better = gain > best_gain + eps
                if not better and gain >= best_gain - eps:
                    # Equal gains: lower feature index, then lower threshold.
                    better = f < best_f or (f == best_f and pos < best_pos)
                if better:
                    best_gain = gain
                    best_f = f
                    best_pos = pos
                    thr = 0.5 * (a + b)
                    if thr >= b:
                        thr = a
                    best_thr = thr

        if best_f < 0:
            continue

        for i in range(start, end):
            r = order[best_f, i]
            goes_left[r] = X[r, best_f] <= best_thr
        n_left = 0
        for f in range(n_features):
            k = 0
            for i in range(start, end):
                r = order[f, i]
                if goes_left[r]:
                    scratch[k] = r
                    k += 1
            n_left = k
            for i in range(start, end):
                r = order[f, i]
                if not goes_left[r]:
                    scratch[k] = r
                    k += 1
            for i in range(end - start):
                order[f, start + i] = scratch[i]

        # Impurity decrease, weighted by node size.
        importance[best_f] += max(best_gain, 0.0)
        feature[node] = best_f
        threshold[node] = best_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        stack_node[top] = rc
        stack_start[top] = start + n_left
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = lc
        stack_start[top] = start
        stack_end[top] = start + n_left
        stack_depth[top] = depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        weight[:n_nodes].copy(),
        importance,
    )


@njit(cache=True)
def _apply(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@dataclass(frozen=True)
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray = field(repr=False)
    importance: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, values) -> np.ndarray:
        X = np.ascontiguousarray(np.asarray(values, dtype=float))
        return _apply(self.feature, self.threshold, self.left, self.right, self.value, X)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> DecisionTree:
        n = len(data["feature"])
        return cls(
            np.asarray(data["feature"], dtype=np.int64),
            np.asarray(data["threshold"], dtype=float),
            np.asarray(data["left"], dtype=np.int64),
            np.asarray(data["right"], dtype=np.int64),
            np.asarray(data["value"], dtype=np.int64),
            np.zeros((n, 2)),
            np.zeros(0),
        )


def _fit_weighted(X, y, w, max_features, max_depth, min_split, seed) -> DecisionTree:
    active = np.flatnonzero(w > 0)
    order = np.empty((X.shape[1], len(active)), dtype=np.int64)
    for f in range(X.shape[1]):
        order[f] = active[np.argsort(X[active, f], kind="stable")]
    _seed(seed)
    parts = _grow(
        np.ascontiguousarray(X), y, w.astype(float), order, max_features,
        NO_LIMIT if max_depth is None else max_depth, float(min_split),
    )
    return DecisionTree(*parts)


def _tree_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def tree_fit(matrix: FeatureMatrix, params: RfcParams | None = None, rng=None) -> DecisionTree:
    """Greedy Gini tree on all rows (no bootstrap).

    Each node scans a random subset of ``features_per_split`` non-constant
    features; equal gains resolve to the lower feature index and then the
    lower threshold.
    """
    params = params or RfcParams()
    if matrix.rows == 0:
        raise ValueError("cannot fit a tree on an empty matrix")
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    return _fit_weighted(
        matrix.values, matrix.labels, np.ones(matrix.rows),
        params.resolve_features(matrix.n_features), params.max_depth,
        params.min_samples_split, _tree_seed(rng),
    )


def tree_predict(tree: DecisionTree, x) -> int:
    return int(tree.predict(np.atleast_2d(np.asarray(x, dtype=float)))[0])


@dataclass(frozen=True)
class RfcModel:
    params: RfcParams
    trees: list[DecisionTree]
    importances: np.ndarray

    kind = "RFC"

    @property
    def n_features(self) -> int:
        return len(self.importances)

    def votes(self, values) -> np.ndarray:
        X = check_dims(values, self.n_features)
        return np.sum([t.predict(X) for t in self.trees], axis=0)

    def predict(self, values) -> np.ndarray:
        # Majority of trees; a split vote goes to class 0.
        return (2 * self.votes(values) > len(self.trees)).astype(np.int64)

    def hyperparams(self) -> dict:
        p = self.params
        return {
            "n_trees": p.n_trees,
            "max_depth": p.max_depth,
            "min_samples_split": p.min_samples_split,
            "features_per_split": p.features_per_split,
            "bootstrap": p.bootstrap,
            "seed": p.seed,
        }

    def parameters(self) -> dict:
        return {
            "importances": self.importances.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_parameters(cls, hyperparams: dict, params: dict) -> RfcModel:
        return cls(
            RfcParams(**hyperparams),
            [DecisionTree.from_dict(t) for t in params["trees"]],
            np.asarray(params["importances"], dtype=float),
        )


def rfc_fit(matrix: FeatureMatrix, params: RfcParams | None = None) -> RfcModel:
    """Bootstrap forest; importances are total Gini decrease normalised to 1."""
    params = params or RfcParams()
    require_both_classes(matrix)
    rng = np.random.default_rng(params.seed)
    n = matrix.rows
    max_features = params.resolve_features(matrix.n_features)
    trees = []
    total = np.zeros(matrix.n_features)
    for _ in range(params.n_trees):
        if params.bootstrap:
            w = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
        else:
            w = np.ones(n)
        tree = _fit_weighted(
            matrix.values, matrix.labels, w, max_features, params.max_depth,
            params.min_samples_split, _tree_seed(rng),
        )
        trees.append(tree)
        total += tree.importance
    s = total.sum()
    importances = total / s if s > 0 else total
    return RfcModel(params, trees, importances)


def rfc_predict(model: RfcModel, x) -> int:
    return int(model.predict(np.atleast_2d(np.asarray(x, dtype=float)))[0])
