"""K-nearest-neighbours with uniform weights and Minkowski distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..data import FeatureMatrix
from ._common import check_dims

_CHUNK = 256
_EXTRA = 4


@dataclass(frozen=True)
class KnnParams:
    k: int = 5
    p: float = 2.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.p < 1:
            raise ValueError("Minkowski power must be >= 1")


@dataclass(frozen=True)
class KnnModel:
    params: KnnParams
    values: np.ndarray
    labels: np.ndarray

    kind = "KNN"

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def _distances(self, Q: np.ndarray, candidates: np.ndarray | None = None) -> np.ndarray:
        """Distances from each query to all training rows, or to its own candidate rows."""
        if candidates is None:
            diff = np.abs(Q[:, None, :] - self.values[None, :, :])
        else:
            diff = np.abs(Q[:, None, :] - self.values[candidates])
        if self.params.p == 2.0:
            # Squared distances preserve the neighbour order and stay exact on integer grids.
            return (diff * diff).sum(axis=2)
        return (diff**self.params.p).sum(axis=2)

    def _brute_neighbors(self, Q: np.ndarray) -> np.ndarray:
        k = self.params.k
        out = np.empty((Q.shape[0], k), dtype=np.int64)
        for start in range(0, Q.shape[0], _CHUNK):
            d = self._distances(Q[start : start + _CHUNK])
            out[start : start + _CHUNK] = np.argsort(d, axis=1, kind="stable")[:, :k]
        return out

    def neighbors(self, values) -> np.ndarray:
        """Indices of the k nearest training rows; equal distances go to the lower index.

        A k-d tree proposes a few extra candidates per query, which are then
        ranked by exact distance. Queries whose k-th and (k+1)-th candidates
        are not clearly separated fall back to an exhaustive scan.
        """
        Q = check_dims(values, self.n_features)
        k = self.params.k
        n = self.values.shape[0]
        m = min(n, k + _EXTRA)
        if m == n:
            return self._brute_neighbors(Q)
        _, cand = self._tree().query(Q, k=m, p=self.params.p)
        cand = np.sort(np.asarray(cand, dtype=np.int64).reshape(len(Q), m), axis=1)
        d = self._distances(Q, cand)
        # Stable sort of index-sorted candidates ranks by (distance, index).
        rank = np.argsort(d, axis=1, kind="stable")
        cand = np.take_along_axis(cand, rank, axis=1)
        d = np.take_along_axis(d, rank, axis=1)
        out = cand[:, :k].copy()
        kth, nxt = d[:, k - 1], d[:, k]
        unclear = nxt <= kth * (1.0 + 1e-9) + 1e-300
        if np.any(unclear):
            out[unclear] = self._brute_neighbors(Q[unclear])
        return out

    def _tree(self):
        tree = self.__dict__.get("_kdtree")
        if tree is None:
            tree = cKDTree(self.values)
            object.__setattr__(self, "_kdtree", tree)
        return tree

    def predict(self, values) -> np.ndarray:
        votes = self.labels[self.neighbors(values)].sum(axis=1)
        # Uniform majority; an even split goes to class 0.
        return (2 * votes > self.params.k).astype(np.int64)

    def hyperparams(self) -> dict:
        return {"k": self.params.k, "p": self.params.p}

    def parameters(self) -> dict:
        return {"values": self.values.tolist(), "labels": self.labels.tolist()}

    @classmethod
    def from_parameters(cls, hyperparams: dict, params: dict) -> KnnModel:
        return cls(
            KnnParams(int(hyperparams["k"]), float(hyperparams["p"])),
            np.asarray(params["values"], dtype=float).reshape(len(params["labels"]), -1),
            np.asarray(params["labels"], dtype=np.int64),
        )


def knn_fit(train: FeatureMatrix, params: KnnParams | None = None) -> KnnModel:
    params = params or KnnParams()
    if train.rows < params.k:
        raise ValueError(f"need at least k={params.k} training rows, got {train.rows}")
    return KnnModel(params, train.values.copy(), train.labels.copy())


def knn_predict(train: FeatureMatrix, params: KnnParams, x) -> int:
    return int(knn_fit(train, params).predict(np.atleast_2d(np.asarray(x, dtype=float)))[0])
