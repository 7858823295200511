"""The five occupancy classifiers behind one fit/predict contract."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np

from ..data import FeatureMatrix, Standardizer
from .forest import DecisionTree, RfcModel, RfcParams, gini, rfc_fit, rfc_predict, tree_fit, tree_predict
from .gnb import GnbModel, gnb_fit, gnb_posterior, gnb_predict
from .knn import KnnModel, KnnParams, knn_fit, knn_predict
from .lgr import LgrModel, LgrParams, lgr_fit, lgr_gradient, lgr_objective, lgr_predict
from .svm import SvmModel, SvmParams, auto_gamma, rbf_kernel, svm_fit, svm_predict
from ._common import SingleClassError

MODEL_KINDS = ("SVM", "GNB", "LGR", "RFC", "KNN")
SCHEMA_VERSION = 1

Model = Union[SvmModel, GnbModel, LgrModel, RfcModel, KnnModel]

_MODEL_TYPES = {
    "SVM": SvmModel,
    "GNB": GnbModel,
    "LGR": LgrModel,
    "RFC": RfcModel,
    "KNN": KnnModel,
}


@dataclass(frozen=True)
class ModelSpec:
    """A model kind plus hyperparameter overrides.

    ``params`` keys follow the per-kind parameter dataclasses. Seeds are not
    part of the spec; they are supplied at fit time.
    """

    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        # Validate eagerly so bad specs fail before any fitting.
        self._build_params(seed=0)

    def _build_params(self, seed: int):
        p = dict(self.params)
        if self.kind == "SVM":
            return SvmParams(**{"seed": seed, **p})
        if self.kind == "RFC":
            return RfcParams(**{"seed": seed, **p})
        if self.kind == "LGR":
            return LgrParams(**p)
        if self.kind == "KNN":
            return KnnParams(**p)
        return p

    def with_params(self, **updates) -> ModelSpec:
        return ModelSpec(self.kind, {**self.params, **updates})

    def fit(self, matrix: FeatureMatrix, seed: int = 0) -> Model:
        params = self._build_params(seed)
        if self.kind == "SVM":
            return svm_fit(matrix, params)
        if self.kind == "GNB":
            return gnb_fit(matrix, **params)
        if self.kind == "LGR":
            return lgr_fit(matrix, params=params)
        if self.kind == "RFC":
            return rfc_fit(matrix, params)
        return knn_fit(matrix, params)


def default_specs() -> list[ModelSpec]:
    return [ModelSpec(kind) for kind in MODEL_KINDS]


@dataclass(frozen=True)
class TrainedModel:
    """A fitted classifier with the feature set and scaling it expects."""

    model: Model
    features: tuple[str, ...]
    standardizer: Standardizer

    @property
    def kind(self) -> str:
        return self.model.kind

    def predict(self, matrix: FeatureMatrix | np.ndarray) -> np.ndarray:
        if isinstance(matrix, FeatureMatrix):
            if matrix.features != self.features:
                raise ValueError(f"model expects features {self.features}, got {matrix.features}")
            values = matrix.values
        else:
            values = matrix
        return self.model.predict(self.standardizer.transform(values))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "hyperparams": self.model.hyperparams(),
            "parameters": {
                "feature_set": list(self.features),
                "standardizer": self.standardizer.to_dict(),
                **self.model.parameters(),
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> TrainedModel:
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema_version {doc.get('schema_version')!r}")
        kind = doc["kind"]
        if kind not in _MODEL_TYPES:
            raise ValueError(f"unknown model kind {kind!r}")
        params = dict(doc["parameters"])
        features = tuple(params.pop("feature_set"))
        standardizer = Standardizer.from_dict(params.pop("standardizer"))
        model = _MODEL_TYPES[kind].from_parameters(doc["hyperparams"], params)
        return cls(model, features, standardizer)


def save_model(trained: TrainedModel, path: str | Path):
    # json writes floats with repr(), which round-trips float64 exactly.
    Path(path).write_text(json.dumps(trained.to_dict(), indent=1) + "\n")


def load_model(path: str | Path) -> TrainedModel:
    return TrainedModel.from_dict(json.loads(Path(path).read_text()))


__all__ = [
    "MODEL_KINDS",
    "DecisionTree",
    "GnbModel",
    "KnnModel",
    "KnnParams",
    "LgrModel",
    "LgrParams",
    "Model",
    "ModelSpec",
    "RfcModel",
    "RfcParams",
    "SingleClassError",
    "SvmModel",
    "SvmParams",
    "TrainedModel",
    "auto_gamma",
    "default_specs",
    "gini",
    "gnb_fit",
    "gnb_posterior",
    "gnb_predict",
    "knn_fit",
    "knn_predict",
    "lgr_fit",
    "lgr_gradient",
    "lgr_objective",
    "lgr_predict",
    "load_model",
    "rbf_kernel",
    "rfc_fit",
    "rfc_predict",
    "save_model",
    "svm_fit",
    "svm_predict",
    "tree_fit",
    "tree_predict",
]
