"""JSON-compatible dicts for every learner, tagged by kind."""
from __future__ import annotations

import numpy as np

from .cluster import GmmModel, KMeansModel
from .knn import KnnModel
from .linear import LinRegModel, LogRegModel
from .mlp import MlpModel
from .standardize import Standardizer

FORMAT_VERSION = 1


def _arr(a):
    return np.asarray(a, dtype=np.float64).tolist()


def model_to_dict(model) -> dict:
    return {**_body(model), "format_version": FORMAT_VERSION}


def _body(model) -> dict:
    if isinstance(model, Standardizer):
        return {"kind": "standardizer", "mean": _arr(model.mean), "std": _arr(model.std)}
    if isinstance(model, KMeansModel):
        return {"kind": "kmeans", "centroids": _arr(model.centroids)}
    if isinstance(model, GmmModel):
        return {"kind": "gmm", "weights": _arr(model.weights), "means": _arr(model.means),
                "variances": _arr(model.variances)}
    if isinstance(model, LogRegModel):
        return {"kind": "logreg", "weights": _arr(model.weights), "bias": float(model.bias),
                "l2_lambda": float(model.l2_lambda)}
    if isinstance(model, LinRegModel):
        return {"kind": "linreg", "coef": _arr(model.coef), "intercept": float(model.intercept)}
    if isinstance(model, KnnModel):
        return {"kind": "knn", "k": int(model.k), "data": _arr(model.data),
                "targets": np.asarray(model.targets).tolist()}
    if isinstance(model, MlpModel):
        return {"kind": "mlp", "sizes": list(model.sizes), "head": model.head,
                "weights": [_arr(w) for w in model.weights], "biases": [_arr(b) for b in model.biases]}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    version = d.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ValueError(f"model format version {version} is not supported (expected {FORMAT_VERSION})")
    kind = d.get("kind")
    a = np.asarray
    if kind == "standardizer":
        return Standardizer(a(d["mean"], float), a(d["std"], float))
    if kind == "kmeans":
        return KMeansModel(a(d["centroids"], float))
    if kind == "gmm":
        return GmmModel(a(d["weights"], float), a(d["means"], float), a(d["variances"], float))
    if kind == "logreg":
        return LogRegModel(a(d["weights"], float), float(d["bias"]), float(d["l2_lambda"]))
    if kind == "linreg":
        return LinRegModel(a(d["coef"], float), float(d["intercept"]))
    if kind == "knn":
        return KnnModel(a(d["data"], float), a(d["targets"]), int(d["k"]))
    if kind == "mlp":
        return MlpModel(list(d["sizes"]), d["head"], [a(w, float) for w in d["weights"]],
                        [a(b, float) for b in d["biases"]])
    raise ValueError(f"unknown model kind {kind!r}")
