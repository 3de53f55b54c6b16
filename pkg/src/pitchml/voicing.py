"""Frame-wise voiced/unvoiced classification."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .features import FEATURE_NAMES
from .ml import (
    Standardizer, fit_gmm, fit_kmeans, fit_logreg, fit_mlp, knn_predict, model_from_dict,
    model_to_dict, standardize_fit,
)
from .ml.knn import KnnModel

log = logging.getLogger(__name__)

UNSUPERVISED = ("kmeans", "gmm")
SUPERVISED = ("logreg", "knn", "mlp")
SSH_COLUMN = FEATURE_NAMES.index("ssh")
N_FEATURES = len(FEATURE_NAMES)


def stack_context(features, radius: int) -> np.ndarray:
    """Concatenate each frame with its ``radius`` neighbours on both sides.

    Rows past the edges are filled by repeating the first / last frame.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if radius < 0:
        raise ValueError("radius must be >= 0")
    n = len(features)
    idx = np.clip(np.arange(n)[:, None] + np.arange(-radius, radius + 1)[None, :], 0, n - 1)
    return features[idx].reshape(n, -1)


@dataclass
class VoicingModel:
    kind: str
    radius: int
    model: object
    standardizer: Standardizer
    voiced_cluster: int | None = None
    threshold: float = 0.5
    meta: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return N_FEATURES * (2 * self.radius + 1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "radius": self.radius, "threshold": self.threshold,
            "voiced_cluster": self.voiced_cluster, "standardizer": model_to_dict(self.standardizer),
            "model": model_to_dict(self.model), "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VoicingModel":
        return cls(d["kind"], int(d["radius"]), model_from_dict(d["model"]),
                   model_from_dict(d["standardizer"]), d.get("voiced_cluster"),
                   float(d.get("threshold", 0.5)), dict(d.get("meta", {})))


def _prepare(features, standardizer, radius):
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} feature columns, got {features.shape[1]}")
    return stack_context(standardizer.apply(features), radius)


def _split_by_utterance(features):
    """Accept one (n, 16) matrix or a list of per-utterance matrices."""
    if isinstance(features, (list, tuple)):
        return [np.atleast_2d(np.asarray(f, dtype=np.float64)) for f in features]
    return [np.atleast_2d(np.asarray(features, dtype=np.float64))]


def _stack_all(parts, standardizer, radius):
    return np.concatenate([_prepare(p, standardizer, radius) for p in parts])


def fit_voicing_unsupervised(features, kind: str = "kmeans", radius: int = 1, seed: int = 0,
                             min_separation: float = 2.0) -> VoicingModel:
    """Two-cluster model; the cluster with the higher mean SSH is declared voiced.

    ``features`` is a (n_frames, 16) matrix or a list of them (one per
    utterance, so that context never spans two files). ``meta['separation']``
    is the gap between the cluster SSH means in pooled within-cluster
    standard deviations; below ``min_separation`` the model is flagged.
    """
    if kind not in UNSUPERVISED:
        raise ValueError(f"unsupervised kind must be one of {UNSUPERVISED}")
    parts = _split_by_utterance(features)
    raw = np.concatenate(parts)
    if len(raw) < 4:
        raise ValueError("need at least 4 frames")
    std = standardize_fit(raw)
    data = _stack_all(parts, std, radius)
    model = fit_kmeans(data, 2, seed) if kind == "kmeans" else fit_gmm(data, 2, seed)
    labels = model.predict(data)
    ssh = raw[:, SSH_COLUMN]
    means = np.array([ssh[labels == c].mean() if np.any(labels == c) else -np.inf for c in (0, 1)])
    voiced = int(np.argmax(means))
    within = np.concatenate([ssh[labels == c] - ssh[labels == c].mean() for c in (0, 1) if np.any(labels == c)])
    spread = np.sqrt(np.mean(within ** 2))
    separation = float(abs(means[0] - means[1]) / spread) if np.all(np.isfinite(means)) and spread > 0 else 0.0
    low = separation < min_separation
    if low:
        log.warning("voicing clusters poorly separated on SSH (%.2f pooled std)", separation)
    meta = {"separation": separation, "low_separation": bool(low), "cluster_ssh_means": means.tolist()}
    return VoicingModel(kind, radius, model, std, voiced_cluster=voiced, meta=meta)


def fit_voicing_supervised(features, labels, kind: str = "mlp", radius: int = 1, seed: int = 0,
                           threshold: float = 0.5, l2_lambda: float = 1e-3, knn_k: int = 5,
                           mlp_options: dict | None = None) -> VoicingModel:
    """Standardize, stack context and fit a binary classifier on frame labels."""
    if kind not in SUPERVISED:
        raise ValueError(f"supervised kind must be one of {SUPERVISED}")
    parts = _split_by_utterance(features)
    lab_parts = labels if isinstance(labels, (list, tuple)) else [labels]
    y = np.concatenate([np.asarray(l).astype(bool) for l in lab_parts]).astype(int)
    raw = np.concatenate(parts)
    if len(y) != len(raw):
        raise ValueError(f"{len(y)} labels for {len(raw)} frames")
    if y.min() == y.max():
        raise ValueError("labels contain a single class")
    std = standardize_fit(raw)
    data = _stack_all(parts, std, radius)
    if kind == "logreg":
        model = fit_logreg(data, y, l2_lambda=l2_lambda)
    elif kind == "knn":
        model = KnnModel(data, y, knn_k)
    else:
        model = fit_mlp(data, y, head="sigmoid", seed=seed, **(mlp_options or {}))
    return VoicingModel(kind, radius, model, std, threshold=threshold)


def predict_voicing(model: VoicingModel, features) -> np.ndarray:
    """Boolean voiced flag per frame."""
    data = _prepare(features, model.standardizer, model.radius)
    if model.kind in UNSUPERVISED:
        return model.model.predict(data) == model.voiced_cluster
    if model.kind == "logreg":
        return model.model.predict_proba(data) > model.threshold
    if model.kind == "knn":
        return knn_predict(model.model, data).astype(bool)
    return model.model.predict_output(data) > model.threshold
