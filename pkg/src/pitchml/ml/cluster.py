"""K-means (k-means++ seeding, Lloyd iterations) and diagonal-covariance GMM trained by EM."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-6


class VarianceCollapseError(ValueError):
    """Raised when the data has no spread at all and a Gaussian cannot be fit."""


def _sqdist(data, centers):
    d = (data * data).sum(1)[:, None] - 2.0 * data @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


@dataclass
class KMeansModel:
    centroids: np.ndarray
    inertia: float = 0.0
    n_iter: int = 0
    degenerate: bool = False
    history: list = field(default_factory=list, repr=False)

    @property
    def k(self) -> int:
        return len(self.centroids)

    def predict(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=np.float64)
        if data.shape[-1] != self.centroids.shape[1]:
            raise ValueError(f"expected {self.centroids.shape[1]} columns, got {data.shape[-1]}")
        return np.argmin(_sqdist(np.atleast_2d(data), self.centroids), axis=1)


def _kmeanspp(data, k, rng):
    n = len(data)
    centers = [data[rng.integers(n)]]
    d2 = _sqdist(data, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(data[idx])
        d2 = np.minimum(d2, _sqdist(data, data[idx][None, :])[:, 0])
    return np.array(centers)


def _lloyd(data, centers, max_iter, tol):
    history = []
    labels = None
    for it in range(1, max_iter + 1):
        d2 = _sqdist(data, centers)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(data)), labels].sum()))
        new = centers.copy()
        for j in range(len(centers)):
            members = labels == j
            if np.any(members):
                new[j] = data[members].mean(axis=0)
        shift = np.max(np.linalg.norm(new - centers, axis=1))
        centers = new
        if shift < tol:
            break
    d2 = _sqdist(data, centers)
    labels = np.argmin(d2, axis=1)
    # direct residuals: the expanded form leaves rounding residue when points sit on centroids
    inertia = float(np.sum((data - centers[labels]) ** 2))
    history.append(inertia)
    return centers, labels, inertia, it, history


def fit_kmeans(data, k: int = 2, seed: int = 0, n_init: int = 10, max_iter: int = 300,
               tol: float = 1e-6) -> KMeansModel:
    """Best of ``n_init`` seeded k-means++ restarts, ranked by within-cluster sum of squares."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("data must be 2-D")
    if len(data) < k:
        raise ValueError(f"need at least k={k} points, got {len(data)}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers, _, inertia, n_iter, history = _lloyd(data, _kmeanspp(data, k, rng), max_iter, tol)
        if best is None or inertia < best.inertia:
            best = KMeansModel(centers, inertia, n_iter, history=history)
    if len(np.unique(best.centroids, axis=0)) < k:
        best.degenerate = True
        log.warning("k-means produced duplicate centroids (degenerate data)")
    return best


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    n_iter: int = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def k(self) -> int:
        return len(self.weights)

    def _joint_log(self, data):
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if data.shape[1] != self.means.shape[1]:
            raise ValueError(f"expected {self.means.shape[1]} columns, got {data.shape[1]}")
        inv = 1.0 / self.variances
        quad = ((data * data) @ inv.T - 2.0 * data @ (self.means * inv).T
                + (self.means * self.means * inv).sum(1)[None, :])
        logdet = np.log(self.variances).sum(1)
        d = data.shape[1]
        return np.log(self.weights)[None, :] - 0.5 * (quad + logdet[None, :] + d * np.log(2 * np.pi))

    def responsibilities(self, data) -> np.ndarray:
        jl = self._joint_log(data)
        return np.exp(jl - logsumexp(jl, axis=1, keepdims=True))

    def log_likelihood(self, data) -> float:
        """Mean per-sample log-likelihood."""
        return float(logsumexp(self._joint_log(data), axis=1).mean())

    def predict(self, data) -> np.ndarray:
        return np.argmax(self._joint_log(data), axis=1)


def _m_step(data, resp):
    nk = resp.sum(axis=0) + 1e-300
    weights = nk / nk.sum()
    means = (resp.T @ data) / nk[:, None]
    var = (resp.T @ (data * data)) / nk[:, None] - means * means
    return weights, means, np.maximum(var, VAR_FLOOR)


def fit_gmm(data, k: int = 2, seed: int = 0, max_iter: int = 200, tol: float = 1e-6) -> GmmModel:
    """Diagonal GMM initialised from a k-means partition, refined by EM.

    Stops when the mean log-likelihood gains less than ``tol``. The
    per-iteration log-likelihoods are kept in ``history``.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("data must be 2-D")
    if len(data) < 2 * k:
        raise ValueError(f"need at least {2 * k} points, got {len(data)}")
    if np.all(data == data[0]):
        raise VarianceCollapseError("all points are identical: component variances collapse to zero")

    km = fit_kmeans(data, k, seed)
    labels = km.predict(data)
    resp = np.zeros((len(data), k))
    resp[np.arange(len(data)), labels] = 1.0
    model = GmmModel(*_m_step(data, resp))
    history = [model.log_likelihood(data)]
    for it in range(1, max_iter + 1):
        resp = model.responsibilities(data)
        model = GmmModel(*_m_step(data, resp))
        history.append(model.log_likelihood(data))
        if history[-1] - history[-2] < tol:
            break
    model.n_iter = it
    model.history = history
    return model
