from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_QUERY_CHUNK = 128
_SLACK = 8


@dataclass
class KnnModel:
    """Stored training set. ``targets`` are class labels or regression values."""
    data: np.ndarray
    targets: np.ndarray
    k: int = 5

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        self.targets = np.asarray(self.targets)
        if len(self.data) == 0:
            raise ValueError("empty training set")
        if len(self.data) != len(self.targets):
            raise ValueError("data and targets are not aligned")
        if self.k < 1:
            raise ValueError("k must be positive")

    def neighbors(self, query) -> np.ndarray:
        """Indices of the k nearest training rows, nearest first; ties go to the lower index."""
        q = np.atleast_2d(np.asarray(query, dtype=np.float64))
        if q.shape[1] != self.data.shape[1]:
            raise ValueError(f"expected {self.data.shape[1]} columns, got {q.shape[1]}")
        k = min(self.k, len(self.data))
        m = min(k + _SLACK, len(self.data))
        sq = (self.data * self.data).sum(1)
        out = np.empty((len(q), k), dtype=np.int64)
        for c0 in range(0, len(q), _QUERY_CHUNK):
            block = q[c0:c0 + _QUERY_CHUNK]
            approx = sq[None, :] - 2.0 * block @ self.data.T
            cand = np.argpartition(approx, m - 1, axis=1)[:, :m] if m < len(self.data) else \
                np.broadcast_to(np.arange(len(self.data)), (len(block), len(self.data)))
            # exact distances on the shortlist, so equal distances compare equal
            exact = ((self.data[cand] - block[:, None, :]) ** 2).sum(-1)
            order = np.lexsort((cand, exact), axis=1)
            out[c0:c0 + len(block)] = np.take_along_axis(cand, order, axis=1)[:, :k]
        return out


def knn_predict(model: KnnModel, query) -> np.ndarray:
    """Majority label among the k nearest neighbours (Euclidean)."""
    idx = model.neighbors(query)
    votes = model.targets[idx]
    labels = np.unique(model.targets)
    counts = np.stack([(votes == lab).sum(1) for lab in labels], axis=1)
    # ties in the vote go to the label of the nearest neighbour
    best = counts.max(1, keepdims=True)
    tied = counts == best
    nearest = votes[:, 0]
    winner = np.where(tied.sum(1) > 1, nearest, labels[np.argmax(counts, axis=1)])
    return winner


def knn_regress(model: KnnModel, query) -> np.ndarray:
    """Mean target of the k nearest neighbours."""
    return model.targets[model.neighbors(query)].astype(np.float64).mean(axis=1)
