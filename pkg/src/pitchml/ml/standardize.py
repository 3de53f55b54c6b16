from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.mean)

    def apply(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=np.float64)
        if data.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} columns, got {data.shape[-1]}")
        return (data - self.mean) / self.std

    def inverse(self, data) -> np.ndarray:
        return np.asarray(data, dtype=np.float64) * self.std + self.mean


def standardize_fit(data) -> Standardizer:
    """Per-column z-scoring statistics; near-constant columns get std 1e-8."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or len(data) == 0:
        raise ValueError("need a non-empty 2-D array")
    mean = data.mean(axis=0)
    const = np.all(data == data[0], axis=0)
    mean[const] = data[0, const]
    std = np.maximum(data.std(axis=0), STD_FLOOR)
    return Standardizer(mean, std)


def standardize_apply(model: Standardizer, data) -> np.ndarray:
    return model.apply(data)
