from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    l2_lambda: float
    n_iter: int = 0
    grad_norm: float = np.nan

    def decision(self, data) -> np.ndarray:
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if data.shape[1] != len(self.weights):
            raise ValueError(f"expected {len(self.weights)} columns, got {data.shape[1]}")
        return data @ self.weights + self.bias

    def predict_proba(self, data) -> np.ndarray:
        return expit(self.decision(data))

    def predict(self, data) -> np.ndarray:
        return self.decision(data) > 0


def logreg_objective(w, b, data, y, l2_lambda):
    """Mean cross-entropy + lambda/2 |w|^2, with its gradient (bias unpenalised)."""
    z = data @ w + b
    loss = -np.mean(y * log_expit(z) + (1 - y) * log_expit(-z)) + 0.5 * l2_lambda * (w @ w)
    r = (expit(z) - y) / len(y)
    return loss, data.T @ r + l2_lambda * w, r.sum()


def fit_logreg(data, labels, l2_lambda: float = 1e-3, tol: float = 1e-6, max_iter: int = 5000,
               init=None) -> LogRegModel:
    """L2-regularised logistic regression by full-batch gradient descent.

    Each step starts from a Barzilai-Borwein step length and backtracks
    (Armijo) until the objective decreases sufficiently.
    """
    data = np.asarray(data, dtype=np.float64)
    y = np.asarray(labels).astype(np.float64)
    if data.ndim != 2 or len(data) != len(y):
        raise ValueError("data must be 2-D and aligned with labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    if y.min() == y.max():
        raise ValueError("labels contain a single class")

    d = data.shape[1]
    theta = np.zeros(d + 1) if init is None else np.asarray(init, dtype=np.float64).copy()

    def f(t):
        loss, gw, gb = logreg_objective(t[:d], t[d], data, y, l2_lambda)
        return loss, np.append(gw, gb)

    loss, g = f(theta)
    step = 1.0
    prev_theta = prev_g = None
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = np.linalg.norm(g)
        if gnorm < tol:
            it -= 1
            break
        if prev_theta is not None:
            s, dg = theta - prev_theta, g - prev_g
            sy = s @ dg
            if sy > 0:
                step = (s @ s) / sy
        while True:
            cand = theta - step * g
            c_loss, c_g = f(cand)
            if c_loss <= loss - 1e-4 * step * gnorm ** 2 or step < 1e-20:
                break
            step *= 0.5
        prev_theta, prev_g = theta, g
        theta, loss, g = cand, c_loss, c_g
    return LogRegModel(theta[:d], float(theta[d]), l2_lambda, it, float(np.linalg.norm(g)))


@dataclass
class LinRegModel:
    coef: np.ndarray
    intercept: float

    def predict(self, data) -> np.ndarray:
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if data.shape[1] != len(self.coef):
            raise ValueError(f"expected {len(self.coef)} columns, got {data.shape[1]}")
        return data @ self.coef + self.intercept


def fit_linreg(data, targets) -> LinRegModel:
    """Ordinary least squares with an intercept."""
    data = np.asarray(data, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    design = np.column_stack([data, np.ones(len(data))])
    sol, *_ = np.linalg.lstsq(design, t, rcond=None)
    return LinRegModel(sol[:-1], float(sol[-1]))
