"""Feed-forward network with rectifier hidden layers, trained by momentum SGD."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit, log_softmax, softmax

log = logging.getLogger(__name__)

HEADS = ("sigmoid", "softmax", "linear")
HIDDEN = (20, 10)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class MlpModel:
    sizes: list
    head: str
    weights: list
    biases: list
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")

    @classmethod
    def init(cls, n_in: int, n_out: int, head: str, hidden=HIDDEN, seed: int = 0) -> "MlpModel":
        """Uniform weights in +-1/sqrt(fan_in), zero biases."""
        rng = np.random.default_rng(seed)
        sizes = [int(n_in), *map(int, hidden), int(n_out)]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(sizes, head, weights, biases)

    def _forward(self, data):
        acts = [data]
        h = data
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == len(self.weights) - 1 else np.maximum(z, 0.0)
            acts.append(h)
        return acts

    def logits(self, data) -> np.ndarray:
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if data.shape[1] != self.sizes[0]:
            raise ValueError(f"expected {self.sizes[0]} columns, got {data.shape[1]}")
        return self._forward(data)[-1]

    def predict_output(self, data) -> np.ndarray:
        """Head output: probabilities (sigmoid/softmax) or regression values (linear)."""
        z = self.logits(data)
        if self.head == "sigmoid":
            return expit(z[:, 0])
        if self.head == "softmax":
            return softmax(z, axis=1)
        return z[:, 0] if z.shape[1] == 1 else z

    def loss(self, data, targets) -> float:
        return _loss(self.head, self.logits(data), _prep_targets(self.head, targets, self.sizes[-1]))

    def loss_and_grads(self, data, targets):
        """Mean loss and gradients w.r.t. (weights, biases), by backpropagation."""
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        t = _prep_targets(self.head, targets, self.sizes[-1])
        acts = self._forward(data)
        z = acts[-1]
        n = len(data)
        if self.head == "sigmoid":
            delta = (expit(z) - t) / n
        elif self.head == "softmax":
            delta = (softmax(z, axis=1) - t) / n
        else:
            delta = 2.0 * (z - t) / (n * z.shape[1])
        gw, gb = [None] * len(self.weights), [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            gw[i] = acts[i].T @ delta
            gb[i] = delta.sum(0)
            if i:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        return _loss(self.head, z, t), gw, gb


def _prep_targets(head, targets, n_out):
    t = np.asarray(targets)
    if head == "softmax":
        if t.ndim == 1:
            onehot = np.zeros((len(t), n_out))
            onehot[np.arange(len(t)), t.astype(int)] = 1.0
            return onehot
        return t.astype(np.float64)
    t = t.astype(np.float64)
    return t.reshape(len(t), -1)


def _loss(head, z, t):
    if head == "sigmoid":
        return float(-np.mean(t * log_expit(z) + (1 - t) * log_expit(-z)))
    if head == "softmax":
        return float(-np.mean((t * log_softmax(z, axis=1)).sum(1)))
    return float(np.mean((z - t) ** 2))


def fit_mlp(data, targets, head: str = "sigmoid", lr: float = 1e-2, batch: int = 64, epochs: int = 100,
            seed: int = 0, momentum: float = 0.9, val_fraction: float = 0.1, patience: int = 10,
            n_out: int | None = None, hidden=HIDDEN) -> MlpModel:
    """Train an MLP with mini-batch momentum SGD and early stopping.

    ``data`` should already be standardized. Targets are 0/1 labels for the
    sigmoid head, class indices for softmax, real values for linear. A
    seeded ``val_fraction`` of the rows is held out; training stops once the
    held-out loss has not improved for ``patience`` epochs and the best
    parameters seen are returned. ``history`` holds (train, val) losses.
    """
    data = np.asarray(data, dtype=np.float64)
    targets = np.asarray(targets)
    if data.ndim != 2 or len(data) != len(targets):
        raise ValueError("data must be 2-D and aligned with targets")
    if n_out is None:
        if head == "softmax":
            n_out = int(targets.max()) + 1
        elif head == "linear" and targets.ndim == 2:
            n_out = targets.shape[1]
        else:
            n_out = 1
    rng = np.random.default_rng(seed)
    model = MlpModel.init(data.shape[1], n_out, head, hidden, seed=int(rng.integers(2**31)))

    order = rng.permutation(len(data))
    n_val = int(round(val_fraction * len(data))) if len(data) >= 20 else 0
    val_idx, tr_idx = order[:n_val], order[n_val:]
    x_tr, t_tr = data[tr_idx], targets[tr_idx]
    x_val, t_val = data[val_idx], targets[val_idx]

    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    best_loss, best_params, stale = np.inf, None, 0
    history = []
    for epoch in range(epochs):
        perm = rng.permutation(len(x_tr))
        total = 0.0
        for s in range(0, len(perm), batch):
            idx = perm[s:s + batch]
            loss, gw, gb = model.loss_and_grads(x_tr[idx], t_tr[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became {loss} at epoch {epoch}; check input scaling or lower lr (={lr})")
            total += loss * len(idx)
            for i in range(len(model.weights)):
                vel_w[i] *= momentum
                vel_w[i] -= lr * gw[i]
                vel_b[i] *= momentum
                vel_b[i] -= lr * gb[i]
                model.weights[i] += vel_w[i]
                model.biases[i] += vel_b[i]
        val = model.loss(x_val, t_val) if n_val else total / len(x_tr)
        history.append((total / len(x_tr), val))
        if val < best_loss - 1e-12:
            best_loss, stale = val, 0
            best_params = ([w.copy() for w in model.weights], [b.copy() for b in model.biases])
        else:
            stale += 1
            if n_val and stale >= patience:
                log.debug("early stop at epoch %d", epoch)
                break
    if best_params is not None:
        model.weights, model.biases = best_params
    model.history = history
    return model
