"""Toy models trained by full-batch gradient descent."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class ToyModel:
    """Weights with the bias stored last."""

    weights: np.ndarray
    family: str = "logistic-regression"

    @classmethod
    def zeros(cls, n_features: int, family: str) -> "ToyModel":
        return cls(np.zeros(n_features + 1), family)

    def copy(self) -> "ToyModel":
        return ToyModel(self.weights.copy(), self.family)

    def _design(self, X):
        return np.hstack([X, np.ones((X.shape[0], 1))])

    def predict(self, X) -> np.ndarray:
        z = self._design(X) @ self.weights
        return _sigmoid(z) if self.family == "logistic-regression" else z

    def loss(self, data: Dataset, l2: float = 0.0) -> float:
        pred = self.predict(data.X)
        if self.family == "logistic-regression":
            eps = 1e-12
            base = -np.mean(data.y * np.log(pred + eps) + (1 - data.y) * np.log(1 - pred + eps))
        else:
            base = 0.5 * np.mean((pred - data.y) ** 2)
        return float(base + 0.5 * l2 * self.weights @ self.weights)

    def accuracy(self, data: Dataset) -> float:
        pred = self.predict(data.X)
        if self.family == "logistic-regression":
            return float(np.mean((pred >= 0.5) == (data.y >= 0.5)))
        # fraction of targets within 0.5 for regression, so the metric stays in [0, 1]
        return float(np.mean(np.abs(pred - data.y) < 0.5))

    def gradient(self, data: Dataset, l2: float) -> np.ndarray:
        A = self._design(data.X)
        resid = self.predict(data.X) - data.y
        return A.T @ resid / len(data.y) + l2 * self.weights


def train_local(model: ToyModel, data: Dataset, epochs: int, lr: float, l2: float,
                clip: float = np.inf) -> ToyModel:
    """Run ``epochs`` GD steps from ``model``; weights are clipped to ``+/-clip``."""
    out = model.copy()
    for _ in range(epochs):
        out.weights = np.clip(out.weights - lr * out.gradient(data, l2), -clip, clip)
    return out
