"""Shift predictors E(c): condition id (or one-hot) to a data-space vector.

Every kind is an affine map of the one-hot condition, ``E(c) = onehot @ weight + bias``;
only the ``trainable`` kind exposes its weight and bias to the optimizer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .schedules import ConfigurationError


class PredictorKind(str, enum.Enum):
    FIXED_TABLE = "fixed_table"
    CLASS_MEAN = "class_mean"
    TRAINABLE = "trainable"

    @classmethod
    def parse(cls, value) -> "PredictorKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        key = {"fixedtable": "fixed_table", "classmean": "class_mean"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"shift.predictor: unknown predictor kind {value!r}") from None


@dataclass(eq=False)
class ShiftPredictor:
    kind: PredictorKind
    weight: np.ndarray  # (num_classes, data_dim)
    bias: np.ndarray  # (data_dim,)

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    @property
    def data_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def trainable(self) -> bool:
        return self.kind is PredictorKind.TRAINABLE

    def params(self) -> dict[str, np.ndarray]:
        """Parameters visible to the optimizer (empty for fixed kinds)."""
        if not self.trainable:
            return {}
        return {"predictor.weight": self.weight, "predictor.bias": self.bias}

    def onehot(self, condition) -> np.ndarray:
        c = np.asarray(condition)
        if c.ndim >= 1 and c.shape[-1] == self.num_classes and np.issubdtype(c.dtype, np.floating):
            return c.astype(np.float64)
        if not np.issubdtype(c.dtype, np.integer):
            raise ValueError(f"condition must be class ids or one-hot rows, got dtype {c.dtype}")
        if np.any(c < 0) or np.any(c >= self.num_classes):
            raise ValueError(f"unknown condition {c.tolist()!r} for {self.num_classes} classes")
        return np.eye(self.num_classes)[c]

    def __call__(self, condition) -> np.ndarray:
        return predict_shift(self, condition)


def fixed_table(num_classes: int, data_dim: int) -> ShiftPredictor:
    """Evenly spaced values over [-1, 1], one per class, broadcast to every coordinate."""
    levels = np.linspace(-1.0, 1.0, num_classes) if num_classes > 1 else np.zeros(1)
    weight = np.repeat(levels[:, None], data_dim, axis=1)
    return ShiftPredictor(PredictorKind.FIXED_TABLE, weight, np.zeros(data_dim))


def class_mean(data, labels, num_classes: int) -> ShiftPredictor:
    data = np.asarray(data, dtype=np.float64)
    labels = np.asarray(labels)
    weight = np.zeros((num_classes, data.shape[1]))
    for c in range(num_classes):
        members = data[labels == c]
        if len(members) == 0:
            raise ValueError(f"class {c} has no training data")
        weight[c] = members.mean(axis=0)
    return ShiftPredictor(PredictorKind.CLASS_MEAN, weight, np.zeros(data.shape[1]))


def trainable(num_classes: int, data_dim: int, rng: np.random.Generator | None = None,
              scale: float = 0.0) -> ShiftPredictor:
    weight = np.zeros((num_classes, data_dim))
    if rng is not None and scale > 0:
        weight = scale * rng.standard_normal((num_classes, data_dim))
    return ShiftPredictor(PredictorKind.TRAINABLE, weight, np.zeros(data_dim))


def predict_shift(spec: ShiftPredictor, condition) -> np.ndarray:
    return spec.onehot(condition) @ spec.weight + spec.bias


def interpolate_shift(spec: ShiftPredictor, c1, c2, lam: float) -> np.ndarray:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    e1, e2 = predict_shift(spec, c1), predict_shift(spec, c2)
    if lam == 1.0:
        return e1
    if lam == 0.0:
        return e2
    return lam * e1 + (1.0 - lam) * e2


def shift_grads(spec: ShiftPredictor, condition, grad_shift) -> dict[str, np.ndarray]:
    """Backpropagate dL/dE(c) into the trainable weight and bias."""
    if not spec.trainable:
        return {}
    onehot = spec.onehot(condition)
    return {"predictor.weight": onehot.T @ grad_shift, "predictor.bias": grad_shift.sum(axis=0)}
