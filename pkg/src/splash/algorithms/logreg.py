"""Multiclass logistic regression on sparse features.

The weights live in one flat shared array: block ``k`` (class ``k``)
occupies ``w[k*d:(k+1)*d]``.  Elements are :class:`~splash.dataio.LabeledPoint`.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..varset import SharedVarSet
from .sgd import SparseRegSGD, WeightView
from .stepsize import Schedule


def _logsumexp(z: np.ndarray) -> float:
    top = float(z.max())
    return top + float(np.log(np.exp(z - top).sum()))


class MulticlassLogistic:
    """Loss ``-<w_y, x> + log sum_k exp <w_k, x>`` and its sparse gradient."""

    def __init__(self, n_classes: int, dim: int, key: str = "w"):
        if n_classes < 2 or dim < 1:
            raise DataError("need at least two classes and one feature")
        self.K = n_classes
        self.d = dim
        self.key = key

    def _label(self, elem) -> int:
        y = elem.label
        if int(y) != y or not 0 <= y < self.K:
            raise DataError(f"label {y!r} outside 0..{self.K - 1}")
        return int(y)

    def _indices(self, x) -> np.ndarray:
        if x.nnz and x.indices[-1] >= self.d:
            raise DataError(f"feature index {x.indices[-1]} >= dim {self.d}")
        offsets = np.arange(self.K, dtype=np.int64)[:, None] * self.d
        return (offsets + x.indices[None, :]).reshape(-1)

    def scores(self, view, x) -> tuple:
        """``(flat indices, <w_k, x> for each k)``."""
        idx = self._indices(x)
        w = np.asarray(view[idx], dtype=float).reshape(self.K, -1)
        return idx, w @ x.values

    def loss(self, shared: SharedVarSet, elem) -> float:
        y = self._label(elem)
        _, z = self.scores(WeightView(shared, self.key), elem.features)
        return _logsumexp(z) - float(z[y])

    def probabilities(self, view, x) -> np.ndarray:
        _, z = self.scores(view, x)
        p = np.exp(z - z.max())
        return p / p.sum()

    def sparse_gradient(self, view, elem):
        """``(indices, values)`` with block ``k`` equal to ``(p_k - 1{k=y}) x``."""
        y = self._label(elem)
        x = elem.features
        idx, z = self.scores(view, x)
        p = np.exp(z - z.max())
        p /= p.sum()
        p[y] -= 1.0
        return idx, np.outer(p, x.values).reshape(-1)

    def init_shared(self, shared: SharedVarSet) -> SharedVarSet:
        shared.declare(self.key, np.zeros(self.K * self.d))
        return shared

    def process(self, schedule: Schedule, reg: float = 0.0) -> SparseRegSGD:
        return SparseRegSGD(self.sparse_gradient, schedule, reg=reg, key=self.key)

    def predict(self, shared: SharedVarSet, x) -> int:
        _, z = self.scores(WeightView(shared, self.key), x)
        return int(np.argmax(z))


def lr_loss(model: MulticlassLogistic, shared: SharedVarSet, elem) -> float:
    return model.loss(shared, elem)


def lr_gradient(model: MulticlassLogistic, shared: SharedVarSet, elem):
    return model.sparse_gradient(WeightView(shared, model.key), elem)
