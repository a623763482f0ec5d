"""Weighted SGD process functions.

A sample of weight ``m`` advances the clock by ``m`` and takes one step
with the summed stepsize ``eta_{t,m}``.  Shared keys: ``w`` (weights),
``t`` (clock), ``acc`` (AdaGrad accumulator, if used) and
``wbar_num``/``wbar_den`` (stepsize-weighted average of the iterates,
if tracked).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import DomainError, NumericError, UsageError
from ..varset import SharedVarSet
from .stepsize import AdaGrad, Schedule, stepsize_sum


class WeightView:
    """Read access to one shared array, element-wise or whole."""

    __slots__ = ("shared", "key")

    def __init__(self, shared: SharedVarSet, key: str):
        self.shared = shared
        self.key = key

    def __getitem__(self, index):
        return self.shared.get(self.key, index)

    def full(self) -> np.ndarray:
        return self.shared.get(self.key)


@dataclass(frozen=True)
class Ball:
    """Euclidean ball used as a feasible set."""

    radius: float
    center: Optional[tuple] = None

    def project(self, w: np.ndarray) -> np.ndarray:
        c = 0.0 if self.center is None else np.asarray(self.center, dtype=float)
        diff = w - c
        norm = float(np.linalg.norm(diff))
        if norm <= self.radius:
            return w
        return c + diff * (self.radius / norm)

    def apply(self, shared: SharedVarSet, key: str, w: np.ndarray) -> None:
        """Project ``shared[key]`` (whose current value is ``w``) onto the ball.

        Radial scaling about the center is one multiply, plus one add for
        an off-origin center.
        """
        c = None if self.center is None else np.asarray(self.center, dtype=float)
        norm = float(np.linalg.norm(w if c is None else w - c))
        if norm <= self.radius:
            return
        s = self.radius / norm
        shared.multiply(key, s)
        if c is not None and np.any(c != 0.0):
            shared.add(key, (1.0 - s) * c)


@dataclass(frozen=True)
class TheoryParams:
    """Constants of the strongly convex analysis.

    ``R`` feasible-set diameter, ``rho`` inner radius around the optimum,
    ``lam`` strong convexity, ``G`` gradient bound, ``H`` Hessian
    Lipschitz constant, ``L`` Hessian bound.
    """

    R: float
    rho: float
    lam: float
    G: float
    H: float
    L: float
    center: Optional[tuple] = None

    def __post_init__(self):
        for name in ("R", "rho", "lam", "G", "H", "L"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")

    @property
    def D(self) -> float:
        """Diameter of the preprocessing ball."""
        return self.lam / (4.0 * (self.L + self.G / self.rho**2))

    def ball(self) -> Ball:
        return Ball(self.D / 2.0, self.center)

    def post_combine(self, key: str = "w"):
        """Hook for :func:`~splash.engine.run_iteration` projecting onto the ball."""
        ball = self.ball()

        def hook(shared: SharedVarSet):
            ball.apply(shared, key, shared.get(key))

        return hook


class Quadratic:
    """``loss(w; x) = (x - w)^T diag(curvature) (x - w)``."""

    def __init__(self, curvature):
        self.curvature = np.asarray(curvature, dtype=float)

    def loss(self, w, x) -> float:
        d = np.asarray(x) - w
        return float(np.dot(d * self.curvature, d))

    def gradient(self, w, x) -> np.ndarray:
        return 2.0 * self.curvature * (w - x)

    @property
    def strong_convexity(self) -> float:
        return 2.0 * float(self.curvature.min())


def _rates(schedule, t, weight, shared, grad_sq, index=None):
    if isinstance(schedule, AdaGrad):
        shared.add("acc", weight * grad_sq, index)
        return stepsize_sum(t, weight, schedule, shared.get("acc", index))
    return stepsize_sum(t, weight, schedule)


class DenseSGD:
    """``t <- t + m``; ``w <- Pi(w - eta_{t,m} * grad(w; x))``.

    ``gradient(w, elem)`` returns the full gradient.  Optional ``projection``
    (a :class:`Ball`) is applied after every step.
    """

    def __init__(
        self,
        gradient: Callable,
        schedule: Schedule,
        key: str = "w",
        projection: Optional[Ball] = None,
        track_average: bool = False,
    ):
        if track_average and isinstance(schedule, AdaGrad):
            raise UsageError("the weighted average needs a scalar stepsize schedule")
        self.gradient = gradient
        self.schedule = schedule
        self.key = key
        self.projection = projection
        self.track_average = track_average

    def init_shared(self, shared: SharedVarSet, w0) -> SharedVarSet:
        w0 = np.asarray(w0, dtype=float)
        shared.declare(self.key, w0)
        shared.declare("t", 0.0)
        if isinstance(self.schedule, AdaGrad):
            shared.declare("acc", np.zeros_like(w0))
        if self.track_average:
            shared.declare("wbar_num", np.zeros_like(w0))
            shared.declare("wbar_den", 0.0)
        return shared

    def __call__(self, elem, weight, shared, local) -> None:
        shared.add("t", weight)
        t = int(shared.get("t"))
        w = shared.get(self.key)
        g = self.gradient(w, elem)
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
        eta = _rates(self.schedule, t, weight, shared, g * g)
        delta = -eta * g
        shared.add(self.key, delta)
        if self.projection is not None:
            self.projection.apply(shared, self.key, w + delta)
        if self.track_average:
            shared.add("wbar_num", eta * w)
            shared.add("wbar_den", eta)


class SparseRegSGD:
    """SGD on ``f + (lam/2)||w||^2`` with cost proportional to nnz(grad f).

    The shrink ``w <- (1 - eta*lam) w`` is a lazy multiply; the data
    gradient, evaluated before the shrink, is applied with element-wise
    adds.  ``sparse_gradient(view, elem)`` returns ``(indices, values)``.
    """

    def __init__(
        self,
        sparse_gradient: Callable,
        schedule: Schedule,
        reg: float = 0.0,
        key: str = "w",
    ):
        if reg < 0:
            raise DomainError("reg must be >= 0")
        if reg > 0 and isinstance(schedule, AdaGrad):
            raise UsageError("the lazy shrink needs a scalar stepsize schedule")
        self.sparse_gradient = sparse_gradient
        self.schedule = schedule
        self.reg = reg
        self.key = key

    def init_shared(self, shared: SharedVarSet, w0) -> SharedVarSet:
        w0 = np.asarray(w0, dtype=float)
        shared.declare(self.key, w0)
        shared.declare("t", 0.0)
        if isinstance(self.schedule, AdaGrad):
            shared.declare("acc", np.zeros_like(w0))
        return shared

    def __call__(self, elem, weight, shared, local) -> None:
        shared.add("t", weight)
        t = int(shared.get("t"))
        idx, vals = self.sparse_gradient(WeightView(shared, self.key), elem)
        if not np.all(np.isfinite(vals)):
            raise NumericError("non-finite gradient")
        eta = _rates(self.schedule, t, weight, shared, vals * vals, idx)
        if self.reg:
            factor = 1.0 - eta * self.reg
            if not factor > 0.0:
                raise DomainError(
                    f"1 - eta*lam = {factor:.3g} <= 0; use a smaller stepsize"
                )
            shared.multiply(self.key, factor)
        shared.add(self.key, -eta * vals, idx)


def weighted_average(shared: SharedVarSet) -> np.ndarray:
    """Stepsize-weighted mean of the visited iterates."""
    den = shared.get("wbar_den")
    if not den > 0:
        raise UsageError("no steps recorded yet")
    return shared.get("wbar_num") / den


def sgd_process_dense(gradient, schedule, **kw) -> DenseSGD:
    return DenseSGD(gradient, schedule, **kw)


def sgd_process_sparse_reg(sparse_gradient, schedule, reg=0.0, **kw) -> SparseRegSGD:
    return SparseRegSGD(sparse_gradient, schedule, reg=reg, **kw)


__all__ = [
    "Ball",
    "DenseSGD",
    "Quadratic",
    "SparseRegSGD",
    "TheoryParams",
    "WeightView",
    "sgd_process_dense",
    "sgd_process_sparse_reg",
    "weighted_average",
]
