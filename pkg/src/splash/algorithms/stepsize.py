"""Stepsize schedules and the weighted stepsize sum ``eta_{t,m}``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..errors import DomainError, UsageError

EXACT_SUM_LIMIT = 64


@dataclass(frozen=True)
class Constant:
    c: float = 0.1

    def rate(self, i: int) -> float:
        return self.c

    def integral(self, a: float, b: float) -> float:
        return self.c * (b - a)


@dataclass(frozen=True)
class InvSqrt:
    """``eta_i = c / sqrt(i)``."""

    c: float = 1.0

    def rate(self, i: int) -> float:
        return self.c / math.sqrt(i)

    def integral(self, a: float, b: float) -> float:
        return 2.0 * self.c * (math.sqrt(b) - math.sqrt(a))


@dataclass(frozen=True)
class InvT:
    """``eta_i = 2 / (lam * i)``."""

    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("lam must be > 0")

    def rate(self, i: int) -> float:
        return 2.0 / (self.lam * i)

    def integral(self, a: float, b: float) -> float:
        return 2.0 / self.lam * math.log(b / a)


@dataclass(frozen=True)
class AdaGrad:
    """Per-coordinate ``eta0 / (eps + sqrt(acc))``."""

    eta0: float = 0.1
    eps: float = 1e-8

    def coordinate_rates(self, acc):
        return self.eta0 / (self.eps + np.sqrt(acc))


Schedule = Union[Constant, InvSqrt, InvT, AdaGrad]


def stepsize_sum(t: int, m: int, schedule: Schedule, acc: Optional[np.ndarray] = None):
    """Sum of unit-weight stepsizes over ``[t - m + 1, t]``.

    Exact for ``m <= 64``; beyond that the closed-form integral over
    ``[t - m + 1, t + 1]`` is used.  AdaGrad uses ``m * eta_t`` per
    coordinate and needs the squared-gradient accumulator ``acc``.
    """
    if m < 1 or t < m:
        raise UsageError(f"need t >= m >= 1, got t={t}, m={m}")
    if isinstance(schedule, AdaGrad):
        if acc is None:
            raise UsageError("AdaGrad stepsizes need the accumulator")
        return m * schedule.coordinate_rates(acc)
    if isinstance(schedule, Constant):
        return m * schedule.c
    if m <= EXACT_SUM_LIMIT:
        total = 0.0
        for i in range(t - m + 1, t + 1):
            total += schedule.rate(i)
        return total
    return schedule.integral(t - m + 1, t + 1)
