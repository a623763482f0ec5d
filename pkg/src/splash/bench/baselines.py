"""Naive combiners kept for comparison with the reweighted combine."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import UsageError


def baseline_combiner(mode: str, deltas: Sequence, v_old):
    """``v_old + sum(deltas)`` (accumulate) or ``v_old + mean(deltas)`` (average)."""
    if len(deltas) == 0:
        raise UsageError("need at least one local update")
    total = np.sum(np.asarray(deltas, dtype=float), axis=0)
    if mode == "accumulate":
        return v_old + total
    if mode == "average":
        return v_old + total / len(deltas)
    raise UsageError(f"unknown combiner mode {mode!r}")
