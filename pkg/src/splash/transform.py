"""Per-thread linear transforms and the reweighted combine rule.

A worker's effect on a variable during one iteration is summarised as
``v -> gamma * v + delta + tdelayed``: ``gamma`` collects multiplies,
``delta`` collects adds and ``tdelayed`` collects delayed adds executed
in this iteration.  Workers are merged with

    v_new = (1/m) * sum_i (gamma_i * v_old + delta_i) + sum_i tdelayed_i
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ShapeError, UsageError
from .varset import SharedVarSet, _check_gamma


class _ArrayRecord:
    """Array transform with ``delta``/``tdelayed`` stored divided by gamma.

    Storing pre-scaled sums keeps a whole-array multiply O(1): only
    ``gamma`` changes.  Element ``i`` materialises as ``gamma * dsum[i]``.
    """

    __slots__ = ("gamma", "dsum", "tsum")

    def __init__(self, size: int):
        self.gamma = 1.0
        self.dsum = np.zeros(size)
        self.tsum = np.zeros(size)


def _accumulate(target: np.ndarray, index, value):
    if index is None:
        target += value
    elif isinstance(index, (int, np.integer)):
        target[index] += value
    else:
        np.add.at(target, np.asarray(index).reshape(-1), value)


class ThreadTransform:
    """Composed (gamma, delta, tdelayed) per key for one worker."""

    def __init__(self):
        self._scalars: dict[str, list] = {}
        self._arrays: dict[str, _ArrayRecord] = {}

    def _record(self, key, size):
        if size is None:
            if key in self._arrays:
                raise ShapeError(f"{key!r} is recorded as an array")
            rec = self._scalars.get(key)
            if rec is None:
                rec = self._scalars[key] = [1.0, 0.0, 0.0]
            return rec
        if key in self._scalars:
            raise ShapeError(f"{key!r} is recorded as a scalar")
        rec = self._arrays.get(key)
        if rec is None:
            rec = self._arrays[key] = _ArrayRecord(size)
        elif rec.dsum.shape[0] != size:
            raise ShapeError(f"{key!r}: length {size} != recorded {rec.dsum.shape[0]}")
        return rec

    def compose_add(self, key: str, delta, index=None, size: Optional[int] = None) -> None:
        rec = self._record(key, size)
        if size is None:
            rec[1] += delta
        else:
            _accumulate(rec.dsum, index, np.divide(delta, rec.gamma))

    def compose_multiply(self, key: str, gamma: float, size: Optional[int] = None) -> None:
        _check_gamma(gamma)
        rec = self._record(key, size)
        if size is None:
            rec[0] *= gamma
            rec[1] *= gamma
            rec[2] *= gamma
        else:
            rec.gamma *= gamma

    def compose_delayed(self, key: str, t, index=None, size: Optional[int] = None) -> None:
        rec = self._record(key, size)
        if size is None:
            rec[2] += t
        else:
            _accumulate(rec.tsum, index, np.divide(t, rec.gamma))

    # ------------------------------------------------------------------

    def keys(self):
        return list(self._scalars) + list(self._arrays)

    def __contains__(self, key):
        return key in self._scalars or key in self._arrays

    def triple(self, key: str):
        """Materialised ``(gamma, delta, tdelayed)``; identity for unseen keys."""
        rec = self._scalars.get(key)
        if rec is not None:
            return tuple(rec)
        arec = self._arrays.get(key)
        if arec is not None:
            return arec.gamma, arec.gamma * arec.dsum, arec.gamma * arec.tsum
        return 1.0, 0.0, 0.0

    def gamma(self, key: str) -> float:
        return self.triple(key)[0]

    def delta(self, key: str):
        return self.triple(key)[1]

    def tdelayed(self, key: str):
        return self.triple(key)[2]

    def apply(self, key: str, value):
        """``gamma * value + delta + tdelayed`` for one key."""
        g, d, t = self.triple(key)
        if key in self._arrays and np.shape(value) != np.shape(d):
            raise ShapeError(f"{key!r}: value shape {np.shape(value)} != {np.shape(d)}")
        return g * value + d + t

    def apply_vars(self, v_old: SharedVarSet) -> SharedVarSet:
        """Apply the transform to every variable in ``v_old``."""
        self._check_universe(v_old)
        out = SharedVarSet()
        for key, value in v_old.to_dict().items():
            out.declare(key, self.apply(key, value))
        return out

    def _check_universe(self, v_old: SharedVarSet):
        for key in self.keys():
            if key not in v_old:
                raise ShapeError(f"transform key {key!r} missing from the variable set")
            if (key in self._arrays) != v_old.is_array(key):
                raise ShapeError(f"{key!r}: scalar/array kind mismatch")

    def __repr__(self):
        return f"ThreadTransform(keys={self.keys()})"


def identity() -> ThreadTransform:
    return ThreadTransform()


@dataclass
class CombineReport:
    """Inputs and output of one combine, per key."""

    m: int
    v_old: dict = field(default_factory=dict)
    v_new: dict = field(default_factory=dict)
    snapshots: dict = field(default_factory=dict)  # key -> list of (gamma, delta, tdelayed)

    def reproduce(self, key: str):
        """Recompute ``v_new[key]`` from the snapshots."""
        parts = self.snapshots[key]
        v = self.v_old[key]
        acc = 0.0
        tsum = 0.0
        for g, d, t in parts:
            acc = acc + (g * v + d)
            tsum = tsum + t
        return acc / self.m + tsum

    def to_json(self) -> str:
        def enc(x):
            return np.asarray(x).tolist()

        return json.dumps(
            {
                "m": self.m,
                "v_old": {k: enc(v) for k, v in self.v_old.items()},
                "v_new": {k: enc(v) for k, v in self.v_new.items()},
                "snapshots": {
                    k: [[enc(g), enc(d), enc(t)] for g, d, t in parts]
                    for k, parts in self.snapshots.items()
                },
            },
            sort_keys=True,
        )


def combine(
    transforms: Sequence[ThreadTransform], v_old: SharedVarSet, report: bool = False
):
    """Merge ``m`` worker transforms into the new shared state.

    Threads are summed in list order.  Returns the new
    :class:`SharedVarSet`, or ``(new, CombineReport)`` when ``report`` is set.
    """
    m = len(transforms)
    if m == 0:
        raise UsageError("combine needs at least one transform")
    for t in transforms:
        t._check_universe(v_old)
    out = SharedVarSet()
    rep = CombineReport(m=m) if report else None
    for key, v in v_old.to_dict().items():
        touched = [t for t in transforms if key in t]
        if not touched:
            new = v
        else:
            acc = 0.0
            tsum = 0.0
            for t in transforms:
                g, d, td = t.triple(key)
                acc = acc + (g * v + d)
                tsum = tsum + td
            new = acc / m + tsum
        out.declare(key, new)
        if rep is not None:
            rep.v_old[key] = v
            rep.v_new[key] = new
            rep.snapshots[key] = [t.triple(key) for t in transforms]
    return (out, rep) if report else out


def is_identity(t: ThreadTransform, key: str) -> bool:
    g, d, td = t.triple(key)
    return g == 1.0 and np.all(np.asarray(d) == 0) and np.all(np.asarray(td) == 0)


__all__ = ["ThreadTransform", "CombineReport", "identity", "combine", "is_identity"]
