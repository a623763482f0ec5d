"""Shared and local variable stores.

Shared variables support three operators: ``add``, ``delayed_add`` and
``multiply``.  Arrays are scaled lazily: a multiply only touches the
global multiplier ``V`` and each element is brought up to date the next
time it is read or written (``u_i <- (V / V_i) * u_i``, ``V_i <- V``).
"""

from __future__ import annotations

import math
from typing import Any, Iterator, Optional, Union

import numpy as np

from .errors import DomainError, MissingKeyError, NumericError, ShapeError, UsageError

Index = Union[None, int, np.ndarray]

# Outside this band the global multiplier is folded back into storage.
_RENORM_LOW = 1e-150
_RENORM_HIGH = 1e150


class ArrayValue:
    """Array with lazy multiplicative bookkeeping."""

    __slots__ = ("values", "V", "Vi")

    def __init__(self, values, V=1.0, Vi=None):
        self.values = np.array(values, dtype=np.float64).reshape(-1)
        self.V = float(V)
        self.Vi = np.full(self.values.shape, self.V) if Vi is None else np.array(Vi, dtype=np.float64)

    def __len__(self):
        return self.values.shape[0]

    def copy(self) -> "ArrayValue":
        return ArrayValue(self.values.copy(), self.V, self.Vi.copy())

    def reconciled(self) -> np.ndarray:
        """Current values without mutating storage."""
        return self.values * (self.V / self.Vi)


def _is_scalar(value) -> bool:
    return np.ndim(value) == 0


def _check_finite(delta):
    if _is_scalar(delta):
        if not math.isfinite(delta):
            raise NumericError(f"non-finite delta {delta!r}")
    elif not np.all(np.isfinite(delta)):
        raise NumericError("delta contains non-finite entries")


def _check_gamma(gamma):
    if not (math.isfinite(gamma) and gamma > 0.0):
        raise DomainError(f"multiplier must be finite and > 0, got {gamma!r}")


class SharedVarSet:
    """Replicated key/value store for shared variables.

    Values are floats or 1-d float arrays.  A key's kind and length are
    fixed by :meth:`declare`.  When a ``recorder`` (a
    :class:`~splash.transform.ThreadTransform`) is attached, every operator
    is also composed into it.

    ``element_writes`` counts stores into array element storage and
    ``multiplier_updates`` counts stores into per-element multipliers.
    """

    def __init__(self, entries: Optional[dict] = None):
        self._entries: dict[str, Union[float, ArrayValue]] = {}
        self.recorder = None
        self.element_writes = 0
        self.multiplier_updates = 0
        # (pending list, weight) of the sample under processing
        self._context = None
        for key, value in (entries or {}).items():
            self.declare(key, value)

    # ------------------------------------------------------------------
    # setup and introspection

    def declare(self, key: str, value) -> None:
        """Create a variable or overwrite one of the same kind and length."""
        if self._context is not None:
            raise UsageError("variables cannot be declared inside process()")
        if not isinstance(key, str) or not key:
            raise ShapeError("keys must be nonempty strings")
        old = self._entries.get(key)
        if _is_scalar(value):
            if isinstance(old, ArrayValue):
                raise ShapeError(f"{key!r} is an array; cannot store a scalar")
            self._entries[key] = float(value)
        else:
            arr = ArrayValue(value)
            if old is not None and (not isinstance(old, ArrayValue) or len(old) != len(arr)):
                raise ShapeError(f"{key!r}: kind or length differs from first write")
            self._entries[key] = arr

    def __contains__(self, key) -> bool:
        return key in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def keys(self):
        return self._entries.keys()

    def is_array(self, key: str) -> bool:
        return isinstance(self._lookup(key), ArrayValue)

    def size(self, key: str) -> Optional[int]:
        """Array length, or ``None`` for scalars."""
        entry = self._lookup(key)
        return len(entry) if isinstance(entry, ArrayValue) else None

    def raw(self, key: str):
        """Stored entry (float or :class:`ArrayValue`), no reconciliation."""
        return self._lookup(key)

    def copy(self) -> "SharedVarSet":
        """Deep copy of the values; recorder, counters and context are not copied."""
        out = SharedVarSet()
        out._entries = {
            k: (v.copy() if isinstance(v, ArrayValue) else v) for k, v in self._entries.items()
        }
        return out

    def to_dict(self) -> dict:
        """Reconciled snapshot: key -> float or ndarray."""
        return {
            k: (v.reconciled() if isinstance(v, ArrayValue) else v) for k, v in self._entries.items()
        }

    def _lookup(self, key):
        try:
            return self._entries[key]
        except KeyError:
            raise MissingKeyError(f"unknown shared variable {key!r}") from None

    # ------------------------------------------------------------------
    # lazy reconciliation

    def _index(self, entry, key, index):
        if not isinstance(entry, ArrayValue):
            if index is not None:
                raise ShapeError(f"{key!r} is a scalar; index not allowed")
            return None
        n = len(entry)
        if index is None:
            return None
        if isinstance(index, (int, np.integer)):
            i = int(index)
            if not 0 <= i < n:
                raise ShapeError(f"index {i} out of bounds for {key!r} of length {n}")
            return i
        idx = np.asarray(index)
        if idx.dtype.kind not in "iu":
            raise ShapeError("index arrays must hold integers")
        idx = idx.reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ShapeError(f"index out of bounds for {key!r} of length {n}")
        return idx

    def _reconcile(self, entry: ArrayValue, idx):
        V = entry.V
        if idx is None:
            stale = np.flatnonzero(entry.Vi != V)
            if stale.size:
                entry.values[stale] *= V / entry.Vi[stale]
                entry.Vi[stale] = V
                self.element_writes += stale.size
                self.multiplier_updates += stale.size
        elif isinstance(idx, int):
            Vi = entry.Vi[idx]
            if Vi != V:
                entry.values[idx] *= V / Vi
                entry.Vi[idx] = V
                self.element_writes += 1
                self.multiplier_updates += 1
        else:
            sub = idx[entry.Vi[idx] != V]
            if sub.size:
                sub = np.unique(sub)
                entry.values[sub] *= V / entry.Vi[sub]
                entry.Vi[sub] = V
                self.element_writes += sub.size
                self.multiplier_updates += sub.size

    def _renormalize(self, entry: ArrayValue):
        self._reconcile(entry, None)
        entry.V = 1.0
        entry.Vi.fill(1.0)

    # ------------------------------------------------------------------
    # reads

    def get(self, key: str, index: Index = None):
        """Reconciled value.

        For arrays, ``index`` may be an int (returns a float), an integer
        array (returns a copy of those entries) or ``None`` (whole array).
        """
        entry = self._lookup(key)
        idx = self._index(entry, key, index)
        if not isinstance(entry, ArrayValue):
            return entry
        self._reconcile(entry, idx)
        if idx is None:
            return entry.values.copy()
        if isinstance(idx, int):
            return float(entry.values[idx])
        return entry.values[idx]

    # ------------------------------------------------------------------
    # operators

    def _store_add(self, key, delta, index):
        entry = self._lookup(key)
        idx = self._index(entry, key, index)
        _check_finite(delta)
        if not isinstance(entry, ArrayValue):
            if not _is_scalar(delta):
                raise ShapeError(f"{key!r} is a scalar; delta must be a scalar")
            self._entries[key] = entry + float(delta)
            return None
        self._reconcile(entry, idx)
        if idx is None:
            if not _is_scalar(delta) and np.shape(delta) != entry.values.shape:
                raise ShapeError(f"delta shape {np.shape(delta)} != ({len(entry)},)")
            entry.values += delta
            self.element_writes += len(entry)
        elif isinstance(idx, int):
            if not _is_scalar(delta):
                raise ShapeError("scalar index needs a scalar delta")
            entry.values[idx] += delta
            self.element_writes += 1
        else:
            if not _is_scalar(delta) and np.shape(delta) != idx.shape:
                raise ShapeError("delta and index arrays differ in length")
            np.add.at(entry.values, idx, delta)
            self.element_writes += idx.size
        return len(entry)

    def add(self, key: str, delta, index: Index = None) -> None:
        """``v <- v + delta`` (element-wise when ``index`` is given)."""
        size = self._store_add(key, delta, index)
        if self.recorder is not None:
            self.recorder.compose_add(key, delta, index, size)

    def multiply(self, key: str, gamma: float) -> None:
        """``v <- gamma * v``; O(1) for arrays."""
        _check_gamma(gamma)
        entry = self._lookup(key)
        if isinstance(entry, ArrayValue):
            entry.V *= gamma
            if not _RENORM_LOW < entry.V < _RENORM_HIGH:
                self._renormalize(entry)
            size = len(entry)
        else:
            self._entries[key] = entry * gamma
            size = None
        if self.recorder is not None:
            self.recorder.compose_multiply(key, gamma, size)

    def delayed_add(self, key: str, delta, index: Index = None) -> None:
        """Queue ``v <- v + delta`` for the next processing of the current sample.

        The queued delta is divided by the current sample weight.
        """
        if self._context is None:
            raise UsageError("delayed_add is only valid inside process()")
        entry = self._lookup(key)
        idx = self._index(entry, key, index)
        _check_finite(delta)
        pending, weight = self._context
        if isinstance(idx, np.ndarray):
            idx = idx.copy()
        scaled = delta / weight
        if not _is_scalar(scaled):
            scaled = np.array(scaled, dtype=np.float64)
        pending.append((key, idx, scaled))

    def execute_delayed(self, key: str, delta, index: Index = None) -> None:
        """Apply a queued delayed add (called by the engine)."""
        size = self._store_add(key, delta, index)
        if self.recorder is not None:
            self.recorder.compose_delayed(key, delta, index, size)

    # ------------------------------------------------------------------
    # processing context

    def bind(self, pending: list, weight: int) -> None:
        self._context = (pending, weight)

    def unbind(self) -> None:
        self._context = None

    # ------------------------------------------------------------------
    # serialization

    def state(self) -> dict:
        out = {}
        for k, v in self._entries.items():
            if isinstance(v, ArrayValue):
                out[k] = ("array", v.values.copy(), v.V, v.Vi.copy())
            else:
                out[k] = ("scalar", v)
        return out

    @classmethod
    def from_state(cls, state: dict) -> "SharedVarSet":
        out = cls()
        for k, v in state.items():
            if v[0] == "array":
                out._entries[k] = ArrayValue(v[1], v[2], v[3])
            else:
                out._entries[k] = float(v[1])
        return out

    def __repr__(self):
        kinds = ", ".join(
            f"{k}[{len(v)}]" if isinstance(v, ArrayValue) else k for k, v in self._entries.items()
        )
        return f"SharedVarSet({kinds})"


class LocalVarSet:
    """Per-sample variables; usable only while the owning sample is processed."""

    def __init__(self, entries: Optional[dict] = None):
        self._entries: dict[str, Any] = dict(entries or {})
        self._active = False
        self.rng: Optional[np.random.Generator] = None

    def _require_active(self):
        if not self._active:
            raise UsageError("local variables are only accessible while their sample is processed")

    def get(self, key: str):
        self._require_active()
        try:
            return self._entries[key]
        except KeyError:
            raise MissingKeyError(f"unknown local variable {key!r}") from None

    def set(self, key: str, value) -> None:
        self._require_active()
        if not isinstance(key, str) or not key:
            raise ShapeError("keys must be nonempty strings")
        if _is_scalar(value):
            self._entries[key] = value.item() if isinstance(value, np.generic) else value
        else:
            arr = np.array(value)
            arr.setflags(write=False)
            self._entries[key] = arr

    def __contains__(self, key) -> bool:
        return key in self._entries

    def clone(self) -> "LocalVarSet":
        # stored arrays are read-only, so sharing them is safe
        return LocalVarSet(self._entries)

    def activate(self, rng: Optional[np.random.Generator] = None) -> "LocalVarSet":
        self._active = True
        self.rng = rng
        return self

    def deactivate(self) -> None:
        self._active = False
        self.rng = None

    def entries(self) -> dict:
        return dict(self._entries)

    def __repr__(self):
        return f"LocalVarSet({sorted(self._entries)})"
