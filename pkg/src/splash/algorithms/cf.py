"""Collaborative filtering by SGD on the user-marginalised objective.

Only item vectors are shared (flat array ``v`` of length ``items*d``).  An
element is one user's bundle ``(user, item_indices, ratings)``; processing
it solves the user's ridge problem exactly and takes one AdaGrad step on
every rated item vector along the envelope gradient.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, UsageError
from ..varset import SharedVarSet
from .stepsize import AdaGrad, stepsize_sum


def ridge_user(V: np.ndarray, r: np.ndarray, lam: float) -> np.ndarray:
    """``argmin_u sum_j (<u, V_j> - r_j)^2 + lam ||u||^2``."""
    d = V.shape[1]
    A = V.T @ V + lam * np.eye(d)
    if lam == 0.0 and np.linalg.matrix_rank(V) < d:
        raise NumericError("rank-deficient ratings with lam = 0; the user vector is not unique")
    try:
        return np.linalg.solve(A, V.T @ r)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular normal equations: {exc}") from None


def user_objective(V: np.ndarray, r: np.ndarray, lam: float) -> float:
    """One user's summand of the marginal objective as a function of ``V``."""
    u = ridge_user(V, r, lam)
    res = V @ u - r
    return float(res @ res + lam * (u @ u) + lam * np.sum(V * V))


def envelope_gradient(V: np.ndarray, r: np.ndarray, lam: float) -> np.ndarray:
    """Rows ``2(<u*, v_j> - r_j) u* + 2 lam v_j``."""
    u = ridge_user(V, r, lam)
    res = V @ u - r
    return 2.0 * res[:, None] * u[None, :] + 2.0 * lam * V


class CollaborativeFiltering:
    def __init__(self, n_items: int, dim: int = 100, lam: float = 0.02, eta0: float = 0.1):
        if lam < 0:
            raise UsageError("lam must be >= 0")
        self.n_items = n_items
        self.d = dim
        self.lam = lam
        self.schedule = AdaGrad(eta0=eta0)

    def init_shared(self, shared: SharedVarSet, seed: int = 0) -> SharedVarSet:
        rng = np.random.default_rng(seed)
        v = np.abs(rng.standard_normal((self.n_items, self.d)))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        shared.declare("v", v.reshape(-1))
        shared.declare("acc", np.zeros(self.n_items * self.d))
        shared.declare("t", 0.0)
        return shared

    def _flat(self, items: np.ndarray) -> np.ndarray:
        return (items[:, None] * self.d + np.arange(self.d)[None, :]).reshape(-1)

    def item_vectors(self, shared: SharedVarSet, items) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        return shared.get("v", self._flat(items)).reshape(items.size, self.d)

    def __call__(self, elem, weight, shared, local) -> None:
        _, items, ratings = elem
        if len(items) == 0:
            raise UsageError("a user bundle needs at least one rating")
        shared.add("t", weight)
        idx = self._flat(items)
        V = shared.get("v", idx).reshape(len(items), self.d)
        G = envelope_gradient(V, ratings, self.lam).reshape(-1)
        if not np.all(np.isfinite(G)):
            raise NumericError("non-finite gradient")
        shared.add("acc", weight * G * G, idx)
        eta = stepsize_sum(int(shared.get("t")), weight, self.schedule, shared.get("acc", idx))
        shared.add("v", -eta * G, idx)

    def loss(self, shared: SharedVarSet, elem) -> float:
        """Mean squared error of the user's own ratings after the ridge fit."""
        _, items, ratings = elem
        V = self.item_vectors(shared, items)
        u = ridge_user(V, ratings, self.lam)
        res = V @ u - ratings
        return float(res @ res) / len(ratings)


def make_cf_test(train_bundles, test_triples, item_index=None) -> list:
    """Pair every test user's held-out ratings with their training ratings.

    Users without training ratings cannot be fitted and are dropped.
    Returns ``[(obs_items, obs_ratings, ho_items, ho_ratings), ...]``.
    """
    train = {u: (items, r) for u, items, r in train_bundles}
    held: dict = {}
    for u, i, r in test_triples:
        if item_index is not None:
            if i not in item_index:
                continue
            i = item_index[i]
        held.setdefault(u, ([], []))
        held[u][0].append(i)
        held[u][1].append(r)
    out = []
    for u in sorted(held):
        if u not in train:
            continue
        items, r = held[u]
        out.append((train[u][0], train[u][1], np.asarray(items, dtype=np.int64), np.asarray(r)))
    return out


def cf_predict_loss(model: CollaborativeFiltering, shared: SharedVarSet, test) -> float:
    """Pooled MSE over every held-out rating."""
    total = 0.0
    n = 0
    for obs_items, obs_r, ho_items, ho_r in test:
        u = ridge_user(model.item_vectors(shared, obs_items), obs_r, model.lam)
        res = model.item_vectors(shared, ho_items) @ u - ho_r
        total += float(res @ res)
        n += len(ho_r)
    if n == 0:
        raise UsageError("no held-out ratings")
    return total / n
