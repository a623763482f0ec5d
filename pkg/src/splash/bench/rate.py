"""Monte-Carlo check of the 1/(Tmn) mean-squared-error law.

Objective: ``(x - w)^T A (x - w)`` averaged over a fixed dataset of
standard normal points, so ``w*`` is the dataset mean and the strong
convexity is ``2 min(A)``.  Each of ``m`` threads draws ``n`` points with
replacement per iteration, takes weight-``m`` steps with ``eta_t = 2/(lam t)``
and projects onto a ball after every step; threads are merged by the
combine rule.  Trials are vectorised.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..algorithms import Ball, DenseSGD, InvT, Quadratic, stepsize_sum
from ..engine import ParamDataset, Partition, WeightedSample, derive_seed, run_iteration
from ..errors import UsageError
from ..varset import SharedVarSet

CURVATURE = (1.0, 0.25)
RADIUS = 3.0
W0 = (-1.0, -1.0)
DATASET_SIZE = 10_000
# measured cost of one vectorised step per trial, seconds
STEP_COST = 4e-7


@dataclass(frozen=True)
class RateLab:
    curvature: tuple = CURVATURE
    radius: float = RADIUS
    w0: tuple = W0
    dataset_size: int = DATASET_SIZE
    seed: int = 0

    @property
    def lam(self) -> float:
        return 2.0 * min(self.curvature)

    def dataset(self) -> np.ndarray:
        return np.random.default_rng(derive_seed(self.seed, 0xDA7A)).standard_normal(
            (self.dataset_size, 2)
        )

    def draws(self, T: int, m: int, n: int, trials: int, cell_seed: int) -> np.ndarray:
        """Sample indices, shape ``(trials, T, m, n)``."""
        rng = np.random.default_rng(cell_seed)
        return rng.integers(self.dataset_size, size=(trials, T, m, n))

    def simulate(self, T: int, m: int, n: int, idx: np.ndarray, S: np.ndarray) -> np.ndarray:
        """Final iterates for every trial, shape ``(trials, 2)``."""
        trials = idx.shape[0]
        A = np.asarray(self.curvature)
        sched = InvT(self.lam)
        w = np.tile(np.asarray(self.w0, dtype=float), (trials, 1))
        t = 0
        for it in range(T):
            rep = np.repeat(w[:, None, :], m, axis=1)
            tt = t
            for j in range(n):
                tt += m
                eta = stepsize_sum(tt, m, sched)
                x = S[idx[:, it, :, j]]
                rep = rep - eta * (2.0 * A * (rep - x))
                norm = np.linalg.norm(rep, axis=2, keepdims=True)
                rep = np.where(norm > self.radius, rep * (self.radius / norm), rep)
            w = rep.mean(axis=1)
            t += m * n
        return w

    def sequential_reference(self, idx_flat: np.ndarray, S: np.ndarray) -> np.ndarray:
        """Plain projected SGD over one index stream; independent of the engine."""
        A = np.asarray(self.curvature)
        w = np.asarray(self.w0, dtype=float).copy()
        for t, i in enumerate(idx_flat, start=1):
            w = w - (2.0 / (self.lam * t)) * (2.0 * A * (w - S[i]))
            nrm = math.hypot(w[0], w[1])
            if nrm > self.radius:
                w = w * (self.radius / nrm)
        return w

    def engine_run(self, T: int, m: int, n: int, idx: np.ndarray, S: np.ndarray) -> np.ndarray:
        """The same schedule for one trial (``idx`` of shape ``(T, m, n)``) on the engine."""
        quad = Quadratic(self.curvature)
        sgd = DenseSGD(quad.gradient, InvT(self.lam), projection=Ball(self.radius))
        shared = sgd.init_shared(SharedVarSet(), np.asarray(self.w0, dtype=float))
        for it in range(T):
            parts = [
                Partition(
                    index=p,
                    samples=[
                        WeightedSample(id=p * n + j, element=S[idx[it, p, j]]) for j in range(n)
                    ],
                    rng_seed=p,
                )
                for p in range(m)
            ]
            ds = ParamDataset(parts, shared=shared, shuffle=False)
            run_iteration(ds, sgd, m)
            shared = ds.shared
        return shared.get("w")


def estimate_cost(T_grid, m_grid, n_grid, trials: int) -> float:
    steps = sum(T * m * n for T, m, n in itertools.product(T_grid, m_grid, n_grid))
    return steps * trials * STEP_COST


def rate_experiment(
    T_grid=(1, 2, 4),
    m_grid=(1, 2, 4),
    n_grid=(250, 500, 1000),
    trials: int = 2000,
    seed: int = 0,
    budget_seconds: float = 600.0,
) -> dict:
    """MSE of the final iterate for every grid cell, plus the fitted law."""
    if trials < 2:
        raise UsageError("need at least two trials per cell")
    cost = estimate_cost(T_grid, m_grid, n_grid, trials)
    if cost > budget_seconds:
        raise UsageError(
            f"grid needs about {cost:.0f}s, over the {budget_seconds:.0f}s budget; "
            "reduce trials or the grid"
        )
    lab = RateLab(seed=seed)
    S = lab.dataset()
    w_star = S.mean(axis=0)
    cells = []
    for T, m, n in itertools.product(T_grid, m_grid, n_grid):
        idx = lab.draws(T, m, n, trials, derive_seed(seed, T, m, n))
        err = np.sum((lab.simulate(T, m, n, idx, S) - w_star) ** 2, axis=1)
        cells.append(
            {
                "T": T,
                "m": m,
                "n": n,
                "Tmn": T * m * n,
                "mse": float(err.mean()),
                "se": float(err.std(ddof=1) / math.sqrt(trials)),
            }
        )
    return {
        "trials": trials,
        "seed": seed,
        "lam": lab.lam,
        "curvature": list(lab.curvature),
        "radius": lab.radius,
        "cells": cells,
        "slope": fit_slope(cells),
        "doubling": doubling_ratios(cells),
    }


def fit_slope(cells) -> float:
    x = np.log([c["Tmn"] for c in cells])
    y = np.log([c["mse"] for c in cells])
    return float(np.polyfit(x, y, 1)[0])


def doubling_ratios(cells) -> list:
    """MSE ratios between cells that differ by doubling exactly one of T, m, n."""
    by = {(c["T"], c["m"], c["n"]): c["mse"] for c in cells}
    out = []
    for (T, m, n), mse in by.items():
        for axis, key in enumerate([(2 * T, m, n), (T, 2 * m, n), (T, m, 2 * n)]):
            if key in by:
                out.append(
                    {"from": [T, m, n], "doubled": "Tmn"[axis], "ratio": by[key] / mse}
                )
    return out
