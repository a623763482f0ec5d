"""Two-dimensional comparison of parallelisation strategies.

Variants for one seeded dataset:

    a  exact minimiser (sample mean)
    b  sequential SGD, one pass
    c  m unit-weight local solutions
    d  average of the local updates
    e  accumulation of the local updates
    f  m weight-m local solutions
    g  reweighted combine of f
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..algorithms import DenseSGD, InvSqrt, Quadratic
from ..dataio import synth_toy
from ..engine import create_dataset, run_iteration, run_workers
from ..varset import SharedVarSet
from .baselines import baseline_combiner

VARIANTS = "abcdefg"
CURVATURE = (1.0, 0.01)
W0 = (-1.0, -1.0)


def objective(points: np.ndarray, w, curvature=CURVATURE) -> float:
    d = points - np.asarray(w)
    return float(np.mean(np.sum(d * d * np.asarray(curvature), axis=1)))


@dataclass
class ToyRun:
    seed: int
    solutions: dict  # variant -> (2,) array, or (m, 2) for c and f
    losses: dict  # variant -> L(w); c and f report the mean over local solutions
    distance: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "solutions": {k: np.asarray(v).tolist() for k, v in self.solutions.items()},
            "losses": self.losses,
            "distance": self.distance,
        }


def toy_run(seed: int, N: int = 3000, m: int = 30, stepsize: float = 1.0) -> ToyRun:
    points = synth_toy(N, seed)
    quad = Quadratic(CURVATURE)
    sgd = DenseSGD(quad.gradient, InvSqrt(stepsize))
    w0 = np.asarray(W0)

    def fresh(parts):
        shared = sgd.init_shared(SharedVarSet(), w0)
        return create_dataset(list(points), parts, seed, shared=shared)

    sol = {"a": points.mean(axis=0)}

    seq = fresh(1)
    run_iteration(seq, sgd, 1)
    sol["b"] = seq.shared.get("w")

    ds = fresh(m)
    unit = run_workers(ds, sgd, m, weight=1)
    sol["c"] = np.array([r.replica.get("w") for r in unit])
    deltas = sol["c"] - w0
    sol["d"] = baseline_combiner("average", deltas, w0)
    sol["e"] = baseline_combiner("accumulate", deltas, w0)

    ds = fresh(m)
    heavy = run_workers(ds, sgd, m, weight=m)
    sol["f"] = np.array([r.replica.get("w") for r in heavy])

    ds = fresh(m)
    run_iteration(ds, sgd, m)
    sol["g"] = ds.shared.get("w")

    losses = {}
    for k, w in sol.items():
        if w.ndim == 2:
            losses[k] = float(np.mean([objective(points, wi) for wi in w]))
        else:
            losses[k] = objective(points, w)
    dist = {
        "w0": float(np.linalg.norm(w0 - sol["a"])),
        "e": float(np.linalg.norm(sol["e"] - sol["a"])),
    }
    return ToyRun(seed, sol, losses, dist)


def toy_experiment(seeds, N: int = 3000, m: int = 30, stepsize: float = 1.0) -> dict:
    """Runs every seed and summarises losses by their medians."""
    runs = [toy_run(s, N, m, stepsize) for s in seeds]
    median = {k: float(np.median([r.losses[k] for r in runs])) for k in VARIANTS}
    dist = {
        k: float(np.median([r.distance[k] for r in runs])) for k in ("w0", "e")
    }
    return {
        "N": N,
        "m": m,
        "stepsize": stepsize,
        "seeds": list(seeds),
        "median_loss": median,
        "median_distance": dist,
        "runs": [r.to_json() for r in runs],
    }


def ranking_checks(summary: dict) -> dict:
    L = summary["median_loss"]
    return {
        "accumulate_worse_than_average": L["e"] > L["d"],
        "average_worse_than_combine": L["d"] > L["g"],
        "accumulate_diverges": summary["median_distance"]["e"] > summary["median_distance"]["w0"],
        "combine_gap_within_2x_sequential": L["g"] - L["a"] <= 2.0 * (L["b"] - L["a"]),
    }
