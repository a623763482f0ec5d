"""Choosing the degree of parallelism by cross-validation.

Available cores are split into groups of sizes ``prev, 4*prev, 16*prev,
...`` (the last group takes the remainder).  Each group trains from the
same starting state with its own thread count, is scored on held-out
partitions, and the winner's result becomes the new shared state.
"""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .engine import (
    LossFn,
    ParamDataset,
    ProcessFn,
    commit,
    derive_seed,
    merge,
    run_iteration,
    run_workers,
)
from .errors import UsageError

log = logging.getLogger(__name__)

CONFIRM_WINS = 3
MAX_RETEST_INTERVAL = 32


@dataclass(frozen=True)
class GroupAllocation:
    group_sizes: tuple
    total: int
    previous_count: int


def allocate_groups(M: int, previous_count: int = 1) -> GroupAllocation:
    """Candidate thread counts for ``M`` cores given last iteration's count."""
    if M < 1:
        raise UsageError("M must be >= 1")
    if previous_count < 1:
        raise UsageError("previous_count must be >= 1")
    prev = Fraction(previous_count, 4)
    sizes: list[int] = []
    used = 0
    while used < M:
        remaining = M - used
        if 8 * prev <= remaining:
            prev = 4 * prev
            size = int(prev)
        else:
            size = remaining
        sizes.append(size)
        used += size
    return GroupAllocation(tuple(sizes), M, previous_count)


@dataclass
class TuneResult:
    candidates: list
    losses: list  # mean test loss per candidate, None when no loss function
    chosen: int
    consecutive_wins: int = 0
    sequential_fallback: bool = False
    sync: Optional[dict] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def choose(candidates, losses) -> int:
    """Smallest loss wins; ties go to the larger thread count."""
    best = None
    for m, loss in zip(candidates, losses):
        if best is None or loss < best[1] or (loss == best[1] and m > best[0]):
            best = (m, loss)
    return best[0]


def _evaluate(ds, loss, shared, parts) -> float:
    total = 0.0
    n = 0
    for p in parts:
        for s in p.samples:
            total += loss(shared, s.element)
            n += 1
    return total / n if n else float("inf")


def tune_iteration(
    ds: ParamDataset,
    process: ProcessFn,
    loss: Optional[LossFn],
    M: int,
    prev: int = 1,
) -> TuneResult:
    """One tuning iteration; installs the winning group's result."""
    alloc = allocate_groups(M, prev)
    sizes = list(alloc.group_sizes)
    P = ds.num_partitions
    if loss is None or len(sizes) == 1:
        # nothing to compare: the largest group wins outright
        chosen = min(max(sizes), P)
        rep = run_iteration(ds, process, chosen)
        return TuneResult(sizes, [None] * len(sizes), chosen, sync=rep.deterministic_fields())

    rng = np.random.default_rng(derive_seed(ds.seed, ds.iteration, 0x7E57))
    base = ds.snapshot()
    fallback = P < 2 * sum(sizes)
    if not fallback:
        perm = rng.permutation(P)
        splits = []
        pos = 0
        for m in sizes:
            train = [ds.partitions[i] for i in sorted(perm[pos : pos + m])]
            test = [ds.partitions[i] for i in sorted(perm[pos + m : pos + 2 * m])]
            splits.append((m, train, test))
            pos += 2 * m

        def run_group(spec):
            m, train, test = spec
            results = run_workers(ds, process, m, partitions=train, base=base)
            shared = merge(results, base)
            return results, shared, _evaluate(ds, loss, shared, test)

        with ThreadPoolExecutor(max_workers=len(splits)) as pool:
            outcomes = list(pool.map(run_group, splits))
        counts = sizes
    else:
        warnings.warn(
            f"{P} partitions cannot host {len(sizes)} disjoint train/test groups; "
            "evaluating candidates one after another",
            RuntimeWarning,
            stacklevel=2,
        )
        perm = rng.permutation(P)
        n_train = max(1, (P + 1) // 2)
        train = [ds.partitions[i] for i in sorted(perm[:n_train])]
        test = [ds.partitions[i] for i in sorted(perm[n_train:])] or train
        counts = [min(m, len(train)) for m in sizes]
        outcomes = []
        for m in counts:
            results = run_workers(ds, process, m, partitions=train, base=base)
            shared = merge(results, base)
            outcomes.append((results, shared, _evaluate(ds, loss, shared, test)))

    losses = [o[2] for o in outcomes]
    chosen = choose(counts, losses)
    winner = outcomes[counts.index(chosen)] if counts.count(chosen) == 1 else None
    if winner is None:
        # clamped duplicates: take the best-scoring copy
        idx = min(
            (i for i, c in enumerate(counts) if c == chosen), key=lambda i: losses[i]
        )
        winner = outcomes[idx]
    results, shared, _ = winner
    ds.install(shared)
    commit(results)
    ds.iteration += 1
    log.debug("tune: candidates=%s losses=%s chosen=%d", counts, losses, chosen)
    return TuneResult(list(counts), losses, chosen, sequential_fallback=fallback)


@dataclass
class AutoTuner:
    """Tunes, confirms and then retests with geometric back-off.

    Once the same count wins ``CONFIRM_WINS`` tunes in a row, the next
    retest comes ``2**(wins - CONFIRM_WINS + 1)`` iterations later, capped
    at ``MAX_RETEST_INTERVAL``.
    """

    M: int
    current: int = 1
    wins: int = 0
    since_tune: int = 0
    history: list = field(default_factory=list)

    def interval(self) -> int:
        if self.wins < CONFIRM_WINS:
            return 1
        return min(2 ** (self.wins - CONFIRM_WINS + 1), MAX_RETEST_INTERVAL)

    def due(self) -> bool:
        return self.since_tune + 1 >= self.interval() or not self.history

    def step(self, ds: ParamDataset, process: ProcessFn, loss: Optional[LossFn]):
        """Run one iteration, tuning if the schedule says so.

        Returns ``(m_used, TuneResult or SyncReport)``.
        """
        if not self.due():
            self.since_tune += 1
            m = min(self.current, ds.num_partitions)
            return m, run_iteration(ds, process, m)
        res = tune_iteration(ds, process, loss, self.M, self.current)
        if self.history and res.chosen == self.current:
            self.wins += 1
        else:
            self.wins = 1
        self.current = res.chosen
        self.since_tune = 0
        res.consecutive_wins = self.wins
        self.history.append(res)
        return res.chosen, res
