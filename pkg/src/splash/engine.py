"""Fork-join execution engine.

Each iteration snapshots the authoritative shared variables once, hands
every worker its own replica and an identity :class:`ThreadTransform`,
runs the user ``process`` function over the worker's partitions with
sample weight ``m`` and merges the workers with :func:`combine`.
Workers never see each other's updates inside an iteration.
"""

from __future__ import annotations

import io
import json
import logging
import pickle
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import FormatError, UsageError
from .transform import ThreadTransform, combine
from .varset import LocalVarSet, SharedVarSet

log = logging.getLogger(__name__)

ProcessFn = Callable[[Any, int, SharedVarSet, LocalVarSet], None]
LossFn = Callable[[SharedVarSet, Any], float]

MAGIC = b"SPLS"
CHECKPOINT_VERSION = 1


def derive_seed(*words: int) -> int:
    """Deterministic 64-bit seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence([int(w) for w in words]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


@dataclass
class WeightedSample:
    id: int
    element: Any
    local: LocalVarSet = field(default_factory=LocalVarSet)
    pending: list = field(default_factory=list)


@dataclass
class Partition:
    index: int
    samples: list
    rng_seed: int

    def __len__(self):
        return len(self.samples)


@dataclass
class SyncReport:
    """Timing and bookkeeping for one iteration (times in seconds).

    A worker's compute time spans fork to finish; its wait time spans
    finish to barrier release.
    """

    iteration: int
    m: int
    weight: int
    samples_processed: list
    compute_time: list
    wait_time: list
    combine_time: float
    wall_time: float

    def deterministic_fields(self) -> dict:
        return {
            "iteration": self.iteration,
            "m": self.m,
            "weight": self.weight,
            "samples_processed": list(self.samples_processed),
        }

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class ParamDataset:
    """Partitioned samples plus the authoritative shared variables.

    ``shared_reads``/``shared_writes`` count engine snapshots and installs
    of the authoritative copy.
    """

    def __init__(
        self,
        partitions: list,
        shared: Optional[SharedVarSet] = None,
        seed: int = 0,
        shuffle: bool = True,
    ):
        self.partitions = partitions
        self._shared = shared if shared is not None else SharedVarSet()
        self.seed = seed
        self.shuffle = shuffle
        self.iteration = 0
        self.shared_reads = 0
        self.shared_writes = 0

    @property
    def shared(self) -> SharedVarSet:
        """Authoritative shared variables (read-only use outside the engine)."""
        return self._shared

    @property
    def num_partitions(self) -> int:
        return len(self.partitions)

    def __len__(self):
        return sum(len(p) for p in self.partitions)

    def samples(self) -> Iterable[WeightedSample]:
        for part in self.partitions:
            yield from part.samples

    def snapshot(self) -> SharedVarSet:
        self.shared_reads += 1
        return self._shared.copy()

    def install(self, shared: SharedVarSet) -> None:
        self.shared_writes += 1
        shared.recorder = None
        self._shared = shared

    def order(self, partition: Partition, iteration: Optional[int] = None):
        """Processing order and random source of a partition for an iteration."""
        k = self.iteration if iteration is None else iteration
        rng = np.random.default_rng([partition.rng_seed, k])
        if self.shuffle:
            order = rng.permutation(len(partition.samples))
        else:
            order = range(len(partition.samples))
        return order, rng

    def flush_pending(self) -> int:
        """Drop every queued delayed operation; returns how many were dropped."""
        n = 0
        for s in self.samples():
            n += len(s.pending)
            s.pending = []
        return n

    def pending_totals(self) -> dict:
        """Sum of queued deltas per key (arrays summed over entries)."""
        out: dict = {}
        for s in self.samples():
            for key, _, delta in s.pending:
                out[key] = out.get(key, 0.0) + float(np.sum(delta))
        return out


def create_dataset(
    elements: Sequence,
    num_partitions: int,
    seed: int,
    shared: Optional[SharedVarSet] = None,
    group_key: Optional[Callable[[Any], Any]] = None,
    shuffle: bool = True,
) -> ParamDataset:
    """Seeded shuffle followed by round-robin assignment to partitions.

    With ``group_key``, elements sharing a key are kept in the same
    partition (groups are shuffled and dealt round-robin instead).
    """
    if num_partitions < 1:
        raise UsageError("num_partitions must be >= 1")
    if len(elements) == 0:
        raise UsageError("cannot build a dataset from no elements")
    rng = np.random.default_rng(derive_seed(seed, 0x5EED))
    if group_key is None:
        units = [[i] for i in range(len(elements))]
    else:
        groups: dict = {}
        for i, e in enumerate(elements):
            groups.setdefault(group_key(e), []).append(i)
        units = list(groups.values())
    perm = rng.permutation(len(units))
    buckets: list[list[int]] = [[] for _ in range(num_partitions)]
    for j, u in enumerate(perm):
        buckets[j % num_partitions].extend(units[u])
    partitions = [
        Partition(
            index=p,
            samples=[WeightedSample(id=i, element=elements[i]) for i in bucket],
            rng_seed=derive_seed(seed, p),
        )
        for p, bucket in enumerate(buckets)
    ]
    return ParamDataset(partitions, shared=shared, seed=seed, shuffle=shuffle)


def assign_workers(num_partitions: int, m: int) -> list:
    """Contiguous, balanced split of partition indices over ``m`` workers."""
    return [list(c) for c in np.array_split(np.arange(num_partitions), m)]


@dataclass
class WorkerResult:
    replica: SharedVarSet
    transform: ThreadTransform
    staged: list
    samples: int
    started: float
    finished: float


def _run_worker(
    ds: ParamDataset,
    parts: Sequence[Partition],
    base: SharedVarSet,
    process: ProcessFn,
    weight: int,
    iteration: int,
    forked: Optional[float] = None,
) -> WorkerResult:
    started = time.perf_counter() if forked is None else forked
    replica = base.copy()
    rec = ThreadTransform()
    replica.recorder = rec
    staged = []
    for part in parts:
        order, rng = ds.order(part, iteration)
        for j in order:
            sample = part.samples[j]
            for key, index, delta in sample.pending:
                replica.execute_delayed(key, delta, index)
            pending: list = []
            local = sample.local.clone().activate(rng)
            replica.bind(pending, weight)
            try:
                process(sample.element, weight, replica, local)
            finally:
                replica.unbind()
                local.deactivate()
            staged.append((sample, local, pending))
    return WorkerResult(replica, rec, staged, len(staged), started, time.perf_counter())


def run_workers(
    ds: ParamDataset,
    process: ProcessFn,
    m: int,
    weight: Optional[int] = None,
    partitions: Optional[Sequence[Partition]] = None,
    base: Optional[SharedVarSet] = None,
) -> list:
    """Run ``m`` workers without combining or committing anything.

    ``weight`` defaults to ``m``.  Sample-local state changes are staged in
    each :class:`WorkerResult` and only become visible through
    :func:`commit`.
    """
    parts = ds.partitions if partitions is None else list(partitions)
    if not 1 <= m <= len(parts):
        raise UsageError(f"m must be in [1, {len(parts)}], got {m}")
    weight = m if weight is None else weight
    if int(weight) != weight or weight < 1:
        raise UsageError("sample weight must be an integer >= 1")
    if base is None:
        base = ds.snapshot()
    groups = [[parts[i] for i in idx] for idx in assign_workers(len(parts), m)]
    if m == 1:
        return [_run_worker(ds, groups[0], base, process, weight, ds.iteration)]
    # compute time runs from the fork, so it includes waiting for the interpreter lock
    forked = time.perf_counter()
    with ThreadPoolExecutor(max_workers=m) as pool:
        futures = [
            pool.submit(_run_worker, ds, g, base, process, weight, ds.iteration, forked)
            for g in groups
        ]
        # result() re-raises the first worker failure; nothing has been committed
        return [f.result() for f in futures]


def commit(results: Sequence[WorkerResult]) -> None:
    for r in results:
        for sample, local, pending in r.staged:
            sample.local = local
            sample.pending = pending


def merge(results: Sequence[WorkerResult], base: SharedVarSet) -> SharedVarSet:
    """Combined shared state of a set of workers.

    A single worker's replica already equals its transform applied to
    ``base``, so it is installed directly.
    """
    if len(results) == 1:
        out = results[0].replica
        out.recorder = None
        return out
    return combine([r.transform for r in results], base)


def run_iteration(
    ds: ParamDataset,
    process: ProcessFn,
    m: int,
    post_combine: Optional[Callable[[SharedVarSet], None]] = None,
    weight: Optional[int] = None,
) -> SyncReport:
    """One full pass over ``ds`` on ``m`` workers with sample weight ``m``.

    If ``process`` raises, the iteration is abandoned and neither shared
    nor sample-local state changes.  ``post_combine`` may edit the merged
    state (e.g. project it) before it is installed.  ``weight`` overrides
    the sample weight; only comparison experiments should need it.
    """
    if not 1 <= m <= ds.num_partitions:
        raise UsageError(f"m must be in [1, {ds.num_partitions}], got {m}")
    t0 = time.perf_counter()
    base = ds.snapshot()
    weight = m if weight is None else weight
    results = run_workers(ds, process, m, weight=weight, base=base)
    release = time.perf_counter()
    new = merge(results, base)
    if post_combine is not None:
        post_combine(new)
    ds.install(new)
    commit(results)
    ds.iteration += 1
    end = time.perf_counter()
    return SyncReport(
        iteration=ds.iteration,
        m=m,
        weight=weight,
        samples_processed=[r.samples for r in results],
        compute_time=[r.finished - r.started for r in results],
        wait_time=[max(0.0, release - r.finished) for r in results],
        combine_time=end - release,
        wall_time=end - t0,
    )


def map_reduce(
    ds: ParamDataset,
    map_fn: Callable[[Any], float],
    reduce_fn: Callable[[float, float], float],
    init: float,
) -> float:
    """Fold ``map_fn`` over elements in partition order, then sample order."""
    acc = init
    for s in ds.samples():
        acc = reduce_fn(acc, map_fn(s.element))
    return acc


def mean_loss(ds: ParamDataset, loss: LossFn, shared: Optional[SharedVarSet] = None) -> float:
    shared = ds.shared if shared is None else shared
    total = map_reduce(ds, lambda e: loss(shared, e), lambda a, b: a + b, 0.0)
    return total / len(ds)


# ----------------------------------------------------------------------
# checkpointing


def _section(buf: io.BytesIO, payload: bytes):
    buf.write(struct.pack("<Q", len(payload)))
    buf.write(payload)


def checkpoint(ds: ParamDataset) -> bytes:
    """Binary snapshot: ``SPLS``, u32 version, length-prefixed sections.

    Sections are a JSON header, the shared variables and the partitions
    (pickled, since sample payloads are arbitrary objects).  Only restore
    checkpoints from trusted sources.
    """
    header = {
        "seed": ds.seed,
        "shuffle": ds.shuffle,
        "iteration": ds.iteration,
        "num_partitions": ds.num_partitions,
    }
    parts = [
        (
            p.index,
            p.rng_seed,
            [(s.id, s.element, s.local.entries(), s.pending) for s in p.samples],
        )
        for p in ds.partitions
    ]
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    _section(buf, json.dumps(header, sort_keys=True).encode())
    _section(buf, pickle.dumps(ds.shared.state(), protocol=pickle.HIGHEST_PROTOCOL))
    _section(buf, pickle.dumps(parts, protocol=pickle.HIGHEST_PROTOCOL))
    return buf.getvalue()


def restore(data: bytes) -> ParamDataset:
    if data[:4] != MAGIC:
        raise FormatError("not a checkpoint (bad magic bytes)")
    if len(data) < 8:
        raise FormatError("truncated checkpoint")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    pos = 8
    sections = []
    for _ in range(3):
        if pos + 8 > len(data):
            raise FormatError("truncated checkpoint")
        (n,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        if pos + n > len(data):
            raise FormatError("truncated checkpoint")
        sections.append(data[pos : pos + n])
        pos += n
    header = json.loads(sections[0])
    shared = SharedVarSet.from_state(pickle.loads(sections[1]))
    partitions = []
    for index, rng_seed, samples in pickle.loads(sections[2]):
        partitions.append(
            Partition(
                index=index,
                samples=[
                    WeightedSample(id=i, element=e, local=LocalVarSet(loc), pending=list(pend))
                    for i, e, loc, pend in samples
                ],
                rng_seed=rng_seed,
            )
        )
    ds = ParamDataset(partitions, shared=shared, seed=header["seed"], shuffle=header["shuffle"])
    ds.iteration = header["iteration"]
    return ds
