import json
import warnings

import pytest

from splash.autotune import (
    CONFIRM_WINS,
    MAX_RETEST_INTERVAL,
    AutoTuner,
    allocate_groups,
    choose,
    tune_iteration,
)
from splash.engine import create_dataset
from splash.errors import UsageError
from splash.varset import SharedVarSet


@pytest.mark.parametrize(
    "M,prev,expected",
    [(64, 1, (1, 4, 16, 43)), (64, 40, (64,)), (8, 1, (1, 7)), (1, 1, (1,))],
)
def test_allocation_tables(M, prev, expected):
    assert allocate_groups(M, prev).group_sizes == expected


def test_allocation_errors():
    with pytest.raises(UsageError):
        allocate_groups(0)
    with pytest.raises(UsageError):
        allocate_groups(4, 0)


def test_allocation_sums_and_shape():
    for M in range(1, 257):
        for prev in range(1, M + 1):
            sizes = allocate_groups(M, prev).group_sizes
            assert sum(sizes) == M and min(sizes) >= 1
            assert list(sizes[:-1]) == sorted(sizes[:-1])
            if prev > M / 2:
                assert sizes == (M,)


def test_choose():
    assert choose([1, 4], [0.9, 0.5]) == 4
    assert choose([1, 4], [0.5, 0.5]) == 4
    assert choose([1, 4, 16], [0.2, 0.5, 0.3]) == 1


def counter(**kw):
    s = SharedVarSet()
    s.declare("c", 0.0)
    s.declare("t", 0.0)
    return s


def proc(e, m, sh, loc):
    sh.add("t", m)
    sh.add("c", 1.0)


def test_no_loss_picks_largest():
    ds = create_dataset(list(range(400)), 64, 0, shared=counter())
    res = tune_iteration(ds, proc, None, 64, 1)
    assert res.candidates == [1, 4, 16, 43] and res.chosen == 43
    assert ds.iteration == 1


def test_strictly_favoured_candidate_wins():
    # a group of m workers on m partitions of 10 samples ends with t = 10m
    ds = create_dataset(list(range(160)), 16, 0, shared=counter())
    res = tune_iteration(ds, proc, lambda sh, e: abs(sh.get("t") - 70.0), 8, 1)
    assert res.candidates == [1, 7] and res.chosen == 7
    assert not res.sequential_fallback
    json.loads(res.to_json())


def test_fallback_when_partitions_short():
    ds = create_dataset(list(range(40)), 4, 0, shared=counter())
    with pytest.warns(RuntimeWarning):
        res = tune_iteration(ds, proc, lambda sh, e: -sh.get("t"), 8, 1)
    assert res.sequential_fallback and res.chosen in res.candidates


def test_retest_schedule_backs_off():
    ds = create_dataset(list(range(320)), 32, 0, shared=counter())
    tuner = AutoTuner(M=8)
    tuned = []
    for it in range(60):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m, rep = tuner.step(ds, proc, lambda sh, e: 0.0)
        tuned.append(tuner.since_tune == 0)
        assert m == 8 or it == 0
    gaps = [i for i, t in enumerate(tuned) if t]
    diffs = [b - a for a, b in zip(gaps, gaps[1:])]
    assert diffs[: CONFIRM_WINS - 1] == [1] * (CONFIRM_WINS - 1)
    assert diffs == sorted(diffs) and max(diffs) <= MAX_RETEST_INTERVAL
    assert max(diffs) > 1
