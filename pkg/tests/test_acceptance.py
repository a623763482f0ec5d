"""Acceptance checks; the conftest prints one PASS/FAIL line per criterion."""

from __future__ import annotations

import os
import time

import numpy as np
import pytest

from splash.algorithms import (
    LDA,
    Ball,
    CollaborativeFiltering,
    DenseSGD,
    InvSqrt,
    MulticlassLogistic,
    Quadratic,
    corpus_elements,
    envelope_gradient,
    lr_gradient,
    lr_loss,
    user_objective,
)
from splash.algorithms.sgd import SparseRegSGD
from splash.algorithms.stepsize import Constant
from splash.autotune import allocate_groups, tune_iteration
from splash.bench.config import config_from_dict
from splash.bench.rate import RateLab, rate_experiment
from splash.bench.tasks import build_task
from splash.bench.toy import ranking_checks, toy_experiment
from splash.cli import main
from splash.dataio import group_by_user, synth_corpus, synth_multiclass, synth_ratings
from splash.engine import create_dataset, run_iteration
from splash.transform import ThreadTransform
from splash.varset import LocalVarSet, SharedVarSet

# ----------------------------------------------------------------------
# 1. sequential equivalence


def hand_loop(partitions, shared, process, iterations):
    """Plain loop over the engine's seeded order with no transform or combine."""
    pending = {s.id: [] for p in partitions for s in p.samples}
    local = {s.id: {} for p in partitions for s in p.samples}
    for it in range(iterations):
        for part in partitions:
            rng = np.random.default_rng([part.rng_seed, it])
            for j in rng.permutation(len(part.samples)):
                sample = part.samples[j]
                for key, index, delta in pending[sample.id]:
                    shared.add(key, delta, index)
                queue = []
                loc = LocalVarSet(dict(local[sample.id])).activate(rng)
                shared.bind(queue, 1)
                process(sample.element, 1, shared, loc)
                shared.unbind()
                pending[sample.id] = queue
                local[sample.id] = loc.entries()
    return shared


def _sgd_case():
    pts = list(np.random.default_rng(1).standard_normal((1000, 2)))
    sgd = DenseSGD(Quadratic((1.0, 0.01)).gradient, InvSqrt(), projection=Ball(2.0), track_average=True)
    return pts, sgd, lambda: sgd.init_shared(SharedVarSet(), np.array([-1.0, -1.0])), None


def _lr_case():
    pts = synth_multiclass(1000, 20, 4, seed=2)
    model = MulticlassLogistic(4, 20)
    proc = model.process(InvSqrt(0.5), reg=0.01)
    return pts, proc, lambda: proc.init_shared(SharedVarSet(), np.zeros(80)), None


def _cf_case():
    bundles = group_by_user(synth_ratings(1000, 40, 3, density=0.1, seed=3))
    model = CollaborativeFiltering(40, dim=4, lam=0.02)
    return bundles, model, lambda: model.init_shared(SharedVarSet(), seed=3), None


def _lda_case():
    corpus, _ = synth_corpus(D=40, W=100, K=4, doc_len=30, seed=4)
    elems = corpus_elements(corpus)[:1000]
    model = LDA(K=4, W=100, q=4)
    return elems, model, lambda: model.init_shared(SharedVarSet(), [e[0] for e in elems]), (lambda e: e[0])


@pytest.mark.criterion(1)
@pytest.mark.parametrize("case", [_sgd_case, _lr_case, _cf_case, _lda_case], ids=["sgd", "lr", "cf", "lda"])
def test_sequential_equivalence(case, measured):
    elems, proc, fresh, group = case()
    ds = create_dataset(elems, 4, 17, shared=fresh(), group_key=group)
    t0 = time.perf_counter()
    for _ in range(2):
        run_iteration(ds, proc, 1)
    elapsed = (time.perf_counter() - t0) / 2
    ref = hand_loop(ds.partitions, fresh(), proc, 2)
    got, want = ds.shared.to_dict(), ref.to_dict()
    assert got.keys() == want.keys()
    for k in got:
        assert np.array_equal(got[k], want[k]), k
    measured(f"{case.__name__[1:-5]} {elapsed:.2f}s/pass")
    assert elapsed < 1.0


# ----------------------------------------------------------------------
# 2. transform oracle


@pytest.mark.criterion(2)
def test_transform_oracle(measured):
    rng = np.random.default_rng(0)
    n = 4
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(10_000):
        t = ThreadTransform()
        v0 = rng.uniform(-5, 5)
        u0 = rng.uniform(-5, 5, n)
        v, u = v0, u0.copy()
        for _ in range(int(rng.integers(1, 41))):
            op = rng.integers(6)
            x = rng.uniform(-3, 3)
            g = rng.uniform(0.5, 2.0)
            i = int(rng.integers(n))
            if op == 0:
                t.compose_add("v", x)
                v = v + x
            elif op == 1:
                t.compose_multiply("v", g)
                v = v * g
            elif op == 2:
                t.compose_delayed("v", x)
                v = v + x
            elif op == 3:
                t.compose_add("u", x, i, n)
                u[i] += x
            elif op == 4:
                t.compose_multiply("u", g, n)
                u = u * g
            else:
                t.compose_delayed("u", x, i, n)
                u[i] += x
        got_v = t.apply("v", v0)
        worst = max(worst, abs(got_v - v) / max(1.0, abs(v)))
        if "u" in t:
            got_u = t.apply("u", u0)
            worst = max(worst, float(np.max(np.abs(got_u - u) / np.maximum(1.0, np.abs(u)))))
    elapsed = time.perf_counter() - t0
    measured(f"max rel err {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-12
    assert elapsed < 5.0


# ----------------------------------------------------------------------
# 3. toy experiment


@pytest.fixture(scope="module")
def toy_summary():
    t0 = time.perf_counter()
    summary = toy_experiment(range(50), N=3000, m=30)
    summary["elapsed"] = time.perf_counter() - t0
    return summary


@pytest.mark.criterion(3)
def test_toy_accumulate_worse_than_average(toy_summary, measured):
    L = toy_summary["median_loss"]
    measured(f"L(e)={L['e']:.4g} L(d)={L['d']:.5f}")
    assert ranking_checks(toy_summary)["accumulate_worse_than_average"]


@pytest.mark.criterion(3)
def test_toy_average_worse_than_combine(toy_summary, measured):
    L = toy_summary["median_loss"]
    measured(f"L(d)={L['d']:.5f} vs L(g)={L['g']:.5f}")
    assert ranking_checks(toy_summary)["average_worse_than_combine"]


@pytest.mark.criterion(3)
def test_toy_accumulate_diverges(toy_summary, measured):
    d = toy_summary["median_distance"]
    measured(f"|e-w*|={d['e']:.3g} vs |w0-w*|={d['w0']:.3g}")
    assert ranking_checks(toy_summary)["accumulate_diverges"]


@pytest.mark.criterion(3)
def test_toy_combine_close_to_sequential(toy_summary, measured):
    L = toy_summary["median_loss"]
    measured(f"L(g)-L(a)={L['g'] - L['a']:.4f} vs 2(L(b)-L(a))={2 * (L['b'] - L['a']):.4f}, "
             f"{toy_summary['elapsed']:.0f}s")
    assert ranking_checks(toy_summary)["combine_gap_within_2x_sequential"]
    assert toy_summary["elapsed"] < 60


# ----------------------------------------------------------------------
# 4. rate law


@pytest.fixture(scope="module")
def rate_table():
    t0 = time.perf_counter()
    table = rate_experiment(trials=2000, seed=0)
    table["elapsed"] = time.perf_counter() - t0
    return table


@pytest.mark.criterion(4)
def test_rate_slope(rate_table, measured):
    measured(f"slope {rate_table['slope']:.3f}, {rate_table['elapsed']:.0f}s")
    assert abs(rate_table["slope"] + 1.0) <= 0.15
    assert rate_table["elapsed"] < 600
    assert all(c["se"] < 0.1 * c["mse"] for c in rate_table["cells"])


@pytest.mark.criterion(4)
def test_rate_doubling(rate_table, measured):
    ratios = [d["ratio"] for d in rate_table["doubling"]]
    measured(f"{len(ratios)} doubling ratios in [{min(ratios):.3f}, {max(ratios):.3f}]")
    assert all(0.4 <= r <= 0.65 for r in ratios)


@pytest.mark.criterion(4)
def test_rate_sequential_cross_check():
    lab = RateLab(seed=0)
    S = lab.dataset()
    idx = lab.draws(1, 1, 2000, 3, 99)
    sim = lab.simulate(1, 1, 2000, idx, S)
    for k in range(3):
        assert np.array_equal(sim[k], lab.sequential_reference(idx[k].reshape(-1), S))
    eng = lab.engine_run(2, 4, 100, lab.draws(2, 4, 100, 1, 5)[0], S)
    np.testing.assert_allclose(eng, lab.simulate(2, 4, 100, lab.draws(2, 4, 100, 1, 5), S)[0], rtol=1e-12)


# ----------------------------------------------------------------------
# 5. operator complexity


@pytest.mark.criterion(5)
def test_multiply_write_count(measured):
    writes = []
    for n in (10**2, 10**4, 10**6):
        s = SharedVarSet()
        s.declare("u", np.ones(n))
        before = s.element_writes
        for _ in range(5):
            s.multiply("u", 1.5)
        writes.append(s.element_writes - before)
    measured(f"multiply writes {writes}")
    assert len(set(writes)) == 1


@pytest.mark.criterion(5)
def test_sparse_step_cost_and_oracle(measured):
    d = 100_000
    rng = np.random.default_rng(0)
    steps = []
    for _ in range(50):
        idx = np.sort(rng.choice(d, 5, replace=False))
        steps.append((idx, rng.standard_normal(5)))

    def grad(view, elem):
        idx, x = elem
        return idx, (view[idx] @ x - 1.0) * x

    proc = SparseRegSGD(grad, Constant(0.01), reg=0.1)
    sh = proc.init_shared(SharedVarSet(), np.full(d, 0.5))
    sh.bind([], 1)
    w = np.full(d, 0.5)
    per_step = []
    for elem in steps:
        before = sh.element_writes
        proc(elem, 1, sh, None)
        per_step.append(sh.element_writes - before)
        idx, x = elem
        g = np.zeros(d)
        g[idx] = (w[idx] @ x - 1.0) * x
        w = (1 - 0.01 * 0.1) * w - 0.01 * g
    measured(f"max writes/step {max(per_step)} for nnz 5, d={d}")
    assert max(per_step) <= 3 * 5 + 2
    np.testing.assert_allclose(sh.get("w"), w, rtol=1e-10, atol=0)


# ----------------------------------------------------------------------
# 6. LDA


def _check_counts(model, shared, tokens_net):
    nwk = shared.get("nwk").reshape(model.W, model.K)
    nk = shared.get("nk")
    assert np.array_equal(nwk.sum(axis=0), nk)
    assert nwk.sum() == model.q * tokens_net
    assert nk.sum() == model.q * tokens_net


@pytest.mark.criterion(6)
@pytest.mark.parametrize("m,q", [(1, 1), (2, 2), (3, 10), (4, 10), (5, 3), (7, 6)])
def test_lda_conservation(m, q):
    corpus, _ = synth_corpus(D=30, W=60, K=5, doc_len=25, seed=m * 10 + q)
    elems = corpus_elements(corpus)
    model = LDA(K=5, W=60, q=q)
    sh = model.init_shared(SharedVarSet(), [e[0] for e in elems])
    ds = create_dataset(elems, 8, q, shared=sh, group_key=lambda e: e[0])
    tokens = sum(c for _, _, c in elems)
    for _ in range(4):
        run_iteration(ds, model, m)
        _check_counts(model, ds.shared, tokens)
        for d in {e[0] for e in elems}:
            assert ds.shared.get(f"doc:{d}").sum() == q * sum(c for dd, _, c in elems if dd == d)
    # pending removals cancel the live counts exactly
    assert ds.pending_totals()["nk"] == -q * tokens


@pytest.mark.criterion(6)
def test_lda_parallel_quality(measured):
    cfg = config_from_dict({"task": "lda", "partitions": 16, "seed": 0})
    spec = build_task(cfg)
    passes = 30
    t0 = time.perf_counter()
    scores = {}
    for m in (1, 4):
        ds = spec.make_dataset()
        for _ in range(passes):
            run_iteration(ds, spec.process, m)
        scores[m] = spec.evaluate(ds.shared)
    elapsed = time.perf_counter() - t0
    measured(f"m=1 {scores[1]:.4f} vs m=4 {scores[4]:.4f} after {passes} passes, {elapsed:.0f}s")
    assert abs(scores[1] - scores[4]) <= 0.05
    assert elapsed < 300


# ----------------------------------------------------------------------
# 7. autotune


@pytest.mark.criterion(7)
def test_allocation_tables_and_sums(measured):
    assert allocate_groups(64, 1).group_sizes == (1, 4, 16, 43)
    assert allocate_groups(64, 40).group_sizes == (64,)
    assert allocate_groups(8, 1).group_sizes == (1, 7)
    t0 = time.perf_counter()
    for M in range(1, 1025):
        for prev in range(1, M + 1):
            assert sum(allocate_groups(M, prev).group_sizes) == M
    elapsed = time.perf_counter() - t0
    measured(f"exhaustive sums {elapsed:.1f}s")
    assert elapsed < 10


@pytest.mark.criterion(7)
@pytest.mark.parametrize("target", [1, 4, 16, 43])
def test_favoured_candidate_selected(target):
    s = SharedVarSet()
    s.declare("t", 0.0)
    ds = create_dataset(list(range(1280)), 128, 0, shared=s)

    def proc(e, m, sh, loc):
        sh.add("t", m)

    # a group of m workers over m partitions of 10 samples ends at t = 10m
    res = tune_iteration(ds, proc, lambda sh, e: abs(sh.get("t") - 10.0 * target), 64, 1)
    assert res.candidates == [1, 4, 16, 43]
    assert res.chosen == target


# ----------------------------------------------------------------------
# 8. gradient checks


def _central(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


@pytest.mark.criterion(8)
def test_lr_gradient_fd(measured):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        K, d = int(rng.integers(2, 6)), int(rng.integers(2, 8))
        model = MulticlassLogistic(K, d)
        (pt,) = synth_multiclass(1, d, K, seed=int(rng.integers(1 << 30)), density=0.7)
        w = rng.standard_normal(K * d)

        def f(wv):
            sh = SharedVarSet()
            sh.declare("w", wv)
            return lr_loss(model, sh, pt)

        sh = SharedVarSet()
        sh.declare("w", w)
        idx, vals = lr_gradient(model, sh, pt)
        g = np.zeros(K * d)
        g[idx] = vals
        worst = max(worst, _rel(g, _central(f, w)))
    measured(f"lr worst rel err {worst:.1e}")
    assert worst < 1e-4


@pytest.mark.criterion(8)
def test_cf_envelope_gradient_fd(measured):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        V = rng.standard_normal((4, 3))
        r = rng.uniform(1, 5, 4)
        lam = 0.02
        g = envelope_gradient(V, r, lam)
        fd = _central(lambda X: user_objective(X, r, lam), V)
        worst = max(worst, _rel(g, fd))
    measured(f"cf worst rel err {worst:.1e}")
    assert worst < 1e-4


# ----------------------------------------------------------------------
# 9. determinism


SMALL = (
    'iterations = 3\npartitions = 16\ncores = 8\nlr_dim = 40\nlr_samples = 300\n'
    'cf_dim = 6\ncf_users = 60\ncf_items = 30\nlda_docs = 30\nlda_vocab = 120\n'
    'lda_topics = 4\nlda_doc_len = 30\nlda_test_docs = 5\nlda_oversample = 3\nlda_sweeps = 4\n'
    'toy_n = 600\ntoy_m = 10\ntoy_seeds = 3\nrate_T = [1, 2]\nrate_m = [1, 2]\nrate_n = [50]\n'
    'rate_trials = 20\n'
)


@pytest.mark.criterion(9)
@pytest.mark.parametrize(
    "argv",
    [["run", "lr"], ["run", "cf", "--threads", "auto"], ["run", "lda"], ["tune", "cf"], ["toy"], ["rate"]],
    ids=["lr", "cf-auto", "lda", "tune", "toy", "rate"],
)
def test_cli_byte_identical(argv, tmp_path, monkeypatch):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SMALL)
    blobs = []
    for k, cores in enumerate((1, 64)):
        monkeypatch.setattr(os, "cpu_count", lambda c=cores: c)
        out = tmp_path / f"out{k}"
        assert main(argv + ["--config", str(cfg), "--seed", "5", "--out", str(out)]) == 0
        blobs.append((out / "metrics.csv").read_bytes())
    assert blobs[0] == blobs[1]
    assert len(blobs[0].splitlines()) > 1
