"""Desk-scale runs of the logistic regression, CF and LDA tasks.

Each task is run twice from the same seed: once single-threaded (the
baseline) and once with the configured thread count or the autotuner.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..algorithms import (
    LDA,
    CollaborativeFiltering,
    InvSqrt,
    MulticlassLogistic,
    cf_predict_loss,
    corpus_elements,
    lda_predictive_loglik,
    make_cf_test,
)
from ..autotune import AutoTuner
from ..dataio import (
    group_by_user,
    open_text,
    parse_bow,
    parse_libsvm,
    parse_ratings,
    split_documents,
    split_ratings,
    synth_corpus,
    synth_multiclass,
    synth_ratings,
    LabeledPoint,
)
from ..engine import ParamDataset, SyncReport, create_dataset, mean_loss, run_iteration
from ..errors import DataError
from ..varset import SharedVarSet
from .config import ExperimentConfig
from .report import ExperimentResult, MetricRow, timing_row

log = logging.getLogger(__name__)

DOWNLOAD_HINT = {
    "lr": "any LIBSVM multiclass file works, e.g. mnist from "
    "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/multiclass.html",
    "cf": "a CSV of user,item,rating lines (MovieLens ratings.csv converts directly)",
    "lda": "a UCI docword file, e.g. docword.kos.txt.gz from "
    "https://archive.ics.uci.edu/dataset/164/bag+of+words",
}


@dataclass
class TaskSpec:
    name: str
    metric: str
    process: Callable
    tune_loss: Callable
    evaluate: Callable  # shared -> metric value
    make_dataset: Callable  # () -> ParamDataset


def _read(cfg: ExperimentConfig, parser):
    path = Path(cfg.dataset)
    if not path.exists():
        raise DataError(f"dataset {path} not found; {DOWNLOAD_HINT[cfg.task]}")
    with open_text(path) as fh:
        return parser(fh)


def _lr_spec(cfg: ExperimentConfig) -> TaskSpec:
    if cfg.dataset:
        records = _read(cfg, parse_libsvm)
        if not records:
            raise DataError("dataset has no records")
        labels = sorted({r.label for r in records})
        remap = {y: float(k) for k, y in enumerate(labels)}
        records = [LabeledPoint(remap[r.label], r.features) for r in records]
        dim = max(cfg.lr_dim, 1 + max((int(r.features.indices[-1]) for r in records if r.features.nnz), default=0))
        classes = max(cfg.lr_classes, len(labels))
    else:
        dim, classes = cfg.lr_dim, cfg.lr_classes
        records = synth_multiclass(cfg.lr_samples, dim, classes, seed=cfg.seed, density=cfg.lr_density)
    model = MulticlassLogistic(classes, dim)
    process = model.process(InvSqrt(cfg.lr_eta), reg=cfg.lr_reg)

    def make():
        shared = process.init_shared(SharedVarSet(), np.zeros(classes * dim))
        return create_dataset(records, cfg.partitions, cfg.seed, shared=shared)

    def evaluate(shared):
        return sum(model.loss(shared, r) for r in records) / len(records)

    return TaskSpec("lr", "train_loss", process, model.loss, evaluate, make)


def _cf_spec(cfg: ExperimentConfig) -> TaskSpec:
    if cfg.dataset:
        triples = _read(cfg, parse_ratings)
    else:
        triples = synth_ratings(
            cfg.cf_users, cfg.cf_items, cfg.cf_rank, density=cfg.cf_density, seed=cfg.seed
        )
    if not triples:
        raise DataError("no ratings")
    items = sorted({i for _, i, _ in triples})
    item_index = {i: k for k, i in enumerate(items)}
    train, test = split_ratings(triples, cfg.seed)
    bundles = group_by_user(train, item_index)
    held = make_cf_test(bundles, test, item_index)
    model = CollaborativeFiltering(len(items), cfg.cf_dim, cfg.cf_lam, cfg.cf_eta0)

    def make():
        shared = model.init_shared(SharedVarSet(), seed=cfg.seed)
        return create_dataset(bundles, cfg.partitions, cfg.seed, shared=shared)

    return TaskSpec(
        "cf", "heldout_mse", model, model.loss, lambda s: cf_predict_loss(model, s, held), make
    )


def _lda_spec(cfg: ExperimentConfig) -> TaskSpec:
    if cfg.dataset:
        corpus = _read(cfg, parse_bow)
    else:
        corpus, _ = synth_corpus(
            cfg.lda_docs, cfg.lda_vocab, cfg.lda_topics, cfg.lda_doc_len, seed=cfg.seed
        )
    train, test_docs = split_documents(corpus, cfg.lda_test_docs, seed=cfg.seed)
    elements = corpus_elements(train)
    model = LDA(cfg.lda_topics, corpus.W, cfg.lda_alpha, cfg.lda_beta, cfg.lda_oversample)

    def make():
        shared = model.init_shared(SharedVarSet(), [e[0] for e in elements])
        return create_dataset(
            elements, cfg.partitions, cfg.seed, shared=shared, group_key=lambda e: e[0]
        )

    def evaluate(shared):
        return lda_predictive_loglik(model, shared, test_docs, cfg.lda_sweeps, seed=cfg.seed)

    return TaskSpec("lda", "predictive_loglik", model, model.token_loss, evaluate, make)


SPECS = {"lr": _lr_spec, "cf": _cf_spec, "lda": _lda_spec}


def build_task(cfg: ExperimentConfig) -> TaskSpec:
    try:
        return SPECS[cfg.task](cfg)
    except KeyError:
        raise DataError(f"not a training task: {cfg.task!r}") from None


def _fixed_m(cfg: ExperimentConfig, ds: ParamDataset) -> int:
    m = min(cfg.threads, ds.num_partitions)
    if m != cfg.threads:
        log.warning("threads=%d exceeds %d partitions; using %d", cfg.threads, ds.num_partitions, m)
    return m


def train(spec: TaskSpec, cfg: ExperimentConfig, threads, label: str = "",
          tuner_log: Optional[list] = None):
    """Runs ``cfg.iterations`` passes; returns metric rows, timing rows and the m trajectory."""
    ds = spec.make_dataset()
    weight_unit = cfg.weight_policy == "unit"
    tuner = AutoTuner(M=cfg.cores) if threads == "auto" else None
    rows, timing, ms = [], [], []
    for it in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        if tuner is not None:
            m, rep = tuner.step(ds, spec.process, spec.tune_loss)
            if tuner_log is not None and not isinstance(rep, SyncReport):
                tuner_log.append(rep)
        else:
            m = threads if label else _fixed_m(cfg, ds)
            m = min(m, ds.num_partitions)
            rep = run_iteration(ds, spec.process, m, weight=1 if weight_unit else None)
        elapsed = 1e3 * (time.perf_counter() - t0)
        if isinstance(rep, SyncReport):
            timing.append(timing_row(rep))
        value = float(spec.evaluate(ds.shared))
        rows.append(MetricRow(it, spec.metric + label, value, m, elapsed))
        ms.append(m)
        log.info("%s%s iteration %d: m=%d %s=%.6g", spec.name, label, it, m, spec.metric, value)
    return rows, timing, ms


def run_task(task: str, cfg: ExperimentConfig) -> ExperimentResult:
    cfg = cfg.with_overrides(task=task)
    spec = build_task(cfg)
    base_rows, _, _ = train(spec, cfg, 1, label="_baseline")
    tunes: list = []
    rows, timing, ms = train(spec, cfg, cfg.threads, tuner_log=tunes)
    return ExperimentResult(
        task=task,
        config=cfg.to_dict(),
        metrics=rows,
        baseline=base_rows,
        timing=timing,
        m_trajectory=ms,
        extra={"tune": [t.__dict__ for t in tunes]},
    )
