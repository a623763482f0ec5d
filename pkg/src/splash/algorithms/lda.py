"""Collapsed Gibbs sampling for LDA with weighted tokens and oversampling.

Shared keys: ``nwk`` (flat ``W*K``, entry ``w*K + k``), ``nk`` (length
``K``) and one ``doc:<d>`` array per document.  An element is a token
group ``(doc, word, count)`` with a 0-based word id.  Each processing
draws ``q`` topics from the same conditional, adds their weighted
histogram to the three counters and queues the matching removal as a
delayed add, so it executes right before the group's next draw.

Counts are stored in units of ``1/q`` token.  Every increment is then an
integer, and so is every combined value, which keeps the count
identities exact for any thread count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, UsageError
from ..varset import SharedVarSet

log = logging.getLogger(__name__)


def doc_key(doc) -> str:
    return f"doc:{doc}"


def topic_probabilities(nd, nw, nk, alpha: float, beta: float, W: int) -> np.ndarray:
    """Normalised conditional over topics; negative counts are read as 0."""
    p = (
        (np.maximum(nd, 0.0) + alpha)
        * (np.maximum(nw, 0.0) + beta)
        / (np.maximum(nk, 0.0) + beta * W)
    )
    return p / p.sum()


def draw_topics(p: np.ndarray, q: int, rng: np.random.Generator) -> np.ndarray:
    """``q`` iid draws from ``p``."""
    cdf = np.cumsum(p)
    u = rng.random(q) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), p.size - 1)


@dataclass
class LDA:
    K: int
    W: int
    alpha: float = 0.1
    beta: float = 0.1
    q: int = 10

    def __post_init__(self):
        if self.K < 1 or self.W < 1 or self.q < 1:
            raise UsageError("K, W and q must be >= 1")
        if not (self.alpha > 0 and self.beta > 0):
            raise UsageError("alpha and beta must be > 0")

    def init_shared(self, shared: SharedVarSet, docs) -> SharedVarSet:
        shared.declare("nwk", np.zeros(self.W * self.K))
        shared.declare("nk", np.zeros(self.K))
        for d in sorted(set(docs)):
            shared.declare(doc_key(d), np.zeros(self.K))
        return shared

    def __call__(self, elem, weight, shared, local) -> None:
        d, w, count = elem
        if not 0 <= w < self.W:
            raise DataError(f"word id {w} outside 0..{self.W - 1}")
        dk = doc_key(d)
        widx = w * self.K + np.arange(self.K)
        q = self.q
        p = topic_probabilities(
            shared.get(dk) / q,
            shared.get("nwk", widx) / q,
            shared.get("nk") / q,
            self.alpha,
            self.beta,
            self.W,
        )
        topics = draw_topics(p, q, local.rng)
        hist = np.bincount(topics, minlength=self.K)
        hit = np.flatnonzero(hist)
        inc = (weight * count) * hist[hit].astype(float)
        shared.add("nwk", inc, widx[hit])
        shared.add(dk, inc, hit)
        shared.add("nk", inc, hit)
        shared.delayed_add("nwk", -inc, widx[hit])
        shared.delayed_add(dk, -inc, hit)
        shared.delayed_add("nk", -inc, hit)
        local.set("topics", topics)

    def counts(self, shared: SharedVarSet, key: str, index=None) -> np.ndarray:
        """Stored counts converted to tokens, negatives read as 0."""
        return np.maximum(shared.get(key, index) / self.q, 0.0)

    def token_loss(self, shared: SharedVarSet, elem) -> float:
        """Negative log-likelihood of a token group under the current counts."""
        d, w, count = elem
        nd = self.counts(shared, doc_key(d))
        theta = (nd + self.alpha) / (nd.sum() + self.K * self.alpha)
        nw = self.counts(shared, "nwk", w * self.K + np.arange(self.K))
        phi = (nw + self.beta) / (self.counts(shared, "nk") + self.beta * self.W)
        return -count * float(np.log(theta @ phi))

    def topics(self, shared: SharedVarSet) -> np.ndarray:
        """``phi[k, w] = (n_wk + beta) / (n_k + beta W)``."""
        nwk = self.counts(shared, "nwk").reshape(self.W, self.K)
        nk = self.counts(shared, "nk")
        return ((nwk + self.beta) / (nk + self.beta * self.W)).T


def corpus_elements(corpus) -> list:
    """Token groups ``(doc, word, count)`` with 0-based words."""
    return [
        (int(d), int(w) - 1, int(c))
        for d, w, c in zip(corpus.docs.tolist(), corpus.words.tolist(), corpus.counts.tolist())
    ]


def _expand(pairs) -> np.ndarray:
    return np.repeat(
        np.array([w for w, _ in pairs], dtype=np.int64), [c for _, c in pairs]
    )


def fold_in(phi: np.ndarray, words: np.ndarray, alpha: float, sweeps: int, rng) -> np.ndarray:
    """Topic mixture of one document with topics held fixed.

    ``theta`` is averaged over the second half of the sweeps.
    """
    K = phi.shape[0]
    z = rng.integers(K, size=words.size)
    ndk = np.bincount(z, minlength=K).astype(float)
    theta = np.zeros(K)
    kept = 0
    norm = words.size + K * alpha
    for sweep in range(sweeps):
        u = rng.random(words.size)
        for i, w in enumerate(words):
            ndk[z[i]] -= 1.0
            p = (ndk + alpha) * phi[:, w]
            cdf = np.cumsum(p)
            k = min(int(np.searchsorted(cdf, u[i] * cdf[-1], side="right")), K - 1)
            z[i] = k
            ndk[k] += 1.0
        if sweep >= sweeps // 2:
            theta += (ndk + alpha) / norm
            kept += 1
    return theta / kept


def lda_predictive_loglik(
    model: LDA, shared: SharedVarSet, test_docs, sweeps: int = 20, seed: int = 0
) -> float:
    """Mean log-likelihood per held-out word.

    ``test_docs`` holds ``(observed, heldout)`` lists of ``(word, count)``
    pairs with 1-based word ids.  Documents without observed words are
    skipped.
    """
    phi = model.topics(shared)
    rng = np.random.default_rng(seed)
    total = 0.0
    n = 0
    for j, (obs, ho) in enumerate(test_docs):
        if not obs:
            log.warning("test document %d has no observed words; skipped", j)
            continue
        words = _expand([(w - 1, c) for w, c in obs])
        theta = fold_in(phi, words, model.alpha, sweeps, rng)
        for w, c in ho:
            total += c * float(np.log(theta @ phi[:, w - 1]))
            n += c
    if n == 0:
        raise UsageError("no held-out words to score")
    return total / n
