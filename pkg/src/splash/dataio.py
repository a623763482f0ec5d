"""Parsers, serializers and synthetic generators.

Formats:

* LIBSVM: ``label idx:val ...`` with 1-based, strictly increasing indices
  (stored 0-based).
* Ratings: CSV ``user,item,rating`` with an optional header line.
* UCI bag-of-words: three header lines ``D``, ``W``, ``NNZ`` followed by
  ``docID wordID count`` triples (1-based ids, kept as given).

Every parser rejects malformed records instead of skipping them.
"""

from __future__ import annotations

import gzip
import io
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, TextIO, Union

import numpy as np

from .errors import DataError, FormatError

log = logging.getLogger(__name__)


def open_text(path: Union[str, Path]) -> TextIO:
    """Open a text file, transparently decompressing ``.gz``."""
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, encoding="utf-8")


def _lines(stream) -> Iterable:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    for lineno, line in enumerate(stream, start=1):
        yield lineno, line.strip()


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


# ----------------------------------------------------------------------
# LIBSVM


@dataclass(frozen=True)
class SparseVector:
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise DataError("indices and values must be 1-d and equally long")
        if idx.size and (idx[0] < 0 or np.any(np.diff(idx) <= 0)):
            raise DataError("indices must be non-negative and strictly increasing")
        if not np.all(np.isfinite(val)):
            raise DataError("values must be finite")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def dense(self, dim: int) -> np.ndarray:
        out = np.zeros(dim)
        out[self.indices] = self.values
        return out

    @classmethod
    def from_dense(cls, x) -> "SparseVector":
        x = np.asarray(x, dtype=float)
        idx = np.flatnonzero(x)
        return cls(idx, x[idx])

    def __eq__(self, other):
        return (
            isinstance(other, SparseVector)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.indices.tobytes(), self.values.tobytes()))


@dataclass(frozen=True)
class LabeledPoint:
    label: float
    features: SparseVector


def parse_libsvm(stream) -> list:
    records = []
    for lineno, line in _lines(stream):
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            label = float(parts[0])
            idx = []
            val = []
            for tok in parts[1:]:
                i, v = tok.split(":", 1)
                idx.append(int(i) - 1)
                val.append(float(v))
        except ValueError:
            raise FormatError(f"line {lineno}: malformed LIBSVM record {line!r}") from None
        if idx and min(idx) < 0:
            raise FormatError(f"line {lineno}: LIBSVM indices are 1-based")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise FormatError(f"line {lineno}: indices must be strictly increasing")
        try:
            records.append(LabeledPoint(label, SparseVector(idx, val)))
        except DataError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return records


def serialize_libsvm(records) -> str:
    out = []
    for r in records:
        feats = " ".join(
            f"{i + 1}:{_num(v)}" for i, v in zip(r.features.indices, r.features.values)
        )
        out.append(f"{_num(r.label)} {feats}".rstrip())
    return "\n".join(out) + ("\n" if out else "")


# ----------------------------------------------------------------------
# ratings


def parse_ratings(stream) -> list:
    """``(user, item, rating)`` triples; for duplicate pairs the last one wins."""
    seen: dict = {}
    dupes = 0
    for lineno, line in _lines(stream):
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if lineno == 1 and parts[:3] == ["user", "item", "rating"]:
            continue
        if len(parts) != 3:
            raise FormatError(f"line {lineno}: expected user,item,rating")
        try:
            user, item, rating = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric field in {line!r}") from None
        if not np.isfinite(rating):
            raise DataError(f"line {lineno}: non-finite rating")
        if (user, item) in seen:
            dupes += 1
            del seen[(user, item)]
        seen[(user, item)] = rating
    if dupes:
        warnings.warn(f"{dupes} duplicate (user, item) pairs; kept the last occurrence")
    return [(u, i, r) for (u, i), r in seen.items()]


def serialize_ratings(triples) -> str:
    return "".join(f"{u},{i},{_num(r)}\n" for u, i, r in triples)


def split_ratings(triples, seed: int, test_fraction: float = 0.1):
    """Seeded train/test split holding out ``round(test_fraction * n)`` ratings."""
    n = len(triples)
    n_test = int(round(test_fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = set(perm[:n_test].tolist())
    train = [t for k, t in enumerate(triples) if k not in test_idx]
    test = [t for k, t in enumerate(triples) if k in test_idx]
    return train, test


def group_by_user(triples, item_index: Optional[dict] = None) -> list:
    """Per-user bundles ``(user, item_indices, ratings)`` in first-seen user order.

    ``item_index`` maps raw item ids to dense indices; items missing from
    it are dropped.
    """
    users: dict = {}
    for u, i, r in triples:
        if item_index is not None:
            if i not in item_index:
                continue
            i = item_index[i]
        users.setdefault(u, ([], []))
        users[u][0].append(i)
        users[u][1].append(r)
    return [
        (u, np.asarray(items, dtype=np.int64), np.asarray(rs, dtype=float))
        for u, (items, rs) in users.items()
    ]


# ----------------------------------------------------------------------
# bag of words


@dataclass
class Corpus:
    D: int
    W: int
    docs: np.ndarray  # 1-based doc ids
    words: np.ndarray  # 1-based word ids
    counts: np.ndarray

    def __len__(self):
        return int(self.docs.size)

    @property
    def num_tokens(self) -> int:
        return int(self.counts.sum())

    def documents(self) -> dict:
        """doc id -> list of (word, count)."""
        out: dict = {}
        for d, w, c in zip(self.docs.tolist(), self.words.tolist(), self.counts.tolist()):
            out.setdefault(d, []).append((w, c))
        return out


def parse_bow(stream) -> Corpus:
    header = []
    triples = []
    for lineno, line in _lines(stream):
        if not line:
            continue
        try:
            fields = [int(x) for x in line.split()]
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer field") from None
        if len(header) < 3:
            if len(fields) != 1:
                raise FormatError(f"line {lineno}: expected a single header value")
            header.append(fields[0])
            continue
        if len(fields) != 3:
            raise FormatError(f"line {lineno}: expected 'docID wordID count'")
        triples.append((lineno, *fields))
    if len(header) < 3:
        raise FormatError("missing D/W/NNZ header")
    D, W, nnz = header
    if len(triples) != nnz:
        raise FormatError(f"header declares {nnz} triples, found {len(triples)}")
    for lineno, d, w, c in triples:
        if not 1 <= d <= D:
            raise DataError(f"line {lineno}: docID {d} outside 1..{D}")
        if not 1 <= w <= W:
            raise DataError(f"line {lineno}: wordID {w} outside 1..{W}")
        if c < 1:
            raise DataError(f"line {lineno}: count must be >= 1")
    arr = np.array([t[1:] for t in triples], dtype=np.int64).reshape(-1, 3)
    return Corpus(D, W, arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy())


def serialize_bow(corpus: Corpus) -> str:
    lines = [str(corpus.D), str(corpus.W), str(len(corpus))]
    lines += [f"{d} {w} {c}" for d, w, c in zip(corpus.docs, corpus.words, corpus.counts)]
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# synthetic data


def synth_toy(N: int = 3000, seed: int = 0) -> np.ndarray:
    """``N`` iid standard normal points in the plane."""
    if N < 1:
        raise DataError("N must be >= 1")
    return np.random.default_rng(seed).standard_normal((N, 2))


def synth_multiclass(n: int, dim: int, classes: int, seed: int = 0, density: float = 0.2):
    """Sparse Gaussian-mixture classification data as LabeledPoints."""
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((classes, dim))
    out = []
    for _ in range(n):
        y = int(rng.integers(classes))
        mask = rng.random(dim) < density
        mask[rng.integers(dim)] = True
        x = np.where(mask, centers[y] + rng.standard_normal(dim), 0.0)
        out.append(LabeledPoint(float(y), SparseVector.from_dense(x)))
    return out


def synth_ratings(
    n_users: int = 200,
    n_items: int = 100,
    rank: int = 5,
    density: float = 0.3,
    noise: float = 0.1,
    seed: int = 0,
):
    """Low-rank ratings ``<a_u, b_i> + noise`` observed on a random subset."""
    rng = np.random.default_rng(seed)
    a = np.abs(rng.standard_normal((n_users, rank))) / np.sqrt(rank)
    b = np.abs(rng.standard_normal((n_items, rank))) / np.sqrt(rank) * 2.0
    triples = []
    for u in range(n_users):
        items = np.flatnonzero(rng.random(n_items) < density)
        if items.size == 0:
            items = rng.integers(n_items, size=1)
        for i in items:
            triples.append((u, int(i), float(a[u] @ b[i] + noise * rng.standard_normal())))
    return triples


def synth_corpus(
    D: int = 300,
    W: int = 1000,
    K: int = 20,
    doc_len: int = 100,
    alpha: float = 0.1,
    beta: float = 0.05,
    seed: int = 0,
):
    """Corpus sampled from the LDA generative model with ``K`` known topics.

    Returns ``(corpus, topics)`` where ``topics`` is the K x W matrix used.
    """
    rng = np.random.default_rng(seed)
    topics = rng.dirichlet(np.full(W, beta), size=K)
    docs, words, counts = [], [], []
    for d in range(1, D + 1):
        theta = rng.dirichlet(np.full(K, alpha))
        z = rng.choice(K, size=doc_len, p=theta)
        tok = np.array([rng.choice(W, p=topics[k]) for k in z]) + 1
        uniq, cnt = np.unique(tok, return_counts=True)
        docs += [d] * uniq.size
        words += uniq.tolist()
        counts += cnt.tolist()
    corpus = Corpus(D, W, np.array(docs), np.array(words), np.array(counts))
    return corpus, topics


def split_documents(corpus: Corpus, n_test: int, seed: int = 0, obs_fraction: float = 0.5):
    """Hold out ``n_test`` documents and split each one's word types.

    Returns ``(train_corpus, test_docs)`` with ``test_docs`` a list of
    ``(observed, heldout)`` lists of ``(word, count)``; the two lists share
    no word type.
    """
    rng = np.random.default_rng(seed)
    docs = corpus.documents()
    ids = sorted(docs)
    test_ids = set(rng.choice(ids, size=min(n_test, len(ids) - 1), replace=False).tolist())
    keep = np.array([d not in test_ids for d in corpus.docs.tolist()])
    train = Corpus(corpus.D, corpus.W, corpus.docs[keep], corpus.words[keep], corpus.counts[keep])
    test = []
    for d in sorted(test_ids):
        pairs = docs[d]
        if len(pairs) < 2:
            continue
        perm = rng.permutation(len(pairs))
        n_obs = max(1, int(round(obs_fraction * len(pairs))))
        n_obs = min(n_obs, len(pairs) - 1)
        obs = [pairs[i] for i in sorted(perm[:n_obs])]
        ho = [pairs[i] for i in sorted(perm[n_obs:])]
        test.append((obs, ho))
    return train, test
