"""Retrieval-only comment generators used as baselines.

All of them return the comment of a training sample; they differ in how the
nearest training sample is chosen.
"""

from __future__ import annotations

from collections import Counter
from typing import Sequence

import numpy as np
from scipy import sparse

from .corpus import Sample
from .evaluation import sentence_bleu
from .retrieval import Index, index_samples, pair_exemplars

# cosines equal to this many decimals count as ties
_TIE_DECIMALS = 10


def rank_by_score(scores: np.ndarray, ids: Sequence[int]) -> list[int]:
    """Positions sorted by descending score, ties by ascending id."""
    rounded = np.round(scores, _TIE_DECIMALS)
    return sorted(range(len(ids)), key=lambda i: (-rounded[i], ids[i]))


class _Vocab:
    def __init__(self, docs: Sequence[Sequence[str]]):
        terms = sorted({t for d in docs for t in d})
        self.index = {t: i for i, t in enumerate(terms)}

    def counts(self, docs: Sequence[Sequence[str]]) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for r, doc in enumerate(docs):
            for term, c in Counter(doc).items():
                j = self.index.get(term)
                if j is not None:
                    rows.append(r)
                    cols.append(j)
                    vals.append(float(c))
        return sparse.csr_matrix((vals, (rows, cols)), shape=(len(docs), len(self.index)))


def _cosine(query: np.ndarray, docs: np.ndarray) -> np.ndarray:
    qn = np.linalg.norm(query)
    dn = np.linalg.norm(docs, axis=1)
    denom = qn * dn
    dots = docs @ query
    return np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)


class RetrieveOnly:
    """The BM25 exemplar itself, used verbatim as the generated comment."""

    def __init__(self, train: Sequence[Sample], index: Index | None = None):
        self.train = {s.id: s for s in train}
        self.index = index or index_samples(train)

    def predict(self, query: Sample, exclude_self: bool = False) -> list[str]:
        return pair_exemplars([query], self.index, self.train, exclude_self)[0].exemplar_tokens


class VSM:
    """TF-IDF vectors (tf * ln(N/df)) compared by cosine."""

    def __init__(self, train: Sequence[Sample]):
        self.train = list(train)
        self.ids = [s.id for s in self.train]
        docs = [s.code_tokens for s in self.train]
        self.vocab = _Vocab(docs)
        tf = self.vocab.counts(docs)
        df = np.asarray((tf > 0).sum(axis=0)).ravel()
        self.idf = np.log(len(docs) / np.maximum(df, 1))
        self.matrix = tf.multiply(self.idf).tocsr()  # docs x terms
        self._dense = None

    def vector(self, tokens: Sequence[str]) -> np.ndarray:
        return np.asarray(self.vocab.counts([tokens]).multiply(self.idf).todense()).ravel()

    def scores(self, tokens: Sequence[str]) -> np.ndarray:
        q = self.vector(tokens)
        if self._dense is None:
            self._dense = self.matrix.toarray()
        return _cosine(q, self._dense)

    def ranking(self, tokens: Sequence[str]) -> list[int]:
        return [self.ids[i] for i in rank_by_score(self.scores(tokens), self.ids)]

    def predict(self, query: Sample) -> list[str]:
        best = rank_by_score(self.scores(query.code_tokens), self.ids)[0]
        return list(self.train[best].comment_tokens)


def randomized_svd(matrix: np.ndarray, rank: int, n_iter: int = 5, oversample: int = 10, seed: int = 0):
    """Truncated SVD by randomized subspace iteration.

    Returns ``(U, s, Vt)`` with ``rank`` components.
    """
    m, n = matrix.shape
    width = min(rank + oversample, m, n)
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((n, width))
    q, _ = np.linalg.qr(matrix @ omega)
    for _ in range(n_iter):
        z, _ = np.linalg.qr(matrix.T @ q)
        q, _ = np.linalg.qr(matrix @ z)
    small = q.T @ matrix
    u_small, s, vt = np.linalg.svd(small, full_matrices=False)
    u = q @ u_small
    return u[:, :rank], s[:rank], vt[:rank]


def numerical_rank(s: np.ndarray, shape: tuple[int, int]) -> int:
    if s.size == 0:
        return 0
    tol = s.max() * max(shape) * np.finfo(float).eps
    return int(np.sum(s > tol))


class LSI(VSM):
    """Cosine in the span of the top ``d`` left singular vectors of the term-document matrix.

    Documents and queries are both folded in as ``U_d^T x``.
    """

    def __init__(self, train: Sequence[Sample], d: int | None = 500, seed: int = 0, n_iter: int = 5):
        super().__init__(train)
        term_doc = self.matrix.T.toarray()
        full = min(term_doc.shape)
        # find the numerical rank first so that d never exceeds it
        _, s_all, _ = randomized_svd(term_doc, full, n_iter=n_iter, seed=seed)
        rank = numerical_rank(s_all, term_doc.shape)
        self.d = rank if d is None else min(d, rank)
        self.u, self.s, _ = randomized_svd(term_doc, self.d, n_iter=n_iter, seed=seed)
        self.doc_vectors = (self.u.T @ term_doc).T  # docs x d

    def project(self, tokens: Sequence[str]) -> np.ndarray:
        return self.u.T @ self.vector(tokens)

    def scores(self, tokens: Sequence[str]) -> np.ndarray:
        return _cosine(self.project(tokens), self.doc_vectors)


class NNGen:
    """Top-k cosine neighbours over raw term counts, re-ranked by code BLEU."""

    def __init__(self, train: Sequence[Sample], k: int = 5):
        self.train = list(train)
        self.ids = [s.id for s in self.train]
        self.k = k
        self.vocab = _Vocab([s.code_tokens for s in self.train])
        self.matrix = self.vocab.counts([s.code_tokens for s in self.train]).toarray()

    def neighbours(self, tokens: Sequence[str]) -> list[int]:
        q = self.vocab.counts([tokens]).toarray().ravel()
        order = rank_by_score(_cosine(q, self.matrix), self.ids)
        return order[: self.k]

    def predict(self, query: Sample) -> list[str]:
        cands = self.neighbours(query.code_tokens)
        bleus = [sentence_bleu(self.train[i].code_tokens, query.code_tokens) for i in cands]
        best = min(range(len(cands)), key=lambda j: (-round(bleus[j], _TIE_DECIMALS), self.ids[cands[j]]))
        return list(self.train[cands[best]].comment_tokens)


ENGINES = {"retrieve": RetrieveOnly, "vsm": VSM, "lsi": LSI, "nngen": NNGen}

