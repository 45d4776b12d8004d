"""BM25 inverted index and exemplar pairing."""

from __future__ import annotations

import heapq
import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import NONE_TOKEN, Sample

K1 = 1.2
B = 0.75
INDEX_FORMAT = "exemplargen-bm25-index"
INDEX_VERSION = 1
EMPTY_EXEMPLAR = [NONE_TOKEN]


class IndexBuildError(ValueError):
    pass


@dataclass
class Index:
    postings: dict[str, list[tuple[int, int]]]
    doc_len: dict[int, int]
    df: dict[str, int]
    doc_count: int
    avg_len: float
    k1: float = K1
    b: float = B

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))

    def save(self, path):
        data = {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "k1": self.k1,
            "b": self.b,
            "doc_count": self.doc_count,
            "avg_len": self.avg_len,
            "doc_len": [[d, n] for d, n in sorted(self.doc_len.items())],
            "postings": {t: [list(p) for p in ps] for t, ps in sorted(self.postings.items())},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> Index:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if data.get("format") != INDEX_FORMAT or data.get("version") != INDEX_VERSION:
            raise ValueError(f"{path}: not a version-{INDEX_VERSION} BM25 index")
        postings = {t: [(int(d), int(tf)) for d, tf in ps] for t, ps in data["postings"].items()}
        return cls(
            postings=postings,
            doc_len={int(d): int(n) for d, n in data["doc_len"]},
            df={t: len(ps) for t, ps in postings.items()},
            doc_count=int(data["doc_count"]),
            avg_len=float(data["avg_len"]),
            k1=float(data["k1"]),
            b=float(data["b"]),
        )


@dataclass(frozen=True)
class RetrievalResult:
    doc_id: int
    score: float
    rank: int


@dataclass
class ExemplarPair:
    query_id: int
    similar_id: int | None
    score: float
    exemplar_tokens: list[str]

    def to_json(self) -> str:
        return json.dumps(
            {
                "query_id": self.query_id,
                "similar_id": self.similar_id,
                "score": self.score,
                "exemplar_tokens": self.exemplar_tokens,
            }
        )


def build_index(docs: Iterable[tuple[int, Sequence[str]]]) -> Index:
    """Index ``(doc_id, tokens)`` pairs; tokens are already normalised."""
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_len: dict[int, int] = {}
    for doc_id, tokens in sorted(docs, key=lambda d: d[0]):
        if doc_id in doc_len:
            raise IndexBuildError(f"duplicate document id {doc_id}")
        doc_len[doc_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((doc_id, tf))
    if not doc_len:
        raise IndexBuildError("cannot build an index over an empty corpus")
    return Index(
        postings=postings,
        doc_len=doc_len,
        df={t: len(ps) for t, ps in postings.items()},
        doc_count=len(doc_len),
        avg_len=sum(doc_len.values()) / len(doc_len),
    )


def index_samples(samples: Sequence[Sample], field: str = "code_tokens") -> Index:
    return build_index((s.id, getattr(s, field)) for s in samples)


def _term_weight(index: Index, tf: int, dl: int) -> float:
    norm = index.k1 * (1.0 - index.b + index.b * dl / index.avg_len) if index.avg_len > 0 else index.k1
    return tf * (index.k1 + 1.0) / (tf + norm)


def bm25_score(index: Index, query_tokens: Sequence[str], doc_id: int) -> float:
    if doc_id not in index.doc_len:
        raise KeyError(doc_id)
    dl = index.doc_len[doc_id]
    score = 0.0
    for term in sorted(set(query_tokens)):
        for d, tf in index.postings.get(term, ()):
            if d == doc_id:
                score += index.idf(term) * _term_weight(index, tf, dl)
                break
    return score


def score_all(index: Index, query_tokens: Sequence[str]) -> dict[int, float]:
    """Scores for every document that shares at least one term with the query."""
    scores: dict[int, float] = {}
    for term in sorted(set(query_tokens)):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for d, tf in plist:
            scores[d] = scores.get(d, 0.0) + idf * _term_weight(index, tf, index.doc_len[d])
    return scores


def retrieve(index: Index, query_tokens: Sequence[str], k: int, exclude_id: int | None = None) -> list[RetrievalResult]:
    """Top-k documents by BM25, ties broken by ascending id.

    Documents sharing no term score 0 and still rank (after all positive ones).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = score_all(index, query_tokens)
    candidates = ((-scores.get(d, 0.0), d) for d in index.doc_len if d != exclude_id)
    top = heapq.nsmallest(k, candidates)
    return [RetrievalResult(d, -neg, r) for r, (neg, d) in enumerate(top, 1)]


def pair_exemplars(
    queries: Sequence[Sample],
    index: Index,
    corpus: Sequence[Sample] | dict[int, Sample],
    exclude_self: bool,
    field: str = "code_tokens",
) -> list[ExemplarPair]:
    """Attach to each query the comment of its best match in ``corpus``.

    A query with no positively scored match gets the empty-exemplar marker.
    """
    by_id = corpus if isinstance(corpus, dict) else {s.id: s for s in corpus}
    pairs = []
    for q in queries:
        scores = score_all(index, getattr(q, field))
        if exclude_self:
            scores.pop(q.id, None)
        # only positively scored documents can serve; same order as retrieve()
        best = min(((-sc, d) for d, sc in scores.items() if sc > 0.0), default=None)
        if best is None:
            pairs.append(ExemplarPair(q.id, None, 0.0, list(EMPTY_EXEMPLAR)))
            continue
        neg, doc_id = best
        pairs.append(ExemplarPair(q.id, doc_id, -neg, list(by_id[doc_id].comment_tokens)))
    return pairs


def write_pairs(path, pairs: Iterable[ExemplarPair]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in pairs:
            fh.write(p.to_json() + "\n")


def read_pairs(path) -> list[ExemplarPair]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            out.append(ExemplarPair(int(d["query_id"]), d["similar_id"], float(d["score"]), list(d["exemplar_tokens"])))
    return out
