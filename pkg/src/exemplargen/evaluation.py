"""BLEU scoring and the per-length / low-frequency-token reports."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

Tokens = Sequence[str]


@dataclass
class BleuReport:
    bleu: float
    bleu_n: list[float]  # BP * p_n, scaled to 0..100
    brevity_penalty: float
    precisions: list[float]  # p_n in 0..1
    candidate_length: int
    reference_length: int
    matches: list[int] = field(default_factory=list)
    totals: list[int] = field(default_factory=list)

    def lines(self) -> list[str]:
        """Fixed-key text rendering, one metric per line."""
        out = [f"BLEU {self.bleu:.4f}"]
        out += [f"BLEU{n} {v:.4f}" for n, v in enumerate(self.bleu_n, 1)]
        out.append(f"BP {self.brevity_penalty:.6f}")
        out += [f"P{n} {p:.6f}" for n, p in enumerate(self.precisions, 1)]
        out.append(f"CAND_LEN {self.candidate_length}")
        out.append(f"REF_LEN {self.reference_length}")
        return out


def ngram_counts(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped(candidate: Tokens, reference: Tokens, n: int) -> tuple[int, int]:
    cand = ngram_counts(candidate, n)
    ref = ngram_counts(reference, n)
    matched = sum(min(c, ref[g]) for g, c in cand.items())
    return matched, max(len(candidate) - n + 1, 0)


def brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    if cand_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def _report(matches, totals, cand_len, ref_len, max_n, smooth_from=None) -> BleuReport:
    precisions = []
    for n in range(1, max_n + 1):
        m, t = matches[n - 1], totals[n - 1]
        if smooth_from is not None and n >= smooth_from:
            m, t = m + 1, t + 1
        precisions.append(m / t if t > 0 else 0.0)
    bp = brevity_penalty(cand_len, ref_len)
    if min(precisions) > 0.0:
        composite = bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    else:
        composite = 0.0
    return BleuReport(
        bleu=100.0 * composite,
        bleu_n=[100.0 * bp * p for p in precisions],
        brevity_penalty=bp,
        precisions=precisions,
        candidate_length=cand_len,
        reference_length=ref_len,
        matches=list(matches),
        totals=list(totals),
    )


def corpus_bleu(candidates: Sequence[Tokens], references: Sequence[Tokens], max_n: int = 4) -> BleuReport:
    """Corpus-level BLEU with one reference per candidate and uniform weights."""
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates but {len(references)} references")
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            m, t = _clipped(cand, ref, n)
            matches[n - 1] += m
            totals[n - 1] += t
    return _report(matches, totals, cand_len, ref_len, max_n)


def sentence_bleu(candidate: Tokens, reference: Tokens, max_n: int = 4) -> float:
    """Sentence BLEU with add-one smoothing on p_n for n >= 2."""
    matches, totals = [], []
    for n in range(1, max_n + 1):
        m, t = _clipped(candidate, reference, n)
        matches.append(m)
        totals.append(t)
    return _report(matches, totals, len(candidate), len(reference), max_n, smooth_from=2).bleu


# ------------------------------------------------------------------ reports


@dataclass
class BucketRow:
    length: int
    mean_bleu: float
    count: int


def length_bucket_report(
    predictions: Sequence[Tokens],
    references: Sequence[Tokens],
    lengths: Sequence[int],
    bucket_width: int = 1,
) -> list[BucketRow]:
    """Mean sentence BLEU grouped by ``lengths`` (code or comment length).

    A bucket is labelled by its lower bound; empty buckets are omitted.
    """
    if not (len(predictions) == len(references) == len(lengths)):
        raise ValueError("predictions, references and lengths must align")
    if bucket_width < 1:
        raise ValueError("bucket_width must be >= 1")
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for pred, ref, length in zip(predictions, references, lengths):
        key = (length // bucket_width) * bucket_width
        sums[key] = sums.get(key, 0.0) + sentence_bleu(pred, ref)
        counts[key] = counts.get(key, 0) + 1
    return [BucketRow(k, sums[k] / counts[k], counts[k]) for k in sorted(counts)]


@dataclass
class LowFreqRow:
    threshold: int
    correct: int
    reference_total: int


def low_freq_report(
    predictions: Sequence[Tokens],
    references: Sequence[Tokens],
    train_freq: Counter | dict,
    thresholds: Sequence[int] = (10, 20, 50, 100),
) -> list[LowFreqRow]:
    """Count correctly generated tokens whose training frequency is <= threshold.

    A token is correct as often as it occurs in both the prediction and its
    reference (multiset intersection per pair).
    """
    if len(predictions) != len(references):
        raise ValueError("predictions and references must align")
    rows = []
    for thr in thresholds:
        correct = total = 0
        for pred, ref in zip(predictions, references):
            common = Counter(pred) & Counter(ref)
            correct += sum(c for tok, c in common.items() if train_freq.get(tok, 0) <= thr)
            total += sum(1 for tok in ref if train_freq.get(tok, 0) <= thr)
        rows.append(LowFreqRow(thr, correct, total))
    return rows


def write_report(path_text, path_records, bleu: BleuReport, extra: dict[str, list] | None = None):
    """Write the text report and a line-delimited record file for plotting."""
    with open(path_text, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(bleu.lines()) + "\n")
    if path_records is None:
        return
    with open(path_records, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"kind": "bleu", **asdict(bleu)}, sort_keys=True) + "\n")
        for kind, rows in (extra or {}).items():
            for row in rows:
                fh.write(json.dumps({"kind": kind, **asdict(row)}, sort_keys=True) + "\n")
