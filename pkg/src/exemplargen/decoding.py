"""Greedy and beam-search decoding over an abstract step function.

A step function maps ``(states, last_tokens)`` for ``n`` live hypotheses to
``(log_probs (n, V), new_states)``.  States are tuples of arrays whose first
axis indexes hypotheses.  ``max_len`` counts ``<s>`` and ``</s>``, so at most
``max_len - 2`` content tokens are produced; the last position may only hold
``</s>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

StepFn = Callable[[tuple, np.ndarray], tuple[np.ndarray, tuple]]


@dataclass
class Hypothesis:
    tokens: list[int]  # starts with <s>
    score: float  # cumulative log-probability
    state_row: int  # row into the current state arrays; -1 once finished
    finished: bool = False


def _select(states: tuple, rows) -> tuple:
    return tuple(a[rows] for a in states)


def _restrict_to_eos(logp: np.ndarray, eos: int) -> np.ndarray:
    forced = np.full_like(logp, -np.inf)
    forced[:, eos] = logp[:, eos]
    return forced


def greedy_decode(step_fn: StepFn, init_state: tuple, bos: int, eos: int, max_len: int) -> tuple[list[int], float]:
    """Arg-max decoding; returns content tokens and their total log-probability."""
    tokens, score, states = [bos], 0.0, init_state
    while True:
        logp, states = step_fn(states, np.array([tokens[-1]]))
        if len(tokens) == max_len - 1:
            logp = _restrict_to_eos(logp, eos)
        nxt = int(np.argmax(logp[0]))
        score += float(logp[0, nxt])
        tokens.append(nxt)
        if nxt == eos:
            return tokens[1:-1], score


def beam_search(
    step_fn: StepFn,
    init_state: tuple,
    bos: int,
    eos: int,
    beam_size: int,
    max_len: int,
) -> tuple[list[int], float]:
    """Keep the ``beam_size`` best hypotheses by cumulative log-probability.

    Finished hypotheses stay in the beam and compete with the extensions of
    live ones; no length normalisation.  Search ends when every hypothesis in
    the beam is finished.  Ties go to the earlier hypothesis, then the lower
    token id.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    beam = [Hypothesis([bos], 0.0, 0)]
    states = init_state
    while not all(h.finished for h in beam):
        live = [h for h in beam if not h.finished]
        rows = np.array([h.state_row for h in live])
        logp, new_states = step_fn(_select(states, rows), np.array([h.tokens[-1] for h in live]))
        if len(live[0].tokens) == max_len - 1:
            logp = _restrict_to_eos(logp, eos)
        vocab = logp.shape[1]

        # candidates in a fixed order: carried finished first, then (live, token)
        done = [h for h in beam if h.finished]
        carried = np.array([h.score for h in done])
        extended = (np.array([h.score for h in live])[:, None] + logp).ravel()
        scores = np.concatenate([carried, extended])
        order = np.lexsort((np.arange(scores.size), -scores))
        keep = [i for i in order[:beam_size] if np.isfinite(scores[i])]

        new_beam, rows = [], []
        for i in keep:
            if i < len(done):
                new_beam.append(done[i])
                continue
            j, tok = divmod(int(i) - len(done), vocab)
            h = live[j]
            fin = tok == eos
            new_beam.append(Hypothesis(h.tokens + [tok], float(scores[i]), -1 if fin else len(rows), fin))
            if not fin:
                rows.append(j)
        beam = new_beam
        states = _select(new_states, np.array(rows, dtype=np.int64))
    best = max(beam, key=lambda h: h.score)  # max keeps the first of equal scores
    return best.tokens[1:-1], best.score


def exhaustive_best(step_fn: StepFn, init_state: tuple, bos: int, eos: int, max_len: int) -> tuple[list[int], float]:
    """Score every admissible sequence; a brute-force reference for small vocabularies."""
    best: tuple[list[int], float] | None = None
    frontier = [([bos], 0.0, init_state)]
    while frontier:
        nxt = []
        for tokens, score, state in frontier:
            logp, new_state = step_fn(state, np.array([tokens[-1]]))
            if len(tokens) == max_len - 1:
                logp = _restrict_to_eos(logp, eos)
            for tok in range(logp.shape[1]):
                s = score + float(logp[0, tok])
                if not np.isfinite(s):
                    continue
                if tok == eos:
                    if best is None or s > best[1]:
                        best = (tokens[1:], s)
                else:
                    nxt.append((tokens + [tok], s, new_state))
        frontier = nxt
    return best
