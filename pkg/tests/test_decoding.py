import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exemplargen.decoding import beam_search, exhaustive_best, greedy_decode

BOS, EOS = 3, 2
V = 4


class TableStepper:
    """Prefix-keyed toy model; the state is an integer code of the prefix."""

    def __init__(self, table=None, seed=0, vocab=V):
        self.table = table or {}
        self.seed = seed
        self.vocab = vocab

    def dist(self, prefix):
        if prefix in self.table:
            p = np.array(self.table[prefix], float)
        else:
            rng = np.random.default_rng([self.seed, hash(prefix) & 0xFFFFFFFF])
            p = rng.dirichlet(np.full(self.vocab, 0.5))
            p[BOS] = 0.0
            p /= p.sum()
        with np.errstate(divide="ignore"):
            return np.log(p)

    def __call__(self, states, last):
        prefixes = list(states[0])
        new = [p + (int(t),) for p, t in zip(prefixes, last)]
        logp = np.stack([self.dist(p) for p in new])
        return logp, (_Prefixes(new),)


class _Prefixes:
    """Row-indexable list of prefixes, standing in for a state array."""

    def __init__(self, rows):
        self.rows = list(rows)

    def __getitem__(self, idx):
        return _Prefixes([self.rows[int(i)] for i in np.atleast_1d(idx)])

    def __iter__(self):
        return iter(self.rows)


def init():
    return (_Prefixes([()]),)


# after <s>: a=.6 b=.4; after a: flat; after b: </s>=.9
TOY = {
    (BOS,): [0.6, 0.4, 0.0, 0.0],
    (BOS, 0): [0.34, 0.33, 0.33, 0.0],
    (BOS, 1): [0.05, 0.05, 0.9, 0.0],
}


def test_toy_greedy_fails_and_beam_matches_exhaustive():
    step = TableStepper(TOY)
    g_tokens, g_score = greedy_decode(step, init(), BOS, EOS, max_len=4)
    b_tokens, b_score = beam_search(step, init(), BOS, EOS, 5, max_len=4)
    e_tokens, e_score = exhaustive_best(step, init(), BOS, EOS, max_len=4)
    assert b_tokens == e_tokens == [1]
    assert b_score == pytest.approx(math.log(0.36), abs=1e-12)
    assert g_tokens[0] == 0 and g_score < b_score


@pytest.mark.parametrize("seed", range(8))
def test_beam_one_equals_greedy(seed):
    step = TableStepper(seed=seed)
    assert beam_search(step, init(), BOS, EOS, 1, max_len=6) == greedy_decode(step, init(), BOS, EOS, max_len=6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 5))
def test_wide_beam_equals_exhaustive(seed, max_len):
    # with every candidate kept, beam search is exact
    step = TableStepper(seed=seed)
    width = sum(3**k for k in range(max_len))
    b_tokens, b_score = beam_search(step, init(), BOS, EOS, width, max_len)
    e_tokens, e_score = exhaustive_best(step, init(), BOS, EOS, max_len)
    assert b_score == pytest.approx(e_score, abs=1e-12)
    assert b_tokens == e_tokens


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 7), st.integers(1, 4))
def test_output_respects_length_bound(seed, max_len, beam):
    step = TableStepper(seed=seed)
    tokens, score = beam_search(step, init(), BOS, EOS, beam, max_len)
    assert len(tokens) <= max_len - 2
    assert EOS not in tokens and BOS not in tokens
    assert np.isfinite(score)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_beam_never_worse_than_greedy_by_more_than_search_error(seed):
    step = TableStepper(seed=seed)
    _, g = greedy_decode(step, init(), BOS, EOS, 5)
    _, e = exhaustive_best(step, init(), BOS, EOS, 5)
    assert e >= g - 1e-12


def test_max_len_two_forces_empty_output():
    step = TableStepper(seed=1)
    assert beam_search(step, init(), BOS, EOS, 3, max_len=2)[0] == []
    assert greedy_decode(step, init(), BOS, EOS, max_len=2)[0] == []


def test_invalid_beam_size():
    with pytest.raises(ValueError):
        beam_search(TableStepper(), init(), BOS, EOS, 0, 5)
