import math
from collections import Counter

import numpy as np
import pytest

from exemplargen.baselines import LSI, NNGen, VSM, RetrieveOnly, numerical_rank, randomized_svd
from exemplargen.evaluation import sentence_bleu

from _support import make_sample, random_corpus


def cos(a: Counter, b: Counter) -> float:
    dot = sum(a[t] * b[t] for t in a)
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    return dot / (na * nb) if na and nb else 0.0


def best_by(scores, ids):
    return min(range(len(ids)), key=lambda i: (-round(scores[i], 10), ids[i]))


# -------------------------------------------------------------------- VSM


def test_vsm_identical_and_orthogonal():
    train = [make_sample(0, ["a", "b", "b"], ["first"]), make_sample(1, ["c", "d"], ["second"])]
    vsm = VSM(train)
    s = vsm.scores(["a", "b", "b"])
    assert s[0] == pytest.approx(1.0, abs=1e-12)
    assert s[1] == 0.0
    assert vsm.predict(make_sample(9, ["d"], [])) == ["second"]


def test_vsm_unknown_query_falls_back_to_lowest_id():
    train = [make_sample(3, ["a"], ["x"]), make_sample(1, ["b"], ["y"])]
    assert VSM(train).predict(make_sample(9, ["zzz"], [])) == ["y"]


def test_vsm_matches_exhaustive_scan():
    rng = np.random.default_rng(0)
    train = random_corpus(rng, 50, 30)
    vsm = VSM(train)
    n = len(train)
    df = Counter(t for s in train for t in set(s.code_tokens))
    idf = {t: math.log(n / df[t]) for t in df}

    def vec(tokens):
        return Counter({t: c * idf[t] for t, c in Counter(tokens).items() if t in idf})

    for q in random_corpus(np.random.default_rng(1), 20, 30):
        scores = [cos(vec(q.code_tokens), vec(s.code_tokens)) for s in train]
        assert np.allclose(vsm.scores(q.code_tokens), scores, atol=1e-12)
        best = best_by(scores, [s.id for s in train])
        assert vsm.predict(q) == train[best].comment_tokens


# -------------------------------------------------------------------- LSI


def test_lsi_full_rank_ranks_like_vsm():
    rng = np.random.default_rng(2)
    train = random_corpus(rng, 30, 60)
    lsi, vsm = LSI(train, d=None), VSM(train)
    for q in random_corpus(np.random.default_rng(3), 15, 60):
        assert lsi.ranking(q.code_tokens)[:5] == vsm.ranking(q.code_tokens)[:5]


def test_lsi_rank_one_matrix():
    # "x" occurs everywhere so its idf is zero; only "a" carries weight
    train = [
        make_sample(0, ["a", "x"], ["one"]),
        make_sample(1, ["a", "a", "x"], ["two"]),
        make_sample(2, ["x"], ["three"]),
    ]
    lsi = LSI(train, d=5)
    assert lsi.d == 1
    assert np.allclose(lsi.scores(["a"]), [1.0, 1.0, 0.0], atol=1e-12)
    assert lsi.predict(make_sample(9, ["a", "a", "a"], [])) == ["one"]


def test_randomized_svd_matches_dense():
    m = np.random.default_rng(4).standard_normal((40, 25))
    u, s, vt = randomized_svd(m, 25, n_iter=3)
    ref = np.linalg.svd(m, compute_uv=False)
    assert np.allclose(s, ref, rtol=1e-8)
    assert np.allclose(u @ np.diag(s) @ vt, m, atol=1e-8)
    u5, s5, _ = randomized_svd(m, 5)
    assert np.allclose(s5, ref[:5], rtol=1e-6)


def test_numerical_rank():
    m = np.outer(np.arange(1, 6), np.arange(1, 4)).astype(float)
    assert numerical_rank(np.linalg.svd(m, compute_uv=False), m.shape) == 1
    assert numerical_rank(np.array([]), (0, 0)) == 0


# ------------------------------------------------------------------ NNGen


def test_nngen_duplicate_returns_its_comment():
    rng = np.random.default_rng(5)
    train = random_corpus(rng, 20, 15)
    for s in train[:5]:
        dup = make_sample(99, s.code_tokens, [])
        assert NNGen(train).predict(dup) == s.comment_tokens


def test_nngen_k_larger_than_corpus():
    train = [make_sample(0, ["a"], ["x"]), make_sample(1, ["b"], ["y"])]
    nn = NNGen(train, k=10)
    assert len(nn.neighbours(["a"])) == 2
    assert nn.predict(make_sample(5, ["b"], [])) == ["y"]


def test_nngen_k1_is_nearest_neighbour():
    rng = np.random.default_rng(6)
    train = random_corpus(rng, 30, 20)
    nn = NNGen(train, k=1)
    for q in random_corpus(np.random.default_rng(7), 10, 20):
        scores = [cos(Counter(q.code_tokens), Counter(s.code_tokens)) for s in train]
        assert nn.predict(q) == train[best_by(scores, [s.id for s in train])].comment_tokens


@pytest.mark.parametrize("k", [3, 5])
def test_nngen_two_stage_oracle(k):
    rng = np.random.default_rng(8)
    train = random_corpus(rng, 20, 10)
    ids = [s.id for s in train]
    nn = NNGen(train, k=k)
    for q in random_corpus(np.random.default_rng(9), 10, 10):
        scores = [cos(Counter(q.code_tokens), Counter(s.code_tokens)) for s in train]
        top = sorted(range(len(train)), key=lambda i: (-round(scores[i], 10), ids[i]))[:k]
        bleus = {i: sentence_bleu(train[i].code_tokens, q.code_tokens) for i in top}
        pick = min(top, key=lambda i: (-round(bleus[i], 10), ids[i]))
        assert nn.predict(q) == train[pick].comment_tokens


# ----------------------------------------------------------- RetrieveOnly


def test_retrieve_only_returns_bm25_exemplar():
    train = [make_sample(0, ["get", "size"], ["returns", "size"]), make_sample(1, ["set", "name"], ["sets", "name"])]
    r = RetrieveOnly(train)
    assert r.predict(make_sample(7, ["get", "size", "fast"], [])) == ["returns", "size"]
    assert r.predict(make_sample(8, ["zzz"], [])) == ["<none>"]


def test_retrieve_only_self_exclusion():
    train = [make_sample(0, ["get", "size"], ["returns", "size"]), make_sample(1, ["get", "name"], ["returns", "name"])]
    r = RetrieveOnly(train)
    assert r.predict(train[0], exclude_self=True) == ["returns", "name"]
    assert r.predict(train[0]) == ["returns", "size"]
