import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgtrans.metrics import (
    attention_distance_profile,
    bleu4_corpus,
    bleu4_sentence_smoothed,
    meteor,
    meteor_alignment,
    rouge_l,
    score_corpus,
)

TOL = 1e-9


# -- brute-force oracles ---------------------------------------------------------

def is_subsequence(sub, seq):
    it = iter(seq)
    return all(any(x == y for y in it) for x in sub)


def rouge_oracle(cand, ref):
    lcs = 0
    for r in range(len(cand), 0, -1):
        if any(is_subsequence(c, ref) for c in itertools.combinations(cand, r)):
            lcs = r
            break
    if lcs == 0:
        return 0.0
    p, rr = lcs / len(cand), lcs / len(ref)
    beta = p / rr
    return (1 + beta**2) * p * rr / (rr + beta**2 * p)


def alignments(cand, ref, i=0, used=()):
    if i == len(cand):
        yield ()
        return
    for rest in alignments(cand, ref, i + 1, used):
        yield rest
    for j, tok in enumerate(ref):
        if tok == cand[i] and j not in used:
            for rest in alignments(cand, ref, i + 1, used + (j,)):
                yield ((i, j),) + rest


def meteor_oracle(cand, ref):
    best = (0, 0)
    for align in alignments(cand, ref):
        if not align:
            continue
        chunks = 1
        for (i0, j0), (i1, j1) in zip(align, align[1:]):
            if not (i1 == i0 + 1 and j1 == j0 + 1):
                chunks += 1
        best = max(best, (len(align), -chunks))
    m, chunks = best[0], -best[1]
    if m == 0:
        return 0.0
    p, r = m / len(cand), m / len(ref)
    f = p * r / (0.9 * p + 0.1 * r)
    return (1 - 0.5 * (chunks / m) ** 3) * f


def bleu_oracle(cands, refs):
    num = [0] * 4
    den = [0] * 4
    for c, r in zip(cands, refs):
        for n in range(1, 5):
            c_grams = [tuple(c[i : i + n]) for i in range(len(c) - n + 1)]
            r_grams = [tuple(r[i : i + n]) for i in range(len(r) - n + 1)]
            for g in set(c_grams):
                num[n - 1] += min(c_grams.count(g), r_grams.count(g))
            den[n - 1] += len(c_grams)
    c_len = sum(map(len, cands))
    r_len = sum(map(len, refs))
    if c_len == 0 or 0 in num:
        return 0.0
    geo = math.exp(sum(0.25 * math.log(a / b) for a, b in zip(num, den)))
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return 100 * bp * geo


def random_pairs(seed, count=200, max_len=8, vocab="abcd"):
    rng = random.Random(seed)
    pairs = []
    for _ in range(count):
        c = [rng.choice(vocab) for _ in range(rng.randint(1, max_len))]
        r = [rng.choice(vocab) for _ in range(rng.randint(1, max_len))]
        pairs.append((c, r))
    return pairs


# -- oracle agreement ------------------------------------------------------------

def test_rouge_matches_oracle_on_random_pairs():
    for c, r in random_pairs(0):
        assert abs(rouge_l(c, r) - rouge_oracle(c, r)) <= TOL


def test_meteor_matches_oracle_on_random_pairs():
    for c, r in random_pairs(1, max_len=7):
        assert abs(meteor(c, r) - meteor_oracle(c, r)) <= TOL


def test_bleu_matches_oracle_on_random_corpora():
    rng = random.Random(2)
    pairs = random_pairs(2, count=200, vocab="ab")
    for _ in range(40):
        sample = rng.sample(pairs, 5)
        cands, refs = [c for c, _ in sample], [r for _, r in sample]
        assert abs(bleu4_corpus(cands, refs) - bleu_oracle(cands, refs)) <= TOL
    cands, refs = [c for c, _ in pairs], [r for _, r in pairs]
    assert abs(bleu4_corpus(cands, refs) - bleu_oracle(cands, refs)) <= TOL


# -- hand cases --------------------------------------------------------------------

def test_bleu_hand_cases():
    s = "parse string to datetime".split()
    assert bleu4_corpus([s], [s]) == pytest.approx(100.0, abs=TOL)
    clipped = bleu4_corpus([["a"] * 4], [list("abcd")], max_n=1)
    assert clipped == pytest.approx(25.0, abs=TOL)  # P1 clipped to 1/4
    assert bleu4_corpus([["a"] * 4], [list("abcd")]) == 0.0
    with pytest.raises(ValueError):
        bleu4_corpus([], [])


def test_meteor_hand_cases():
    s = "parse string to datetime".split()
    assert meteor_alignment(s, s) == (4, 1)
    assert meteor(s, s) == pytest.approx(0.9921875, abs=TOL)
    assert meteor(["a", "b"], ["c", "d"]) == 0.0
    assert meteor(["x"], ["x"]) == pytest.approx(0.5, abs=TOL)


def test_rouge_hand_cases():
    assert rouge_l(list("abc"), list("abc")) == pytest.approx(1.0, abs=TOL)
    beta2 = (1 / 0.6) ** 2
    assert rouge_l("a c e".split(), "a b c d e".split()) == pytest.approx((1 + beta2) * 0.6 / (0.6 + beta2), abs=TOL)
    assert rouge_l(["a"], ["b"]) == 0.0


def test_meteor_repeated_words_fall_back_with_max_matches():
    a, b = ("a b " * 15).split(), ("b a " * 15).split()
    matches, chunks = meteor_alignment(a, b, max_states=1000)
    assert matches == 30 and 1 <= chunks <= 30


# -- properties ----------------------------------------------------------------------

words = st.lists(st.sampled_from("abcde"), min_size=1, max_size=8)


@given(words, words, st.permutations("abcde"))
def test_metrics_invariant_under_relabeling(c, r, perm):
    relabel = dict(zip("abcde", perm))
    c2, r2 = [relabel[t] for t in c], [relabel[t] for t in r]
    assert meteor(c, r) == pytest.approx(meteor(c2, r2), abs=TOL)
    assert rouge_l(c, r) == pytest.approx(rouge_l(c2, r2), abs=TOL)
    assert bleu4_corpus([c], [r]) == pytest.approx(bleu4_corpus([c2], [r2]), abs=TOL)


@given(st.lists(st.sampled_from("abcde"), min_size=4, max_size=10))
def test_appending_wrong_token_never_increases_bleu(ref):
    assert bleu4_corpus([ref + ["zzz"]], [ref]) <= bleu4_corpus([ref], [ref])


@given(words, words)
def test_scores_within_ranges(c, r):
    assert 0 <= bleu4_corpus([c], [r]) <= 100
    assert 0 <= meteor(c, r) <= 1
    assert 0 <= rouge_l(c, r) <= 1
    assert 0 <= bleu4_sentence_smoothed(c, r) <= 100


def test_score_corpus_means_sentence_scores():
    cands = [["a", "b"], ["c"]]
    refs = [["a", "b"], ["d"]]
    rep = score_corpus(cands, refs, ["x", "y"])
    assert rep.meteor == pytest.approx((meteor(cands[0], refs[0]) + meteor(cands[1], refs[1])) / 2)
    assert rep.rouge_l == pytest.approx(0.5)
    d = rep.to_dict()
    assert d["meteor_x100"] == pytest.approx(100 * rep.meteor)
    assert "per_example" not in d and rep.per_example[1]["id"] == "y"


# -- attention-distance profile ---------------------------------------------------------

def mass_oracle(att, s_max):
    n = len(att)
    mass = []
    for j in range(1, s_max + 1):
        total = 0.0
        for i in range(n):
            if i + j < n:
                total += att[i][i + j]
            if i - j >= 0:
                total += att[i][i - j]
        mass.append(total)
    return mass


def profile_oracle(att, s_max):
    mass = mass_oracle(att, s_max)
    return [m / sum(mass) for m in mass]


def test_profile_uniform_over_offsets():
    n, s_max = 41, 10
    att = np.zeros((n, n))
    i = 20  # interior query sees all 2 * s_max offsets
    for j in range(1, s_max + 1):
        att[i, i + j] = att[i, i - j] = 1 / (2 * s_max)
    assert np.allclose(attention_distance_profile([att], s_max)[0], 1 / s_max)


def test_profile_single_spike():
    att = np.eye(8)
    att[1, 4] = 0.5
    y = attention_distance_profile([att])[0]
    assert y[2] == 1.0 and y.sum() == 1.0


@given(st.integers(2, 14), st.integers(0, 2**31))
def test_profile_matches_loop_oracle(n, seed):
    att = np.random.default_rng(seed).random((n, n))
    y = attention_distance_profile([att], 10)[0]
    assert np.allclose(y, profile_oracle(att.tolist(), 10), atol=1e-12)
    assert abs(y.sum() - 1) <= 1e-6


def test_profile_sums_heads_and_examples():
    rng = np.random.default_rng(0)
    a, b = rng.random((3, 6, 6)), rng.random((3, 9, 9))
    together = attention_distance_profile([[a, b]])[0]
    mass = np.array(mass_oracle(a.sum(0).tolist(), 10)) + np.array(mass_oracle(b.sum(0).tolist(), 10))
    assert np.allclose(together, mass / mass.sum(), atol=1e-12)
