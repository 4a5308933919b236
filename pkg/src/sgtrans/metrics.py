"""Summary quality metrics and the attention-distance profile."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

Tokens = Sequence[str]

METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA = 0.9, 3.0, 0.5
S_MAX = 10


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _check_pairs(candidates: Sequence[Tokens], references: Sequence[Tokens]) -> None:
    if not candidates:
        raise ValueError("no candidates to score")
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates but {len(references)} references")


def bleu4_corpus(candidates: Sequence[Tokens], references: Sequence[Tokens], max_n: int = 4) -> float:
    """Corpus BLEU in [0, 100]: pooled clipped n-gram precisions, uniform weights, no smoothing."""
    _check_pairs(candidates, references)
    matched = [0] * max_n
    total = [0] * max_n
    c_len = r_len = 0
    for cand, ref in zip(candidates, references):
        c_len += len(cand)
        r_len += len(ref)
        for n in range(1, max_n + 1):
            c_grams, r_grams = _ngrams(cand, n), _ngrams(ref, n)
            matched[n - 1] += sum(min(c, r_grams[g]) for g, c in c_grams.items())
            total[n - 1] += sum(c_grams.values())
    if c_len == 0 or any(m == 0 for m in matched):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matched, total)) / max_n
    bp = min(1.0, math.exp(1.0 - r_len / c_len))
    return 100.0 * bp * math.exp(log_p)


def bleu4_sentence_smoothed(candidate: Tokens, reference: Tokens, max_n: int = 4) -> float:
    """Display-only sentence BLEU with add-one smoothing on P_n for n >= 2."""
    if not candidate:
        return 0.0
    log_p = 0.0
    for n in range(1, max_n + 1):
        c_grams, r_grams = _ngrams(candidate, n), _ngrams(reference, n)
        m = sum(min(c, r_grams[g]) for g, c in c_grams.items())
        t = sum(c_grams.values())
        if n > 1:
            m, t = m + 1, t + 1
        if m == 0:
            return 0.0
        log_p += math.log(m / t) / max_n
    bp = min(1.0, math.exp(1.0 - len(reference) / len(candidate)))
    return 100.0 * bp * math.exp(log_p)


class _Budget(Exception):
    pass


def meteor_alignment(candidate: Tokens, reference: Tokens, max_states: int = 200_000) -> tuple[int, int]:
    """(matches, chunks) of the exact-match alignment with most matches, then fewest chunks.

    A chunk is a maximal run of matches adjacent and in the same order on both sides.
    Memoised search over (candidate position, used reference positions, previous match);
    inputs with so many repeated words that the search visits more than ``max_states``
    states fall back to :func:`_greedy_alignment`, which still attains the maximum match count.
    """
    cand, ref = tuple(candidate), tuple(reference)
    positions: dict[str, tuple[int, ...]] = {}
    for j, tok in enumerate(ref):
        positions[tok] = positions.get(tok, ()) + (j,)
    # reference positions whose word still occurs at candidate index >= i
    live = [0] * (len(cand) + 1)
    for i in range(len(cand) - 1, -1, -1):
        mask = live[i + 1]
        for j in positions.get(cand[i], ()):
            mask |= 1 << j
        live[i] = mask

    memo: dict[tuple[int, int, int], tuple[int, int]] = {}

    def best(i: int, used: int, prev: int) -> tuple[int, int]:
        # (matches, -chunks) for cand[i:]
        if i == len(cand):
            return (0, 0)
        key = (i, used, prev)
        if key in memo:
            return memo[key]
        if len(memo) >= max_states:
            raise _Budget
        top = best(i + 1, used & live[i + 1], -1)
        for j in positions.get(cand[i], ()):
            if used >> j & 1:
                continue
            m, neg_c = best(i + 1, (used | 1 << j) & live[i + 1], j)
            option = (m + 1, neg_c - (0 if prev >= 0 and j == prev + 1 else 1))
            if option > top:
                top = option
        memo[key] = top
        return top

    try:
        matches, neg_chunks = best(0, 0, -1)
    except _Budget:
        return _greedy_alignment(cand, ref)
    return matches, -neg_chunks


def _greedy_alignment(cand: Tokens, ref: Tokens) -> tuple[int, int]:
    """Left-to-right: extend the current chunk when possible, else take the leftmost free match."""
    used = [False] * len(ref)
    matches = chunks = 0
    prev = -1
    for tok in cand:
        nxt = prev + 1
        if prev >= 0 and nxt < len(ref) and not used[nxt] and ref[nxt] == tok:
            j = nxt
        else:
            j = next((q for q, r in enumerate(ref) if r == tok and not used[q]), -1)
            if j >= 0:
                chunks += 1
        if j >= 0:
            used[j] = True
            matches += 1
        prev = j
    return matches, chunks


def meteor(candidate: Tokens, reference: Tokens) -> float:
    matches, chunks = meteor_alignment(candidate, reference)
    if matches == 0:
        return 0.0
    p = matches / len(candidate)
    r = matches / len(reference)
    f_mean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
    penalty = METEOR_GAMMA * (chunks / matches) ** METEOR_BETA
    return (1 - penalty) * f_mean


def lcs_length(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Tokens, reference: Tokens) -> float:
    """F_lcs with P = LCS/len(candidate), R = LCS/len(reference), beta = P/R."""
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(candidate)
    r = lcs / len(reference)
    beta2 = (p / r) ** 2
    return (1 + beta2) * p * r / (r + beta2 * p)


@dataclass
class ScoreReport:
    bleu4: float
    meteor: float
    rouge_l: float
    n: int
    per_example: list[dict] = field(default_factory=list)

    def to_dict(self, include_examples: bool = False) -> dict:
        out = asdict(self)
        out["meteor_x100"] = 100 * self.meteor
        out["rouge_l_x100"] = 100 * self.rouge_l
        if not include_examples:
            out.pop("per_example")
        return out


def score_corpus(candidates: Sequence[Tokens], references: Sequence[Tokens], ids: Sequence[str] | None = None) -> ScoreReport:
    _check_pairs(candidates, references)
    ids = list(ids) if ids is not None else [str(i) for i in range(len(candidates))]
    rows = []
    for i, cand, ref in zip(ids, candidates, references):
        rows.append(
            {
                "id": i,
                "bleu4_smoothed": bleu4_sentence_smoothed(cand, ref),
                "meteor": meteor(cand, ref),
                "rouge_l": rouge_l(cand, ref),
            }
        )
    return ScoreReport(
        bleu4=bleu4_corpus(candidates, references),
        meteor=float(np.mean([r["meteor"] for r in rows])),
        rouge_l=float(np.mean([r["rouge_l"] for r in rows])),
        n=len(rows),
        per_example=rows,
    )


def distance_mass(att: np.ndarray, s_max: int = S_MAX) -> np.ndarray:
    """mass[j-1] = sum_i att[i, i+j] + att[i, i-j] for j = 1..s_max; leading dims are summed."""
    att = np.asarray(att, dtype=np.float64)
    n = att.shape[-1]
    mass = np.zeros(s_max)
    for j in range(1, min(s_max, n - 1) + 1):
        mass[j - 1] = np.diagonal(att, offset=j, axis1=-2, axis2=-1).sum() + np.diagonal(att, offset=-j, axis1=-2, axis2=-1).sum()
    return mass


def attention_distance_profile(layers: Sequence[np.ndarray | Sequence[np.ndarray]], s_max: int = S_MAX) -> np.ndarray:
    """Y[l, j-1]: share of layer l's attention at token distance j among distances 1..s_max.

    Each layer entry is an array (..., n, n) or a list of such arrays (e.g. one per
    example, so padding never enters the sums). Rows with no in-range mass are all zero.
    """
    out = np.zeros((len(layers), s_max))
    for l, layer in enumerate(layers):
        parts = layer if isinstance(layer, (list, tuple)) else [layer]
        mass = sum((distance_mass(a, s_max) for a in parts), np.zeros(s_max))
        total = mass.sum()
        if total > 0:
            out[l] = mass / total
    return out
