"""Vocabularies, code/summary examples and padded training batches."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from .masks import MASK_VALUE, build_masks
from .model import BOS, EOS, PAD, UNK
from .structparse import Language, RawSnippet, StructuredCode, parse

log = logging.getLogger(__name__)

RESERVED = ("<pad>", "<unk>", "<s>", "</s>")


class Vocab:
    """Token <-> id map with PAD=0, UNK=1, BOS=2, EOS=3."""

    def __init__(self, tokens: Sequence[str]):
        self.itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, itos: Sequence[str]) -> "Vocab":
        if tuple(itos[:4]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        return cls(itos[4:])


def build_vocab(corpus: Iterable[Sequence[str]], min_freq: int = 1, max_size: int | None = None) -> Vocab:
    """Rank tokens by frequency (desc), breaking ties lexicographically."""
    counts = Counter(tok for seq in corpus for tok in seq)
    ranked = sorted((t for t, c in counts.items() if c >= min_freq and t not in RESERVED), key=lambda t: (-counts[t], t))
    if max_size is not None:
        ranked = ranked[: max(0, max_size - len(RESERVED))]
    return Vocab(ranked)


@dataclass(frozen=True)
class Example:
    code: StructuredCode
    summary: tuple[str, ...]
    id: str = ""

    def __post_init__(self):
        if not self.summary:
            raise ValueError(f"example {self.id!r} has an empty summary")

    def oovs(self, tgt_vocab: Vocab, max_src_len: int) -> list[str]:
        """Source sub-tokens missing from the target vocab, in first-seen order."""
        seen: dict[str, None] = {}
        for tok in self.code.sub_tokens[:max_src_len]:
            if tok not in tgt_vocab:
                seen.setdefault(tok)
        return list(seen)


def tokenize_summary(text: str) -> tuple[str, ...]:
    return tuple(text.lower().split())


def read_jsonl(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    return records


def record_to_snippet(rec: dict) -> RawSnippet:
    for key in ("id", "language", "code"):
        if key not in rec:
            raise ValueError(f"record is missing {key!r}")
    return RawSnippet(Language.parse(rec["language"]), rec["code"], str(rec["id"]))


def load_examples(path: str | Path) -> list[Example]:
    examples = []
    for rec in read_jsonl(path):
        summary = tokenize_summary(rec.get("summary", ""))
        if not summary:
            raise ValueError(f"record {rec.get('id')!r} has an empty summary")
        examples.append(Example(parse(record_to_snippet(rec)), summary, str(rec["id"])))
    return examples


@dataclass
class Batch:
    src_ids: torch.Tensor  # (B, n) source vocab ids
    src_ext_ids: torch.Tensor  # (B, n) ids into the extended target vocab
    src_key_mask: torch.Tensor  # (B, n) additive: 0 real, MASK_VALUE padding
    src_lens: list[int]
    T: torch.Tensor  # (B, n, n) additive
    S: torch.Tensor  # (B, n, n) additive
    D: torch.Tensor  # (B, n, n) binary
    tgt_in: torch.Tensor  # (B, m) BOS + summary
    tgt_out: torch.Tensor  # (B, m) summary + EOS, extended ids
    tgt_mask: torch.Tensor  # (B, m) 1 for real target positions
    oovs: list[list[str]]
    n_ext: int
    ids: list[str]

    def __len__(self) -> int:
        return self.src_ids.shape[0]


def make_batch(
    examples: Sequence[Example],
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    max_src_len: int,
    max_tgt_len: int,
    dtype: torch.dtype = torch.float32,
) -> Batch:
    if not examples:
        raise ValueError("empty batch")
    codes = []
    for ex in examples:
        if len(ex.code) > max_src_len:
            log.warning("truncating %s from %d to %d sub-tokens", ex.id or "<example>", len(ex.code), max_src_len)
        codes.append(ex.code.truncate(max_src_len))
    b = len(examples)
    n = max(len(c) for c in codes)
    V = len(tgt_vocab)
    oovs = [ex.oovs(tgt_vocab, max_src_len) for ex in examples]
    n_ext = max((len(o) for o in oovs), default=0)

    src_ids = np.full((b, n), PAD, dtype=np.int64)
    src_ext = np.full((b, n), PAD, dtype=np.int64)
    key_mask = np.full((b, n), MASK_VALUE)
    # padded rows keep a finite diagonal so no softmax row is fully masked
    eye = np.where(np.eye(n, dtype=bool), 0.0, MASK_VALUE)
    T = np.broadcast_to(eye, (b, n, n)).copy()
    S = T.copy()
    D = np.zeros((b, n, n))
    for i, (code, oov) in enumerate(zip(codes, oovs)):
        m = len(code)
        slot = {tok: V + j for j, tok in enumerate(oov)}
        src_ids[i, :m] = src_vocab.encode(code.sub_tokens)
        src_ext[i, :m] = [tgt_vocab.stoi.get(t, slot.get(t, UNK)) for t in code.sub_tokens]
        key_mask[i, :m] = 0.0
        masks = build_masks(code)
        t_add, s_add = masks.additive()
        T[i, :m, :m] = t_add
        S[i, :m, :m] = s_add
        D[i, :m, :m] = masks.D

    summaries = [ex.summary[: max_tgt_len - 1] for ex in examples]
    mt = max(len(s) for s in summaries) + 1
    tgt_in = np.full((b, mt), PAD, dtype=np.int64)
    tgt_out = np.full((b, mt), PAD, dtype=np.int64)
    tgt_mask = np.zeros((b, mt))
    for i, (summary, oov) in enumerate(zip(summaries, oovs)):
        slot = {tok: V + j for j, tok in enumerate(oov)}
        out = [tgt_vocab.stoi.get(t, slot.get(t, UNK)) for t in summary] + [EOS]
        tgt_out[i, : len(out)] = out
        tgt_in[i, : len(out)] = [BOS] + out[:-1]
        tgt_mask[i, : len(out)] = 1.0

    def f(a):
        return torch.as_tensor(a, dtype=dtype)

    return Batch(
        src_ids=torch.as_tensor(src_ids),
        src_ext_ids=torch.as_tensor(src_ext),
        src_key_mask=f(key_mask),
        src_lens=[len(c) for c in codes],
        T=f(T),
        S=f(S),
        D=f(D),
        tgt_in=torch.as_tensor(tgt_in),
        tgt_out=torch.as_tensor(tgt_out),
        tgt_mask=f(tgt_mask),
        oovs=oovs,
        n_ext=n_ext,
        ids=[ex.id for ex in examples],
    )


def source_batch(codes: Sequence[StructuredCode], src_vocab: Vocab, tgt_vocab: Vocab, max_src_len: int, dtype=torch.float32) -> Batch:
    """Batch for inference; the target side holds a single placeholder token."""
    examples = [Example(c, ("<unk>",), c.id) for c in codes]
    return make_batch(examples, src_vocab, tgt_vocab, max_src_len, 2, dtype)


def surface(ids: Sequence[int], tgt_vocab: Vocab, oovs: Sequence[str]) -> list[str]:
    """Map extended-vocab ids back to strings."""
    V = len(tgt_vocab)
    return [tgt_vocab.itos[i] if i < V else oovs[i - V] for i in ids]
