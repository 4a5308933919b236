"""Structure-guided Transformer encoder-decoder with a pointer-generator head.

Encoder layers mix four head types (token-, statement- and data-flow-guided
plus standard heads) in the counts given by :func:`sgtrans.masks.head_plan`.
The decoder is a standard causal Transformer decoder; an extra attention layer
over the encoder memory feeds the copy switch.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Sequence

import torch
from torch import nn

from . import numcore as nc
from .masks import HEAD_TYPES, MASK_VALUE, HeadPlan, head_plan
from .numcore import ShapeMismatch, Tensor

PAD, UNK, BOS, EOS = 0, 1, 2, 3


class EmptyInput(ValueError):
    pass


@dataclass
class ModelConfig:
    src_vocab_size: int = 0
    tgt_vocab_size: int = 0
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    d_model: int = 64
    d_ff: int = 128
    max_src_len: int = 150
    max_tgt_len: int = 30
    mu: float = 5.0
    k: int = 0  # 0 -> same as enc_layers
    dropout: float = 0.2
    share_embeddings: bool = False
    dataflow_bias: str = "matmul"  # or "elementwise"
    copy: bool = True

    def __post_init__(self):
        if self.k == 0:
            self.k = self.enc_layers
        self.validate()

    def validate(self) -> None:
        if self.heads < 1 or self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} must be divisible by heads={self.heads}")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.k < self.enc_layers:
            raise ValueError(f"k={self.k} must be >= enc_layers={self.enc_layers}")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.dataflow_bias not in ("matmul", "elementwise"):
            raise ValueError("dataflow_bias must be 'matmul' or 'elementwise'")
        if self.enc_layers < 1 or self.dec_layers < 1:
            raise ValueError("need at least one encoder and one decoder layer")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(values) - names
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**values)


# ---------------------------------------------------------------------------
# single-head building blocks; Q, K, V are (..., n, d), masks (..., n, n)

def _check_qkv(q: Tensor, k: Tensor, v: Tensor) -> None:
    if q.shape[-1] != k.shape[-1] or q.dim() != k.dim():
        raise ShapeMismatch("attention(Q, K)", q.shape, k.shape)
    if k.shape[-2] != v.shape[-2]:
        raise ShapeMismatch("attention(K, V)", k.shape, v.shape)


def _check_square(name: str, scores_shape, mask: Tensor) -> None:
    if mask.shape[-2:] != scores_shape[-2:]:
        raise ShapeMismatch(name, scores_shape, mask.shape)


def standard_scores(q: Tensor, k: Tensor) -> Tensor:
    return nc.scale(nc.matmul(q, k.transpose(-1, -2)), 1.0 / math.sqrt(q.shape[-1]))


def token_scores(q: Tensor, k: Tensor, T: Tensor) -> Tensor:
    scores = standard_scores(q, k)
    _check_square("token mask", scores.shape, T)
    return nc.add_broadcast(scores, T)


statement_scores = token_scores


def dataflow_scores(q: Tensor, k: Tensor, D: Tensor, mu: float, elementwise: bool = False) -> Tensor:
    """(QK^T + mu * QK^T D) / sqrt(d); ``elementwise`` swaps the product for QK^T * D."""
    raw = nc.matmul(q, k.transpose(-1, -2))
    _check_square("dataflow matrix", raw.shape, D)
    if mu:
        bias = raw * D if elementwise else nc.matmul(raw, D)
        raw = nc.add(raw, nc.scale(bias, mu))
    return nc.scale(raw, 1.0 / math.sqrt(q.shape[-1]))


def head_standard(Q: Tensor, K: Tensor, V: Tensor) -> Tensor:
    _check_qkv(Q, K, V)
    return nc.matmul(nc.softmax_rows(standard_scores(Q, K)), V)


def head_token(Q: Tensor, K: Tensor, V: Tensor, T: Tensor) -> Tensor:
    _check_qkv(Q, K, V)
    return nc.matmul(nc.softmax_rows(token_scores(Q, K, _finite(T))), V)


def head_statement(Q: Tensor, K: Tensor, V: Tensor, S: Tensor) -> Tensor:
    _check_qkv(Q, K, V)
    return nc.matmul(nc.softmax_rows(statement_scores(Q, K, _finite(S))), V)


def head_dataflow(Q: Tensor, K: Tensor, V: Tensor, D: Tensor, mu: float, elementwise: bool = False) -> Tensor:
    _check_qkv(Q, K, V)
    return nc.matmul(nc.softmax_rows(dataflow_scores(Q, K, D, mu, elementwise)), V)


def _finite(mask: Tensor) -> Tensor:
    return torch.clamp(mask, min=MASK_VALUE)


def _groups(kinds: Sequence[str]) -> list[tuple[str, int, int]]:
    out: list[tuple[str, int, int]] = []
    for i, kind in enumerate(kinds):
        if out and out[-1][0] == kind:
            out[-1] = (kind, out[-1][1], i + 1)
        else:
            out.append((kind, i, i + 1))
    return out


# ---------------------------------------------------------------------------
# layers

def _param(*shape: int) -> nn.Parameter:
    return nn.Parameter(torch.empty(*shape))


class _FFN(nn.Module):
    def __init__(self, d_model: int, d_ff: int):
        super().__init__()
        self.w1, self.b1 = _param(d_model, d_ff), _param(d_ff)
        self.w2, self.b2 = _param(d_ff, d_model), _param(d_model)

    def forward(self, x: Tensor) -> Tensor:
        hidden = nc.relu(nc.add_broadcast(nc.matmul(x, self.w1), self.b1))
        return nc.add_broadcast(nc.matmul(hidden, self.w2), self.b2)


class _LayerNorm(nn.Module):
    def __init__(self, d_model: int, eps: float = 1e-6):
        super().__init__()
        self.gain, self.bias = _param(d_model), _param(d_model)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return nc.layer_norm(x, self.gain, self.bias, self.eps)


class _Attention(nn.Module):
    """Projection weights of one multi-head attention block."""

    def __init__(self, d_model: int, heads: int):
        super().__init__()
        self.heads = heads
        self.w_q, self.w_k = _param(d_model, d_model), _param(d_model, d_model)
        self.w_v, self.w_o = _param(d_model, d_model), _param(d_model, d_model)

    def split(self, x: Tensor, w: Tensor) -> Tensor:
        b, n, d = x.shape
        return nc.matmul(x, w).view(b, n, self.heads, d // self.heads).transpose(1, 2)

    def merge(self, ctx: Tensor) -> Tensor:
        # (B, h, n, d) -> per-head concat on the feature dim, then W^O
        return nc.matmul(nc.concat_last_dim([ctx[:, i] for i in range(self.heads)]), self.w_o)

    def standard(self, query: Tensor, memory: Tensor, additive_mask: Tensor | None) -> tuple[Tensor, Tensor]:
        q, k, v = self.split(query, self.w_q), self.split(memory, self.w_k), self.split(memory, self.w_v)
        weights = nc.softmax_rows(standard_scores(q, k), additive_mask)
        return self.merge(nc.matmul(weights, v)), weights


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig, plan_row: tuple[int, int, int, int]):
        super().__init__()
        if sum(plan_row) != cfg.heads:
            raise ValueError(f"head plan row {plan_row} does not sum to {cfg.heads} heads")
        self.cfg = cfg
        self.plan_row = tuple(plan_row)
        self.head_types = [kind for kind, c in zip(HEAD_TYPES, plan_row) for _ in range(c)]
        self.attn = _Attention(cfg.d_model, cfg.heads)
        self.ln1 = _LayerNorm(cfg.d_model)
        self.ffn = _FFN(cfg.d_model, cfg.d_ff)
        self.ln2 = _LayerNorm(cfg.d_model)

    def self_attention(self, x: Tensor, T: Tensor, S: Tensor, D: Tensor, key_mask: Tensor | None):
        """Returns the per-head context (B, h, n, d) and attention weights (B, h, n, n)."""
        a = self.attn
        q, k, v = a.split(x, a.w_q), a.split(x, a.w_k), a.split(x, a.w_v)
        T, S, D = T.unsqueeze(1), S.unsqueeze(1), D.unsqueeze(1)
        ctx, weights = [], []
        for kind, lo, hi in _groups(self.head_types):
            qs, ks = q[:, lo:hi], k[:, lo:hi]
            if kind == "token":
                scores = token_scores(qs, ks, T)
            elif kind == "statement":
                scores = statement_scores(qs, ks, S)
            elif kind == "dataflow":
                scores = dataflow_scores(qs, ks, D, self.cfg.mu, self.cfg.dataflow_bias == "elementwise")
            else:
                scores = standard_scores(qs, ks)
            w = nc.softmax_rows(scores, key_mask)
            ctx.append(nc.matmul(w, v[:, lo:hi]))
            weights.append(w)
        return torch.cat(ctx, dim=1), torch.cat(weights, dim=1)

    def forward(self, x, T, S, D, key_mask=None, rng=None):
        ctx, weights = self.self_attention(x, T, S, D, key_mask)
        p = self.cfg.dropout
        x = self.ln1(nc.add(x, nc.dropout(self.attn.merge(ctx), p, rng, self.training)))
        x = self.ln2(nc.add(x, nc.dropout(self.ffn(x), p, rng, self.training)))
        return x, weights


def hsva_layer(x: Tensor, T: Tensor, S: Tensor, D: Tensor, layer: EncoderLayer, key_mask: Tensor | None = None) -> Tensor:
    """One structure-variant encoder layer on a batch (x: B x n x d_model)."""
    return layer(x, T, S, D, key_mask)[0]


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.self_attn = _Attention(cfg.d_model, cfg.heads)
        self.ln1 = _LayerNorm(cfg.d_model)
        self.cross_attn = _Attention(cfg.d_model, cfg.heads)
        self.ln2 = _LayerNorm(cfg.d_model)
        self.ffn = _FFN(cfg.d_model, cfg.d_ff)
        self.ln3 = _LayerNorm(cfg.d_model)

    def forward(self, y, memory, self_mask, memory_mask, rng=None):
        p, train = self.cfg.dropout, self.training
        h, _ = self.self_attn.standard(y, y, self_mask)
        y = self.ln1(nc.add(y, nc.dropout(h, p, rng, train)))
        h, cross = self.cross_attn.standard(y, memory, memory_mask)
        y = self.ln2(nc.add(y, nc.dropout(h, p, rng, train)))
        y = self.ln3(nc.add(y, nc.dropout(self.ffn(y), p, rng, train)))
        return y, cross


@dataclass
class DecoderOutput:
    probs: Tensor  # (B, m, V + n_ext)
    p_gen: Tensor  # (B, m)
    alpha: Tensor  # (B, m, n) copy attention
    state: Tensor  # (B, m, d_model) top decoder layer
    context: Tensor  # (B, m, d_model) copy context


@dataclass
class SummaryHypothesis:
    token_ids: list[int]
    tokens: list[str]
    p_gen: list[float]
    alpha: list[list[float]]
    log_prob: float

    @property
    def p_gen_mean(self) -> float:
        return float(sum(self.p_gen) / len(self.p_gen)) if self.p_gen else 0.0


class SGTrans(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        if cfg.src_vocab_size < 4 or cfg.tgt_vocab_size < 4:
            raise ValueError("vocabulary sizes must include the 4 reserved ids")
        if cfg.share_embeddings and cfg.src_vocab_size != cfg.tgt_vocab_size:
            raise ValueError("shared embeddings need one joint vocabulary")
        self.cfg = cfg
        self.plan: HeadPlan = head_plan(cfg.enc_layers, cfg.heads, cfg.k)
        d = cfg.d_model
        self.src_embed = _param(cfg.src_vocab_size, d)
        self.tgt_embed = self.src_embed if cfg.share_embeddings else _param(cfg.tgt_vocab_size, d)
        self.encoder = nn.ModuleList(EncoderLayer(cfg, self.plan.row(l)) for l in range(1, cfg.enc_layers + 1))
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.dec_layers))
        # copy attention + pointer-generator switch
        self.copy_w_q, self.copy_w_k = _param(d, d), _param(d, d)
        self.W_a, self.V_a = _param(cfg.tgt_vocab_size, d), _param(cfg.tgt_vocab_size, d)
        self.vec_s, self.vec_w, self.vec_c = _param(d), _param(d), _param(d)
        self.b_gen = _param(1)
        n_pos = max(cfg.max_src_len, cfg.max_tgt_len + 1)
        self.register_buffer("positions", nc.sinusoid_table(n_pos, d), persistent=False)
        self.rng = nc.make_rng(0)
        self.reset_parameters(0)

    # -- setup --------------------------------------------------------------
    def reset_parameters(self, seed: int) -> None:
        gen = nc.make_rng(seed)
        with torch.no_grad():
            for name, p in self.named_parameters():
                leaf = name.rsplit(".", 1)[-1]
                if leaf == "gain":
                    p.fill_(1.0)
                elif leaf in ("bias", "b1", "b2", "b_gen"):
                    p.zero_()
                elif name.endswith("_embed"):
                    p.normal_(0.0, self.cfg.d_model**-0.5, generator=gen)
                elif p.dim() == 2:
                    bound = math.sqrt(6.0 / (p.shape[0] + p.shape[1]))
                    p.uniform_(-bound, bound, generator=gen)
                else:
                    bound = 1.0 / math.sqrt(p.shape[0])
                    p.uniform_(-bound, bound, generator=gen)

    def seed_dropout(self, seed: int) -> None:
        self.rng = nc.make_rng(seed)

    @property
    def dtype(self) -> torch.dtype:
        return self.src_embed.dtype

    # -- encoder ------------------------------------------------------------
    def embed_source(self, src_ids: Tensor, positions: Tensor | None = None) -> Tensor:
        n = src_ids.shape[1]
        if positions is None:
            positions = torch.arange(n).expand_as(src_ids)
        x = nc.scale(nc.embedding_lookup(self.src_embed, src_ids), math.sqrt(self.cfg.d_model))
        x = nc.add(x, self.positions[positions].to(x.dtype))
        return nc.dropout(x, self.cfg.dropout, self.rng, self.training)

    def encode(self, batch, positions: Tensor | None = None) -> tuple[Tensor, list[Tensor]]:
        """Encoder memory (B, n, d_model) and per-layer attention weights (B, h, n, n)."""
        if batch.src_ids.shape[1] == 0:
            raise EmptyInput("cannot encode an empty source sequence")
        x = self.embed_source(batch.src_ids, positions)
        key_mask = batch.src_key_mask.unsqueeze(1).unsqueeze(1)
        attn = []
        for layer in self.encoder:
            x, w = layer(x, batch.T, batch.S, batch.D, key_mask, self.rng)
            attn.append(w)
        return x, attn

    # -- decoder ------------------------------------------------------------
    def decoder_inputs(self, ids: Tensor) -> Tensor:
        """Extended-vocabulary ids are fed back as UNK."""
        return torch.where(ids >= self.cfg.tgt_vocab_size, torch.full_like(ids, UNK), ids)

    def decode(self, memory: Tensor, src_key_mask: Tensor, tgt_in: Tensor, n_ext: int, src_ext_ids: Tensor) -> DecoderOutput:
        cfg = self.cfg
        ids = self.decoder_inputs(tgt_in)
        m = ids.shape[1]
        w_emb = nc.embedding_lookup(self.tgt_embed, ids)
        y = nc.add(nc.scale(w_emb, math.sqrt(cfg.d_model)), self.positions[:m].to(w_emb.dtype).expand_as(w_emb))
        y = nc.dropout(y, cfg.dropout, self.rng, self.training)
        causal = torch.triu(torch.full((m, m), MASK_VALUE, dtype=y.dtype), diagonal=1)
        memory_mask = src_key_mask.unsqueeze(1).unsqueeze(1)
        for layer in self.decoder:
            y, _ = layer(y, memory, causal, memory_mask, self.rng)
        # additional attention layer over the memory for copying
        q = nc.matmul(y, self.copy_w_q)
        k = nc.matmul(memory, self.copy_w_k)
        alpha = nc.softmax_rows(standard_scores(q, k), src_key_mask.unsqueeze(1))
        context = nc.matmul(alpha, memory)
        logits = nc.add(nc.matmul(y, self.W_a.t()), nc.matmul(context, self.V_a.t()))
        p_vocab = nc.softmax_rows(logits)
        probs, p_gen = self.copy_mix(y, w_emb, context, alpha, p_vocab, src_ext_ids, n_ext)
        return DecoderOutput(probs, p_gen, alpha, y, context)

    def copy_mix(self, s: Tensor, w_emb: Tensor, c: Tensor, alpha: Tensor, p_vocab: Tensor, src_ext_ids: Tensor, n_ext: int):
        """Mix generation and copying over the extended vocabulary.

        P(w) = p_gen * P_vocab(w) + (1 - p_gen) * sum of alpha over source positions holding w.
        """
        b, m, V = p_vocab.shape
        if not self.cfg.copy:
            pad = p_vocab.new_zeros(b, m, n_ext)
            return nc.concat_last_dim([p_vocab, pad]), p_vocab.new_ones(b, m)
        gate = nc.add_broadcast(
            nc.add(nc.add(nc.matmul(s, self.vec_s.unsqueeze(-1)), nc.matmul(w_emb, self.vec_w.unsqueeze(-1))),
                   nc.matmul(c, self.vec_c.unsqueeze(-1))),
            self.b_gen,
        )
        p_gen = nc.sigmoid(gate)  # (B, m, 1)
        gen = nc.concat_last_dim([p_vocab * p_gen, p_vocab.new_zeros(b, m, n_ext)])
        index = src_ext_ids.unsqueeze(1).expand(b, m, src_ext_ids.shape[1])
        copied = torch.zeros_like(gen).scatter_add(-1, index, alpha * (1 - p_gen))
        return nc.add(gen, copied), p_gen.squeeze(-1)

    def forward(self, batch) -> DecoderOutput:
        memory, _ = self.encode(batch)
        return self.decode(memory, batch.src_key_mask, batch.tgt_in, batch.n_ext, batch.src_ext_ids)

    def loss(self, batch) -> Tensor:
        """Mean per-token negative log-likelihood over non-PAD target positions."""
        out = self(batch)
        probs = torch.clamp(out.probs, min=1e-12)
        return nc.nll_loss(probs, batch.tgt_out, batch.tgt_mask)

    def decode_step(self, memory: Tensor, src_key_mask: Tensor, prev_ids: Tensor, n_ext: int, src_ext_ids: Tensor):
        """Distribution for the token after ``prev_ids`` (which start with BOS).

        Returns (P over extended vocab, s_t, c_t, alpha_t, p_gen_t) at the last position.
        """
        if prev_ids.shape[1] < 1:
            raise ValueError("prev_ids must start with BOS")
        out = self.decode(memory, src_key_mask, prev_ids, n_ext, src_ext_ids)
        return out.probs[:, -1], out.state[:, -1], out.context[:, -1], out.alpha[:, -1], out.p_gen[:, -1]

    # -- inference ------------------------------------------------------------
    def _restrict(self, probs: Tensor, oovs: Sequence[Sequence[str]]) -> Tensor:
        """Drop PAD/BOS, and UNK wherever an OOV source sub-token can be copied instead."""
        banned = probs.clone()
        banned[:, PAD] = 0.0
        banned[:, BOS] = 0.0
        if self.cfg.copy:
            for i, oov in enumerate(oovs):
                if oov:
                    banned[i, UNK] = 0.0
        return banned

    @torch.no_grad()
    def greedy(self, batch, max_len: int | None = None) -> list[SummaryHypothesis]:
        max_len = max_len or self.cfg.max_tgt_len
        memory, _ = self.encode(batch)
        b = memory.shape[0]
        prev = torch.full((b, 1), BOS, dtype=torch.long)
        done = torch.zeros(b, dtype=torch.bool)
        hyps = [SummaryHypothesis([], [], [], [], 0.0) for _ in range(b)]
        for _ in range(max_len):
            probs, _, _, alpha, p_gen = self.decode_step(memory, batch.src_key_mask, prev, batch.n_ext, batch.src_ext_ids)
            probs = self._restrict(probs, batch.oovs)
            nxt = probs.argmax(-1)
            for i in range(b):
                if done[i]:
                    continue
                tok = int(nxt[i])
                hyps[i].log_prob += math.log(max(float(probs[i, tok]), 1e-30))
                if tok == EOS:
                    done[i] = True
                    continue
                hyps[i].token_ids.append(tok)
                hyps[i].p_gen.append(float(p_gen[i]))
                hyps[i].alpha.append(alpha[i, : batch.src_lens[i]].tolist())
            if bool(done.all()):
                break
            prev = torch.cat([prev, nxt.unsqueeze(1)], dim=1)
        return hyps

    @torch.no_grad()
    def beam(self, batch, width: int = 4, max_len: int | None = None) -> SummaryHypothesis:
        """Beam search for a single-example batch; scores are length-normalised log-probs."""
        if batch.src_ids.shape[0] != 1:
            raise ValueError("beam search decodes one example at a time")
        max_len = max_len or self.cfg.max_tgt_len
        memory, _ = self.encode(batch)
        beams = [([BOS], 0.0, [], [])]  # ids, logp, p_gens, alphas
        finished = []
        n_src = batch.src_lens[0]
        for _ in range(max_len):
            prev = torch.tensor([ids for ids, *_ in beams], dtype=torch.long)
            k = len(beams)
            probs, _, _, alpha, p_gen = self.decode_step(
                memory.expand(k, -1, -1), batch.src_key_mask.expand(k, -1), prev, batch.n_ext, batch.src_ext_ids.expand(k, -1)
            )
            probs = self._restrict(probs, batch.oovs * k)
            logp = torch.log(torch.clamp(probs, min=1e-30))
            top_lp, top_id = logp.topk(min(width, logp.shape[-1]), dim=-1)
            candidates = []
            for bi, (ids, lp, gens, alphas) in enumerate(beams):
                for lp_step, tok in zip(top_lp[bi].tolist(), top_id[bi].tolist()):
                    candidates.append((ids + [tok], lp + lp_step, gens + [float(p_gen[bi])], alphas + [alpha[bi, :n_src].tolist()]))
            candidates.sort(key=lambda c: c[1] / (len(c[0]) - 1), reverse=True)
            beams = []
            for cand in candidates:
                if cand[0][-1] == EOS:
                    finished.append(cand)
                else:
                    beams.append(cand)
                if len(beams) == width:
                    break
            if len(finished) >= width or not beams:
                break
        pool = finished or beams
        ids, lp, gens, alphas = max(pool, key=lambda c: c[1] / (len(c[0]) - 1))
        body = ids[1:-1] if ids[-1] == EOS else ids[1:]
        return SummaryHypothesis(body, [], gens[: len(body)], alphas[: len(body)], lp)

    def generate(self, batch, tgt_itos: Sequence[str], beam: int = 0) -> list[SummaryHypothesis]:
        """Greedy (``beam`` 0 or 1) or beam decoding; copied ids surface as the source string."""
        was_training = self.training
        self.eval()
        try:
            if beam > 1:
                hyps = [self.beam(_select(batch, i), width=beam) for i in range(len(batch))]
            else:
                hyps = self.greedy(batch)
        finally:
            self.train(was_training)
        V = len(tgt_itos)
        for hyp, oov in zip(hyps, batch.oovs):
            hyp.tokens = [tgt_itos[t] if t < V else oov[t - V] for t in hyp.token_ids]
        return hyps


def _select(batch, i: int):
    """Single-example view of a batch, keeping the shared extended-vocab width."""
    n = batch.src_lens[i]
    one = slice(i, i + 1)
    return replace(
        batch,
        src_ids=batch.src_ids[one, :n],
        src_ext_ids=batch.src_ext_ids[one, :n],
        src_key_mask=batch.src_key_mask[one, :n],
        src_lens=[n],
        T=batch.T[one, :n, :n],
        S=batch.S[one, :n, :n],
        D=batch.D[one, :n, :n],
        tgt_in=batch.tgt_in[one],
        tgt_out=batch.tgt_out[one],
        tgt_mask=batch.tgt_mask[one],
        oovs=[batch.oovs[i]],
        ids=[batch.ids[i]],
    )
