import math
from dataclasses import replace

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given
from hypothesis import strategies as st

from gradcheck import check_sampled
from helpers import tiny_setup
from sgtrans import numcore as nc
from sgtrans.masks import MASK_VALUE
from sgtrans.model import (
    EOS,
    UNK,
    EmptyInput,
    EncoderLayer,
    ModelConfig,
    head_dataflow,
    head_standard,
    head_statement,
    head_token,
    hsva_layer,
    token_scores,
)
from sgtrans.numcore import ShapeMismatch

DT = torch.float64


def qkv(gen, n, d, b=()):
    return [torch.randn(*b, n, d, generator=gen, dtype=DT) for _ in range(3)]


def group_mask(groups):
    g = torch.tensor(groups)
    return torch.where(g[:, None] == g[None, :], 0.0, -math.inf).to(DT)


def dataflow_oracle(Q, K, V, D, mu):
    """Plain loops over (QK^T + mu * (QK^T) D) / sqrt(d), softmax, times V."""
    n, d = len(Q), len(Q[0])
    raw = [[sum(Q[i][c] * K[j][c] for c in range(d)) for j in range(n)] for i in range(n)]
    bias = [[sum(raw[i][m] * D[m][j] for m in range(n)) for j in range(n)] for i in range(n)]
    scores = [[(raw[i][j] + mu * bias[i][j]) / math.sqrt(d) for j in range(n)] for i in range(n)]
    out = []
    for i in range(n):
        top = max(scores[i])
        e = [math.exp(s - top) for s in scores[i]]
        w = [x / sum(e) for x in e]
        out.append([sum(w[j] * V[j][c] for j in range(n)) for c in range(len(V[0]))])
    return out


# -- single heads ----------------------------------------------------------------

def test_head_token_all_zero_mask_is_standard():
    Q, K, V = qkv(nc.make_rng(0), 5, 4)
    assert torch.allclose(head_token(Q, K, V, torch.zeros(5, 5, dtype=DT)), head_standard(Q, K, V), atol=1e-12)


def test_head_token_isolated_row_copies_own_value():
    Q, K, V = qkv(nc.make_rng(1), 3, 4)
    out = head_token(Q, K, V, group_mask([0, 0, 1]))
    assert torch.allclose(out[2], V[2], atol=1e-12)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=12), st.integers(0, 2**31))
def test_masked_weights_are_exactly_zero(groups, seed):
    groups = sorted(groups)
    Q, K, _ = qkv(nc.make_rng(seed), len(groups), 4)
    T = group_mask(groups)
    w = nc.softmax_rows(token_scores(Q, K, torch.clamp(T, min=MASK_VALUE)))
    assert float(w[torch.isinf(T)].abs().sum()) == 0.0
    assert torch.allclose(w.sum(-1), torch.ones(len(groups), dtype=DT), atol=1e-6)


def test_head_statement_mirrors_head_token():
    Q, K, V = qkv(nc.make_rng(2), 4, 4)
    S = group_mask([0, 0, 1, 1])
    assert torch.equal(head_statement(Q, K, V, S), head_token(Q, K, V, S))


def test_head_dataflow_2x2_oracle():
    eye = torch.eye(2, dtype=DT)
    D = torch.tensor([[0.0, 0.0], [1.0, 0.0]], dtype=DT)
    expected = torch.tensor(dataflow_oracle(eye.tolist(), eye.tolist(), eye.tolist(), D.tolist(), 5.0), dtype=DT)
    assert torch.allclose(head_dataflow(eye, eye, eye, D, 5.0), expected, atol=1e-12)


@given(st.integers(1, 6), st.integers(1, 4), st.floats(0, 10), st.integers(0, 2**31))
def test_head_dataflow_random_oracle(n, d, mu, seed):
    gen = nc.make_rng(seed)
    Q, K, V = qkv(gen, n, d)
    D = (torch.rand(n, n, generator=gen) < 0.4).to(DT)
    expected = torch.tensor(dataflow_oracle(Q.tolist(), K.tolist(), V.tolist(), D.tolist(), mu), dtype=DT)
    assert torch.allclose(head_dataflow(Q, K, V, D, mu), expected, atol=1e-9)


@given(st.integers(1, 8), st.integers(0, 2**31))
def test_head_dataflow_reductions(n, seed):
    gen = nc.make_rng(seed)
    Q, K, V = qkv(gen, n, 4)
    D = (torch.rand(n, n, generator=gen) < 0.5).to(DT)
    std = head_standard(Q, K, V)
    assert (head_dataflow(Q, K, V, D, 0.0) - std).abs().max() < 1e-6
    assert (head_dataflow(Q, K, V, torch.zeros(n, n, dtype=DT), 5.0) - std).abs().max() < 1e-6


def test_head_dataflow_elementwise_variant():
    Q, K, V = qkv(nc.make_rng(3), 3, 2)
    D = torch.tensor([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=DT)
    raw = Q @ K.T
    expected = torch.softmax((raw + 2.0 * raw * D) / math.sqrt(2), -1) @ V
    assert torch.allclose(head_dataflow(Q, K, V, D, 2.0, elementwise=True), expected, atol=1e-12)


def test_head_shape_errors():
    Q, K, V = qkv(nc.make_rng(4), 3, 2)
    with pytest.raises(ShapeMismatch):
        head_token(Q, K, V, torch.zeros(4, 4, dtype=DT))
    with pytest.raises(ShapeMismatch):
        head_dataflow(Q, K[:, :1], V, torch.zeros(3, 3, dtype=DT), 1.0)


# -- encoder layer -----------------------------------------------------------------

def init_layer(layer, seed):
    gen = nc.make_rng(seed)
    with torch.no_grad():
        for p in layer.parameters():
            p.copy_(torch.randn(p.shape, generator=gen, dtype=DT) * 0.3)
    return layer.to(DT)


def vanilla_encoder_layer(x, layer):
    """Reference post-norm Transformer encoder layer built from torch primitives."""
    a, h = layer.attn, layer.cfg.heads
    b, n, d = x.shape

    def heads(w):
        return (x @ w).view(b, n, h, d // h).transpose(1, 2)

    w = torch.softmax(heads(a.w_q) @ heads(a.w_k).transpose(-1, -2) / math.sqrt(d // h), -1)
    ctx = (w @ heads(a.w_v)).transpose(1, 2).reshape(b, n, d)
    x1 = F.layer_norm(x + ctx @ a.w_o, (d,), layer.ln1.gain, layer.ln1.bias, 1e-6)
    ff = F.relu(x1 @ layer.ffn.w1 + layer.ffn.b1) @ layer.ffn.w2 + layer.ffn.b2
    return F.layer_norm(x1 + ff, (d,), layer.ln2.gain, layer.ln2.bias, 1e-6)


def random_structure(gen, b, n):
    tok = torch.sort(torch.randint(0, n, (b, n), generator=gen), dim=-1).values
    T = torch.where(tok[:, :, None] == tok[:, None, :], 0.0, MASK_VALUE).to(DT)
    D = (torch.rand(b, n, n, generator=gen) < 0.3).to(DT)
    return T, D


@pytest.mark.parametrize("seed", range(5))
def test_all_standard_layer_is_vanilla(seed):
    cfg = ModelConfig(src_vocab_size=4, tgt_vocab_size=4, enc_layers=1, heads=4, d_model=16, d_ff=32, dropout=0.0)
    layer = init_layer(EncoderLayer(cfg, (0, 0, 0, 4)), seed)
    gen = nc.make_rng(seed + 100)
    x = torch.randn(2, 6, 16, generator=gen, dtype=DT)
    T, D = random_structure(gen, 2, 6)
    assert (hsva_layer(x, T, T, D, layer) - vanilla_encoder_layer(x, layer)).abs().max() < 1e-6


def test_all_token_heads_with_single_token_is_vanilla():
    cfg = ModelConfig(src_vocab_size=4, tgt_vocab_size=4, enc_layers=1, heads=4, d_model=16, d_ff=32, dropout=0.0)
    layer = init_layer(EncoderLayer(cfg, (4, 0, 0, 0)), 9)
    x = torch.randn(1, 5, 16, generator=nc.make_rng(9), dtype=DT)
    zeros = torch.zeros(1, 5, 5, dtype=DT)
    assert (hsva_layer(x, zeros, zeros, zeros, layer) - vanilla_encoder_layer(x, layer)).abs().max() < 1e-6


def test_head_slices_match_standalone_heads():
    cfg = ModelConfig(src_vocab_size=4, tgt_vocab_size=4, enc_layers=1, heads=4, d_model=16, d_ff=32, dropout=0.0, mu=3.0)
    layer = init_layer(EncoderLayer(cfg, (1, 1, 1, 1)), 5)
    gen = nc.make_rng(6)
    x = torch.randn(1, 7, 16, generator=gen, dtype=DT)
    T, D = random_structure(gen, 1, 7)
    S = torch.zeros_like(T)
    ctx, _ = layer.self_attention(x, T, S, D, None)
    a = layer.attn
    sl = [slice(4 * i, 4 * i + 4) for i in range(4)]
    Q, K, V = (x[0] @ w for w in (a.w_q, a.w_k, a.w_v))
    parts = [
        head_token(Q[:, sl[0]], K[:, sl[0]], V[:, sl[0]], T[0]),
        head_statement(Q[:, sl[1]], K[:, sl[1]], V[:, sl[1]], S[0]),
        head_dataflow(Q[:, sl[2]], K[:, sl[2]], V[:, sl[2]], D[0], 3.0),
        head_standard(Q[:, sl[3]], K[:, sl[3]], V[:, sl[3]]),
    ]
    for i, part in enumerate(parts):
        assert torch.allclose(ctx[0, i], part, atol=1e-12)


def test_layer_rejects_bad_plan_row():
    cfg = ModelConfig(src_vocab_size=4, tgt_vocab_size=4, enc_layers=1, heads=4, d_model=16)
    with pytest.raises(ValueError):
        EncoderLayer(cfg, (1, 1, 1, 0))


def test_encoder_hard_masks_hold_inside_model():
    model, batch, *_ = tiny_setup()
    model.eval()
    _, attn = model.encode(batch)
    T = batch.T[0] < -1
    S = batch.S[0] < -1
    for layer, w in zip(model.encoder, attn):
        for i, kind in enumerate(layer.head_types):
            if kind == "token":
                assert float(w[0, i][T].detach().abs().sum()) == 0.0
            if kind == "statement":
                assert float(w[0, i][S].detach().abs().sum()) == 0.0


# -- config ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "kw", [dict(d_model=10, heads=4), dict(mu=-1.0), dict(enc_layers=4, k=3), dict(dropout=1.0), dict(dataflow_bias="x")]
)
def test_model_config_validation(kw):
    with pytest.raises(ValueError):
        ModelConfig(**kw)


def test_k_defaults_to_encoder_depth():
    assert ModelConfig(enc_layers=3).k == 3


# -- decoder, copy, loss ----------------------------------------------------------------

def test_tiny_model_gradients_sampled():
    model, batch, *_ = tiny_setup()
    model.train()
    err = check_sampled(lambda: model.loss(batch), list(model.parameters()), 6, nc.make_rng(0))
    assert err < 1e-3


def test_probabilities_sum_to_one():
    model, batch, *_ = tiny_setup(seed=3)
    out = model(batch)
    assert out.probs.shape[-1] == len(model.W_a) + batch.n_ext
    assert torch.allclose(out.probs.sum(-1), torch.ones_like(out.probs[..., 0]), atol=1e-6)
    assert bool(((out.p_gen > 0) & (out.p_gen < 1)).all())


@given(st.integers(0, 2**31))
def test_copy_mix_is_a_distribution(seed):
    model, *_ = tiny_setup()
    gen = nc.make_rng(seed)
    b, m, n, V, d = 2, 3, 5, len(model.W_a), model.cfg.d_model
    s, w, c = (torch.randn(b, m, d, generator=gen, dtype=DT) for _ in range(3))
    alpha = torch.softmax(torch.randn(b, m, n, generator=gen, dtype=DT), -1)
    p_vocab = torch.softmax(torch.randn(b, m, V, generator=gen, dtype=DT), -1)
    ext = torch.randint(0, V + 2, (b, n), generator=gen)
    probs, p_gen = model.copy_mix(s, w, c, alpha, p_vocab, ext, 2)
    assert torch.allclose(probs.sum(-1), torch.ones(b, m, dtype=DT), atol=1e-6)
    assert bool(((p_gen > 0) & (p_gen < 1)).all())


def test_pure_copy_limit():
    model, *_ = tiny_setup()
    V, d = len(model.W_a), model.cfg.d_model
    with torch.no_grad():
        model.b_gen.fill_(-1e4)
    zeros = torch.zeros(1, 1, d, dtype=DT)
    p_vocab = torch.full((1, 1, V), 1.0 / V, dtype=DT)
    probs, p_gen = model.copy_mix(zeros, zeros, zeros, torch.ones(1, 1, 1, dtype=DT), p_vocab, torch.tensor([[V]]), 1)
    assert probs[0, 0, V].item() >= 1 - 1e-6


def test_loss_pure_copy_is_zero():
    model, batch, _, tgt_vocab = tiny_setup()
    # only "user" in the source; target is exactly that OOV token
    one = replace(
        batch,
        src_ids=batch.src_ids[:, 1:2], src_ext_ids=batch.src_ext_ids[:, 1:2], src_key_mask=batch.src_key_mask[:, 1:2],
        src_lens=[1], T=batch.T[:, 1:2, 1:2], S=batch.S[:, 1:2, 1:2], D=batch.D[:, 1:2, 1:2],
        tgt_in=torch.tensor([[2]]), tgt_out=batch.src_ext_ids[:, 1:2].clone(), tgt_mask=torch.ones(1, 1, dtype=DT),
    )
    assert int(one.tgt_out) >= len(tgt_vocab)
    with torch.no_grad():
        model.b_gen.fill_(-1e4)
    assert model.loss(one).item() < 1e-6


def test_uniform_model_loss_is_log_vocab():
    model, batch, _, tgt_vocab = tiny_setup(copy=False)
    with torch.no_grad():
        model.W_a.zero_()
        model.V_a.zero_()
    batch = replace(batch, tgt_out=torch.where(batch.tgt_out >= len(tgt_vocab), UNK, batch.tgt_out))
    assert model.loss(batch).item() == pytest.approx(math.log(len(tgt_vocab)), abs=1e-9)


def test_decoder_is_causal():
    model, batch, *_ = tiny_setup(seed=4)
    model.eval()
    base = model(batch).probs
    changed = batch.tgt_in.clone()
    changed[0, 3:] = EOS
    out = model(replace(batch, tgt_in=changed)).probs
    assert torch.equal(base[:, :3], out[:, :3])
    assert not torch.allclose(base[:, 3:], out[:, 3:])


def test_permuting_source_only_permutes_alpha():
    model, batch, *_ = tiny_setup(seed=5)
    model.eval()
    n = batch.src_ids.shape[1]
    perm = torch.arange(n)
    perm[[1, 5]] = perm[[5, 1]]
    positions = torch.arange(n)[perm].unsqueeze(0)

    def run(b, pos):
        memory, _ = model.encode(b, pos)
        return model.decode(memory, b.src_key_mask, b.tgt_in, b.n_ext, b.src_ext_ids)

    swapped = replace(
        batch,
        src_ids=batch.src_ids[:, perm], src_ext_ids=batch.src_ext_ids[:, perm], src_key_mask=batch.src_key_mask[:, perm],
        T=batch.T[:, perm][:, :, perm], S=batch.S[:, perm][:, :, perm], D=batch.D[:, perm][:, :, perm],
    )
    base, moved = run(batch, None), run(swapped, positions)
    assert torch.allclose(base.probs, moved.probs, atol=1e-10)
    assert torch.allclose(base.alpha[..., perm], moved.alpha, atol=1e-10)


def test_decode_step_matches_full_decode():
    model, batch, *_ = tiny_setup(seed=6)
    model.eval()
    memory, _ = model.encode(batch)
    full = model.decode(memory, batch.src_key_mask, batch.tgt_in, batch.n_ext, batch.src_ext_ids)
    probs, s_t, c_t, alpha_t, _ = model.decode_step(memory, batch.src_key_mask, batch.tgt_in[:, :3], batch.n_ext, batch.src_ext_ids)
    assert torch.allclose(probs, full.probs[:, 2], atol=1e-12)
    assert torch.allclose(alpha_t.sum(-1), torch.ones(1, dtype=DT))
    assert s_t.shape == c_t.shape == (1, model.cfg.d_model)


def test_empty_source_rejected():
    model, batch, *_ = tiny_setup()
    empty = replace(batch, src_ids=batch.src_ids[:, :0])
    with pytest.raises(EmptyInput):
        model.encode(empty)


# -- generation -------------------------------------------------------------------------

@pytest.mark.parametrize("beam", [0, 3])
def test_generate_respects_limits_and_never_emits_unk(beam):
    model, batch, _, tgt_vocab = tiny_setup(seed=7)
    hyp = model.generate(batch, tgt_vocab.itos, beam=beam)[0]
    assert len(hyp.token_ids) <= model.cfg.max_tgt_len
    assert UNK not in hyp.token_ids  # an OOV ("user") is copyable
    assert len(hyp.tokens) == len(hyp.token_ids) == len(hyp.p_gen) == len(hyp.alpha)
    assert all(len(a) == batch.src_lens[0] for a in hyp.alpha)


def test_generated_copies_surface_source_strings():
    model, batch, _, tgt_vocab = tiny_setup(seed=8)
    with torch.no_grad():
        model.b_gen.fill_(-1e4)  # copy only
    hyp = model.generate(batch, tgt_vocab.itos)[0]
    V = len(tgt_vocab)
    assert hyp.token_ids and set(hyp.token_ids) <= set(batch.src_ext_ids[0].tolist())
    for i, tok in zip(hyp.token_ids, hyp.tokens):
        assert tok == (batch.oovs[0][i - V] if i >= V else tgt_vocab.itos[i])


def test_beam_scores_are_length_normalised():
    model, batch, _, tgt_vocab = tiny_setup(seed=9)
    hyp = model.beam(batch, width=4)
    greedy = model.greedy(batch)[0]
    n_b = len(hyp.token_ids) + 1
    n_g = len(greedy.token_ids) + 1
    assert hyp.log_prob / n_b >= greedy.log_prob / n_g - 1e-9 or len(greedy.token_ids) == model.cfg.max_tgt_len


def test_float32_and_float64_agree():
    m64, b64, *_ = tiny_setup(torch.float64, seed=10)
    m32, b32, *_ = tiny_setup(torch.float32, seed=10)
    assert np.allclose(m64(b64).probs.detach().numpy(), m32(b32).probs.detach().numpy(), atol=1e-5)
