"""Dense differentiable ops used by the model.

Backed by torch tensors and torch's reverse-mode autograd. Every op checks
shapes up front and raises :class:`ShapeMismatch` naming both shapes, so
shape bugs surface at the call site instead of deep inside a broadcast.
"""

from __future__ import annotations

import math
from typing import Sequence

import torch
import torch.nn.functional as F

Tensor = torch.Tensor

DEFAULT_DTYPE = torch.float32
CHECK_DTYPE = torch.float64


class ShapeMismatch(ValueError):
    def __init__(self, op: str, a, b):
        super().__init__(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")


def make_rng(seed: int) -> torch.Generator:
    """Seeded CPU generator (Mersenne Twister, identical stream on every platform)."""
    gen = torch.Generator(device="cpu")
    gen.manual_seed(int(seed) & 0xFFFF_FFFF_FFFF_FFFF)
    return gen


def tensor(data, dtype: torch.dtype = DEFAULT_DTYPE, requires_grad: bool = False) -> Tensor:
    return torch.tensor(data, dtype=dtype, requires_grad=requires_grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.dim() < 2 or b.dim() < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    try:
        torch.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except RuntimeError:
        raise ShapeMismatch("matmul", a.shape, b.shape) from None
    return a @ b


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch("add", a.shape, b.shape)
    return a + b


def add_broadcast(a: Tensor, b: Tensor) -> Tensor:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        raise ShapeMismatch("add_broadcast", a.shape, b.shape) from None
    return a + b


def scale(a: Tensor, c: float) -> Tensor:
    return a * c


def softmax_rows(a: Tensor, additive_mask: Tensor | None = None) -> Tensor:
    """Softmax over the last dim, after adding ``additive_mask`` to the scores."""
    if additive_mask is not None:
        a = add_broadcast(a, additive_mask)
    shifted = a - a.detach().amax(dim=-1, keepdim=True)
    e = torch.exp(shifted)
    return e / e.sum(dim=-1, keepdim=True)


def relu(a: Tensor) -> Tensor:
    return torch.clamp(a, min=0)


def sigmoid(a: Tensor) -> Tensor:
    return torch.sigmoid(a)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    if gain.shape != a.shape[-1:] or bias.shape != a.shape[-1:]:
        raise ShapeMismatch("layer_norm", a.shape, gain.shape if gain.shape != a.shape[-1:] else bias.shape)
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    mean = a.mean(dim=-1, keepdim=True)
    var = ((a - mean) ** 2).mean(dim=-1, keepdim=True)
    return (a - mean) / torch.sqrt(var + eps) * gain + bias


def embedding_lookup(table: Tensor, ids: Tensor) -> Tensor:
    if table.dim() != 2:
        raise ShapeMismatch("embedding_lookup", table.shape, ids.shape)
    if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= table.shape[0]):
        raise IndexError(f"embedding_lookup: id out of range for table of {table.shape[0]} rows")
    return F.embedding(ids, table)


def dropout(a: Tensor, p: float, rng: torch.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0:
        return a
    keep = torch.rand(a.shape, generator=rng, dtype=a.dtype) >= p
    return a * keep / (1.0 - p)


def concat_last_dim(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ValueError("concat_last_dim needs at least one tensor")
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise ShapeMismatch("concat_last_dim", parts[0].shape, p.shape)
    return torch.cat(list(parts), dim=-1)


def log(a: Tensor) -> Tensor:
    return torch.log(a)


def nll_loss(probs: Tensor, target_ids: Tensor, weights: Tensor | None = None) -> Tensor:
    """Mean negative log-probability of ``target_ids`` under ``probs`` (last dim).

    ``weights`` (same shape as ``target_ids``) excludes positions with weight 0.
    """
    if probs.shape[:-1] != target_ids.shape:
        raise ShapeMismatch("nll_loss", probs.shape, target_ids.shape)
    picked = probs.gather(-1, target_ids.unsqueeze(-1)).squeeze(-1)
    nll = -torch.log(picked)
    if weights is None:
        return nll.mean()
    if weights.shape != target_ids.shape:
        raise ShapeMismatch("nll_loss", weights.shape, target_ids.shape)
    weights = weights.to(nll.dtype)
    return (nll * weights).sum() / weights.sum().clamp_min(1.0)


def sinusoid_table(n_pos: int, d_model: int, dtype: torch.dtype = DEFAULT_DTYPE) -> Tensor:
    pos = torch.arange(n_pos, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, d_model, 2, dtype=torch.float64) * (-math.log(10000.0) / d_model))
    table = torch.zeros(n_pos, d_model, dtype=torch.float64)
    table[:, 0::2] = torch.sin(pos * div)
    table[:, 1::2] = torch.cos(pos * div)[:, : d_model // 2]
    return table.to(dtype)
