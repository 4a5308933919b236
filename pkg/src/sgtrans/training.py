"""Teacher-forced training with Adam, validation BLEU-4 and early stopping."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import torch

from . import numcore as nc
from .checkpoint import save_checkpoint
from .data import Example, Vocab, build_vocab, make_batch
from .metrics import bleu4_corpus
from .model import ModelConfig, SGTrans

log = logging.getLogger(__name__)


class NonFiniteLoss(RuntimeError):
    def __init__(self, epoch: int, batch_id: int, ids: Sequence[str]):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch_id} (examples {list(ids)[:5]})")
        self.epoch = epoch
        self.batch_id = batch_id


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    seed: int = 1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float = 0.0  # 0 disables clipping
    vocab_min_freq: int = 1
    src_vocab_max: int = 50000
    tgt_vocab_max: int = 30000
    eval_batch_size: int = 64

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("lr", "batch_size", "max_epochs", "patience", "adam_eps", "vocab_min_freq", "eval_batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("adam betas must be in [0, 1)")
        if self.grad_clip_norm < 0:
            raise ValueError("grad_clip_norm must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(values) - names
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**values)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_bleu4: float
    seconds: float


@dataclass
class TrainResult:
    best_checkpoint: Path
    best_bleu4: float
    best_epoch: int
    history: list[EpochRecord] = field(default_factory=list)


def build_vocabs(examples: Sequence[Example], cfg: TrainConfig, shared: bool = False) -> tuple[Vocab, Vocab]:
    src = [ex.code.sub_tokens for ex in examples]
    tgt = [ex.summary for ex in examples]
    if shared:
        vocab = build_vocab(src + tgt, cfg.vocab_min_freq, max(cfg.src_vocab_max, cfg.tgt_vocab_max))
        return vocab, vocab
    return build_vocab(src, cfg.vocab_min_freq, cfg.src_vocab_max), build_vocab(tgt, cfg.vocab_min_freq, cfg.tgt_vocab_max)


def make_optimizer(model: torch.nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(cfg.adam_beta1, cfg.adam_beta2), eps=cfg.adam_eps)


def batches(examples: Sequence[Example], size: int, order: Sequence[int] | None = None):
    order = list(range(len(examples))) if order is None else list(order)
    for start in range(0, len(order), size):
        yield [examples[i] for i in order[start : start + size]]


def predict(model: SGTrans, examples: Sequence[Example], src_vocab: Vocab, tgt_vocab: Vocab, batch_size: int = 64, beam: int = 0) -> list[list[str]]:
    cfg = model.cfg
    out: list[list[str]] = []
    for chunk in batches(examples, batch_size):
        batch = make_batch(chunk, src_vocab, tgt_vocab, cfg.max_src_len, cfg.max_tgt_len, model.dtype)
        out.extend(h.tokens for h in model.generate(batch, tgt_vocab.itos, beam=beam))
    return out


def validation_bleu(model: SGTrans, examples: Sequence[Example], src_vocab: Vocab, tgt_vocab: Vocab, batch_size: int = 64) -> float:
    preds = predict(model, examples, src_vocab, tgt_vocab, batch_size)
    refs = [list(ex.summary[: model.cfg.max_tgt_len - 1]) for ex in examples]
    return bleu4_corpus(preds, refs)


def train(
    train_set: Sequence[Example],
    valid_set: Sequence[Example],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir: str | Path,
) -> TrainResult:
    """Train until ``max_epochs`` or ``patience`` epochs without a validation BLEU-4 gain."""
    if not train_set or not valid_set:
        raise ValueError("training and validation sets must be non-empty")
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    src_vocab, tgt_vocab = build_vocabs(train_set, train_cfg, model_cfg.share_embeddings)
    model_cfg.src_vocab_size, model_cfg.tgt_vocab_size = len(src_vocab), len(tgt_vocab)
    model = SGTrans(model_cfg)
    model.reset_parameters(train_cfg.seed)
    model.seed_dropout(train_cfg.seed + 1)
    shuffle_rng = nc.make_rng(train_cfg.seed + 2)
    optim = make_optimizer(model, train_cfg)

    metrics_path = out_dir / "metrics.csv"
    with open(metrics_path, "w", newline="") as fh:
        csv.writer(fh).writerow(["epoch", "train_loss", "val_bleu4", "seconds"])

    history: list[EpochRecord] = []
    best_bleu, best_epoch, best_path = -1.0, 0, ckpt_dir / "best.ckpt"
    for epoch in range(1, train_cfg.max_epochs + 1):
        start = time.perf_counter()
        model.train()
        order = torch.randperm(len(train_set), generator=shuffle_rng).tolist()
        total, tokens = 0.0, 0.0
        for batch_id, chunk in enumerate(batches(train_set, train_cfg.batch_size, order)):
            batch = make_batch(chunk, src_vocab, tgt_vocab, model_cfg.max_src_len, model_cfg.max_tgt_len, model.dtype)
            loss = model.loss(batch)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(epoch, batch_id, batch.ids)
            optim.zero_grad()
            loss.backward()
            if train_cfg.grad_clip_norm > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip_norm)
            optim.step()
            n_tok = float(batch.tgt_mask.sum())
            total += loss.item() * n_tok
            tokens += n_tok
        bleu = validation_bleu(model, valid_set, src_vocab, tgt_vocab, train_cfg.eval_batch_size)
        record = EpochRecord(epoch, total / tokens, bleu, time.perf_counter() - start)
        history.append(record)
        with open(metrics_path, "a", newline="") as fh:
            csv.writer(fh).writerow([epoch, f"{record.train_loss:.6f}", f"{bleu:.4f}", f"{record.seconds:.3f}"])
        log.info("epoch %d loss %.4f val_bleu4 %.2f (%.1fs)", epoch, record.train_loss, bleu, record.seconds)
        if bleu > best_bleu:
            best_bleu, best_epoch = bleu, epoch
            save_checkpoint(best_path, model, src_vocab, tgt_vocab, {"epoch": epoch, "val_bleu4": bleu})
            (out_dir / "best").write_text(str(best_path.relative_to(out_dir)) + "\n")
        elif epoch - best_epoch >= train_cfg.patience:
            log.info("no validation gain for %d epochs; stopping", train_cfg.patience)
            break
    save_checkpoint(ckpt_dir / "last.ckpt", model, src_vocab, tgt_vocab, {"epoch": history[-1].epoch})
    return TrainResult(best_path, best_bleu, best_epoch, history)


def resolve_best(out_dir: str | Path) -> Path:
    """Follow the ``best`` pointer file written by :func:`train`."""
    out_dir = Path(out_dir)
    return out_dir / (out_dir / "best").read_text().strip()
