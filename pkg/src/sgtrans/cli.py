"""``sgtrans`` command-line entry point.

Subcommands: extract, train, summarize, eval, analyze. Failures exit with
status 1 and a single JSON line ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .checkpoint import MAGIC, load_checkpoint
from .data import Example, load_examples, make_batch, read_jsonl, record_to_snippet, source_batch, tokenize_summary
from .masks import build_masks, dump_masks_csv
from .metrics import S_MAX, attention_distance_profile, score_corpus
from .model import ModelConfig
from .structparse import Language, RawSnippet, StructuredCode, parse
from .training import TrainConfig, resolve_best, train


SEED_ENV = "SGTRANS_SEED"
_DERIVED_KEYS = {"src_vocab_size", "tgt_vocab_size"}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------------------
# run configuration

def _config_fields() -> dict[str, tuple[str, type]]:
    """Config key -> (owning config, value type), taken from the defaults."""
    out = {}
    for owner, defaults in (("model", ModelConfig()), ("train", TrainConfig())):
        for f in fields(defaults):
            if f.name not in _DERIVED_KEYS:
                out[f.name] = (owner, type(getattr(defaults, f.name)))
    return out


def _coerce(key: str, value: str, kind: type):
    try:
        if kind is bool:
            low = value.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        return value.strip()
    except ValueError:
        raise CliError(f"config key {key!r}: cannot parse {value!r} as {kind.__name__}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{source}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def bundled_config(name: str) -> str:
    return resources.files("sgtrans").joinpath("resources", f"{name}.cfg").read_text()


def load_run_config(path: str | None, overrides: Sequence[str]) -> tuple[ModelConfig, TrainConfig, str]:
    """Merge defaults, a config file (or bundled ``toy``/``paper``) and ``key=value`` overrides."""
    if path in (None, "toy", "paper"):
        source = f"<bundled {path or 'toy'}.cfg>"
        text = bundled_config(path or "toy")
    else:
        source = path
        text = Path(path).read_text()
    raw = parse_config_text(text, source)
    for item in overrides:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    if SEED_ENV in os.environ:
        raw["seed"] = os.environ[SEED_ENV]
    known = _config_fields()
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    model_kw, train_kw = {}, {}
    for key, value in raw.items():
        owner, kind = known[key]
        (model_kw if owner == "model" else train_kw)[key] = _coerce(key, value, kind)
    try:
        return ModelConfig(**model_kw), TrainConfig(**train_kw), text
    except ValueError as exc:
        raise CliError(f"invalid config: {exc}") from None


def format_config(model_cfg: ModelConfig, train_cfg: TrainConfig) -> str:
    lines = []
    for cfg in (model_cfg, train_cfg):
        for f in fields(cfg):
            if f.name not in _DERIVED_KEYS:
                lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# helpers

def _read_snippet(args) -> RawSnippet:
    if not args.language:
        raise CliError("--snippet needs --language")
    path = Path(args.snippet)
    return RawSnippet(Language.parse(args.language), path.read_text(encoding="utf-8"), path.stem)


def _parse_record(rec: dict) -> StructuredCode:
    return parse(record_to_snippet(rec))


def _open_out(path: str | None):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8")


def _checkpoint_path(path: str) -> Path:
    p = Path(path)
    return resolve_best(p) if p.is_dir() else p


def _source_codes(args) -> list[StructuredCode]:
    if args.snippet:
        return [parse(_read_snippet(args))]
    if args.dataset:
        return [parse(record_to_snippet(rec)) for rec in read_jsonl(args.dataset)]
    raise CliError("give --dataset or --snippet")


# ---------------------------------------------------------------------------
# commands

def cmd_extract(args) -> None:
    if args.snippet:
        codes = [parse(_read_snippet(args))]
    else:
        records = read_jsonl(args.dataset)
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                codes = list(pool.map(_parse_record, records, chunksize=16))
        else:
            codes = [_parse_record(r) for r in records]
    with _open_out(args.out) as fh:
        for code in codes:
            fh.write(json.dumps(code.to_json()) + "\n")
    if args.dump_masks:
        for code in codes:
            dump_masks_csv(build_masks(code), args.dump_masks, code.id or "snippet")


def cmd_train(args) -> None:
    model_cfg, train_cfg, _ = load_run_config(args.config, args.set)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.config not in (None, "toy", "paper"):
        (out_dir / "config.input.cfg").write_text(Path(args.config).read_text())
    (out_dir / "config.cfg").write_text(format_config(model_cfg, train_cfg))
    train_set = load_examples(args.train)
    valid_set = load_examples(args.valid) if args.valid else train_set
    if args.repeat <= 1:
        result = train(train_set, valid_set, model_cfg, train_cfg, out_dir)
        summary = {"best_checkpoint": str(result.best_checkpoint), "best_val_bleu4": result.best_bleu4, "best_epoch": result.best_epoch}
    else:
        runs = []
        for r in range(args.repeat):
            cfg_r = TrainConfig.from_dict({**train_cfg.to_dict(), "seed": train_cfg.seed + r})
            mcfg_r = ModelConfig.from_dict(model_cfg.to_dict())
            result = train(train_set, valid_set, mcfg_r, cfg_r, out_dir / f"run{r + 1}")
            runs.append({"seed": cfg_r.seed, "best_checkpoint": str(result.best_checkpoint), "best_val_bleu4": result.best_bleu4})
        summary = {"runs": runs, "mean_best_val_bleu4": statistics.fmean(r["best_val_bleu4"] for r in runs)}
        best = max(runs, key=lambda r: r["best_val_bleu4"])
        (out_dir / "best").write_text(str(Path(best["best_checkpoint"]).relative_to(out_dir)) + "\n")
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))


def cmd_summarize(args) -> None:
    model, src_vocab, tgt_vocab, _ = load_checkpoint(_checkpoint_path(args.checkpoint))
    codes = _source_codes(args)
    cfg = model.cfg
    with _open_out(args.out) as fh:
        for start in range(0, len(codes), args.batch_size):
            chunk = codes[start : start + args.batch_size]
            batch = source_batch(chunk, src_vocab, tgt_vocab, cfg.max_src_len)
            for code, hyp in zip(chunk, model.generate(batch, tgt_vocab.itos, beam=args.beam)):
                fh.write(json.dumps({"id": code.id, "summary": " ".join(hyp.tokens), "p_gen_mean": round(hyp.p_gen_mean, 6)}) + "\n")


def cmd_eval(args) -> None:
    preds = {str(r["id"]): tokenize_summary(r.get("summary", "")) for r in read_jsonl(args.predictions)}
    refs_raw = read_jsonl(args.references)
    ids = [str(r["id"]) for r in refs_raw]
    missing = [i for i in ids if i not in preds]
    if missing:
        raise CliError(f"{len(missing)} references have no prediction (first: {missing[0]})")
    refs = [list(tokenize_summary(r["summary"])) for r in refs_raw]
    report = score_corpus([list(preds[i]) for i in ids], refs, ids)
    if args.per_example:
        with open(args.per_example, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["id", "bleu4_smoothed", "meteor", "rouge_l"])
            writer.writeheader()
            writer.writerows(report.per_example)
    text = json.dumps(report.to_dict(), sort_keys=True)
    with _open_out(args.out) as fh:
        fh.write(text + "\n")


def write_pgm(path: Path, mat: np.ndarray) -> None:
    """ASCII greyscale heatmap, scaled so the largest weight is white."""
    top = float(mat.max()) if mat.size else 0.0
    pix = np.zeros(mat.shape, dtype=int) if top <= 0 else np.rint(255.0 * mat / top).astype(int)
    rows = [" ".join(str(v) for v in row) for row in pix]
    path.write_text(f"P2\n{mat.shape[1]} {mat.shape[0]}\n255\n" + "\n".join(rows) + "\n")


def cmd_analyze(args) -> None:
    model, src_vocab, tgt_vocab, _ = load_checkpoint(_checkpoint_path(args.checkpoint))
    codes = _source_codes(args)
    if args.id:
        focus = [c for c in codes if c.id == args.id]
        if not focus:
            raise CliError(f"no record with id {args.id!r}")
        focus = focus[0]
    else:
        focus = codes[0]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_layer: list[list[np.ndarray]] = [[] for _ in model.encoder]
    with torch.no_grad():
        for code in codes:
            batch = make_batch([Example(code, ("<unk>",), code.id)], src_vocab, tgt_vocab, model.cfg.max_src_len, 2)
            _, attn = model.encode(batch)
            for l, weights in enumerate(attn):
                per_layer[l].append(weights[0].numpy().astype(np.float64))
                if code is focus:
                    for i, kind in enumerate(model.encoder[l].head_types):
                        stem = out_dir / f"layer{l + 1}_head{i + 1}_{kind}"
                        mat = weights[0, i].numpy().astype(np.float64)
                        np.savetxt(stem.with_suffix(".csv"), mat, delimiter=",", fmt="%.6f")
                        write_pgm(stem.with_suffix(".pgm"), mat)
    (out_dir / "tokens.txt").write_text("\n".join(focus.sub_tokens) + "\n")
    profile = attention_distance_profile(per_layer, S_MAX)
    with open(out_dir / "distance_profile.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer"] + [f"d{j}" for j in range(1, S_MAX + 1)])
        for l, row in enumerate(profile, 1):
            writer.writerow([l] + [f"{v:.6f}" for v in row])


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sgtrans", description="Structure-guided code summarization.")
    p.add_argument("--version", action="version", version=MAGIC.decode())
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def source_args(q):
        src = q.add_mutually_exclusive_group(required=True)
        src.add_argument("--dataset", help="JSONL records with id, language, code")
        src.add_argument("--snippet", help="a single source file")
        q.add_argument("--language", choices=["java", "python"], help="language of --snippet")

    q = sub.add_parser("extract", help="emit StructuredCode JSONL")
    source_args(q)
    q.add_argument("--out", default="-")
    q.add_argument("--dump-masks", metavar="DIR", help="also write T/S/D CSVs per record")
    q.add_argument("--jobs", type=int, default=1)
    q.set_defaults(func=cmd_extract)

    q = sub.add_parser("train", help="train a model")
    q.add_argument("--train", required=True)
    q.add_argument("--valid", help="validation JSONL (defaults to the training set)")
    q.add_argument("--config", help="key=value file, or 'toy' / 'paper' for the bundled recipes")
    q.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    q.add_argument("--out", required=True)
    q.add_argument("--repeat", type=int, default=1, help="independent runs with seeds seed..seed+N-1")
    q.set_defaults(func=cmd_train)

    q = sub.add_parser("summarize", help="generate summaries")
    q.add_argument("--checkpoint", required=True, help="checkpoint file or training output dir")
    source_args(q)
    q.add_argument("--beam", type=int, default=0, help="beam width (0 or 1: greedy)")
    q.add_argument("--batch-size", type=int, default=32)
    q.add_argument("--out", default="-")
    q.set_defaults(func=cmd_summarize)

    q = sub.add_parser("eval", help="score predictions against references")
    q.add_argument("--predictions", required=True)
    q.add_argument("--references", required=True)
    q.add_argument("--per-example", metavar="CSV")
    q.add_argument("--out", default="-")
    q.set_defaults(func=cmd_eval)

    q = sub.add_parser("analyze", help="dump encoder attention heatmaps and distance profile")
    q.add_argument("--checkpoint", required=True)
    source_args(q)
    q.add_argument("--id", help="record to draw heatmaps for (default: first)")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_analyze)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "jobs", 1) < 1:
            raise CliError("--jobs must be >= 1")
        args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one JSON line
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
