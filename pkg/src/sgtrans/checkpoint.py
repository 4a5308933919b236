"""Self-describing checkpoint container.

Layout::

    b"SGTRANS1\\n"
    uint32 little-endian header length
    UTF-8 JSON header: {"config": {...}, "src_vocab": [...], "tgt_vocab": [...],
                        "params": [{"name": ..., "shape": [...]}, ...], "extra": {...}}
    one float32 little-endian blob per entry of "params", in header order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .data import Vocab
from .model import ModelConfig, SGTrans

MAGIC = b"SGTRANS1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, model: SGTrans, src_vocab: Vocab, tgt_vocab: Vocab, extra: dict | None = None) -> Path:
    path = Path(path)
    params = [(name, p.detach().to(torch.float32).cpu().numpy()) for name, p in model.named_parameters()]
    header = {
        "config": model.cfg.to_dict(),
        "src_vocab": src_vocab.to_list(),
        "tgt_vocab": tgt_vocab.to_list(),
        "params": [{"name": name, "shape": list(arr.shape)} for name, arr in params],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in params:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    tmp.replace(path)
    return path


def _read_body(raw: bytes, path) -> tuple[SGTrans, dict]:
    offset = len(MAGIC) + 1
    (size,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    header = json.loads(raw[offset : offset + size].decode("utf-8"))
    offset += size
    model = SGTrans(ModelConfig.from_dict(header["config"]))
    named = dict(model.named_parameters())
    missing = set(named) - {entry["name"] for entry in header["params"]}
    if missing:
        raise CheckpointError(f"{path}: missing parameters {sorted(missing)}")
    with torch.no_grad():
        for entry in header["params"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in named or tuple(named[name].shape) != shape:
                raise CheckpointError(f"{path}: parameter {name} {shape} does not match the model")
            count = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape)
            offset += 4 * count
            named[name].copy_(torch.from_numpy(arr.copy()))
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return model, header


def load_checkpoint(path: str | Path) -> tuple[SGTrans, Vocab, Vocab, dict]:
    """Returns (model in eval mode, src_vocab, tgt_vocab, extra)."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC + b"\n"):
        raise CheckpointError(f"{path}: not an {MAGIC.decode()} checkpoint")
    try:
        model, header = _read_body(raw, path)
    except CheckpointError:
        raise
    except (struct.error, ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None
    model.eval()
    return model, Vocab.from_list(header["src_vocab"]), Vocab.from_list(header["tgt_vocab"]), header.get("extra", {})
