"""Structure matrices and the per-layer head schedule."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .structparse import StructuredCode

# Finite stand-in for -inf when a mask is added to attention scores.
MASK_VALUE = -1e9

HEAD_TYPES = ("token", "statement", "dataflow", "standard")


class InvalidSchedule(ValueError):
    pass


@dataclass(frozen=True)
class StructureMasks:
    """T and S hold 0 / -inf, D holds 0 / 1 (``d[i, j] = 1``: value flows j -> i)."""

    T: np.ndarray
    S: np.ndarray
    D: np.ndarray

    @property
    def n(self) -> int:
        return self.T.shape[0]

    def additive(self) -> tuple[np.ndarray, np.ndarray]:
        """T and S with -inf replaced by the finite sentinel."""
        return np.maximum(self.T, MASK_VALUE), np.maximum(self.S, MASK_VALUE)


def _same_group(groups) -> np.ndarray:
    g = np.asarray(groups)
    return g[:, None] == g[None, :]


def build_masks(code: StructuredCode) -> StructureMasks:
    n = len(code)
    T = np.where(_same_group(code.token_of), 0.0, -np.inf)
    S = np.where(_same_group(code.statement_of), 0.0, -np.inf)
    D = np.zeros((n, n))
    nodes = code.dfg.nodes
    for edge in code.dfg.edges:
        src, dst = nodes[edge.src], nodes[edge.dst]
        D[dst.lo : dst.hi, src.lo : src.hi] = 1.0
    np.fill_diagonal(D, 0.0)
    return StructureMasks(T, S, D)


def dump_masks_csv(masks: StructureMasks, out_dir: str | Path, stem: str) -> list[Path]:
    """Write ``{stem}_T.csv``, ``{stem}_S.csv`` and ``{stem}_D.csv`` (row-major)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, mat in (("T", masks.T), ("S", masks.S), ("D", masks.D)):
        path = out_dir / f"{stem}_{name}.csv"
        rows = []
        for row in mat:
            cells = []
            for v in row:
                if np.isneginf(v):
                    cells.append("-inf")
                else:
                    cells.append("1" if v == 1 else "0")
            rows.append(",".join(cells))
        path.write_text("\n".join(rows) + "\n")
        paths.append(path)
    return paths


@dataclass(frozen=True)
class HeadPlan:
    L: int
    h: int
    k: int
    layers: tuple[tuple[int, int, int, int], ...]

    def row(self, layer: int) -> tuple[int, int, int, int]:
        """Counts (token, statement, dataflow, standard) for 1-based ``layer``."""
        return self.layers[layer - 1]

    def head_types(self, layer: int) -> list[str]:
        counts = self.row(layer)
        return [kind for kind, c in zip(HEAD_TYPES, counts) for _ in range(c)]


def head_plan(L: int, h: int, k: int) -> HeadPlan:
    """Local-heavy shallow layers, data-flow-heavy deep layers.

    Per layer l: token = statement = floor(h(k-l)/(2k-l)) clamped at 0,
    dataflow = floor(h*l/(2k-l)), standard heads take the remainder.
    """
    if h < 1:
        raise InvalidSchedule(f"need at least one head, got h={h}")
    if L < 1:
        raise InvalidSchedule(f"need at least one layer, got L={L}")
    if k < L:
        raise InvalidSchedule(f"k={k} must be >= L={L} so that 2k-l stays positive")
    rows = []
    for l in range(1, L + 1):
        denom = 2 * k - l
        local = max(0, (h * (k - l)) // denom)
        flow = (h * l) // denom
        rows.append((local, local, flow, h - 2 * local - flow))
    return HeadPlan(L, h, k, tuple(rows))
