"""Per-level empirical histogram over occupancy bytes (the non-learned baseline)."""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from ..octree import ParsedOctree


class HistogramModel:
    kind = "occupancy"
    variant = "Histogram"

    def __init__(self, depth: int, alpha: float = 1.0):
        if alpha <= 0:
            raise ValueError("Laplace constant must be positive")
        self.depth = depth
        self.alpha = float(alpha)
        self.counts = np.zeros((depth, 256), dtype=np.float64)

    def fit(self, trees: Iterable[ParsedOctree]) -> "HistogramModel":
        for t in trees:
            self.update(t)
        return self

    def update(self, tree: ParsedOctree) -> None:
        nb = int(tree.byte_bounds[-1])
        lv = tree.levels[:nb]
        b = tree.bytes[:nb]
        np.add.at(self.counts, (lv, b), 1.0)

    def probs(self, level: int) -> np.ndarray:
        c = self.counts[min(level, self.depth - 1)] + self.alpha
        return c / c.sum()

    def cross_entropy_bits(self, tree: ParsedOctree) -> float:
        nb = int(tree.byte_bounds[-1])
        p = (self.counts + self.alpha) / (self.counts + self.alpha).sum(axis=1, keepdims=True)
        return float(-np.log2(p[tree.levels[:nb], tree.bytes[:nb]]).sum())

    def begin_sweep(self, prev: Optional[ParsedOctree]) -> "_HistogramState":
        return _HistogramState(self)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {"counts": self.counts.copy()}

    def load_state_dict(self, tensors) -> None:
        c = np.asarray(tensors["counts"], dtype=np.float64)
        if c.shape != self.counts.shape:
            raise ValueError(f"histogram shape mismatch: {c.shape} vs {self.counts.shape}")
        self.counts = c.copy()

    def metadata(self) -> dict:
        return {"kind": self.kind, "variant": self.variant, "config": {"depth": self.depth, "alpha": self.alpha}}


class _HistogramState:
    def __init__(self, model: HistogramModel):
        self.model = model

    def level_probs(self, level: int, cells, octants, parent_local, parent_bytes) -> np.ndarray:
        n = len(np.asarray(cells).reshape(-1, 3))
        return np.tile(self.model.probs(level), (n, 1))
