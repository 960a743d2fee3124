"""Context features and neighbor tables shared by training and coding.

Every node feature row has ``CONTEXT_DIM`` entries:

    level/16, normalized cell center (3), octant/7,
    parent byte/255, parent byte bits (8),
    aux byte/255, aux byte bits (8)

For nodes of the current sweep the aux byte is the occupancy of the
corresponding node in the previous octree (0 when absent). For nodes of the
previous octree it is the node's own byte. Centers are normalized by the ROI
side, which puts them in [-0.5, 0.5] regardless of the ROI's scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..cells import MAX_DEPTH
from ..neighbors import SpatialIndex
from ..octree import ParsedOctree

CONTEXT_DIM = 23
K_NEIGHBORS = 5


def byte_bits(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.int64)
    return ((b[:, None] >> np.arange(8)) & 1).astype(np.float64)


def normalized_centers(levels: np.ndarray, cells: np.ndarray) -> np.ndarray:
    scale = np.ldexp(1.0, -np.asarray(levels, dtype=np.int64))
    return (np.asarray(cells, dtype=np.float64) + 0.5) * scale[:, None] - 0.5


def context_features(levels, cells, octants, parent_bytes, aux_bytes) -> np.ndarray:
    levels = np.asarray(levels, dtype=np.int64)
    n = len(levels)
    out = np.empty((n, CONTEXT_DIM))
    out[:, 0] = levels / float(MAX_DEPTH)
    out[:, 1:4] = normalized_centers(levels, np.asarray(cells).reshape(-1, 3))
    out[:, 4] = np.asarray(octants, dtype=np.float64) / 7.0
    pb = np.asarray(parent_bytes, dtype=np.int64)
    ab = np.asarray(aux_bytes, dtype=np.int64)
    out[:, 5] = pb / 255.0
    out[:, 6:14] = byte_bits(pb)
    out[:, 14] = ab / 255.0
    out[:, 15:23] = byte_bits(ab)
    return out


def squash_displacement(d: np.ndarray) -> np.ndarray:
    """Signed log1p of a displacement measured in cells."""
    d = np.asarray(d, dtype=np.float64)
    return np.sign(d) * np.log1p(np.abs(d))


def corresponding_indices(prev: Optional[ParsedOctree], levels, cells) -> np.ndarray:
    """Index of the previous-octree node at the same (level, cell), else -1."""
    levels = np.asarray(levels, dtype=np.int64)
    if prev is None or prev.num_nodes == 0:
        return np.full(len(levels), -1, dtype=np.int64)
    return prev.lookup.find(levels, cells)


def corresponding_bytes(prev: Optional[ParsedOctree], corr: np.ndarray) -> np.ndarray:
    if prev is None or prev.num_nodes == 0:
        return np.zeros(len(corr), dtype=np.int64)
    return np.where(corr >= 0, np.maximum(prev.bytes[np.maximum(corr, 0)], 0), 0)


@dataclass
class PrevTreeTables:
    """Node tables of the previous (already decoded, aligned) octree."""

    ctx: np.ndarray      # (m, CONTEXT_DIM)
    parent: np.ndarray   # (m,) index, -1 at the root
    levels: np.ndarray   # (m,)
    tree: Optional[ParsedOctree]

    @property
    def num_nodes(self) -> int:
        return len(self.levels)


def prev_tree_tables(prev: Optional[ParsedOctree]) -> PrevTreeTables:
    if prev is None or prev.num_nodes == 0:
        return PrevTreeTables(np.zeros((0, CONTEXT_DIM)), np.zeros(0, np.int64), np.zeros(0, np.int64), None)
    own = np.maximum(prev.bytes, 0)
    pb = np.where(prev.parent >= 0, own[np.maximum(prev.parent, 0)], 0)
    ctx = context_features(prev.levels, prev.cells, prev.octant, pb, own)
    return PrevTreeTables(ctx, prev.parent.copy(), prev.levels.copy(), prev)


class LevelNeighbors:
    """Per-level exact k-NN over previous-octree nodes, in integer cell units.

    Cell coordinates are exact integers, so distances carry no rounding and
    the (distance, index) order is reproducible everywhere.
    """

    def __init__(self, prev: Optional[ParsedOctree], k: int = K_NEIGHBORS):
        self.k = k
        self.prev = prev
        self._index: dict[int, SpatialIndex] = {}

    def query(self, level: int, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor node ids (n, k), -1 padded, and squashed displacements (n, k, 3)."""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
        n = len(cells)
        ids = np.full((n, self.k), -1, dtype=np.int64)
        disp = np.zeros((n, self.k, 3))
        prev = self.prev
        if prev is None or n == 0 or level + 1 >= len(prev.node_bounds):
            return ids, disp
        sl = prev.level_slice(level)
        if sl.stop <= sl.start:
            return ids, disp
        index = self._index.get(level)
        if index is None:
            index = self._index[level] = SpatialIndex(prev.cells[sl].astype(np.float64))
        local, _ = index.query(cells.astype(np.float64), self.k)
        kk = local.shape[1]
        ids[:, :kk] = local + sl.start
        d = prev.cells[ids[:, :kk]] - cells[:, None, :]
        disp[:, :kk] = squash_displacement(d)
        return ids, disp


@dataclass
class OccupancyExample:
    """One (current, previous) sweep pair flattened for training.

    Row ``i`` of the current-tree arrays is the i-th byte-carrying node in
    breadth-first order; its target is the occupancy byte.
    """

    ctx: np.ndarray
    parent: np.ndarray
    levels: np.ndarray
    target: np.ndarray
    corr: np.ndarray
    nbr: np.ndarray
    disp: np.ndarray
    prev: PrevTreeTables
    depth: int

    @property
    def num_symbols(self) -> int:
        return len(self.target)


def occupancy_example(cur: ParsedOctree, prev: Optional[ParsedOctree], with_neighbors: bool = True,
                      k: int = K_NEIGHBORS) -> OccupancyExample:
    nb = int(cur.byte_bounds[-1])
    lv = cur.levels[:nb]
    cells = cur.cells[:nb]
    par = cur.parent[:nb]
    target = cur.bytes[:nb].astype(np.int64)
    pb = np.where(par >= 0, target[np.maximum(par, 0)], 0)
    corr = corresponding_indices(prev, lv, cells)
    ctx = context_features(lv, cells, cur.octant[:nb], pb, corresponding_bytes(prev, corr))
    nbr = np.full((nb, k), -1, dtype=np.int64)
    disp = np.zeros((nb, k, 3))
    if with_neighbors and prev is not None and prev.num_nodes:
        finder = LevelNeighbors(prev, k)
        for level in range(1, cur.depth):
            sl = slice(int(cur.node_bounds[level]), int(min(cur.node_bounds[level + 1], nb))) \
                if level + 1 < len(cur.node_bounds) else slice(nb, nb)
            if sl.stop > sl.start:
                nbr[sl], disp[sl] = finder.query(level, cells[sl])
    return OccupancyExample(ctx, par.copy(), lv.copy(), target, corr, nbr, disp, prev_tree_tables(prev), cur.depth)


@dataclass
class OccupancyBatch:
    ctx: np.ndarray
    parent: np.ndarray
    levels: np.ndarray
    target: np.ndarray
    corr: np.ndarray
    nbr: np.ndarray
    disp: np.ndarray
    prev: PrevTreeTables
    depth: int


def collate(examples: list[OccupancyExample]) -> OccupancyBatch:
    """Concatenate examples, shifting every index into the batch's row space."""
    if not examples:
        raise ValueError("empty batch")
    depth = examples[0].depth
    parts = {k: [] for k in ("ctx", "parent", "levels", "target", "corr", "nbr", "disp")}
    pparts = {k: [] for k in ("ctx", "parent", "levels")}
    off = poff = 0
    for ex in examples:
        if ex.depth != depth:
            raise ValueError("all examples in a batch must share a depth")
        parts["ctx"].append(ex.ctx)
        parts["parent"].append(np.where(ex.parent >= 0, ex.parent + off, -1))
        parts["levels"].append(ex.levels)
        parts["target"].append(ex.target)
        parts["corr"].append(np.where(ex.corr >= 0, ex.corr + poff, -1))
        parts["nbr"].append(np.where(ex.nbr >= 0, ex.nbr + poff, -1))
        parts["disp"].append(ex.disp)
        pparts["ctx"].append(ex.prev.ctx)
        pparts["parent"].append(np.where(ex.prev.parent >= 0, ex.prev.parent + poff, -1))
        pparts["levels"].append(ex.prev.levels)
        off += ex.num_symbols
        poff += ex.prev.num_nodes
    cat = {k: np.concatenate(v) for k, v in parts.items()}
    prev = PrevTreeTables(np.concatenate(pparts["ctx"]).reshape(-1, CONTEXT_DIM),
                          np.concatenate(pparts["parent"]).astype(np.int64),
                          np.concatenate(pparts["levels"]).astype(np.int64), None)
    return OccupancyBatch(cat["ctx"].reshape(-1, CONTEXT_DIM), cat["parent"].astype(np.int64),
                          cat["levels"].astype(np.int64), cat["target"].astype(np.int64),
                          cat["corr"].astype(np.int64), cat["nbr"].reshape(-1, examples[0].nbr.shape[1]),
                          cat["disp"].reshape(-1, examples[0].nbr.shape[1], 3), prev, depth)
