"""Exact, deterministic k-nearest-neighbor queries.

Encoder and decoder must derive identical contexts, so every result is
ordered by (squared distance, insertion index) with distances recomputed in
float64 here rather than taken from the tree. The KD-tree only proposes
candidates; ties on the k-th distance fall back to a radius query.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .cells import node_keys


def _sq_dist(points: np.ndarray, idx: np.ndarray, queries: np.ndarray) -> np.ndarray:
    d = points[idx] - queries[:, None, :]
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


def _row_lexsort(ids: np.ndarray, d2: np.ndarray) -> np.ndarray:
    """Per-row argsort by (d2, id)."""
    m, p = ids.shape
    rows = np.repeat(np.arange(m), p)
    flat = np.lexsort((ids.ravel(), d2.ravel(), rows))
    return flat.reshape(m, p) - (np.arange(m) * p)[:, None]


class SpatialIndex:
    """Exact k-NN over a fixed point set; ties broken by lowest insertion index."""

    def __init__(self, points):
        self.points = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self):
        return len(self.points)

    def query(self, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Batched query.

        Returns ``(ids, sq_dists)`` of shape (m, min(k, n)), each row sorted by
        (distance, id).
        """
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        n = len(self.points)
        kk = min(k, n)
        m = len(queries)
        if kk == 0 or m == 0:
            return np.zeros((m, kk), dtype=np.int64), np.zeros((m, kk))
        probe = kk + 1 if n > kk else kk
        cand, d2 = self._sorted_candidates(queries, probe)
        ids, dist = cand[:, :kk].copy(), d2[:, :kk].copy()
        if probe > kk:
            suspect = np.flatnonzero(d2[:, kk] <= d2[:, kk - 1] * (1 + 1e-9) + 1e-300)
            if len(suspect):
                self._resolve_ties(queries, kk, suspect, ids, dist)
        return ids, dist

    def _resolve_ties(self, queries, kk, rows, ids, dist):
        """Re-rank rows whose k-th distance may be shared by unreturned points."""
        n = len(self.points)
        wide = min(n, 4 * kk + 32)
        if wide > kk + 1:
            sub_ids, sub_d2 = self._sorted_candidates(queries[rows], wide)
            if wide < n:
                ok = sub_d2[:, wide - 1] > sub_d2[:, kk - 1] * (1 + 1e-9) + 1e-300
            else:
                ok = np.ones(len(rows), dtype=bool)
            ids[rows[ok]] = sub_ids[ok, :kk]
            dist[rows[ok]] = sub_d2[ok, :kk]
            rows = rows[~ok]
        for r in rows:
            kth = dist[r, kk - 1]
            radius = np.sqrt(kth) * (1 + 1e-6) + 1e-12
            pool = np.asarray(self._tree.query_ball_point(queries[r], radius), dtype=np.int64)
            pd2 = _sq_dist(self.points, pool[None, :], queries[r : r + 1])[0]
            o = np.lexsort((pool, pd2))[:kk]
            ids[r], dist[r] = pool[o], pd2[o]

    def _sorted_candidates(self, queries, probe):
        m = len(queries)
        _, cand = self._tree.query(queries, k=probe)
        cand = np.asarray(cand, dtype=np.int64).reshape(m, probe)
        d2 = _sq_dist(self.points, cand, queries)
        order = _row_lexsort(cand, d2)
        return np.take_along_axis(cand, order, axis=1), np.take_along_axis(d2, order, axis=1)

    def knn(self, q, k: int) -> list[tuple[int, np.ndarray]]:
        ids, _ = self.query(np.asarray(q, dtype=np.float64)[None, :], k)
        return [(int(i), self.points[i]) for i in ids[0]]


def knn(index: SpatialIndex, q, k: int) -> list[tuple[int, np.ndarray]]:
    return index.knn(q, k)


def brute_force_knn(points, q, k: int) -> list[int]:
    """O(n) reference scan used by tests."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    q = np.asarray(q, dtype=np.float64)
    d2 = [((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2) + (p[2] - q[2]) ** 2 for p in pts]
    return sorted(range(len(pts)), key=lambda i: (d2[i], i))[:k]


class NodeLookup:
    """(level, cell) -> node index table over a parsed octree."""

    def __init__(self, levels: np.ndarray, cells: np.ndarray):
        keys = node_keys(levels, cells)
        self._order = np.argsort(keys, kind="stable")
        self._keys = keys[self._order]

    def find(self, levels, cells) -> np.ndarray:
        """Node index per query, -1 where no node exists."""
        q = node_keys(np.asarray(levels), np.asarray(cells).reshape(-1, 3))
        if len(self._keys) == 0:
            return np.full(len(q), -1, dtype=np.int64)
        pos = np.searchsorted(self._keys, q)
        pos = np.minimum(pos, len(self._keys) - 1)
        hit = self._keys[pos] == q
        return np.where(hit, self._order[pos], -1)


def corresponding_node(prev_octree, level: int, cell) -> Optional[int]:
    """Occupancy byte of the previous octree's node at (level, cell), or None.

    ``prev_octree`` is a parsed octree already expressed in the current sensor
    frame. Leaf nodes carry byte 0.
    """
    if prev_octree is None or prev_octree.num_nodes == 0:
        return None
    idx = prev_octree.lookup.find(np.array([level]), np.asarray(cell).reshape(1, 3))[0]
    if idx < 0:
        return None
    return int(max(prev_octree.bytes[idx], 0))
