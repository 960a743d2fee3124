"""Learned occupancy models: ancestral context plus optional temporal context.

Variants:

* ``O``: ancestral module only; the previous octree enters through the
  corresponding byte in each node's context row.
* ``OT``: adds a top-down pass over the previous octree; a node receives the
  top-down feature of the exactly matching previous node (zero if none).
* ``OTB``: adds a bottom-up deep-set pass after the top-down one; exact
  matching as in ``OT``.
* ``OTBCC``: replaces exact matching with a per-level continuous convolution
  over the k nearest previous nodes at the same level.

Two evaluation paths share the same layers. ``logits`` runs whole trees at
once for training; ``begin_sweep`` returns a state that produces one level at
a time, which is what the encoder and decoder use.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..nn import ContinuousConv, DeepSetAggregation, Mlp, Tensor, concat, no_grad, softmax, softmax_cross_entropy, take_rows
from ..octree import ParsedOctree
from .features import (
    CONTEXT_DIM,
    K_NEIGHBORS,
    LevelNeighbors,
    OccupancyBatch,
    context_features,
    corresponding_bytes,
    corresponding_indices,
    prev_tree_tables,
)

VARIANTS = ("O", "OT", "OTB", "OTBCC")


@dataclass(frozen=True)
class OccupancyConfig:
    variant: str = "OTBCC"
    depth: int = 12
    hidden: int = 128
    temporal_hidden: int = 64
    rounds: int = 4
    msg_dim: int = 32
    k: int = K_NEIGHBORS
    kernel_hidden: tuple = (16, 32)
    head_gain: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown occupancy variant {self.variant!r}; choose from {VARIANTS}")
        if not (1 <= self.depth <= 16):
            raise ValueError("depth must be in [1, 16]")
        object.__setattr__(self, "kernel_hidden", tuple(self.kernel_hidden))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel_hidden"] = list(self.kernel_hidden)
        return d


def _levels_partition(levels: np.ndarray):
    """Row ids grouped by level, plus the inverse permutation of their concatenation."""
    order = np.argsort(levels, kind="stable")
    top = int(levels.max()) + 1 if len(levels) else 0
    bounds = np.searchsorted(levels[order], np.arange(top + 1))
    groups = [order[bounds[l] : bounds[l + 1]] for l in range(top)]
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    return groups, inv


class OccupancyModel:
    kind = "occupancy"

    def __init__(self, cfg: OccupancyConfig = OccupancyConfig()):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        H, T, K = cfg.hidden, cfg.temporal_hidden, cfg.rounds
        p = self.params
        self.anc_init = Mlp((CONTEXT_DIM, H, H, H, H), rng, "anc.init", p)
        self.anc_rounds = [Mlp((2 * H, H, H), rng, f"anc.round{k + 1}", p) for k in range(K)]
        self.tmp_init = self.tmp_rounds = self.bottom_up = None
        self.st_conv: dict[int, ContinuousConv] = {}
        self.st_mlp: dict[int, Mlp] = {}
        if self.uses_topdown:
            self.tmp_init = Mlp((CONTEXT_DIM, T, T, T, T), rng, "tmp.init", p)
            self.tmp_rounds = [Mlp((2 * T, T, T), rng, f"tmp.round{k + 1}", p) for k in range(K)]
        if self.uses_bottomup:
            # zero-initialized output layer: g starts equal to the top-down u
            self.bottom_up = DeepSetAggregation(T, T, cfg.msg_dim, rng, "tmp.bottomup", p, out_gain=0.0)
        if self.uses_cc:
            for level in range(1, cfg.depth):
                self.st_conv[level] = ContinuousConv((3,) + cfg.kernel_hidden + (T,), rng, f"st{level}.conv", p)
                self.st_mlp[level] = Mlp((T, T, T), rng, f"st{level}.mlp", p)
        head_in = H + (T if self.uses_topdown else 0)
        self.header = Mlp((head_in, H, H, H, 256), rng, "head", p, out_gain=cfg.head_gain)

    # -- structure -------------------------------------------------------
    @property
    def variant(self) -> str:
        return self.cfg.variant

    @property
    def depth(self) -> int:
        return self.cfg.depth

    @property
    def uses_topdown(self) -> bool:
        return self.cfg.variant != "O"

    @property
    def uses_bottomup(self) -> bool:
        return self.cfg.variant in ("OTB", "OTBCC")

    @property
    def uses_cc(self) -> bool:
        return self.cfg.variant == "OTBCC"

    @property
    def needs_neighbors(self) -> bool:
        return self.uses_cc

    # -- whole-tree passes ----------------------------------------------
    @staticmethod
    def _topdown(init: Mlp, rounds, ctx, parent) -> Tensor:
        h = init(ctx)
        for r in rounds:
            h = r(concat([h, take_rows(h, parent)], axis=1))
        return h

    def _bottom_up(self, u: Tensor, parent: np.ndarray, levels: np.ndarray) -> Tensor:
        groups, inv = _levels_partition(levels)
        outs: list[Optional[Tensor]] = [None] * len(groups)
        below: Optional[Tensor] = None
        below_rows = np.zeros(0, np.int64)
        for l in range(len(groups) - 1, -1, -1):
            rows = groups[l]
            local = np.searchsorted(rows, parent[below_rows]) if len(below_rows) else np.zeros(0, np.int64)
            g = self.bottom_up(take_rows(u, rows), below, local)
            outs[l] = g
            below, below_rows = g, rows
        return take_rows(concat(outs, axis=0), inv)

    def prev_features(self, prev_ctx, prev_parent, prev_levels) -> Optional[Tensor]:
        """Per-node temporal features of the previous octree (u or g)."""
        if not self.uses_topdown or len(prev_levels) == 0:
            return None
        u = self._topdown(self.tmp_init, self.tmp_rounds, prev_ctx, prev_parent)
        if self.uses_bottomup:
            return self._bottom_up(u, prev_parent, prev_levels)
        return u

    def _st_level(self, level: int, nbr: np.ndarray, disp: np.ndarray, feats: Optional[Tensor]) -> Tensor:
        n = len(nbr)
        T = self.cfg.temporal_hidden
        if level == 0 or feats is None or level not in self.st_conv:
            return Tensor(np.zeros((n, T)))
        return self.st_mlp[level](self.st_conv[level](disp, feats, nbr))

    def _temporal_rows(self, levels, corr, nbr, disp, feats: Optional[Tensor]) -> Tensor:
        n = len(levels)
        T = self.cfg.temporal_hidden
        if feats is None:
            return Tensor(np.zeros((n, T)))
        if not self.uses_cc:
            return take_rows(feats, corr)
        groups, inv = _levels_partition(levels)
        parts = [self._st_level(l, nbr[rows], disp[rows], feats) for l, rows in enumerate(groups)]
        return take_rows(concat(parts, axis=0), inv)

    def logits(self, batch: OccupancyBatch) -> Tensor:
        h = self._topdown(self.anc_init, self.anc_rounds, batch.ctx, batch.parent)
        if not self.uses_topdown:
            return self.header(h)
        feats = self.prev_features(batch.prev.ctx, batch.prev.parent, batch.prev.levels)
        t = self._temporal_rows(batch.levels, batch.corr, batch.nbr, batch.disp, feats)
        return self.header(concat([h, t], axis=1))

    def loss(self, batch: OccupancyBatch):
        """Mean cross-entropy in nats and the predicted distributions."""
        return softmax_cross_entropy(self.logits(batch), batch.target)

    # -- level-by-level coding path -------------------------------------
    def begin_sweep(self, prev: Optional[ParsedOctree]) -> "OccupancyState":
        return OccupancyState(self, prev)

    # -- persistence ------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, tensors: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(tensors)
        extra = set(tensors) - set(self.params)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]}")
        for k, p in self.params.items():
            if tensors[k].shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}: {tensors[k].shape} vs {p.data.shape}")
            p.data = np.array(tensors[k], dtype=np.float64)

    def metadata(self) -> dict:
        return {"kind": self.kind, "variant": self.variant, "config": self.cfg.to_dict()}


class OccupancyState:
    """Per-sweep inference state; call ``level_probs`` for levels 0, 1, ... in order."""

    def __init__(self, model: OccupancyModel, prev: Optional[ParsedOctree]):
        self.model = model
        self.prev = prev if prev is not None and prev.num_nodes else None
        self._rounds: Optional[list[np.ndarray]] = None
        self._next_level = 0
        self._feats: Optional[Tensor] = None
        self._neighbors = LevelNeighbors(self.prev, model.cfg.k) if model.uses_cc else None
        if self.prev is not None and model.uses_topdown:
            tables = prev_tree_tables(self.prev)
            with no_grad():
                f = model.prev_features(tables.ctx, tables.parent, tables.levels)
            self._feats = Tensor(f.data) if f is not None else None

    def level_probs(self, level: int, cells, octants, parent_local, parent_bytes) -> np.ndarray:
        if level != self._next_level:
            raise ValueError(f"levels must be requested in order; expected {self._next_level}, got {level}")
        m = self.model
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
        n = len(cells)
        levels = np.full(n, level, dtype=np.int64)
        corr = corresponding_indices(self.prev, levels, cells)
        ctx = context_features(levels, cells, octants, parent_bytes, corresponding_bytes(self.prev, corr))
        pl = np.asarray(parent_local, dtype=np.int64)
        with no_grad():
            h = m.anc_init(ctx)
            rounds = [h.data]
            for k, r in enumerate(m.anc_rounds):
                hp = self._rounds[k][pl] if self._rounds is not None else np.zeros_like(h.data)
                h = r(concat([h, Tensor(hp)], axis=1))
                rounds.append(h.data)
            if m.uses_topdown:
                if m.uses_cc:
                    if self._neighbors is not None and level >= 1:
                        nbr, disp = self._neighbors.query(level, cells)
                    else:
                        nbr, disp = np.full((n, m.cfg.k), -1, np.int64), np.zeros((n, m.cfg.k, 3))
                    t = m._st_level(level, nbr, disp, self._feats)
                elif self._feats is not None:
                    t = take_rows(self._feats, corr)
                else:
                    t = Tensor(np.zeros((n, m.cfg.temporal_hidden)))
                h = concat([h, t], axis=1)
            logits = m.header(h).data
        self._rounds = rounds[:-1]
        self._next_level += 1
        return softmax(logits)
