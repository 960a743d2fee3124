"""Intensity models conditioned on the decoded previous sweep.

Per-neighbor feature row (``NEIGHBOR_DIM`` entries): intensity/255, the 8
intensity bits, neighbor position normalized by the ROI, delta from the
current point to the neighbor in meters, and the distance. ``MLP1`` sees
only the nearest neighbor and drops the position; ``CC`` runs a shared trunk
over 5 neighbors and fuses them with a continuous convolution.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..neighbors import SpatialIndex
from ..nn import ContinuousConv, Linear, Mlp, Tensor, no_grad, softmax, softmax_cross_entropy, take_rows
from ..pointcloud import RegionOfInterest
from .features import byte_bits

VARIANTS = ("Passthrough", "MLP1", "CC")
NEIGHBOR_DIM = 16
MLP1_DIM = 13


@dataclass(frozen=True)
class IntensityConfig:
    variant: str = "CC"
    hidden: int = 128
    k: int = 5
    kernel_hidden: tuple = (16, 32)
    head_gain: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown intensity variant {self.variant!r}; choose from {VARIANTS}")
        object.__setattr__(self, "kernel_hidden", tuple(self.kernel_hidden))

    @property
    def neighbors(self) -> int:
        return {"Passthrough": 0, "MLP1": 1, "CC": self.k}[self.variant]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel_hidden"] = list(self.kernel_hidden)
        return d


@dataclass
class IntensityExample:
    """Neighbor tables for one sweep; ``feat`` rows are valid neighbors only."""

    feat: np.ndarray    # (r, NEIGHBOR_DIM)
    ids: np.ndarray     # (n, k) row into feat, -1 when missing
    disp: np.ndarray    # (n, k, 3) neighbor minus current, meters
    target: np.ndarray  # (n,)

    @property
    def num_points(self) -> int:
        return len(self.ids)


def neighbor_tables(positions, prev_positions, prev_intensities, k: int, roi: RegionOfInterest,
                    target=None) -> IntensityExample:
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = len(pos)
    t = np.zeros(n, np.int64) if target is None else np.asarray(target, dtype=np.int64)
    pp = np.asarray(prev_positions, dtype=np.float64).reshape(-1, 3)
    if k == 0 or len(pp) == 0 or n == 0:
        return IntensityExample(np.zeros((0, NEIGHBOR_DIM)), np.full((n, k), -1, np.int64), np.zeros((n, k, 3)), t)
    nid, d2 = SpatialIndex(pp).query(pos, k)
    kk = nid.shape[1]
    delta = pp[nid] - pos[:, None, :]
    inten = np.asarray(prev_intensities, dtype=np.int64)[nid].ravel()
    feat = np.empty((n * kk, NEIGHBOR_DIM))
    feat[:, 0] = inten / 255.0
    feat[:, 1:9] = byte_bits(inten)
    feat[:, 9:12] = ((pp[nid] - roi.center) / roi.side).reshape(-1, 3)
    feat[:, 12:15] = delta.reshape(-1, 3)
    feat[:, 15] = np.sqrt(d2).ravel()
    ids = np.full((n, k), -1, np.int64)
    ids[:, :kk] = np.arange(n * kk).reshape(n, kk)
    disp = np.zeros((n, k, 3))
    disp[:, :kk] = delta
    return IntensityExample(feat, ids, disp, t)


def collate_intensity(examples: list[IntensityExample]) -> IntensityExample:
    feats, ids, disps, targets = [], [], [], []
    off = 0
    for ex in examples:
        feats.append(ex.feat)
        ids.append(np.where(ex.ids >= 0, ex.ids + off, -1))
        disps.append(ex.disp)
        targets.append(ex.target)
        off += len(ex.feat)
    k = examples[0].ids.shape[1]
    return IntensityExample(np.concatenate(feats).reshape(-1, NEIGHBOR_DIM), np.concatenate(ids).reshape(-1, k),
                            np.concatenate(disps).reshape(-1, k, 3), np.concatenate(targets).astype(np.int64))


class IntensityModel:
    kind = "intensity"

    def __init__(self, cfg: IntensityConfig = IntensityConfig()):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        H = cfg.hidden
        self.trunk = self.conv = self.head = None
        if cfg.variant == "MLP1":
            self.trunk = Mlp((MLP1_DIM, H, H, H, H), rng, "int.trunk", self.params)
        elif cfg.variant == "CC":
            self.trunk = Mlp((NEIGHBOR_DIM, H, H, H, H), rng, "int.trunk", self.params)
            self.conv = ContinuousConv((3,) + cfg.kernel_hidden + (H,), rng, "int.conv", self.params)
        if cfg.variant != "Passthrough":
            self.head = Linear(H, 256, rng, "int.head", self.params, gain=cfg.head_gain)

    @property
    def variant(self) -> str:
        return self.cfg.variant

    @property
    def raw(self) -> bool:
        return self.cfg.variant == "Passthrough"

    def logits(self, ex: IntensityExample) -> Tensor:
        if self.raw:
            return Tensor(np.zeros((ex.num_points, 256)))
        if self.cfg.variant == "MLP1":
            rows = ex.feat[:, [0, 1, 2, 3, 4, 5, 6, 7, 8, 12, 13, 14, 15]]
            h = take_rows(self.trunk(rows), ex.ids[:, 0])
        else:
            h = self.conv(ex.disp, self.trunk(ex.feat), ex.ids)
        return self.head(h)

    def loss(self, ex: IntensityExample):
        return softmax_cross_entropy(self.logits(ex), ex.target)

    def tables(self, positions, prev_positions, prev_intensities, roi, target=None) -> IntensityExample:
        return neighbor_tables(positions, prev_positions, prev_intensities, self.cfg.neighbors, roi, target)

    def probs(self, positions, prev_positions, prev_intensities, roi: RegionOfInterest) -> np.ndarray:
        ex = self.tables(positions, prev_positions, prev_intensities, roi)
        if self.raw:
            return np.full((ex.num_points, 256), 1.0 / 256)
        with no_grad():
            return softmax(self.logits(ex).data)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, tensors) -> None:
        if set(tensors) != set(self.params):
            raise ValueError("intensity checkpoint does not match the model layout")
        for k, p in self.params.items():
            if tensors[k].shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}")
            p.data = np.array(tensors[k], dtype=np.float64)

    def metadata(self) -> dict:
        return {"kind": self.kind, "variant": self.variant, "config": self.cfg.to_dict()}
