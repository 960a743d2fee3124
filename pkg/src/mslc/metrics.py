"""Reconstruction quality (F1, symmetric Chamfer, point-to-plane PSNR) and bitrate."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .neighbors import SpatialIndex
from .pointcloud import Sweep, SweepStream

log = logging.getLogger(__name__)

PSNR_CAP_DB = 999.0
PEAK_URBANCITY = 98.69
PEAK_SEMANTICKITTI = 59.70
RAW_BITS_STORED = 128  # four float32 fields per point, as in a KITTI record
RAW_BITS_ORACLE = 104  # 3 x 32-bit coordinates plus an 8-bit intensity


@dataclass(frozen=True)
class MetricConfig:
    tau_geo: float = 0.10
    tau_int: int = 0
    peak: float = PEAK_SEMANTICKITTI
    normal_k: int = 12

    def __post_init__(self):
        if self.tau_geo < 0 or self.tau_int < 0:
            raise ValueError("thresholds must be non-negative")
        if not self.peak > 0:
            raise ValueError("PSNR peak constant must be positive")


def _xyz(c) -> np.ndarray:
    return np.asarray(c.positions if isinstance(c, Sweep) else c, dtype=np.float64).reshape(-1, 3)


def _nearest(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest ``dst`` index (lowest index on ties) and squared distance per ``src`` row."""
    ids, d2 = SpatialIndex(dst).query(src, 1)
    return ids[:, 0], d2[:, 0]


# ---------------------------------------------------------------------------
# F1


def f1_counts(P: Sweep, Q: Sweep, cfg: MetricConfig = MetricConfig()) -> tuple[int, int, int]:
    """(TP, FP, FN) under existence matching.

    A reconstructed point is a true positive if some original point lies
    within ``tau_geo`` and has intensity within ``tau_int``. An original
    point is a false negative if no reconstructed point matches it that way.
    """
    p, q = _xyz(P), _xyz(Q)
    if len(p) == 0 or len(q) == 0:
        return 0, len(q), len(p)
    tau2 = cfg.tau_geo * cfg.tau_geo
    pairs = cKDTree(q).query_ball_tree(cKDTree(p), r=cfg.tau_geo * (1 + 1e-9) + 1e-12)
    qi = np.repeat(np.arange(len(q)), [len(x) for x in pairs])
    pj = np.fromiter((j for x in pairs for j in x), dtype=np.int64, count=len(qi))
    d = q[qi] - p[pj]
    d2 = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]
    di = np.abs(np.asarray(Q.intensities, np.int64)[qi] - np.asarray(P.intensities, np.int64)[pj])
    ok = (d2 <= tau2) & (di <= cfg.tau_int)
    q_hit = np.zeros(len(q), dtype=bool)
    p_hit = np.zeros(len(p), dtype=bool)
    q_hit[qi[ok]] = True
    p_hit[pj[ok]] = True
    tp = int(q_hit.sum())
    return tp, len(q) - tp, int((~p_hit).sum())


def f1(P: Sweep, Q: Sweep, cfg: MetricConfig = MetricConfig()) -> float:
    if len(P) == 0 and len(Q) == 0:
        return 1.0
    tp, fp, fn = f1_counts(P, Q, cfg)
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


# ---------------------------------------------------------------------------
# Chamfer


def chamfer_sym(P, Q) -> float:
    """max(mean NN distance P->Q, mean NN distance Q->P), in meters."""
    p, q = _xyz(P), _xyz(Q)
    if len(p) == 0 or len(q) == 0:
        raise ValueError("Chamfer distance is undefined for an empty cloud")
    _, a = _nearest(p, q)
    _, b = _nearest(q, p)
    return float(max(np.sqrt(a).mean(), np.sqrt(b).mean()))


# ---------------------------------------------------------------------------
# PSNR (point to plane)


def estimate_normals(points, k: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals by PCA over each point's k nearest neighbors (itself included).

    Neighborhoods break distance ties by lowest point index.

    Returns ``(normals, degenerate)``; a neighborhood is degenerate when it
    has fewer than 3 points or its two smallest covariance eigenvalues tie,
    in which case the normal is whatever ``eigh`` returns for the smallest.
    """
    p = _xyz(points)
    n = len(p)
    if n == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=bool)
    kk = min(k, n)
    idx, _ = SpatialIndex(p).query(p, kk)
    nb = p[idx]
    c = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", c, c) / kk
    w, v = np.linalg.eigh(cov)
    normals = v[:, :, 0]
    scale = np.maximum(w[:, -1], 1e-300)
    degenerate = (kk < 3) | ((w[:, 1] - w[:, 0]) <= 1e-12 * scale)
    return normals, degenerate


@dataclass
class PsnrResult:
    psnr: float
    mse: float
    degenerate_normals: int


def psnr_d2_report(P, Q, cfg: MetricConfig = MetricConfig()) -> PsnrResult:
    p, q = _xyz(P), _xyz(Q)
    if len(p) == 0 or len(q) == 0:
        raise ValueError("PSNR is undefined for an empty cloud")
    normals, degenerate = estimate_normals(p, cfg.normal_k)
    # reconstructed -> original, using the normal of the matched original point
    j, _ = _nearest(q, p)
    e1 = np.einsum("ij,ij->i", q - p[j], normals[j]) ** 2
    # original -> reconstructed, using each original point's own normal
    i, _ = _nearest(p, q)
    e2 = np.einsum("ij,ij->i", p - q[i], normals) ** 2
    mse = float(max(e1.mean(), e2.mean()))
    if degenerate.any():
        log.warning("%d degenerate normal neighborhoods", int(degenerate.sum()))
    if mse == 0.0:
        return PsnrResult(PSNR_CAP_DB, 0.0, int(degenerate.sum()))
    value = float(10.0 * np.log10(3.0 * cfg.peak ** 2 / mse))
    return PsnrResult(min(value, PSNR_CAP_DB), mse, int(degenerate.sum()))


def psnr_d2(P, Q, cfg: MetricConfig = MetricConfig()) -> float:
    return psnr_d2_report(P, Q, cfg).psnr


# ---------------------------------------------------------------------------


def peak_constant(dataset: Iterable) -> float:
    """Largest nearest-neighbor distance over every point of every sweep."""
    sweeps = list(dataset.sweeps if isinstance(dataset, SweepStream) else dataset)
    best = 0.0
    for t, s in enumerate(sweeps):
        p = _xyz(s)
        if len(p) < 2:
            log.warning("sweep %d has fewer than 2 points; skipped", t)
            continue
        _, idx = cKDTree(p).query(p, k=2)
        other = np.where(idx[:, 0] == np.arange(len(p)), idx[:, 1], idx[:, 0])
        d = p[other] - p
        best = max(best, float(np.sqrt((d * d).sum(axis=1)).max()))
    return best


# ---------------------------------------------------------------------------
# Bitrate


@dataclass(frozen=True)
class Bitrate:
    total: float
    spatial: float
    sections: dict

    @staticmethod
    def raw(convention: str = "stored") -> float:
        return {"stored": float(RAW_BITS_STORED), "oracle": float(RAW_BITS_ORACLE)}[convention]


def bitrate(frames, point_count: int) -> Bitrate:
    """Bits per original point over the frames' payloads.

    ``frames`` is a container or a list of frames. Model weights and the
    container header are not counted. ``spatial`` excludes the intensity
    section only.
    """
    if point_count <= 0:
        raise ValueError("bitrate is undefined for zero points")
    frames = getattr(frames, "frames", frames)
    sections: dict = {}
    framing = 0
    for f in frames:
        for name, size in f.section_sizes().items():
            sections[name] = sections.get(name, 0) + 8 * size
        framing += 8 * (4 + 4 * len(f.sections))
        for extra in f.sections[4:]:
            sections["other"] = sections.get("other", 0) + 8 * len(extra)
    sections["framing"] = framing
    total = sum(sections.values())
    spatial = total - sections.get("intensity", 0)
    return Bitrate(total / point_count, spatial / point_count, {k: v / point_count for k, v in sections.items()})


# ---------------------------------------------------------------------------
# Reports


@dataclass
class MetricRow:
    sweep: int
    depth: int
    bpp_total: float
    bpp_spatial: float
    f1: float
    chamfer: float
    psnr: float


def evaluate_sweep(original: Sweep, decoded: Sweep, cfg: MetricConfig = MetricConfig()) -> dict:
    return {
        "f1": f1(original, decoded, cfg),
        "chamfer": chamfer_sym(original, decoded) if len(original) and len(decoded) else float("nan"),
        "psnr": psnr_d2(original, decoded, cfg) if len(original) and len(decoded) else float("nan"),
    }


def write_csv(rows: Sequence, path) -> None:
    rows = list(rows)
    if not rows:
        Path(path).write_text("")
        return
    names = [f.name for f in fields(rows[0])]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
