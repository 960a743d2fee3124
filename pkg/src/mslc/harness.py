"""Evaluation harness: rate-distortion sweeps, ablations and the leaf-offset probe."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .coder import decode_stream, encode_stream
from .compressors import get_compressor
from .entropy_models import ModelBundle
from .entropy_models.histogram import HistogramModel
from .entropy_models.intensity import IntensityConfig, IntensityModel
from .entropy_models.occupancy import OccupancyConfig, OccupancyModel
from .entropy_models.training import (
    Corpus,
    TrainResult,
    TrainSchedule,
    fit_histogram,
    intensity_bits,
    occupancy_bits,
    prepare_corpus,
    train_intensity,
    train_occupancy,
)
from .metrics import MetricConfig, bitrate, chamfer_sym, f1, psnr_d2
from .octree import build_octree, leaf_offset_compressibility_probe
from .pointcloud import SceneParams, SweepStream, generate_synthetic_stream

log = logging.getLogger(__name__)


def synthetic_corpus(first_seed: int, n_streams: int, n_sweeps: int,
                     params: SceneParams = SceneParams()) -> list[SweepStream]:
    return [generate_synthetic_stream(first_seed + i, n_sweeps, params) for i in range(n_streams)]


# ---------------------------------------------------------------------------
# Training a bundle


@dataclass
class TrainedBundle:
    bundle: ModelBundle
    occupancy_result: TrainResult
    intensity_result: TrainResult


def train_bundle(corpus: Corpus, occupancy: str, intensity: str, occ_schedule: TrainSchedule,
                 int_schedule: TrainSchedule, seed: int = 0,
                 progress: Optional[Callable] = None) -> TrainedBundle:
    D = corpus.depth
    if occupancy == "Histogram":
        occ_model = fit_histogram(HistogramModel(D), corpus)
        occ_res = TrainResult()
    else:
        occ_model = OccupancyModel(OccupancyConfig(variant=occupancy, depth=D, seed=seed))
        occ_res = train_occupancy(occ_model, corpus.occupancy, occ_schedule, progress)
    int_model = IntensityModel(IntensityConfig(variant=intensity, seed=seed))
    int_res = train_intensity(int_model, corpus.intensity_examples(int_model.cfg.neighbors), int_schedule)
    info = {
        "occupancy_steps": occ_res.steps,
        "intensity_steps": int_res.steps,
        "seed": seed,
        "lr": occ_schedule.lr,
        "batch": occ_schedule.batch,
        "corpus_hash": corpus_hash(corpus),
    }
    return TrainedBundle(ModelBundle(occ_model, int_model, info), occ_res, int_res)


def corpus_hash(corpus: Corpus) -> str:
    h = hashlib.sha256()
    for r in corpus.records:
        h.update(r.octree.occupancy)
        h.update(r.octree.leaf_intensities.tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Codec evaluation


@dataclass
class RDRow:
    depth: int
    bpp_total: float
    bpp_spatial: float
    f1: float
    chamfer: float
    psnr: float


def evaluate_codec(bundle: ModelBundle, streams: Sequence[SweepStream], cfg: MetricConfig = MetricConfig(),
                   verify: bool = True) -> RDRow:
    """Encode, decode and score every sweep; metrics are averaged over sweeps."""
    points = 0
    frames = []
    f1s, chs, ps = [], [], []
    for st in streams:
        container, _ = encode_stream(st, bundle)
        frames += container.frames
        decoded = decode_stream(container, bundle) if verify else None
        for t, s in enumerate(st):
            points += len(s)
            d = decoded[t]
            f1s.append(f1(s, d, cfg))
            if len(s) and len(d):
                chs.append(chamfer_sym(s, d))
                ps.append(psnr_d2(s, d, cfg))
    br = bitrate(frames, points)
    return RDRow(bundle.depth, br.total, br.spatial, float(np.mean(f1s)), float(np.mean(chs)), float(np.mean(ps)))


def rd_sweep(bundles: dict, streams: Sequence[SweepStream], cfg: MetricConfig = MetricConfig()) -> list[RDRow]:
    return [evaluate_codec(bundles[D], streams, cfg) for D in sorted(bundles)]


def is_monotone(rows: Sequence[RDRow]) -> dict:
    rows = sorted(rows, key=lambda r: r.depth)
    f = [r.f1 for r in rows]
    p = [r.psnr for r in rows]
    c = [r.chamfer for r in rows]
    return {
        "f1": all(b >= a for a, b in zip(f, f[1:])),
        "psnr": all(b >= a for a, b in zip(p, p[1:])),
        "chamfer": all(b <= a for a, b in zip(c, c[1:])),
    }


# ---------------------------------------------------------------------------
# Ablations


@dataclass
class OccupancyAblationRow:
    depth: int
    variant: str
    bpp: float
    bits_per_symbol: float
    train_seconds: float


@dataclass
class IntensityAblationRow:
    depth: int
    method: str
    bpp: float


def occupancy_bpp(model, corpus: Corpus) -> tuple[float, float]:
    bits = occupancy_bits(model, corpus.occupancy)
    symbols = sum(e.num_symbols for e in corpus.occupancy)
    return bits / corpus.points, bits / max(symbols, 1)


def generic_intensity_bits(corpus: Corpus, compressor: str = "zlib") -> float:
    """Bits a generic byte compressor spends on each sweep's intensity bytes."""
    fn = get_compressor(compressor)
    return float(sum(8 * len(fn(r.octree.leaf_intensities.tobytes())) for r in corpus.records))


def intensity_ablation(train: Corpus, test: Corpus, schedule: TrainSchedule, seed: int = 0,
                       compressor: str = "zlib", variants=("MLP1", "CC")) -> list[IntensityAblationRow]:
    rows = [IntensityAblationRow(test.depth, compressor, generic_intensity_bits(test, compressor) / test.points)]
    for v in variants:
        m = IntensityModel(IntensityConfig(variant=v, seed=seed))
        train_intensity(m, train.intensity_examples(m.cfg.neighbors), schedule)
        bits = intensity_bits(m, test.intensity_examples(m.cfg.neighbors))
        rows.append(IntensityAblationRow(test.depth, v, bits / test.points))
    return rows


def occupancy_ablation(train: Corpus, test: Corpus, schedule: TrainSchedule, seed: int = 0,
                       variants=("O", "OT", "OTB", "OTBCC"), with_histogram: bool = True,
                       progress: Optional[Callable] = None) -> list[OccupancyAblationRow]:
    rows = []
    if with_histogram:
        h = fit_histogram(HistogramModel(train.depth), train)
        rows.append(OccupancyAblationRow(test.depth, "Histogram", *occupancy_bpp(h, test), 0.0))
    for v in variants:
        m = OccupancyModel(OccupancyConfig(variant=v, depth=train.depth, seed=seed))
        res = train_occupancy(m, train.occupancy, schedule, progress)
        rows.append(OccupancyAblationRow(test.depth, v, *occupancy_bpp(m, test), res.seconds))
    return rows


# ---------------------------------------------------------------------------
# Leaf offsets


@dataclass
class LeafProbeRow:
    depth: int
    compressor: str
    raw_bytes: int
    compressed_bytes: int

    @property
    def ratio(self) -> float:
        return self.compressed_bytes / self.raw_bytes if self.raw_bytes else 1.0


def leaf_offset_probe(streams: Sequence[SweepStream], D: int,
                      compressors=("zlib", "lzma", "bz2")) -> list[LeafProbeRow]:
    """Per-compressor totals over every sweep's leaf-offset buffer."""
    buffers = [build_octree(s, st.roi, D).offset_bytes() for st in streams for s in st]
    rows = []
    for name in compressors:
        probe = leaf_offset_compressibility_probe(buffers, name)
        rows.append(LeafProbeRow(D, name, sum(r.raw_bytes for r in probe), sum(r.compressed_bytes for r in probe)))
    return rows


# ---------------------------------------------------------------------------
# Result cache


def source_fingerprint() -> str:
    """Hash of the package sources, so cached results expire when code changes."""
    h = hashlib.sha256()
    root = Path(__file__).parent
    for p in sorted(root.rglob("*.py")):
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def cache_key(**params) -> str:
    blob = json.dumps(params, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob + source_fingerprint().encode()).hexdigest()[:20]


def cached_rows(cache_dir, key: str, compute: Callable[[], list], row_type) -> list:
    """Load dataclass rows from ``cache_dir/key.json`` or compute and store them."""
    if cache_dir is None:
        return compute()
    path = Path(cache_dir) / f"{key}.json"
    if path.exists():
        return [row_type(**r) for r in json.loads(path.read_text())]
    rows = compute()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([asdict(r) for r in rows], indent=1))
    return rows
