"""Corpus preparation, training loops and held-out evaluation.

Temporal context always comes from the *decoded* previous sweep (its
octree reconstruction), exactly as the codec sees it at decode time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..nn import Adam, TrainingError, backward, no_grad, softmax
from ..octree import ParsedOctree, SerializedOctree, build_octree, parse_occupancy_stream, reconstruct
from ..pointcloud import RegionOfInterest, Sweep, SweepStream
from ..temporal import align_previous, previous_octree
from .features import OccupancyExample, collate, occupancy_example
from .histogram import HistogramModel
from .intensity import IntensityExample, IntensityModel, collate_intensity, neighbor_tables
from .occupancy import OccupancyModel

LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class TrainSchedule:
    steps: int = 5000
    lr: float = 1e-4
    batch: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.batch < 1 or self.lr <= 0:
            raise ValueError("schedule needs steps >= 0, batch >= 1, lr > 0")


@dataclass
class TrainResult:
    losses: list = field(default_factory=list)  # bits per symbol, one per step
    seconds: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.losses)


@dataclass
class SweepRecord:
    """A sweep with its octree, decoded reconstruction and aligned predecessor."""

    original_points: int
    octree: SerializedOctree
    tree: Optional[ParsedOctree]
    decoded: Sweep
    prev_tree: Optional[ParsedOctree]
    prev_aligned: Optional[Sweep]


def stream_records(stream: SweepStream, D: int, roi: Optional[RegionOfInterest] = None) -> list[SweepRecord]:
    roi = roi or stream.roi
    out: list[SweepRecord] = []
    prev_decoded: Optional[Sweep] = None
    for s in stream:
        so = build_octree(s, roi, D)
        tree = parse_occupancy_stream(so.occupancy, D) if so.occupancy else None
        decoded = reconstruct(so, roi, s.timestamp, s.pose)
        aligned = align_previous(prev_decoded, s.pose)
        out.append(SweepRecord(len(s), so, tree, decoded, previous_octree(aligned, roi, D), aligned))
        prev_decoded = decoded
    return out


@dataclass
class Corpus:
    depth: int
    roi: RegionOfInterest
    records: list
    occupancy: list
    points: int

    def intensity_examples(self, k: int) -> list[IntensityExample]:
        out = []
        for r in self.records:
            if len(r.decoded) == 0:
                continue
            pp = r.prev_aligned.positions if r.prev_aligned is not None else np.zeros((0, 3))
            pi = r.prev_aligned.intensities if r.prev_aligned is not None else np.zeros(0, np.uint8)
            out.append(neighbor_tables(r.decoded.positions, pp, pi, k, self.roi, r.decoded.intensities))
        return out


def prepare_corpus(streams: Sequence[SweepStream], D: int, neighbors: bool = True) -> Corpus:
    records, examples, points = [], [], 0
    roi = streams[0].roi if streams else RegionOfInterest()
    for st in streams:
        for r in stream_records(st, D, st.roi):
            records.append(r)
            points += r.original_points
            if r.tree is not None:
                examples.append(occupancy_example(r.tree, r.prev_tree, with_neighbors=neighbors))
    return Corpus(D, roi, records, examples, points)


# ---------------------------------------------------------------------------


def _batches(n: int, batch: int, steps: int, seed: int):
    """Epoch-wise shuffled index batches, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    pos = 0
    for _ in range(steps):
        idx = []
        while len(idx) < min(batch, n):
            if pos == n:
                perm, pos = rng.permutation(n), 0
            idx.append(int(perm[pos]))
            pos += 1
        yield idx


def _train(model, examples, schedule: TrainSchedule, make_batch, progress=None) -> TrainResult:
    if not examples:
        raise ValueError("training corpus is empty")
    opt = Adam(model.params, lr=schedule.lr)
    result = TrainResult()
    t0 = time.perf_counter()
    for step, idx in enumerate(_batches(len(examples), schedule.batch, schedule.steps, schedule.seed)):
        batch = make_batch([examples[i] for i in idx])
        opt.zero_grad()
        loss, _ = model.loss(batch)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingError(f"training diverged at step {step}: loss {value}")
        backward(loss)
        try:
            opt.step()
        except TrainingError as e:
            raise TrainingError(f"training diverged at step {step}: {e}") from None
        result.losses.append(value / LN2)
        if progress is not None:
            progress(step, value / LN2)
    result.seconds = time.perf_counter() - t0
    return result


def train_occupancy(model: OccupancyModel, examples: list[OccupancyExample], schedule: TrainSchedule,
                    progress: Optional[Callable] = None) -> TrainResult:
    return _train(model, examples, schedule, collate, progress)


def train_intensity(model: IntensityModel, examples: list[IntensityExample], schedule: TrainSchedule,
                    progress: Optional[Callable] = None) -> TrainResult:
    if model.raw:
        return TrainResult()
    return _train(model, examples, schedule, collate_intensity, progress)


def fit_histogram(model: HistogramModel, corpus: Corpus) -> HistogramModel:
    return model.fit(r.tree for r in corpus.records if r.tree is not None)


# ---------------------------------------------------------------------------


def occupancy_bits(model, examples: list[OccupancyExample], chunk: int = 8) -> float:
    """Total cross-entropy in bits of the occupancy bytes of ``examples``."""
    total = 0.0
    if isinstance(model, HistogramModel):
        p = (model.counts + model.alpha) / (model.counts + model.alpha).sum(axis=1, keepdims=True)
        for ex in examples:
            total += float(-np.log2(p[ex.levels, ex.target]).sum())
        return total
    with no_grad():
        for i in range(0, len(examples), chunk):
            b = collate(examples[i : i + chunk])
            prob = softmax(model.logits(b).data)
            total += float(-np.log2(prob[np.arange(len(b.target)), b.target]).sum())
    return total


def intensity_bits(model: IntensityModel, examples: list[IntensityExample], chunk: int = 8) -> float:
    if model.raw:
        return 8.0 * sum(ex.num_points for ex in examples)
    total = 0.0
    with no_grad():
        for i in range(0, len(examples), chunk):
            b = collate_intensity(examples[i : i + chunk])
            prob = softmax(model.logits(b).data)
            total += float(-np.log2(prob[np.arange(len(b.target)), b.target]).sum())
    return total


def smoothed(values: Sequence[float], window: int = 100) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if len(v) < window:
        return v.copy() if len(v) == 0 else np.array([v.mean()])
    c = np.cumsum(np.r_[0.0, v])
    return (c[window:] - c[:-window]) / window
