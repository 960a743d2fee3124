"""Sweep and stream encode/decode on top of the entropy models and range coder.

Encoder and decoder walk the octree through the same ``OctreeExpander`` and
ask the occupancy model for one level at a time, so each side feeds the
model identical inputs in identical batches. Temporal context always comes
from the decoded previous sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..cells import cell_centers
from ..entropy_models.bundle import ModelBundle
from ..errors import CorruptStreamError
from ..octree import (
    OctreeExpander,
    ParsedOctree,
    SerializedOctree,
    build_octree,
    leaf_cells,
    pack_leaf_offsets,
    unpack_leaf_offsets,
)
from ..pointcloud import RegionOfInterest, Sweep, SweepStream
from ..temporal import align_previous, previous_octree
from .cdf import cdf_bits, quantize_probs
from .container import Container, Frame, FrameMeta
from .range_coder import RangeDecoder, RangeEncoder


class ModelMismatchError(ValueError):
    """Container was written with different model weights or depth."""


@dataclass
class SweepStats:
    """Sizes and ideal code lengths for one encoded sweep, in bits."""

    original_points: int
    decoded_points: int
    section_bits: dict = field(default_factory=dict)
    occupancy_xent_bits: float = 0.0
    intensity_xent_bits: float = 0.0
    occupancy_symbols: int = 0


def _walk_occupancy(models: ModelBundle, prev_tree: Optional[ParsedOctree], D: int,
                    next_symbols: Callable[[np.ndarray], np.ndarray]) -> ParsedOctree:
    ex = OctreeExpander(D)
    state = models.occupancy.begin_sweep(prev_tree)
    prev_start = 0
    while not ex.done:
        level = ex.level
        lv = ex.pending()
        if level == 0:
            local = np.zeros(1, np.int64)
            pbytes = np.zeros(1, np.int64)
        else:
            local = lv.parent - prev_start
            pbytes = ex.level_bytes[-1].astype(np.int64)[local]
            prev_start += len(ex.levels[level - 1].cells)
        probs = state.level_probs(level, lv.cells, lv.octant, local, pbytes)
        ex.push(next_symbols(quantize_probs(probs)))
    return ex.finish()


def _prev_context(prev_decoded: Optional[Sweep], pose, roi: RegionOfInterest, D: int,
                  prev_tree: Optional[ParsedOctree]):
    """Aligned previous sweep and its octree; reuses ``prev_tree`` when no motion is involved."""
    aligned = align_previous(prev_decoded, pose)
    if aligned is None or len(aligned) == 0:
        return None, None
    if prev_tree is not None and aligned is prev_decoded:
        return aligned, prev_tree
    return aligned, previous_octree(aligned, roi, D)


def _intensity_probs(models: ModelBundle, positions: np.ndarray, aligned: Optional[Sweep], roi) -> np.ndarray:
    pp = aligned.positions if aligned is not None else np.zeros((0, 3))
    pi = aligned.intensities if aligned is not None else np.zeros(0, np.uint8)
    return models.intensity.probs(positions, pp, pi, roi)


@dataclass
class EncodedSweep:
    frame: Frame
    decoded: Sweep
    tree: Optional[ParsedOctree]
    stats: SweepStats


def encode_sweep(sweep: Sweep, prev_decoded: Optional[Sweep], models: ModelBundle, D: int,
                 roi: RegionOfInterest, prev_tree: Optional[ParsedOctree] = None) -> EncodedSweep:
    """Encode one sweep given the decoder-side reconstruction of its predecessor."""
    if models.depth != D:
        raise ModelMismatchError(f"model trained for depth {models.depth}, asked to code depth {D}")
    so: SerializedOctree = build_octree(sweep, roi, D)
    aligned, ptree = _prev_context(prev_decoded, sweep.pose, roi, D, prev_tree)
    stats = SweepStats(len(sweep), so.num_leaves)

    occ = b""
    tree = None
    if so.occupancy:
        symbols = np.frombuffer(so.occupancy, dtype=np.uint8).astype(np.int64)
        enc = RangeEncoder()
        pos = [0]

        def feed(cdfs):
            n = len(cdfs)
            s = symbols[pos[0] : pos[0] + n]
            rows = np.arange(n)
            cum = cdfs[rows, s]
            enc.encode_many(cum.tolist(), (cdfs[rows, s + 1] - cum).tolist())
            stats.occupancy_xent_bits += cdf_bits(cdfs, s)
            pos[0] += n
            return s

        tree = _walk_occupancy(models, ptree, D, feed)
        occ = enc.finish()
        stats.occupancy_symbols = pos[0]

    offsets = pack_leaf_offsets(so.leaf_levels, so.leaf_offsets, D)
    positions = cell_centers(leaf_cells(tree, so.leaf_offsets), D, roi) if tree is not None else np.zeros((0, 3))
    if models.intensity.raw:
        inten = so.leaf_intensities.tobytes()
        stats.intensity_xent_bits = 8.0 * so.num_leaves
    elif so.num_leaves:
        cdfs = quantize_probs(_intensity_probs(models, positions, aligned, roi))
        s = so.leaf_intensities.astype(np.int64)
        rows = np.arange(len(s))
        cum = cdfs[rows, s]
        enc = RangeEncoder()
        enc.encode_many(cum.tolist(), (cdfs[rows, s + 1] - cum).tolist())
        inten = enc.finish()
        stats.intensity_xent_bits = cdf_bits(cdfs, s)
    else:
        inten = b""
    meta = FrameMeta(len(sweep), sweep.pose).to_bytes()
    frame = Frame([occ, offsets, inten, meta])
    stats.section_bits = {k: 8 * v for k, v in frame.section_sizes().items()}
    decoded = Sweep(positions, so.leaf_intensities.copy(), sweep.timestamp, sweep.pose)
    return EncodedSweep(frame, decoded, tree, stats)


def decode_sweep(frame: Frame, prev_decoded: Optional[Sweep], models: ModelBundle, D: int,
                 roi: RegionOfInterest, timestamp: int = 0, prev_tree: Optional[ParsedOctree] = None,
                 return_tree: bool = False):
    if models.depth != D:
        raise ModelMismatchError(f"model trained for depth {models.depth}, asked to decode depth {D}")
    meta = frame.meta
    aligned, ptree = _prev_context(prev_decoded, meta.pose, roi, D, prev_tree)
    occ = frame.occupancy
    if not occ:
        out = Sweep(np.zeros((0, 3)), np.zeros(0, np.uint8), timestamp, meta.pose)
        return (out, None) if return_tree else out

    dec = RangeDecoder(occ)
    tree = _walk_occupancy(models, ptree, D, lambda cdfs: np.asarray(dec.decode_many(cdfs), dtype=np.int64))
    if not dec.exhausted:
        raise CorruptStreamError("trailing bytes in occupancy section", dec.pos)

    leaves = tree.leaf_indices
    levels = tree.levels[leaves]
    need = (int(np.sum(3 * (D - levels))) + 7) // 8
    if len(frame.leaf_offsets) != need:
        raise CorruptStreamError("leaf offset section has the wrong length", len(frame.leaf_offsets))
    offsets = unpack_leaf_offsets(frame.leaf_offsets, levels, D)
    positions = cell_centers(leaf_cells(tree, offsets), D, roi)
    n = len(positions)
    if models.intensity.raw:
        if len(frame.intensity) != n:
            raise CorruptStreamError("raw intensity section has the wrong length", len(frame.intensity))
        inten = np.frombuffer(frame.intensity, dtype=np.uint8).copy()
    else:
        cdfs = quantize_probs(_intensity_probs(models, positions, aligned, roi))
        d = RangeDecoder(frame.intensity)
        inten = np.asarray(d.decode_many(cdfs), dtype=np.uint8)
        if not d.exhausted:
            raise CorruptStreamError("trailing bytes in intensity section", d.pos)
    out = Sweep(positions, inten, timestamp, meta.pose)
    return (out, tree) if return_tree else out


# ---------------------------------------------------------------------------


def encode_stream(stream: SweepStream, models: ModelBundle, D: Optional[int] = None,
                  roi: Optional[RegionOfInterest] = None) -> tuple[Container, list[SweepStats]]:
    D = models.depth if D is None else D
    roi = roi or stream.roi
    container = Container(D, roi, models.model_hash())
    stats = []
    prev, prev_tree = None, None
    for s in stream:
        res = encode_sweep(s, prev, models, D, roi, prev_tree)
        container.frames.append(res.frame)
        stats.append(res.stats)
        prev, prev_tree = res.decoded, res.tree
    return container, stats


def decode_stream(container: Container, models: ModelBundle) -> SweepStream:
    if container.model_hash != models.model_hash():
        raise ModelMismatchError("container was encoded with a different model (hash mismatch)")
    D, roi = container.depth, container.roi
    sweeps = []
    prev, prev_tree = None, None
    for t, frame in enumerate(container.frames):
        s, tree = decode_sweep(frame, prev, models, D, roi, t, prev_tree, return_tree=True)
        sweeps.append(s)
        prev, prev_tree = s, tree
    return SweepStream(tuple(sweeps), roi)
