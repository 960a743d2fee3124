"""Octree quantization, breadth-first serialization and reconstruction.

Layout of a serialized octree of depth D:

* The occupancy stream holds one byte per node at levels 0..D-1, in
  breadth-first order with children visited by octant index. An intermediate
  node stores its child mask (never 0). A node at level 1..D-2 that holds a
  single point stops early and stores 0 instead; it becomes a leaf.
* Nodes at level D are always leaves and carry no byte.
* Every leaf owns a residual path of 3 * (D - level) bits: the octant index
  of each remaining level, coarse to fine, MSB first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .cells import MAX_DEPTH, cell_centers, morton_decode, morton_encode, octant_offsets, quantize
from .errors import CorruptStreamError
from .compressors import ByteCompressor, get_compressor
from .neighbors import NodeLookup, SpatialIndex
from .pointcloud import RegionOfInterest, Sweep


def _check_depth(D: int) -> None:
    if not (1 <= D <= MAX_DEPTH):
        raise ValueError(f"octree depth must be in [1, {MAX_DEPTH}], got {D}")


@dataclass(frozen=True)
class LeafRecord:
    level: int
    offset: int
    n_bits: int
    intensity: int

    @property
    def offset_bits(self) -> tuple[int, ...]:
        return tuple((self.offset >> (self.n_bits - 1 - j)) & 1 for j in range(self.n_bits))


@dataclass(frozen=True, eq=False)
class SerializedOctree:
    depth: int
    occupancy: bytes
    leaf_levels: np.ndarray
    leaf_offsets: np.ndarray
    leaf_intensities: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, SerializedOctree):
            return NotImplemented
        return (
            self.depth == other.depth
            and self.occupancy == other.occupancy
            and np.array_equal(self.leaf_levels, other.leaf_levels)
            and np.array_equal(self.leaf_offsets, other.leaf_offsets)
            and np.array_equal(self.leaf_intensities, other.leaf_intensities)
        )

    @property
    def num_leaves(self) -> int:
        return len(self.leaf_levels)

    @property
    def leaf_stream(self) -> list[LeafRecord]:
        D = self.depth
        return [
            LeafRecord(int(l), int(o), 3 * (D - int(l)), int(r))
            for l, o, r in zip(self.leaf_levels, self.leaf_offsets, self.leaf_intensities)
        ]

    @property
    def offset_bit_count(self) -> int:
        return int(np.sum(3 * (self.depth - self.leaf_levels.astype(np.int64))))

    def offset_bytes(self) -> bytes:
        return pack_leaf_offsets(self.leaf_levels, self.leaf_offsets, self.depth)

    def leaf_bytes(self) -> bytes:
        """Offsets bit buffer followed by one intensity byte per leaf."""
        return self.offset_bytes() + self.leaf_intensities.tobytes()


def pack_leaf_offsets(levels: np.ndarray, offsets: np.ndarray, D: int) -> bytes:
    nbits = 3 * (D - np.asarray(levels, dtype=np.int64))
    total = int(nbits.sum())
    if total == 0:
        return b""
    owner = np.repeat(np.arange(len(nbits)), nbits)
    pos_in_leaf = np.arange(total) - np.repeat(np.cumsum(nbits) - nbits, nbits)
    shift = nbits[owner] - 1 - pos_in_leaf
    bits = (np.asarray(offsets, dtype=np.int64)[owner] >> shift) & 1
    return np.packbits(bits.astype(np.uint8)).tobytes()


def unpack_leaf_offsets(data: bytes, levels: np.ndarray, D: int) -> np.ndarray:
    nbits = 3 * (D - np.asarray(levels, dtype=np.int64))
    total = int(nbits.sum())
    need = (total + 7) // 8
    if len(data) < need:
        raise CorruptStreamError("leaf offset section too short", len(data))
    if total == 0:
        return np.zeros(len(nbits), dtype=np.int64)
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=need))[:total].astype(np.int64)
    owner = np.repeat(np.arange(len(nbits)), nbits)
    pos_in_leaf = np.arange(total) - np.repeat(np.cumsum(nbits) - nbits, nbits)
    shift = nbits[owner] - 1 - pos_in_leaf
    out = np.zeros(len(nbits), dtype=np.int64)
    np.add.at(out, owner, bits << shift)
    return out


def nearest_intensity(original: Sweep, centers: np.ndarray) -> np.ndarray:
    """Intensity of each center's nearest original point.

    Equidistant candidates resolve to the lowest intensity, which keeps the
    result independent of input point order.
    """
    if len(centers) == 0:
        return np.zeros(0, dtype=np.uint8)
    order = np.lexsort((original.positions[:, 2], original.positions[:, 1], original.positions[:, 0], original.intensities))
    index = SpatialIndex(original.positions[order])
    ids, _ = index.query(centers, 1)
    return original.intensities[order][ids[:, 0]]


def build_octree(s: Sweep, roi: RegionOfInterest, D: int) -> SerializedOctree:
    _check_depth(D)
    inside = roi.contains(s.positions)
    empty = SerializedOctree(
        D, b"", np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.uint8)
    )
    if not inside.any():
        return empty
    cells = quantize(s.positions[inside], roi, D)
    codes = np.unique(morton_encode(cells, D))
    intens = nearest_intensity(s, cell_centers(_codes_to_cells(codes, D), D, roi))

    occupancy = []
    leaf_lv, leaf_off, leaf_int = [], [], []
    active = np.arange(len(codes))
    for level in range(D):
        if len(active) == 0:
            break
        shift = 3 * (D - level)
        ac = codes[active]
        keys = ac >> shift
        starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
        counts = np.diff(np.r_[starts, len(keys)])
        child_bit = np.left_shift(1, (ac >> (shift - 3)) & 7)
        byte = np.bitwise_or.reduceat(child_bit, starts)
        if 1 <= level <= D - 2:
            is_leaf = counts == 1
        else:
            is_leaf = np.zeros(len(starts), dtype=bool)
        byte[is_leaf] = 0
        occupancy.append(byte.astype(np.uint8))
        if is_leaf.any():
            sel = active[starts[is_leaf]]
            leaf_lv.append(np.full(len(sel), level, dtype=np.int64))
            leaf_off.append(codes[sel] & ((1 << shift) - 1))
            leaf_int.append(intens[sel])
            active = active[~np.repeat(is_leaf, counts)]
    leaf_lv.append(np.full(len(active), D, dtype=np.int64))
    leaf_off.append(np.zeros(len(active), dtype=np.int64))
    leaf_int.append(intens[active])
    return SerializedOctree(
        D,
        np.concatenate(occupancy).tobytes(),
        np.concatenate(leaf_lv),
        np.concatenate(leaf_off),
        np.concatenate(leaf_int).astype(np.uint8),
    )


def _codes_to_cells(codes: np.ndarray, D: int) -> np.ndarray:
    return morton_decode(codes, D)


def quantize_sweep(s: Sweep, roi: RegionOfInterest, D: int) -> tuple[np.ndarray, np.ndarray]:
    """Depth-D cells (sorted by Morton code) and their intensities."""
    _check_depth(D)
    inside = roi.contains(s.positions)
    if not inside.any():
        return np.zeros((0, 3), np.int64), np.zeros(0, np.uint8)
    codes = np.unique(morton_encode(quantize(s.positions[inside], roi, D), D))
    cells = _codes_to_cells(codes, D)
    return cells, nearest_intensity(s, cell_centers(cells, D, roi))


# ---------------------------------------------------------------------------
# Parsing


@dataclass
class _Level:
    cells: np.ndarray
    parent: np.ndarray
    octant: np.ndarray


class OctreeExpander:
    """Grows an octree one level at a time from occupancy bytes.

    Both the encoder and the decoder walk the tree through this class, so the
    node tables each side sees are identical.
    """

    def __init__(self, D: int):
        _check_depth(D)
        self.depth = D
        self.levels: list[_Level] = [_Level(np.zeros((1, 3), np.int64), np.full(1, -1, np.int64), np.zeros(1, np.int64))]
        self.level_bytes: list[np.ndarray] = []
        self.offset = 0
        self._base = 0

    @property
    def level(self) -> int:
        """Level whose bytes are consumed next."""
        return len(self.level_bytes)

    @property
    def done(self) -> bool:
        return self.level >= self.depth or len(self.levels[-1].cells) == 0

    def pending(self) -> _Level:
        return self.levels[self.level]

    def push(self, byte_values) -> None:
        lv = self.pending()
        b = np.asarray(byte_values, dtype=np.int64)
        if len(b) != len(lv.cells):
            raise CorruptStreamError("occupancy stream exhausted mid-level", self.offset + len(b))
        if ((b < 0) | (b > 255)).any():
            raise CorruptStreamError("occupancy value out of range", self.offset)
        level = self.level
        zero = np.flatnonzero(b == 0)
        if len(zero) and not (1 <= level <= self.depth - 2):
            raise CorruptStreamError(f"zero occupancy at level {level}", self.offset + int(zero[0]))
        bits = (b[:, None] >> np.arange(8)) & 1
        par, octs = np.nonzero(bits)
        child_cells = lv.cells[par] * 2 + octant_offsets(octs)
        self.level_bytes.append(b.astype(np.uint8))
        self.levels.append(_Level(child_cells, par + self._base, octs.astype(np.int64)))
        self._base += len(lv.cells)
        self.offset += len(b)

    def finish(self) -> "ParsedOctree":
        D = self.depth
        if self.level_bytes and len(self.levels[-1].cells) == 0:
            self.levels.pop()
        n_levels = len(self.levels)
        level = np.concatenate([np.full(len(l.cells), i, np.int64) for i, l in enumerate(self.levels)])
        cells = np.concatenate([l.cells for l in self.levels]).reshape(-1, 3)
        parent = np.concatenate([l.parent for l in self.levels])
        octant = np.concatenate([l.octant for l in self.levels])
        byts = np.full(len(level), -1, dtype=np.int64)
        nb = sum(len(b) for b in self.level_bytes)
        if nb:
            byts[:nb] = np.concatenate(self.level_bytes)
        node_bounds = np.cumsum([0] + [len(l.cells) for l in self.levels])
        byte_bounds = np.cumsum([0] + [len(b) for b in self.level_bytes])
        return ParsedOctree(D, level, cells, parent, octant, byts, node_bounds, byte_bounds)


def _empty_parsed(D: int) -> "ParsedOctree":
    z = np.zeros(0, np.int64)
    return ParsedOctree(D, z, np.zeros((0, 3), np.int64), z, z, z, np.zeros(1, np.int64), np.zeros(1, np.int64))


@dataclass(eq=False)
class ParsedOctree:
    """Node tables for a breadth-first octree.

    ``bytes`` holds each node's occupancy value; 0 marks an early leaf and -1
    a level-D node (which carries no byte). ``node_bounds[l]`` is the first
    node index at level ``l``; ``byte_bounds[l]`` is the stream offset of the
    first byte at level ``l``.
    """

    depth: int
    levels: np.ndarray
    cells: np.ndarray
    parent: np.ndarray
    octant: np.ndarray
    bytes: np.ndarray
    node_bounds: np.ndarray
    byte_bounds: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.levels)

    @property
    def num_intermediate(self) -> int:
        return int(np.count_nonzero(self.bytes > 0))

    @property
    def leaf_mask(self) -> np.ndarray:
        return self.bytes <= 0

    @property
    def leaf_indices(self) -> np.ndarray:
        return np.flatnonzero(self.leaf_mask)

    @cached_property
    def child_ptr(self) -> np.ndarray:
        """Children of node ``i`` are nodes ``child_ptr[i]:child_ptr[i+1]``."""
        n = self.num_nodes
        ptr = np.ones(n + 1, dtype=np.int64)
        if n:
            counts = np.bincount(self.parent[1:], minlength=n)
            ptr[1:] = 1 + np.cumsum(counts)
        return ptr

    @cached_property
    def lookup(self) -> NodeLookup:
        return NodeLookup(self.levels, self.cells)

    def level_slice(self, level: int) -> slice:
        if level + 1 >= len(self.node_bounds):
            return slice(self.num_nodes, self.num_nodes)
        return slice(int(self.node_bounds[level]), int(self.node_bounds[level + 1]))

    def centers(self, roi: RegionOfInterest) -> np.ndarray:
        out = np.empty((self.num_nodes, 3))
        for l in range(len(self.node_bounds) - 1):
            sl = self.level_slice(l)
            out[sl] = cell_centers(self.cells[sl], l, roi)
        return out


def parse_occupancy_stream(data: bytes, D: int) -> ParsedOctree:
    _check_depth(D)
    if len(data) == 0:
        return _empty_parsed(D)
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    ex = OctreeExpander(D)
    while not ex.done:
        n = len(ex.pending().cells)
        if ex.offset + n > len(buf):
            raise CorruptStreamError("occupancy stream exhausted mid-level", len(buf))
        ex.push(buf[ex.offset : ex.offset + n])
    if ex.offset != len(buf):
        raise CorruptStreamError("trailing bytes after last level", ex.offset)
    return ex.finish()


def leaf_cells(parsed: ParsedOctree, leaf_offsets: np.ndarray) -> np.ndarray:
    """Depth-D cell of every leaf, in breadth-first leaf order."""
    D = parsed.depth
    idx = parsed.leaf_indices
    lv = parsed.levels[idx]
    cells = parsed.cells[idx].copy()
    offsets = np.asarray(leaf_offsets, dtype=np.int64)
    for b in range(D - 1, -1, -1):
        # offset holds the octant path of remaining levels; take bit-level b
        has = (D - lv) > b
        o = (offsets >> (3 * b)) & 7
        cells = np.where(has[:, None], (cells << 1) | octant_offsets(o), cells)
    return cells


def reconstruct(o: SerializedOctree, roi: RegionOfInterest, timestamp: int = 0, pose=None) -> Sweep:
    parsed = parse_occupancy_stream(o.occupancy, o.depth)
    idx = parsed.leaf_indices
    if len(idx) != o.num_leaves or not np.array_equal(parsed.levels[idx], o.leaf_levels):
        raise CorruptStreamError("leaf records disagree with occupancy stream", len(o.occupancy))
    cells = leaf_cells(parsed, o.leaf_offsets)
    return Sweep(cell_centers(cells, o.depth, roi), o.leaf_intensities, timestamp, pose)


# ---------------------------------------------------------------------------


@dataclass
class ProbeRow:
    sweep: int
    raw_bytes: int
    compressed_bytes: int

    @property
    def ratio(self) -> float:
        return self.compressed_bytes / self.raw_bytes if self.raw_bytes else 1.0


def leaf_offset_compressibility_probe(streams: Sequence[bytes], compressor="zlib") -> list[ProbeRow]:
    """Raw versus compressed size of each sweep's leaf-offset bit buffer."""
    fn: ByteCompressor = get_compressor(compressor) if isinstance(compressor, str) else compressor
    return [ProbeRow(i, len(b), len(fn(bytes(b)))) for i, b in enumerate(streams)]
