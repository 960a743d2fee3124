import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial import cKDTree

from mslc.cells import cell_centers, morton_decode, morton_encode, octant_of, quantize
from mslc.errors import CorruptStreamError
from mslc.octree import (
    build_octree,
    leaf_cells,
    leaf_offset_compressibility_probe,
    pack_leaf_offsets,
    parse_occupancy_stream,
    quantize_sweep,
    reconstruct,
    unpack_leaf_offsets,
)
from mslc.pointcloud import RegionOfInterest, Sweep

from conftest import random_sweep


def naive_octree(cells, D):
    """Queue-based reference serializer over a set of depth-D cells."""
    cells = sorted(set(map(tuple, cells)))
    out, leaves = [], []
    queue = [(0, (0, 0, 0), cells)]
    while queue:
        nxt = []
        for level, prefix, members in queue:
            if level == D:
                leaves.append((level, 0, members[0]))
                continue
            if 1 <= level <= D - 2 and len(members) == 1:
                out.append(0)
                c = members[0]
                off = 0
                for b in range(D - level - 1, -1, -1):
                    off = (off << 3) | (((c[0] >> b) & 1) << 2) | (((c[1] >> b) & 1) << 1) | ((c[2] >> b) & 1)
                leaves.append((level, off, c))
                continue
            shift = D - level - 1
            groups = {}
            for c in members:
                o = (((c[0] >> shift) & 1) << 2) | (((c[1] >> shift) & 1) << 1) | ((c[2] >> shift) & 1)
                groups.setdefault(o, []).append(c)
            out.append(sum(1 << o for o in groups))
            for o in sorted(groups):
                child = tuple(2 * p + ((o >> (2 - a)) & 1) for a, p in enumerate(prefix))
                nxt.append((level + 1, child, groups[o]))
        queue = nxt
    return bytes(out), leaves


cell_sets = st.integers(1, 6).flatmap(
    lambda D: st.tuples(
        st.just(D),
        st.lists(st.tuples(*[st.integers(0, (1 << D) - 1)] * 3), min_size=1, max_size=60, unique=True),
    )
)


def _sweep_from_cells(cells, D, roi, intens=None):
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    if intens is None:
        intens = np.arange(len(cells)) % 256
    return Sweep(cell_centers(cells, D, roi), intens)


class TestSerialization:
    @given(cell_sets)
    def test_matches_reference(self, case):
        D, cells = case
        roi = RegionOfInterest(64.0)
        so = build_octree(_sweep_from_cells(cells, D, roi), roi, D)
        occ, leaves = naive_octree(cells, D)
        assert so.occupancy == occ
        assert so.leaf_levels.tolist() == [l for l, _, _ in leaves]
        assert so.leaf_offsets.tolist() == [o for _, o, _ in leaves]

    @given(cell_sets)
    def test_parse_and_reconstruct_cells(self, case):
        D, cells = case
        roi = RegionOfInterest(64.0)
        so = build_octree(_sweep_from_cells(cells, D, roi), roi, D)
        tree = parse_occupancy_stream(so.occupancy, D)
        got = leaf_cells(tree, so.leaf_offsets)
        assert sorted(map(tuple, got.tolist())) == sorted(map(tuple, cells))
        assert len(so.leaf_levels) == len(tree.leaf_indices)

    def test_single_point_depth_one(self):
        roi = RegionOfInterest(2.0)
        so = build_octree(Sweep([[0.5, -0.5, 0.5]], [9]), roi, 1)
        assert so.occupancy == bytes([1 << 0b101])
        assert so.leaf_levels.tolist() == [1]

    def test_early_leaf_only_between_levels(self, rng):
        D = 8
        so = build_octree(random_sweep(rng, 300, spread=80), RegionOfInterest(), D)
        tree = parse_occupancy_stream(so.occupancy, D)
        lv = tree.levels[tree.bytes == 0]
        assert lv.size and lv.min() >= 1 and lv.max() <= D - 2

    def test_empty_and_outside(self):
        roi = RegionOfInterest(10.0)
        so = build_octree(Sweep([[100.0, 0, 0]], [1]), roi, 5)
        assert so.occupancy == b"" and so.num_leaves == 0
        assert len(reconstruct(so, roi)) == 0

    def test_duplicates_collapse(self):
        roi = RegionOfInterest(8.0)
        s = Sweep([[1.0, 1.0, 1.0]] * 5 + [[-1.0, 2.0, 3.0]], [50, 10, 70, 10, 99, 3])
        so = build_octree(s, roi, 4)
        assert so.num_leaves == 2
        # equidistant candidates resolve to the lowest intensity
        assert sorted(so.leaf_intensities.tolist()) == [3, 10]

    def test_invalid_depth(self):
        with pytest.raises(ValueError):
            build_octree(Sweep([[0, 0, 0]], [0]), RegionOfInterest(), 17)

    def test_serialized_equality(self, rng):
        s = random_sweep(rng, 40)
        assert build_octree(s, RegionOfInterest(), 9) == build_octree(s, RegionOfInterest(), 9)


class TestQuantizationBound:
    @given(arrays(np.float64, (50, 3), elements=st.floats(-200, 200)), st.integers(1, 16))
    def test_error_within_half_cell(self, pos, D):
        roi = RegionOfInterest()
        s = Sweep(pos, np.zeros(len(pos), int))
        rec = reconstruct(build_octree(s, roi, D), roi)
        _, idx = cKDTree(rec.positions).query(pos)
        err = np.abs(rec.positions[idx] - pos).max()
        bound = roi.side / 2 ** (D + 1)
        assert err <= bound * (1 + 1e-12)

    def test_bound_value_at_depth_11(self):
        assert RegionOfInterest(400.0).side / 2**12 == pytest.approx(0.09765625)


class TestLeafOffsets:
    @given(st.integers(2, 16), st.data())
    def test_pack_unpack(self, D, data):
        levels = np.asarray(data.draw(st.lists(st.integers(1, D), max_size=50)), dtype=np.int64)
        offsets = np.array([data.draw(st.integers(0, (1 << (3 * (D - l))) - 1)) for l in levels], dtype=np.int64)
        buf = pack_leaf_offsets(levels, offsets, D)
        assert len(buf) == (int(np.sum(3 * (D - levels))) + 7) // 8
        np.testing.assert_array_equal(unpack_leaf_offsets(buf, levels, D), offsets)

    def test_msb_first(self):
        # one leaf at level 1 of depth 3 with octant path 5 then 3: bits 101 011
        buf = pack_leaf_offsets(np.array([1]), np.array([0b101011]), 3)
        assert buf == bytes([0b10101100])

    def test_probe_rows(self):
        rows = leaf_offset_compressibility_probe([b"\x00" * 1000, bytes(range(256))], "zlib")
        assert rows[0].ratio < 0.1
        assert rows[1].raw_bytes == 256


class TestParseErrors:
    def test_truncated(self):
        with pytest.raises(CorruptStreamError):
            parse_occupancy_stream(bytes([0xFF]), 3)

    def test_trailing(self):
        roi = RegionOfInterest(8.0)
        so = build_octree(Sweep([[1.0, 1.0, 1.0]], [1]), roi, 3)
        with pytest.raises(CorruptStreamError):
            parse_occupancy_stream(so.occupancy + b"\x01", 3)

    def test_zero_at_root(self):
        with pytest.raises(CorruptStreamError) as e:
            parse_occupancy_stream(b"\x00", 3)
        assert e.value.offset == 0


class TestCells:
    @given(st.integers(1, 16), st.data())
    def test_morton_inverse(self, level, data):
        cells = np.array(data.draw(st.lists(st.tuples(*[st.integers(0, (1 << level) - 1)] * 3), min_size=1, max_size=30)))
        np.testing.assert_array_equal(morton_decode(morton_encode(cells, level), level), cells)

    def test_morton_order_is_breadth_first(self):
        cells = np.array([[1, 0, 0], [0, 1, 1], [0, 0, 1]])
        assert morton_encode(cells, 1).tolist() == [4, 3, 1]
        assert octant_of(cells).tolist() == [4, 3, 1]

    def test_max_face_goes_to_last_cell(self):
        roi = RegionOfInterest(4.0)
        assert quantize(np.array([[2.0, -2.0, 0.0]]), roi, 2).tolist() == [[3, 0, 2]]

    def test_quantize_sweep_sorted(self, rng):
        cells, inten = quantize_sweep(random_sweep(rng, 100), RegionOfInterest(), 10)
        codes = morton_encode(cells, 10)
        assert (np.diff(codes) > 0).all() and len(inten) == len(cells)
