import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mslc.pointcloud import (
    FormatError,
    Point,
    RegionOfInterest,
    RigidTransform,
    SceneParams,
    Sweep,
    SweepStream,
    generate_synthetic_stream,
    kitti_bytes,
    load_kitti_bin,
    parse_kitti_bytes,
    read_stream,
    reflectance_to_intensity,
    relative_transform,
    save_kitti_bin,
    stream_from_bytes,
    stream_to_bytes,
    write_stream,
)
from mslc.temporal import align_previous, previous_octree


def test_kitti_round_trip(tmp_path, rng):
    pos = rng.normal(size=(10, 3)).astype(np.float32).astype(np.float64)
    s = Sweep(pos, rng.integers(0, 256, 10))
    save_kitti_bin(s, tmp_path / "a.bin")
    back = load_kitti_bin(tmp_path / "a.bin")
    np.testing.assert_array_equal(back.positions, pos)
    np.testing.assert_array_equal(back.intensities, s.intensities)


def test_kitti_errors():
    with pytest.raises(FormatError):
        parse_kitti_bytes(b"\x00" * 15)
    bad = np.array([[0, 0, np.nan, 0]], dtype="<f4").tobytes()
    with pytest.raises(FormatError):
        parse_kitti_bytes(bad)


def test_reflectance_mapping():
    assert reflectance_to_intensity(np.array([0.0, 0.5, 1.0, 2.0, -1.0])).tolist() == [0, 128, 255, 255, 0]


def test_stream_file_round_trip(tmp_path):
    st_ = generate_synthetic_stream(3, 3, SceneParams(n_beams=4, n_azimuth=16, ego_velocity=(2.0, 0, 0)))
    write_stream(st_, tmp_path / "s.mslc")
    back = read_stream(tmp_path / "s.mslc")
    assert len(back) == 3 and back.roi == st_.roi
    for a, b in zip(st_, back):
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.intensities, b.intensities)
        assert a.pose == b.pose


@pytest.mark.parametrize("cut", [2, 10, 60, 100])
def test_truncated_stream(cut):
    data = stream_to_bytes(generate_synthetic_stream(1, 2, SceneParams(n_beams=2, n_azimuth=8)))
    with pytest.raises(FormatError):
        stream_from_bytes(data[:cut])


def test_timestamps_must_increase():
    s = Sweep([[0, 0, 0]], [0], timestamp=1)
    with pytest.raises(ValueError):
        SweepStream((s, s))


def test_sweep_validation():
    with pytest.raises(ValueError):
        Sweep([[0, 0, 0]], [300])
    with pytest.raises(ValueError):
        Sweep([[0, 0, np.inf]], [0])
    with pytest.raises(ValueError):
        Sweep([[0, 0, 0]], [1, 2])
    assert Sweep.from_points([Point((1.0, 2.0, 3.0), 7)]).points == [Point((1.0, 2.0, 3.0), 7)]


def test_roi_validation():
    with pytest.raises(ValueError):
        RegionOfInterest(0.0)
    assert RegionOfInterest(400).cell_size(11) == pytest.approx(0.1953125)


@given(st.floats(-np.pi, np.pi), arrays(np.float64, 3, elements=st.floats(-10, 10)))
def test_rigid_transform_inverse(yaw, t):
    T = RigidTransform.from_yaw(yaw, t)
    p = np.array([[1.0, 2.0, 3.0], [-4.0, 0.5, 2.0]])
    np.testing.assert_allclose(T.inverse().apply(T.apply(p)), p, atol=1e-9)
    np.testing.assert_allclose(RigidTransform.from_flat(T.to_flat()).matrix(), T.matrix())


def test_rotation_validation():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, 2.0]))


def test_alignment_maps_static_world_points():
    # a world point seen from two poses lands on itself after alignment
    world = np.array([[10.0, 5.0, 0.0]])
    p0 = RigidTransform.from_yaw(0.1, (0, 0, 0))
    p1 = RigidTransform.from_yaw(0.3, (2.0, 1.0, 0))
    prev = Sweep(p0.inverse().apply(world), [5], 0, p0)
    aligned = align_previous(prev, p1)
    np.testing.assert_allclose(aligned.positions, p1.inverse().apply(world), atol=1e-12)
    assert relative_transform(None, p1).is_identity()


def test_previous_octree_empty():
    assert previous_octree(None, RegionOfInterest(), 5) is None
    assert previous_octree(Sweep(np.zeros((0, 3)), []), RegionOfInterest(), 5) is None


class TestSynthetic:
    def test_deterministic(self):
        a = generate_synthetic_stream(11, 2)
        b = generate_synthetic_stream(11, 2)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.positions, y.positions)
            np.testing.assert_array_equal(x.intensities, y.intensities)

    def test_temporally_correlated(self):
        s = generate_synthetic_stream(2, 3)
        from scipy.spatial import cKDTree

        d, _ = cKDTree(s[0].positions).query(s[1].positions)
        other = generate_synthetic_stream(99, 1)[0]
        d2, _ = cKDTree(other.positions).query(s[1].positions)
        # ground rings repeat across scenes; obstacles carry the difference
        assert d.mean() < d2.mean()

    def test_inside_roi(self):
        s = generate_synthetic_stream(4, 2)
        assert all(s.roi.contains(x.positions).all() for x in s)
