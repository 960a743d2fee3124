import numpy as np
import pytest
from hypothesis import given, strategies as st

from mslc.entropy_models import ModelBundle
from mslc.entropy_models.features import (
    CONTEXT_DIM,
    LevelNeighbors,
    byte_bits,
    collate,
    context_features,
    normalized_centers,
    occupancy_example,
    squash_displacement,
)
from mslc.entropy_models.histogram import HistogramModel
from mslc.entropy_models.intensity import IntensityConfig, IntensityModel, neighbor_tables
from mslc.entropy_models.occupancy import VARIANTS, OccupancyConfig, OccupancyModel
from mslc.entropy_models.training import prepare_corpus, stream_records
from mslc.nn import no_grad, softmax
from mslc.nn.checkpoint import CheckpointError
from mslc.pointcloud import RegionOfInterest

from conftest import SMALL_SCENE

D = 9


@pytest.fixture(scope="module")
def records(small_stream):
    return stream_records(small_stream, D)


@pytest.fixture(scope="module")
def pair(records):
    r = records[1]
    return r.tree, r.prev_tree


class TestFeatures:
    def test_bits_lsb_first(self):
        assert byte_bits(np.array([0b10000001])).tolist() == [[1, 0, 0, 0, 0, 0, 0, 1]]

    def test_centers_of_root_and_children(self):
        c = normalized_centers(np.array([0, 1]), np.array([[0, 0, 0], [1, 0, 1]]))
        np.testing.assert_allclose(c, [[0, 0, 0], [0.25, -0.25, 0.25]])

    def test_context_layout(self):
        f = context_features([3], [[1, 2, 3]], [5], [255], [0])
        assert f.shape == (1, CONTEXT_DIM)
        assert f[0, 5] == 1.0 and f[0, 6:14].sum() == 8 and f[0, 14:].sum() == 0

    @given(st.floats(-1e6, 1e6))
    def test_squash_is_odd_and_monotone(self, x):
        a, b = squash_displacement(np.array([x, x + 1.0]))
        assert squash_displacement(np.array([-x]))[0] == pytest.approx(-a)
        assert b >= a

    def test_level_neighbors_exact(self, pair):
        cur, prev = pair
        finder = LevelNeighbors(prev, 5)
        level = 6
        sl = cur.level_slice(level)
        ids, disp = finder.query(level, cur.cells[sl])
        psl = prev.level_slice(level)
        pc = prev.cells[psl]
        for c, row in zip(cur.cells[sl][:20], ids[:20]):
            d2 = ((pc - c) ** 2).sum(1)
            ref = sorted(range(len(pc)), key=lambda j: (d2[j], j))[:5]
            assert (row[: len(ref)] - psl.start).tolist() == ref

    def test_neighbors_absent_without_prev(self):
        ids, disp = LevelNeighbors(None).query(3, np.zeros((4, 3), int))
        assert (ids == -1).all() and not disp.any()


class TestOccupancyModel:
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_batched_equals_level_by_level(self, variant, pair):
        cur, prev = pair
        m = OccupancyModel(OccupancyConfig(variant=variant, depth=D, seed=3))
        ex = occupancy_example(cur, prev)
        with no_grad():
            batched = softmax(m.logits(collate([ex])).data)
        rows = []
        state = m.begin_sweep(prev)
        start = 0
        for level in range(D):
            sl = slice(int(cur.node_bounds[level]), int(cur.node_bounds[level + 1]))
            if sl.start >= len(ex.target):
                break
            if level == 0:
                local, pb = np.zeros(1, int), np.zeros(1, int)
            else:
                psl = cur.level_slice(level - 1)
                local = cur.parent[sl] - psl.start
                pb = cur.bytes[psl][local]
            rows.append(state.level_probs(level, cur.cells[sl], cur.octant[sl], local, pb))
        np.testing.assert_allclose(np.concatenate(rows), batched, atol=1e-12)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_initial_model_near_uniform(self, variant, pair):
        m = OccupancyModel(OccupancyConfig(variant=variant, depth=D))
        with no_grad():
            p = softmax(m.logits(collate([occupancy_example(*pair)])).data)
        # mean code length over all symbols stays within 2% of 8 bits
        assert abs(-np.log2(p).mean() - 8) < 0.16

    def test_state_dict_round_trip(self):
        a = OccupancyModel(OccupancyConfig(variant="OTBCC", depth=D, seed=1))
        b = OccupancyModel(OccupancyConfig(variant="OTBCC", depth=D, seed=2))
        b.load_state_dict(a.state_dict())
        for k, v in a.state_dict().items():
            np.testing.assert_array_equal(v, b.state_dict()[k])

    def test_wrong_state_dict_rejected(self):
        a = OccupancyModel(OccupancyConfig(variant="O", depth=D))
        b = OccupancyModel(OccupancyConfig(variant="OTBCC", depth=D))
        with pytest.raises((KeyError, ValueError)):
            b.load_state_dict(a.state_dict())

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            OccupancyConfig(variant="XYZ")

    def test_temporal_context_changes_prediction(self, pair):
        cur, prev = pair
        m = OccupancyModel(OccupancyConfig(variant="OT", depth=D, seed=0, head_gain=1.0))
        with no_grad():
            a = m.logits(collate([occupancy_example(cur, prev)])).data
            b = m.logits(collate([occupancy_example(cur, None)])).data
        assert not np.allclose(a, b)


class TestHistogram:
    def test_counts_and_laplace(self, records):
        h = HistogramModel(D).fit([r.tree for r in records])
        total = sum(int(r.tree.byte_bounds[-1]) for r in records)
        assert h.counts.sum() == total
        p = h.probs(0)
        assert p.sum() == pytest.approx(1.0) and (p > 0).all()

    def test_cross_entropy_matches_walk(self, records):
        h = HistogramModel(D).fit([r.tree for r in records])
        t = records[0].tree
        nb = int(t.byte_bounds[-1])
        ref = -sum(np.log2(h.probs(int(l))[int(b)]) for l, b in zip(t.levels[:nb], t.bytes[:nb]))
        assert h.cross_entropy_bits(t) == pytest.approx(ref)


class TestIntensity:
    def test_neighbor_tables_shapes(self, rng):
        roi = RegionOfInterest()
        pos = rng.normal(size=(10, 3))
        ex = neighbor_tables(pos, rng.normal(size=(3, 3)), rng.integers(0, 256, 3), 5, roi, np.zeros(10, int))
        assert ex.ids.shape == (10, 5) and (ex.ids[:, 3:] == -1).all()

    @pytest.mark.parametrize("variant", ["MLP1", "CC"])
    def test_probs_normalized(self, variant, rng):
        m = IntensityModel(IntensityConfig(variant=variant))
        p = m.probs(rng.normal(size=(7, 3)), rng.normal(size=(9, 3)), rng.integers(0, 256, 9), RegionOfInterest())
        np.testing.assert_allclose(p.sum(1), 1.0)
        assert abs(-np.log2(p).mean() - 8) < 0.16

    def test_first_sweep_without_previous(self, rng):
        m = IntensityModel(IntensityConfig(variant="CC"))
        p = m.probs(rng.normal(size=(4, 3)), np.zeros((0, 3)), np.zeros(0, np.uint8), RegionOfInterest())
        assert p.shape == (4, 256)

    def test_passthrough_is_raw(self):
        assert IntensityModel(IntensityConfig(variant="Passthrough")).raw


class TestBundle:
    @pytest.mark.parametrize("occ", ["Histogram", "O", "OTBCC"])
    def test_checkpoint_round_trip(self, occ, tmp_path):
        b = ModelBundle.create(D, occ, "CC", seed=4)
        b.info["note"] = "x"
        b.save(tmp_path / "m.ckpt")
        back = ModelBundle.load(tmp_path / "m.ckpt")
        assert back.model_hash() == b.model_hash()
        assert back.dumps() == b.dumps()
        assert "model hash" in back.model_card()

    def test_hash_depends_on_weights(self):
        assert ModelBundle.create(D, "O", seed=0).model_hash() != ModelBundle.create(D, "O", seed=1).model_hash()

    def test_hash_ignores_training_notes(self):
        a = ModelBundle.create(D, "O")
        b = ModelBundle.create(D, "O")
        b.info["steps"] = 5
        assert a.model_hash() == b.model_hash()

    def test_corrupt_checkpoint(self):
        data = bytearray(ModelBundle.create(D, "O").dumps())
        with pytest.raises(CheckpointError):
            ModelBundle.loads(bytes(data[:50]))
