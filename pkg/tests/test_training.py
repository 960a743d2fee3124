import numpy as np
import pytest

from mslc.entropy_models.histogram import HistogramModel
from mslc.entropy_models.intensity import IntensityConfig, IntensityModel
from mslc.entropy_models.occupancy import OccupancyConfig, OccupancyModel
from mslc.entropy_models.training import (
    TrainSchedule,
    _batches,
    fit_histogram,
    occupancy_bits,
    prepare_corpus,
    smoothed,
    train_intensity,
    train_occupancy,
)
from mslc.nn import TrainingError
from mslc.pointcloud import generate_synthetic_stream

from conftest import SMALL_SCENE

D = 8


@pytest.fixture(scope="module")
def corpus():
    return prepare_corpus([generate_synthetic_stream(s, 3, SMALL_SCENE) for s in range(3)], D)


def test_batches_cover_each_epoch():
    got = list(_batches(7, 3, 5, seed=1))
    flat = np.concatenate(got[:3])[:7]
    assert sorted(flat.tolist()) == list(range(7))
    assert [len(b) for b in got] == [3] * 5
    assert all(np.array_equal(a, b) for a, b in zip(got, _batches(7, 3, 5, seed=1)))


def test_zero_steps_keeps_initial_weights(corpus):
    m = OccupancyModel(OccupancyConfig(variant="O", depth=D))
    before = m.state_dict()
    res = train_occupancy(m, corpus.occupancy, TrainSchedule(0, 1e-3, 1))
    assert res.steps == 0
    for k, v in m.state_dict().items():
        np.testing.assert_array_equal(v, before[k])


def test_training_reduces_bits(corpus):
    m = OccupancyModel(OccupancyConfig(variant="OTBCC", depth=D))
    before = occupancy_bits(m, corpus.occupancy)
    res = train_occupancy(m, corpus.occupancy, TrainSchedule(60, 1e-3, 2))
    assert occupancy_bits(m, corpus.occupancy) < 0.7 * before
    assert res.losses[0] > res.losses[-1]


def test_training_deterministic(corpus):
    def run():
        m = OccupancyModel(OccupancyConfig(variant="OTB", depth=D, seed=3))
        train_occupancy(m, corpus.occupancy, TrainSchedule(5, 1e-3, 2, seed=9))
        return m.state_dict()

    a, b = run(), run()
    for k in a:
        assert a[k].tobytes() == b[k].tobytes()


def test_divergence_aborts(corpus):
    m = OccupancyModel(OccupancyConfig(variant="O", depth=D))
    with pytest.raises(TrainingError, match="diverged at step"):
        with np.errstate(all="ignore"):
            train_occupancy(m, corpus.occupancy, TrainSchedule(20, 1e250, 1))


def test_intensity_training_reduces_loss(corpus):
    m = IntensityModel(IntensityConfig(variant="CC"))
    res = train_intensity(m, corpus.intensity_examples(m.cfg.neighbors), TrainSchedule(40, 1e-3, 2))
    assert np.mean(res.losses[-10:]) < np.mean(res.losses[:5])


def test_histogram_fit(corpus):
    h = fit_histogram(HistogramModel(D), corpus)
    assert h.counts.sum() == sum(e.num_symbols for e in corpus.occupancy)


def test_smoothed():
    np.testing.assert_allclose(smoothed([1, 2, 3, 4], 2), [1.5, 2.5, 3.5])
