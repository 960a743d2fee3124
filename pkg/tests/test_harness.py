import json

import numpy as np
import pytest

from mslc.entropy_models import ModelBundle
from mslc.entropy_models.training import TrainSchedule, prepare_corpus
from mslc.harness import (
    RDRow,
    cache_key,
    cached_rows,
    evaluate_codec,
    generic_intensity_bits,
    is_monotone,
    leaf_offset_probe,
    rd_sweep,
    synthetic_corpus,
    train_bundle,
)

from conftest import SMALL_SCENE


@pytest.fixture(scope="module")
def streams():
    return synthetic_corpus(50, 2, 2, SMALL_SCENE)


def test_rd_rows_monotone_for_untrained_models(streams):
    rows = rd_sweep({D: ModelBundle.create(D, "Histogram", "Passthrough") for D in (6, 8, 10)}, streams)
    assert [r.depth for r in rows] == [6, 8, 10]
    assert all(is_monotone(rows).values())
    # passthrough intensities cost exactly 8 bits per leaf
    assert rows[-1].bpp_total > rows[-1].bpp_spatial


def test_is_monotone_detects_violation():
    rows = [RDRow(11, 1, 1, 0.9, 0.1, 60), RDRow(12, 2, 2, 0.8, 0.05, 65)]
    assert is_monotone(rows) == {"f1": False, "psnr": True, "chamfer": True}


def test_train_bundle_records_info(streams):
    corpus = prepare_corpus(streams, 8)
    tb = train_bundle(corpus, "O", "MLP1", TrainSchedule(2, 1e-3, 1), TrainSchedule(2, 1e-3, 1))
    assert tb.bundle.info["occupancy_steps"] == 2 and len(tb.bundle.info["corpus_hash"]) == 16
    hist = train_bundle(corpus, "Histogram", "Passthrough", TrainSchedule(2, 1e-3, 1), TrainSchedule(2, 1e-3, 1))
    assert hist.occupancy_result.steps == 0


def test_generic_baseline_counts_compressed_bytes(streams):
    corpus = prepare_corpus(streams, 8)
    bits = generic_intensity_bits(corpus)
    assert bits % 8 == 0 and bits > 0


def test_leaf_probe_incompressible(streams):
    rows = leaf_offset_probe(streams, 12)
    assert {r.compressor for r in rows} == {"zlib", "lzma", "bz2"}
    assert all(r.raw_bytes > 0 for r in rows)


def test_cache(tmp_path):
    calls = []

    def compute():
        calls.append(1)
        return [RDRow(1, 2.0, 1.0, 0.5, 0.1, 40.0)]

    key = cache_key(a=1)
    assert cache_key(a=1) == key != cache_key(a=2)
    first = cached_rows(tmp_path, key, compute, RDRow)
    second = cached_rows(tmp_path, key, compute, RDRow)
    assert first == second and len(calls) == 1
    assert json.loads((tmp_path / f"{key}.json").read_text())[0]["depth"] == 1
