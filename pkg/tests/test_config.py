import pytest

from mslc.config import JobConfig, load_config, parse_config


def test_defaults():
    cfg = parse_config("", env={})
    assert cfg.depths == [11, 12, 13, 14, 15, 16]
    assert cfg.lr == 1e-4 and cfg.batch == 16 and cfg.roi.side == 400.0
    assert cfg.metric_config.tau_geo == 0.1


def test_file_values_and_lists():
    cfg = parse_config("depth_min = 12\nsteps = 7\ntrain_corpus = a.mslc, b.mslc\nroi_center = 1, 2, 3\n", env={})
    assert cfg.depth_min == 12 and cfg.steps == 7
    assert cfg.train_corpus == ("a.mslc", "b.mslc")
    assert cfg.roi.center == (1.0, 2.0, 3.0)


def test_env_overrides_file_and_args_override_env():
    cfg = parse_config("steps = 7\n", env={"MSLC_STEPS": "9", "MSLC_LR": "0.01"})
    assert cfg.steps == 9 and cfg.lr == 0.01
    assert parse_config("steps = 7\n", env={"MSLC_STEPS": "9"}, steps=3).steps == 3


@pytest.mark.parametrize("text", ["bogus = 1\n", "depth_min = 0\n", "depth_max = 17\n", "batch = 0\n",
                                  "occupancy_variant = Q\n", "roi_center = 1, 2\n", "lr = -1\n"])
def test_rejects_bad_values(text):
    with pytest.raises(ValueError):
        parse_config(text, env={})


def test_text_round_trip(tmp_path):
    cfg = JobConfig(depth_min=12, depth_max=13, train_corpus=("x.mslc",), seed=4)
    p = tmp_path / "job.cfg"
    p.write_text(cfg.to_text())
    assert load_config(p, env={}) == cfg


def test_schedules():
    cfg = JobConfig(steps=10, intensity_steps=4)
    assert cfg.schedule().steps == 10 and cfg.schedule(intensity=True).steps == 4
