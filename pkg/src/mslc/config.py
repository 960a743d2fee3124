"""Job configuration: a flat ``key = value`` file with ``MSLC_*`` environment overrides.

Example::

    depth_min = 11
    depth_max = 16
    occupancy_variant = OTBCC
    steps = 5000
    train_corpus = data/train.mslc, data/more.mslc

Unknown keys are rejected so typos surface early.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Optional

from .entropy_models.bundle import OCCUPANCY_VARIANTS
from .entropy_models.intensity import VARIANTS as INTENSITY_VARIANTS
from .entropy_models.training import TrainSchedule
from .metrics import MetricConfig, PEAK_SEMANTICKITTI
from .pointcloud import RegionOfInterest

ENV_PREFIX = "MSLC_"


@dataclass(frozen=True)
class JobConfig:
    roi_side: float = 400.0
    roi_center: tuple = (0.0, 0.0, 0.0)
    depth_min: int = 11
    depth_max: int = 16
    occupancy_variant: str = "OTBCC"
    intensity_variant: str = "CC"
    steps: int = 5000
    lr: float = 1e-4
    batch: int = 16
    intensity_steps: int = 2000
    seed: int = 0
    train_corpus: tuple = ()
    test_corpus: tuple = ()
    out_dir: str = "runs"
    compressor: str = "zlib"
    tau_geo: float = 0.10
    tau_int: int = 0
    peak: float = PEAK_SEMANTICKITTI

    def __post_init__(self):
        if not (1 <= self.depth_min <= self.depth_max <= 16):
            raise ValueError(f"depth range must satisfy 1 <= min <= max <= 16, got {self.depth_min}..{self.depth_max}")
        if self.steps < 0 or self.batch < 1 or self.lr <= 0 or self.intensity_steps < 0:
            raise ValueError("schedule fields must be positive")
        if self.occupancy_variant not in OCCUPANCY_VARIANTS:
            raise ValueError(f"unknown occupancy variant {self.occupancy_variant!r}")
        if self.intensity_variant not in INTENSITY_VARIANTS:
            raise ValueError(f"unknown intensity variant {self.intensity_variant!r}")
        RegionOfInterest(self.roi_side, self.roi_center)

    @property
    def roi(self) -> RegionOfInterest:
        return RegionOfInterest(self.roi_side, self.roi_center)

    @property
    def depths(self) -> list[int]:
        return list(range(self.depth_min, self.depth_max + 1))

    def schedule(self, intensity: bool = False) -> TrainSchedule:
        return TrainSchedule(self.intensity_steps if intensity else self.steps, self.lr, self.batch, self.seed)

    @property
    def metric_config(self) -> MetricConfig:
        return MetricConfig(self.tau_geo, self.tau_int, self.peak)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        items = [x.strip() for x in raw.split(",") if x.strip()]
        if name == "roi_center":
            if len(items) != 3:
                raise ValueError("roi_center needs three comma-separated numbers")
            return tuple(float(x) for x in items)
        return tuple(items)
    return raw


def parse_config(text: str = "", env: Optional[Mapping[str, str]] = None, **overrides) -> JobConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string("[job]\n" + text)
    base = JobConfig()
    known = {f.name: getattr(base, f.name) for f in fields(JobConfig)}
    values = {}
    for key, raw in cp["job"].items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = _coerce(key, raw, known[key])
    env = os.environ if env is None else env
    for key, default in known.items():
        ev = env.get(ENV_PREFIX + key.upper())
        if ev is not None:
            values[key] = _coerce(key, ev, default)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return replace(base, **values)


def load_config(path=None, env: Optional[Mapping[str, str]] = None, **overrides) -> JobConfig:
    text = Path(path).read_text() if path else ""
    return parse_config(text, env, **overrides)
