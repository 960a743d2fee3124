"""Probability models for occupancy bytes and intensities."""

from .bundle import OCCUPANCY_VARIANTS, ModelBundle, make_occupancy_model
from .features import CONTEXT_DIM, OccupancyExample, collate, context_features, occupancy_example
from .histogram import HistogramModel
from .intensity import IntensityConfig, IntensityExample, IntensityModel, collate_intensity, neighbor_tables
from .occupancy import OccupancyConfig, OccupancyModel

__all__ = [
    "OCCUPANCY_VARIANTS", "ModelBundle", "make_occupancy_model", "CONTEXT_DIM", "OccupancyExample",
    "collate", "context_features", "occupancy_example", "HistogramModel", "IntensityConfig",
    "IntensityExample", "IntensityModel", "collate_intensity", "neighbor_tables", "OccupancyConfig",
    "OccupancyModel",
]
