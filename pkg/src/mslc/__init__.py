"""Multi-sweep LiDAR point-cloud stream compression."""

__version__ = "0.1.0"
