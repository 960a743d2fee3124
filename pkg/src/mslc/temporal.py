"""Bringing the decoded previous sweep into the current sensor frame."""

from __future__ import annotations

from typing import Optional

from .octree import ParsedOctree, build_octree, parse_occupancy_stream
from .pointcloud import RegionOfInterest, RigidTransform, Sweep, relative_transform, transform_sweep


def align_previous(prev: Optional[Sweep], pose: Optional[RigidTransform]) -> Optional[Sweep]:
    """``prev`` expressed in the frame of a sweep with ``pose`` (identity if either pose is absent)."""
    if prev is None:
        return None
    return transform_sweep(prev, relative_transform(prev.pose, pose))


def previous_octree(aligned_prev: Optional[Sweep], roi: RegionOfInterest, D: int) -> Optional[ParsedOctree]:
    """Parsed depth-D octree of an aligned previous sweep, or None if it is empty."""
    if aligned_prev is None or len(aligned_prev) == 0:
        return None
    so = build_octree(aligned_prev, roi, D)
    if not so.occupancy:
        return None
    return parse_occupancy_stream(so.occupancy, D)
