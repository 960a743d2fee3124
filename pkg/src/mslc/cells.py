"""Integer cell arithmetic shared by the octree and neighbor code.

Octant bit order is fixed: bit 2 = x, bit 1 = y, bit 0 = z; the high half of
an axis sets its bit. Morton codes interleave cell bits in that order,
coarsest level first, so sorting by code is breadth-first child order.
"""

import numpy as np

MAX_DEPTH = 16


def octant_of(child_cells: np.ndarray) -> np.ndarray:
    c = np.asarray(child_cells, dtype=np.int64)
    return ((c[..., 0] & 1) << 2) | ((c[..., 1] & 1) << 1) | (c[..., 2] & 1)


def octant_offsets(octants: np.ndarray) -> np.ndarray:
    o = np.asarray(octants, dtype=np.int64)
    return np.stack([(o >> 2) & 1, (o >> 1) & 1, o & 1], axis=-1)


def morton_encode(cells: np.ndarray, level: int) -> np.ndarray:
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    code = np.zeros(len(cells), dtype=np.int64)
    for b in range(level - 1, -1, -1):
        bits = ((cells >> b) & 1)
        code = (code << 3) | (bits[:, 0] << 2) | (bits[:, 1] << 1) | bits[:, 2]
    return code


def morton_decode(codes: np.ndarray, level: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    cells = np.zeros((len(codes), 3), dtype=np.int64)
    for b in range(level - 1, -1, -1):
        o = (codes >> (3 * b)) & 7
        cells = (cells << 1) | octant_offsets(o)
    return cells


def cell_centers(cells: np.ndarray, level: int, roi) -> np.ndarray:
    size = roi.cell_size(level)
    return roi.corner + (np.asarray(cells, dtype=np.float64) + 0.5) * size


def quantize(positions: np.ndarray, roi, level: int) -> np.ndarray:
    """Cell index per point; points on the max face go to the last cell."""
    size = roi.cell_size(level)
    cells = np.floor((np.asarray(positions, dtype=np.float64) - roi.corner) / size).astype(np.int64)
    return np.clip(cells, 0, (1 << level) - 1)


def node_keys(levels: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Unique int64 key per (level, cell) pair."""
    levels = np.asarray(levels, dtype=np.int64)
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    key = levels << 48
    return key | morton_encode_varlevel(cells, levels)


def morton_encode_varlevel(cells: np.ndarray, levels: np.ndarray) -> np.ndarray:
    code = np.zeros(len(cells), dtype=np.int64)
    top = int(levels.max()) if len(levels) else 0
    for b in range(top - 1, -1, -1):
        active = levels > b
        bits = (cells >> b) & 1
        step = (bits[:, 0] << 2) | (bits[:, 1] << 1) | bits[:, 2]
        code = np.where(active, (code << 3) | step, code)
    return code
