"""Point clouds, sweep streams, file ingestion and a synthetic LiDAR scene generator."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np


class FormatError(ValueError):
    """Raised when an input file does not match its declared layout."""


class Point(NamedTuple):
    position: tuple[float, float, float]
    intensity: int


def reflectance_to_intensity(r: np.ndarray) -> np.ndarray:
    return np.round(np.clip(r, 0.0, 1.0) * 255.0).astype(np.uint8)


@dataclass(frozen=True)
class RegionOfInterest:
    """Axis-aligned cube of side ``side`` meters centered on ``center``."""

    side: float = 400.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.side > 0 and math.isfinite(self.side)):
            raise ValueError(f"ROI side must be positive, got {self.side}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def corner(self) -> np.ndarray:
        return np.asarray(self.center, dtype=np.float64) - self.side / 2.0

    def cell_size(self, level: int) -> float:
        return self.side / float(1 << level)

    def contains(self, positions: np.ndarray) -> np.ndarray:
        lo = self.corner
        hi = lo + self.side
        return np.all((positions >= lo) & (positions <= hi), axis=1)


class RigidTransform:
    """Rotation followed by translation, ``p -> R p + t``."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation=None, translation=None):
        R = np.eye(3) if rotation is None else np.array(rotation, dtype=np.float64)
        t = np.zeros(3) if translation is None else np.array(translation, dtype=np.float64)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6, rtol=0) or np.linalg.det(R) < 0:
            raise ValueError("rotation is not orthonormal within 1e-6")
        R.setflags(write=False)
        t.setflags(write=False)
        self.rotation = R
        self.translation = t

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = math.cos(yaw), math.sin(yaw)
        return cls([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]], translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.rotation, np.eye(3)) and not self.translation.any())

    def to_flat(self) -> np.ndarray:
        """Row-major rotation followed by translation (12 values)."""
        return np.concatenate([self.rotation.ravel(), self.translation])

    @classmethod
    def from_flat(cls, values: Sequence[float]) -> "RigidTransform":
        v = np.asarray(values, dtype=np.float64)
        return cls(v[:9].reshape(3, 3), v[9:12])

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __repr__(self):
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


@dataclass(frozen=True, eq=False)
class Sweep:
    """One LiDAR rotation: ``positions`` (n, 3) meters and 8-bit ``intensities``."""

    positions: np.ndarray
    intensities: np.ndarray
    timestamp: int = 0
    pose: Optional[RigidTransform] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1, 3)
        inten = np.asarray(self.intensities)
        if inten.shape != (len(pos),):
            raise ValueError("need one intensity per point")
        if inten.size and (inten.min() < 0 or inten.max() > 255):
            raise ValueError("intensity outside [0, 255]")
        if not np.isfinite(pos).all():
            raise ValueError("non-finite point position")
        inten = inten.astype(np.uint8)
        pos.setflags(write=False)
        inten.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "intensities", inten)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64)
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @classmethod
    def from_points(cls, points: Iterable[Point], timestamp: int = 0, pose=None) -> "Sweep":
        points = list(points)
        pos = np.array([p.position for p in points], dtype=np.float64).reshape(-1, 3)
        inten = np.array([p.intensity for p in points], dtype=np.int64)
        return cls(pos, inten, timestamp, pose)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def points(self) -> list[Point]:
        return [Point(tuple(p), int(r)) for p, r in zip(self.positions.tolist(), self.intensities)]

    def with_timestamp(self, timestamp: int) -> "Sweep":
        return Sweep(self.positions, self.intensities, timestamp, self.pose, self.labels)


@dataclass(frozen=True)
class SweepStream:
    sweeps: tuple[Sweep, ...]
    roi: RegionOfInterest = field(default_factory=RegionOfInterest)

    def __post_init__(self):
        sweeps = tuple(self.sweeps)
        stamps = [s.timestamp for s in sweeps]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValueError("sweep timestamps must be strictly increasing")
        object.__setattr__(self, "sweeps", sweeps)

    def __len__(self) -> int:
        return len(self.sweeps)

    def __iter__(self):
        return iter(self.sweeps)

    def __getitem__(self, i):
        return self.sweeps[i]


def transform_sweep(s: Sweep, T: RigidTransform) -> Sweep:
    if T.is_identity():
        return s
    return Sweep(T.apply(s.positions), s.intensities, s.timestamp, s.pose, s.labels)


def relative_transform(prev_pose: Optional[RigidTransform], pose: Optional[RigidTransform]) -> RigidTransform:
    """Map sensor coordinates of the previous sweep into the current sensor frame."""
    if prev_pose is None or pose is None:
        return RigidTransform.identity()
    return pose.inverse().compose(prev_pose)


# ---------------------------------------------------------------------------
# KITTI Velodyne .bin

_KITTI_DTYPE = np.dtype("<f4")


def parse_kitti_bytes(buf: bytes, timestamp: int = 0) -> Sweep:
    if len(buf) % 16:
        raise FormatError(f"KITTI buffer length {len(buf)} is not a multiple of 16 bytes")
    rec = np.frombuffer(buf, dtype=_KITTI_DTYPE).reshape(-1, 4)
    bad = ~np.isfinite(rec).all(axis=1)
    if bad.any():
        raise FormatError(f"non-finite value in record {int(np.argmax(bad))}")
    return Sweep(rec[:, :3].astype(np.float64), reflectance_to_intensity(rec[:, 3]), timestamp)


def load_kitti_bin(path, timestamp: int = 0) -> Sweep:
    return parse_kitti_bytes(Path(path).read_bytes(), timestamp)


def kitti_bytes(s: Sweep) -> bytes:
    rec = np.empty((len(s), 4), dtype=_KITTI_DTYPE)
    rec[:, :3] = s.positions
    rec[:, 3] = s.intensities.astype(np.float32) / np.float32(255.0)
    return rec.tobytes()


def save_kitti_bin(s: Sweep, path) -> None:
    Path(path).write_bytes(kitti_bytes(s))


# ---------------------------------------------------------------------------
# Stream file: "MSLC" little-endian container of sweeps.

STREAM_MAGIC = b"MSLC"
STREAM_VERSION = 1
_POINT_DTYPE = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("r", "u1")])


def stream_to_bytes(stream: SweepStream) -> bytes:
    roi = stream.roi
    out = [STREAM_MAGIC, struct.pack("<Hd3dI", STREAM_VERSION, roi.side, *roi.center, len(stream))]
    for s in stream:
        out.append(struct.pack("<Q", len(s)))
        if s.pose is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01" + struct.pack("<12d", *s.pose.to_flat()))
        rec = np.empty(len(s), dtype=_POINT_DTYPE)
        rec["x"], rec["y"], rec["z"] = s.positions.T
        rec["r"] = s.intensities
        out.append(rec.tobytes())
    return b"".join(out)


def stream_from_bytes(buf: bytes) -> SweepStream:
    """Parse a stream file. Timestamps are assigned from the sweep index."""
    view = memoryview(buf)
    if bytes(view[:4]) != STREAM_MAGIC:
        raise FormatError("bad stream magic")
    head = struct.Struct("<Hd3dI")
    if len(buf) < 4 + head.size:
        raise FormatError("truncated stream header")
    version, side, cx, cy, cz, count = head.unpack_from(buf, 4)
    if version != STREAM_VERSION:
        raise FormatError(f"unsupported stream version {version}")
    pos = 4 + head.size
    sweeps = []
    for t in range(count):
        try:
            (n,) = struct.unpack_from("<Q", buf, pos)
            pos += 8
            flag = buf[pos]
            pos += 1
            pose = None
            if flag == 1:
                pose = RigidTransform.from_flat(struct.unpack_from("<12d", buf, pos))
                pos += 96
            elif flag != 0:
                raise FormatError(f"bad pose flag {flag} in sweep {t}")
        except (struct.error, IndexError) as e:
            raise FormatError(f"truncated sweep header {t}") from e
        nbytes = n * _POINT_DTYPE.itemsize
        if pos + nbytes > len(buf):
            raise FormatError(f"truncated point records in sweep {t}")
        rec = np.frombuffer(buf, dtype=_POINT_DTYPE, count=n, offset=pos)
        pos += nbytes
        xyz = np.stack([rec["x"], rec["y"], rec["z"]], axis=1)
        sweeps.append(Sweep(xyz, rec["r"], t, pose))
    if pos != len(buf):
        raise FormatError("trailing bytes after last sweep")
    return SweepStream(tuple(sweeps), RegionOfInterest(side, (cx, cy, cz)))


def write_stream(stream: SweepStream, path) -> None:
    Path(path).write_bytes(stream_to_bytes(stream))


def read_stream(path) -> SweepStream:
    return stream_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Synthetic scenes


@dataclass(frozen=True)
class SceneParams:
    """Ground plane plus moving boxes, sampled by a simulated spinning ranger.

    The sensor sits at the origin of its own frame; the ground is the plane
    ``z = ground_z``. ``obstacle_velocity`` fixes one velocity for every box;
    when ``None`` each box draws a random heading and a speed up to
    ``max_obstacle_speed``.
    """

    n_beams: int = 8
    n_azimuth: int = 48
    elevation_deg: tuple[float, float] = (-18.0, 2.0)
    ground_z: float = -1.8
    max_range: float = 60.0
    range_noise: float = 0.01
    azimuth_jitter: float = 0.5
    n_obstacles: int = 3
    obstacle_radius: tuple[float, float] = (6.0, 25.0)
    obstacle_size: tuple[tuple[float, float], tuple[float, float], tuple[float, float]] = (
        (2.0, 5.0),
        (1.5, 3.0),
        (1.2, 2.5),
    )
    obstacle_velocity: Optional[tuple[float, float, float]] = None
    max_obstacle_speed: float = 8.0
    dt: float = 0.1
    ego_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    intensity_noise: float = 1.0
    texture_amplitude: float = 14.0
    roi: RegionOfInterest = field(default_factory=RegionOfInterest)


def _ray_directions(params: SceneParams, rng: np.random.Generator) -> np.ndarray:
    elev = np.deg2rad(np.linspace(params.elevation_deg[0], params.elevation_deg[1], params.n_beams))
    step = 2 * np.pi / params.n_azimuth
    az = np.arange(params.n_azimuth) * step + rng.uniform(-0.5, 0.5) * params.azimuth_jitter * step
    el, a = np.meshgrid(elev, az, indexing="ij")
    d = np.stack([np.cos(el) * np.cos(a), np.cos(el) * np.sin(a), np.sin(el)], axis=-1)
    return d.reshape(-1, 3)


def _cast(origin, dirs, boxes_lo, boxes_hi, ground_z, max_range):
    """Return hit distance and surface id (0 ground, 1.. boxes, -1 miss) per ray."""
    n = len(dirs)
    best = np.full(n, np.inf)
    sid = np.full(n, -1, dtype=np.int64)
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        tg = (ground_z - origin[2]) / dz
    ok = (dz < 0) & (tg > 0)
    best[ok] = tg[ok]
    sid[ok] = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    for b, (lo, hi) in enumerate(zip(boxes_lo, boxes_hi)):
        t1 = (lo - origin) * inv
        t2 = (hi - origin) * inv
        tmin = np.nanmax(np.minimum(t1, t2), axis=1)
        tmax = np.nanmin(np.maximum(t1, t2), axis=1)
        hit = (tmax >= tmin) & (tmin > 0) & (tmin < best)
        best[hit] = tmin[hit]
        sid[hit] = b + 1
    sid[best > max_range] = -1
    return best, sid


def _texture(world: np.ndarray, sid: np.ndarray, amp: float) -> np.ndarray:
    # Static reflectance pattern tied to world position, so it repeats across sweeps.
    x, y, z = world.T
    ground = amp * (np.sin(0.9 * x) * np.cos(0.7 * y)) + 2.5 * amp * (np.abs(np.mod(y, 3.5) - 1.75) < 0.15)
    box = amp * np.sin(1.3 * x + 0.8 * y + 2.0 * z)
    return np.where(sid == 0, ground, box)


def generate_synthetic_stream(seed: int, n_sweeps: int, params: SceneParams = SceneParams()) -> SweepStream:
    if n_sweeps < 1:
        raise ValueError("n_sweeps must be at least 1")
    rng = np.random.default_rng(seed)
    n_obs = params.n_obstacles
    radius = rng.uniform(*params.obstacle_radius, size=n_obs)
    theta = rng.uniform(0, 2 * np.pi, size=n_obs)
    size = np.stack([rng.uniform(lo, hi, size=n_obs) for lo, hi in params.obstacle_size], axis=1)
    centers = np.stack(
        [radius * np.cos(theta), radius * np.sin(theta), params.ground_z + size[:, 2] / 2], axis=1
    ).reshape(n_obs, 3)
    if params.obstacle_velocity is not None:
        vel = np.tile(np.asarray(params.obstacle_velocity, dtype=np.float64), (n_obs, 1))
    else:
        heading = rng.uniform(0, 2 * np.pi, size=n_obs)
        speed = rng.uniform(0, params.max_obstacle_speed, size=n_obs)
        vel = np.stack([speed * np.cos(heading), speed * np.sin(heading), np.zeros(n_obs)], axis=1)
    base = np.concatenate([[40.0], rng.uniform(70.0, 200.0, size=n_obs)])
    ego_v = np.asarray(params.ego_velocity, dtype=np.float64)
    moving_ego = bool(ego_v.any())

    sweeps = []
    for t in range(n_sweeps):
        ego = ego_v * params.dt * t
        c = centers + vel * params.dt * t
        lo, hi = c - size / 2, c + size / 2
        dirs = _ray_directions(params, rng)
        dist, sid = _cast(ego, dirs, lo, hi, params.ground_z, params.max_range)
        keep = sid >= 0
        dist, sid, dirs = dist[keep], sid[keep], dirs[keep]
        dist = dist + rng.normal(0.0, params.range_noise, size=dist.shape)
        local = dirs * dist[:, None]
        world = local + ego
        val = base[sid] + _texture(world, sid, params.texture_amplitude)
        val = val + rng.normal(0.0, params.intensity_noise, size=val.shape)
        inten = np.clip(np.round(val), 0, 255).astype(np.uint8)
        pose = RigidTransform(None, ego) if moving_ego else None
        sweeps.append(Sweep(local, inten, t, pose, labels=sid))
    return SweepStream(tuple(sweeps), params.roi)
