"""Framed container for encoded sweep streams.

Header (little-endian)::

    "MSC1"  u16 version  u8 depth  f64 roi side  3 x f64 roi center
    16-byte model hash  u32 frame count

Frame::

    u32 section count n, n x u32 section lengths, then the n payloads

Sections 0..3 are occupancy, leaf offsets, intensity and metadata. A reader
skips any further sections by their declared length, so newer writers can
append sections without breaking older readers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import CorruptStreamError
from ..pointcloud import RegionOfInterest, RigidTransform

MAGIC = b"MSC1"
VERSION = 1
_HEADER = struct.Struct("<4sHBdddd16sI")
SECTION_NAMES = ("occupancy", "leaf_offsets", "intensity", "metadata")
_META = struct.Struct("<QB")


@dataclass(frozen=True)
class FrameMeta:
    """Per-frame side information needed before decoding the other sections."""

    original_points: int
    pose: "RigidTransform | None" = None

    def to_bytes(self) -> bytes:
        out = _META.pack(self.original_points, 1 if self.pose is not None else 0)
        if self.pose is not None:
            out += np.asarray(self.pose.to_flat(), dtype="<f8").tobytes()
        return out

    @classmethod
    def from_bytes(cls, buf: bytes, offset: int = 0) -> "FrameMeta":
        if len(buf) < _META.size:
            raise CorruptStreamError("metadata section truncated", offset)
        n, flag = _META.unpack_from(buf, 0)
        if flag not in (0, 1):
            raise CorruptStreamError("bad pose flag", offset + 8)
        pose = None
        if flag:
            if len(buf) < _META.size + 96:
                raise CorruptStreamError("pose truncated", offset + _META.size)
            flat = np.frombuffer(buf, dtype="<f8", count=12, offset=_META.size)
            try:
                pose = RigidTransform.from_flat(flat)
            except ValueError as e:
                raise CorruptStreamError(f"invalid pose: {e}", offset + _META.size) from None
        return cls(int(n), pose)


@dataclass
class Frame:
    sections: list = field(default_factory=list)

    def section(self, i: int) -> bytes:
        return self.sections[i] if i < len(self.sections) else b""

    @property
    def occupancy(self) -> bytes:
        return self.section(0)

    @property
    def leaf_offsets(self) -> bytes:
        return self.section(1)

    @property
    def intensity(self) -> bytes:
        return self.section(2)

    @property
    def meta(self) -> FrameMeta:
        return FrameMeta.from_bytes(self.section(3))

    def section_sizes(self) -> dict:
        return {name: len(self.section(i)) for i, name in enumerate(SECTION_NAMES)}

    @property
    def payload_bytes(self) -> int:
        return sum(len(s) for s in self.sections)

    def to_bytes(self) -> bytes:
        head = struct.pack(f"<I{len(self.sections)}I", len(self.sections), *[len(s) for s in self.sections])
        return head + b"".join(self.sections)


@dataclass
class Container:
    depth: int
    roi: RegionOfInterest
    model_hash: bytes
    frames: list = field(default_factory=list)

    def to_bytes(self) -> bytes:
        if len(self.model_hash) != 16:
            raise ValueError("model hash must be 16 bytes")
        c = np.asarray(self.roi.center, dtype=np.float64)
        head = _HEADER.pack(MAGIC, VERSION, self.depth, self.roi.side, c[0], c[1], c[2], self.model_hash, len(self.frames))
        return head + b"".join(f.to_bytes() for f in self.frames)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Container":
        buf = bytes(buf)
        if len(buf) < _HEADER.size:
            raise CorruptStreamError("container header truncated", len(buf))
        magic, version, depth, side, cx, cy, cz, mhash, count = _HEADER.unpack_from(buf, 0)
        if magic != MAGIC:
            raise CorruptStreamError("bad container magic", 0)
        if version != VERSION:
            raise CorruptStreamError(f"unsupported container version {version}", 4)
        if not (1 <= depth <= 16):
            raise CorruptStreamError(f"depth {depth} out of range", 6)
        try:
            roi = RegionOfInterest(side, (cx, cy, cz))
        except ValueError as e:
            raise CorruptStreamError(f"invalid ROI: {e}", 7) from None
        pos = _HEADER.size
        frames = []
        for _ in range(count):
            if pos + 4 > len(buf):
                raise CorruptStreamError("frame header truncated", pos)
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            if pos + 4 * n > len(buf):
                raise CorruptStreamError("section table truncated", pos)
            lengths = struct.unpack_from(f"<{n}I", buf, pos)
            pos += 4 * n
            sections = []
            for ln in lengths:
                if pos + ln > len(buf):
                    raise CorruptStreamError("section payload truncated", pos)
                sections.append(buf[pos : pos + ln])
                pos += ln
            frames.append(Frame(sections))
        if pos != len(buf):
            raise CorruptStreamError("trailing bytes after last frame", pos)
        return cls(depth, roi, mhash, frames)

    @property
    def header_bytes(self) -> int:
        return _HEADER.size
