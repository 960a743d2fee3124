"""An occupancy model and an intensity model for one octree depth, saved together."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from ..nn import checkpoint
from .histogram import HistogramModel
from .intensity import IntensityConfig, IntensityModel
from .occupancy import OccupancyConfig, OccupancyModel

OccModel = Union[OccupancyModel, HistogramModel]
OCCUPANCY_VARIANTS = ("Histogram", "O", "OT", "OTB", "OTBCC")


def make_occupancy_model(variant: str, depth: int, seed: int = 0) -> OccModel:
    if variant == "Histogram":
        return HistogramModel(depth)
    return OccupancyModel(OccupancyConfig(variant=variant, depth=depth, seed=seed))


@dataclass
class ModelBundle:
    occupancy: OccModel
    intensity: IntensityModel
    info: dict = field(default_factory=dict)

    @classmethod
    def create(cls, depth: int, occupancy: str = "OTBCC", intensity: str = "CC", seed: int = 0) -> "ModelBundle":
        return cls(make_occupancy_model(occupancy, depth, seed), IntensityModel(IntensityConfig(variant=intensity, seed=seed)))

    @property
    def depth(self) -> int:
        return self.occupancy.depth

    def tensors(self) -> dict:
        out = {f"occ.{k}": v for k, v in self.occupancy.state_dict().items()}
        out.update({f"int.{k}": v for k, v in self.intensity.state_dict().items()})
        return out

    def architecture(self) -> dict:
        return {"depth": self.depth, "occupancy": self.occupancy.metadata(), "intensity": self.intensity.metadata()}

    def model_hash(self) -> bytes:
        """16-byte id of architecture and weights (training notes excluded)."""
        return hashlib.sha256(checkpoint.dumps(self.tensors(), self.architecture())).digest()[:16]

    def dumps(self) -> bytes:
        meta = dict(self.architecture())
        meta["info"] = self.info
        return checkpoint.dumps(self.tensors(), meta)

    def save(self, path) -> bytes:
        data = self.dumps()
        Path(path).write_bytes(data)
        return data

    @classmethod
    def loads(cls, buf: bytes) -> "ModelBundle":
        tensors, meta = checkpoint.loads(buf)
        try:
            occ_meta, int_meta = meta["occupancy"], meta["intensity"]
            depth = int(meta["depth"])
        except (KeyError, TypeError, ValueError) as e:
            raise checkpoint.CheckpointError(f"checkpoint metadata incomplete: {e}") from e
        if occ_meta["variant"] == "Histogram":
            occ: OccModel = HistogramModel(depth, float(occ_meta["config"].get("alpha", 1.0)))
        else:
            occ = OccupancyModel(OccupancyConfig(**occ_meta["config"]))
        inten = IntensityModel(IntensityConfig(**int_meta["config"]))
        occ.load_state_dict({k[4:]: v for k, v in tensors.items() if k.startswith("occ.")})
        inten.load_state_dict({k[4:]: v for k, v in tensors.items() if k.startswith("int.")})
        return cls(occ, inten, dict(meta.get("info", {})))

    @classmethod
    def load(cls, path) -> "ModelBundle":
        return cls.loads(Path(path).read_bytes())

    def model_card(self) -> str:
        lines = [
            f"depth: {self.depth}",
            f"occupancy variant: {self.occupancy.variant}",
            f"intensity variant: {self.intensity.variant}",
            f"model hash: {self.model_hash().hex()}",
        ]
        lines += [f"{k}: {v}" for k, v in sorted(self.info.items())]
        return "\n".join(lines) + "\n"
