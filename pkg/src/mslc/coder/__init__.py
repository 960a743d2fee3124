"""Range coder, probability quantization, container format and sweep codec."""

from .cdf import PRECISION_BITS, TOTAL, ModelError, cdf_bits, quantize_probs, round_probs, uniform_cdf
from .codec import (
    EncodedSweep,
    ModelMismatchError,
    SweepStats,
    decode_stream,
    decode_sweep,
    encode_stream,
    encode_sweep,
)
from .container import Container, Frame, FrameMeta
from .range_coder import RangeDecoder, RangeEncoder, rc_decode, rc_encode

__all__ = [
    "PRECISION_BITS", "TOTAL", "ModelError", "cdf_bits", "quantize_probs", "round_probs", "uniform_cdf",
    "EncodedSweep", "ModelMismatchError", "SweepStats", "decode_stream", "decode_sweep", "encode_stream",
    "encode_sweep", "Container", "Frame", "FrameMeta", "RangeDecoder", "RangeEncoder", "rc_decode",
    "rc_encode",
]
