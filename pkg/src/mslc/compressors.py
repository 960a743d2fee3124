"""Generic lossless byte compressors used as baselines."""

import bz2
import lzma
import zlib
from typing import Callable, Dict

ByteCompressor = Callable[[bytes], bytes]

COMPRESSORS: Dict[str, ByteCompressor] = {
    "zlib": lambda b: zlib.compress(b, 9),
    "lzma": lambda b: lzma.compress(b, preset=9),
    "bz2": lambda b: bz2.compress(b, 9),
}

DEFAULT_COMPRESSOR = "zlib"


def get_compressor(name: str) -> ByteCompressor:
    try:
        return COMPRESSORS[name]
    except KeyError:
        raise ValueError(f"unknown compressor {name!r}; choose from {sorted(COMPRESSORS)}") from None
