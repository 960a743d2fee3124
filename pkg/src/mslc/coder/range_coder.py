"""Carry-less 64-bit range coder (Subbotin style) over 16-bit frequencies.

The encoder keeps ``low`` and ``range`` in 64 bits and emits the top byte
once it is settled. When the range collapses below 2**48 without the top
byte settling, the range is cut at the next 2**48 boundary, which avoids
carry propagation at a tiny cost in efficiency. ``finish`` flushes the full
8-byte state, so a decoder never has to read past the end of a valid stream.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence, Union

import numpy as np

from ..errors import CorruptStreamError
from .cdf import PRECISION_BITS, TOTAL

_MASK = (1 << 64) - 1
_TOP = 1 << 56
_BOT = 1 << 48


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK
        self.out = bytearray()
        self.count = 0

    def encode(self, cum: int, freq: int) -> None:
        r = self.range >> PRECISION_BITS
        low = self.low + r * cum
        rng = r * freq
        out = self.out
        while True:
            if (low ^ (low + rng)) < _TOP:
                pass
            elif rng < _BOT:
                rng = -low & (_BOT - 1)
            else:
                break
            out.append(low >> 56)
            low = (low << 8) & _MASK
            rng <<= 8
        self.low, self.range = low, rng
        self.count += 1

    def encode_many(self, cums: Sequence[int], freqs: Sequence[int]) -> None:
        low, rng, out = self.low, self.range, self.out
        for c, f in zip(cums, freqs):
            r = rng >> PRECISION_BITS
            low += r * c
            rng = r * f
            while True:
                if (low ^ (low + rng)) < _TOP:
                    pass
                elif rng < _BOT:
                    rng = -low & (_BOT - 1)
                else:
                    break
                out.append(low >> 56)
                low = (low << 8) & _MASK
                rng <<= 8
        self.low, self.range = low, rng
        self.count += len(cums)

    def finish(self) -> bytes:
        if self.count == 0:
            return b""
        return bytes(self.out) + self.low.to_bytes(8, "big")


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = bytes(data)
        self.pos = 0
        self.low = 0
        self.range = _MASK
        self.code = 0
        if self.data:
            if len(self.data) < 8:
                raise CorruptStreamError("range-coded section shorter than its 8-byte state", len(self.data))
            self.code = int.from_bytes(self.data[:8], "big")
            self.pos = 8

    def decode(self, cdf) -> int:
        """Decode one symbol; ``cdf`` is a length-(k+1) cumulative table."""
        r = self.range >> PRECISION_BITS
        if not self.data:
            raise CorruptStreamError("range-coded section is empty", 0)
        v = (self.code - self.low) // r
        if not (0 <= v < TOTAL):
            raise CorruptStreamError("range decoder out of bounds", self.pos)
        s = int(np.searchsorted(cdf, v, side="right")) - 1
        cum = int(cdf[s])
        self._update(r, cum, int(cdf[s + 1]) - cum)
        return s

    def decode_many(self, cdfs: np.ndarray) -> list[int]:
        out = []
        data, n = self.data, len(self.data)
        low, rng, code, pos = self.low, self.range, self.code, self.pos
        if len(cdfs) and not data:
            raise CorruptStreamError("range-coded section is empty", 0)
        for row in cdfs:
            r = rng >> PRECISION_BITS
            v = (code - low) // r
            if not (0 <= v < TOTAL):
                raise CorruptStreamError("range decoder out of bounds", pos)
            s = int(row.searchsorted(v, side="right")) - 1
            c = int(row[s])
            low += r * c
            rng = r * (int(row[s + 1]) - c)
            while True:
                if (low ^ (low + rng)) < _TOP:
                    pass
                elif rng < _BOT:
                    rng = -low & (_BOT - 1)
                else:
                    break
                if pos >= n:
                    raise CorruptStreamError("range-coded section underrun", pos)
                code = ((code << 8) | data[pos]) & _MASK
                pos += 1
                low = (low << 8) & _MASK
                rng <<= 8
            out.append(s)
        self.low, self.range, self.code, self.pos = low, rng, code, pos
        return out

    def _update(self, r: int, cum: int, freq: int) -> None:
        low = self.low + r * cum
        rng = r * freq
        code, pos, data = self.code, self.pos, self.data
        while True:
            if (low ^ (low + rng)) < _TOP:
                pass
            elif rng < _BOT:
                rng = -low & (_BOT - 1)
            else:
                break
            if pos >= len(data):
                raise CorruptStreamError("range-coded section underrun", pos)
            code = ((code << 8) | data[pos]) & _MASK
            pos += 1
            low = (low << 8) & _MASK
            rng <<= 8
        self.low, self.range, self.code, self.pos = low, rng, code, pos

    @property
    def exhausted(self) -> bool:
        return self.pos == len(self.data)


def rc_encode(symbols: Sequence[int], cdfs: np.ndarray) -> bytes:
    """Range-code ``symbols[i]`` under ``cdfs[i]``."""
    s = np.asarray(symbols, dtype=np.int64)
    if len(s) == 0:
        return b""
    cdfs = np.atleast_2d(cdfs)
    rows = np.arange(len(s))
    cum = cdfs[rows, s]
    freq = cdfs[rows, s + 1] - cum
    if (freq <= 0).any():
        raise ValueError("symbol with zero frequency")
    enc = RangeEncoder()
    enc.encode_many(cum.tolist(), freq.tolist())
    return enc.finish()


CdfProvider = Union[Callable[[int], np.ndarray], Iterable[np.ndarray]]


def rc_decode(data: bytes, cdf_provider: CdfProvider, count: int) -> list[int]:
    """Decode ``count`` symbols; ``cdf_provider`` yields each symbol's CDF in order.

    The provider may be a callable taking the symbol index or an iterable.
    """
    dec = RangeDecoder(data)
    if callable(cdf_provider):
        it = (cdf_provider(i) for i in range(count))
    else:
        it = iter(cdf_provider)
    out = [dec.decode(next(it)) for _ in range(count)]
    if count and not dec.exhausted:
        raise CorruptStreamError("trailing bytes in range-coded section", dec.pos)
    return out
