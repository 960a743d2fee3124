"""Probability quantization to 16-bit integer CDFs."""

from __future__ import annotations

import numpy as np

PRECISION_BITS = 16
TOTAL = 1 << PRECISION_BITS
_GRID = float(1 << 32)


class ModelError(ValueError):
    pass


def round_probs(p: np.ndarray) -> np.ndarray:
    """Snap probabilities to multiples of 2**-32 before quantization."""
    return np.round(np.asarray(p, dtype=np.float64) * _GRID) / _GRID


def quantize_probs(p: np.ndarray) -> np.ndarray:
    """Integer frequencies (each >= 1, summing to 2**16) as cumulative tables.

    Accepts one distribution (shape (k,)) or a batch (n, k); returns int64
    CDFs of shape (k+1,) or (n, k+1).
    """
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if not np.isfinite(p).all():
        raise ModelError("non-finite probability")
    if (p < 0).any():
        raise ModelError("negative probability")
    if p.size and np.abs(p.sum(axis=1) - 1.0).max() > 1e-6:
        raise ModelError("probabilities do not sum to 1")
    n, k = p.shape
    scaled = round_probs(p) * TOTAL
    freq = np.maximum(1, np.rint(scaled)).astype(np.int64)
    diff = TOTAL - freq.sum(axis=1)
    cols = np.arange(k)
    while diff.any():
        rem = scaled - freq
        grow = diff > 0
        if grow.any():
            rows = np.flatnonzero(grow)
            order = np.argsort(-rem[rows], axis=1, kind="stable")
            rank = np.empty_like(order)
            np.put_along_axis(rank, order, cols[None, :].repeat(len(rows), 0), axis=1)
            freq[rows] += rank < diff[rows, None]
        shrink = diff < 0
        if shrink.any():
            rows = np.flatnonzero(shrink)
            key = np.where(freq[rows] > 1, rem[rows], np.inf)
            order = np.argsort(key, axis=1, kind="stable")
            rank = np.empty_like(order)
            np.put_along_axis(rank, order, cols[None, :].repeat(len(rows), 0), axis=1)
            eligible = freq[rows] > 1
            freq[rows] -= (rank < -diff[rows, None]) & eligible
        diff = TOTAL - freq.sum(axis=1)
    cdf = np.zeros((n, k + 1), dtype=np.int64)
    np.cumsum(freq, axis=1, out=cdf[:, 1:])
    return cdf[0] if single else cdf


def cdf_bits(cdf: np.ndarray, symbols: np.ndarray) -> float:
    """Ideal code length in bits of ``symbols`` under quantized CDFs."""
    cdf = np.atleast_2d(cdf)
    s = np.asarray(symbols, dtype=np.int64)
    rows = np.arange(len(s))
    freq = cdf[rows, s + 1] - cdf[rows, s]
    return float(-np.log2(freq / TOTAL).sum())


def uniform_cdf(k: int = 256) -> np.ndarray:
    return quantize_probs(np.full(k, 1.0 / k))
