"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .autodiff import Tensor, backward


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """d f / d x by central differences; ``x`` is perturbed in place and restored."""
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = f()
        flat[i] = old - eps
        lo = f()
        flat[i] = old
        gf[i] = (hi - lo) / (2 * eps)
    return g


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - b| scaled by the larger of the two max magnitudes."""
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), floor)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def check_gradients(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor], eps: float = 1e-6) -> dict:
    """Relative error between analytic and numeric gradients, per parameter."""
    for p in params.values():
        p.grad = None
    backward(loss_fn())
    out = {}
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numeric_grad(lambda: float(loss_fn().data), p.data, eps)
        out[name] = relative_error(analytic, numeric)
    return out
