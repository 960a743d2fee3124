"""Dense layers, MLPs, continuous convolution and deep-set aggregation."""

from __future__ import annotations

from collections import OrderedDict
from typing import Optional, Sequence

import numpy as np

from .autodiff import Tensor, add, concat, matmul, mul, relu, reshape, segment_sum, sum_axis, take_rows

ParamStore = "OrderedDict[str, Tensor]"


def he_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str, store,
                 gain: float = 1.0):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.W = Tensor(gain * he_uniform(rng, in_dim, out_dim), requires_grad=True, name=f"{name}.W")
        self.b = Tensor(np.zeros(out_dim), requires_grad=True, name=f"{name}.b")
        store[self.W.name] = self.W
        store[self.b.name] = self.b

    def __call__(self, x) -> Tensor:
        xd = x.data if isinstance(x, Tensor) else np.asarray(x)
        if xd.shape[-1] != self.in_dim:
            raise ValueError(f"{self.W.name}: expected input dim {self.in_dim}, got {xd.shape[-1]}")
        return add(matmul(x, self.W), self.b)


class Mlp:
    """Fully connected layers with ReLU between them (and after the last if asked)."""

    def __init__(self, dims: Sequence[int], rng, name: str, store, final_relu: bool = False,
                 out_gain: float = 1.0):
        if len(dims) < 2:
            raise ValueError("an MLP needs at least input and output dims")
        self.dims = tuple(dims)
        self.final_relu = final_relu
        last = len(dims) - 2
        self.layers = [
            Linear(a, b, rng, f"{name}.{i}", store, gain=out_gain if i == last else 1.0)
            for i, (a, b) in enumerate(zip(dims, dims[1:]))
        ]

    def __call__(self, x) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1 or self.final_relu:
                x = relu(x)
        return x


class ContinuousConv:
    """``out_i = sum_j kernel(p_j - p_i) * h_j`` with an elementwise kernel.

    Missing neighbors are marked with index -1 and contribute nothing.
    """

    def __init__(self, kernel_dims: Sequence[int], rng, name: str, store):
        self.kernel = Mlp(kernel_dims, rng, f"{name}.kernel", store)
        self.out_dim = kernel_dims[-1]

    def __call__(self, displacements: np.ndarray, features, neighbor_ids: np.ndarray) -> Tensor:
        """``displacements`` (n, k, 3), ``features`` rows to gather, ``neighbor_ids`` (n, k)."""
        ids = np.asarray(neighbor_ids, dtype=np.int64)
        n, k = ids.shape
        if k == 0 or n == 0:
            return Tensor(np.zeros((n, self.out_dim)))
        h = take_rows(features, ids)
        if h.data.shape[-1] != self.out_dim:
            raise ValueError(f"neighbor features have dim {h.data.shape[-1]}, kernel emits {self.out_dim}")
        w = reshape(self.kernel(np.asarray(displacements).reshape(n * k, 3)), (n, k, self.out_dim))
        return sum_axis(mul(w, h), axis=1)


class DeepSetAggregation:
    """``g = h + f1([h, sum_c f2(g_c)])``, invariant to child order.

    The skip term makes the block an identity map when ``f1`` outputs zero,
    so a bottom-up pass starts out equal to the top-down features it refines.
    """

    def __init__(self, h_dim: int, g_dim: int, msg_dim: int, rng, name: str, store,
                 residual: bool = True, out_gain: float = 1.0):
        if residual and h_dim != g_dim:
            raise ValueError("residual aggregation needs h_dim == g_dim")
        self.f2 = Mlp((g_dim, msg_dim, msg_dim), rng, f"{name}.f2", store)
        self.f1 = Mlp((h_dim + msg_dim, g_dim, g_dim), rng, f"{name}.f1", store, out_gain=out_gain)
        self.msg_dim = msg_dim
        self.residual = residual

    def __call__(self, h, child_g: Optional[Tensor], child_parent: np.ndarray) -> Tensor:
        n = h.data.shape[0] if isinstance(h, Tensor) else len(h)
        if child_g is None or len(child_parent) == 0:
            msg = Tensor(np.zeros((n, self.msg_dim)))
        else:
            msg = segment_sum(self.f2(child_g), child_parent, n)
        out = self.f1(concat([h, msg], axis=1))
        return add(h, out) if self.residual else out
