"""Compact kernels, expansion to full kernels, positional embeddings, re-param merge."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import truncnorm

from .grid import SharingGrid, partition


def _as_float(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype.kind != "f":
        a = a.astype(np.float32)
    return a


@dataclass
class CompactKernel:
    """Depthwise compact weights, one k' x k' filter per channel."""

    grid: SharingGrid
    weights: np.ndarray

    def __post_init__(self):
        self.weights = _as_float(self.weights)
        kp = self.grid.k_prime
        if self.weights.ndim != 3 or self.weights.shape[1:] != (kp, kp):
            raise ValueError(
                f"compact weights must have shape (channels, {kp}, {kp}), got {self.weights.shape}"
            )

    @property
    def channels(self) -> int:
        return self.weights.shape[0]

    @property
    def k(self) -> int:
        return self.grid.k

    @property
    def num_params(self) -> int:
        return self.weights.size

    @classmethod
    def random(cls, grid: SharingGrid, channels: int, seed: int = 0, std: float = 1.0,
               dtype=np.float64) -> "CompactKernel":
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, std, size=(channels, grid.k_prime, grid.k_prime)).astype(dtype)
        return cls(grid, w)


@dataclass
class PositionalEmbedding:
    """Kernel-wise additive table ``h`` of shape (channels, k, k).

    One instance is shared by every block of a stage.
    """

    h: np.ndarray

    def __post_init__(self):
        self.h = _as_float(self.h)
        if self.h.ndim != 3 or self.h.shape[1] != self.h.shape[2]:
            raise ValueError(f"positional embedding must be (channels, k, k), got {self.h.shape}")
        if self.h.shape[1] % 2 == 0:
            raise ValueError(f"positional embedding kernel size must be odd, got {self.h.shape[1]}")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("positional embedding contains non-finite values")

    @property
    def channels(self) -> int:
        return self.h.shape[0]

    @property
    def k(self) -> int:
        return self.h.shape[1]

    @classmethod
    def init(cls, channels: int, k: int, seed: int = 0, std: float = 0.02) -> "PositionalEmbedding":
        return cls(init_trunc_normal((channels, k, k), std=std, seed=seed))

    @classmethod
    def zeros(cls, channels: int, k: int, dtype=np.float32) -> "PositionalEmbedding":
        return cls(np.zeros((channels, k, k), dtype=dtype))


def expand(ck: CompactKernel) -> np.ndarray:
    """Full (channels, k, k) kernel where every cell of a region repeats its compact weight."""
    idx = partition(ck.grid).index
    return ck.weights[:, idx][:, :, idx]


def scatter_grad(dw_full, grid: SharingGrid) -> np.ndarray:
    """Adjoint of :func:`expand`: sum the full-kernel gradient over each region."""
    dw_full = _as_float(dw_full)
    if dw_full.ndim != 3 or dw_full.shape[1:] != (grid.k, grid.k):
        raise ValueError(f"gradient must have shape (channels, {grid.k}, {grid.k}), got {dw_full.shape}")
    starts = partition(grid).edges[:-1]
    acc = dw_full.astype(np.float64)
    acc = np.add.reduceat(acc, starts, axis=1)
    acc = np.add.reduceat(acc, starts, axis=2)
    return acc.astype(dw_full.dtype)


def init_trunc_normal(dims: Sequence[int], mean: float = 0.0, std: float = 0.02,
                      lo: Optional[float] = None, hi: Optional[float] = None,
                      seed: int = 0) -> np.ndarray:
    """f32 samples from N(mean, std) truncated to [lo, hi] (default mean +- 2 std)."""
    if std <= 0:
        raise ValueError(f"std must be positive, got {std}")
    lo = mean - 2 * std if lo is None else lo
    hi = mean + 2 * std if hi is None else hi
    if not lo < hi:
        raise ValueError(f"truncation bounds must satisfy lo < hi, got [{lo}, {hi}]")
    a, b = (lo - mean) / std, (hi - mean) / std
    rng = np.random.default_rng(seed)
    x = truncnorm.rvs(a, b, loc=mean, scale=std, size=tuple(dims), random_state=rng)
    return np.clip(x.astype(np.float32), np.float32(lo), np.float32(hi))


def merge_reparam(large, small) -> np.ndarray:
    """Fold a parallel small depthwise kernel into the center of a large one."""
    large, small = _as_float(large), _as_float(small)
    if large.ndim != 3 or small.ndim != 3 or large.shape[0] != small.shape[0]:
        raise ValueError(f"incompatible kernels {large.shape} and {small.shape}")
    K, ks = large.shape[-1], small.shape[-1]
    if large.shape[1] != K or small.shape[1] != ks:
        raise ValueError("kernels must be square")
    if K % 2 == 0 or ks % 2 == 0:
        raise ValueError(f"kernel sizes must be odd, got {K} and {ks}")
    if ks > K:
        raise ValueError(f"small kernel {ks} exceeds large kernel {K}")
    out = large.astype(np.result_type(large, small), copy=True)
    o = (K - ks) // 2
    out[:, o:o + ks, o:o + ks] += small
    return out


def posembed_bias(w_full, pe: PositionalEmbedding) -> np.ndarray:
    """Per-channel constant ``sum_ij w[c, i, j] * h[c, i, j]`` that the embedding adds to every output."""
    w_full = _as_float(w_full)
    if w_full.shape != pe.h.shape:
        raise ValueError(f"kernel shape {w_full.shape} does not match embedding {pe.h.shape}")
    bias = np.einsum("cij,cij->c", w_full.astype(np.float64), pe.h.astype(np.float64))
    return bias.astype(np.result_type(w_full, pe.h))
