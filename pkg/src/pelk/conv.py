"""Depthwise 2-D convolution: dense, stripe and peripheral forms.

All ops use stride 1, "same" zero padding and cross-correlation orientation:
``Y[c, x, y] = sum_ij W[c, i, j] * X[c, x + i - r, y + j - r]``.
Accumulation is f64; outputs take the promoted input dtype.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .grid import SharingGrid, build_grid
from .kernel import CompactKernel, PositionalEmbedding, expand, posembed_bias, scatter_grad

DEFAULT_PARTIAL = Fraction(3, 8)


def num_threads() -> int:
    try:
        return max(1, int(os.environ.get("PELK_THREADS", "1")))
    except ValueError:
        return 1


def _out_dtype(*arrays) -> np.dtype:
    return np.result_type(np.float32, *arrays)


def _check_input(X) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 3:
        raise ValueError(f"input must be (channels, H, W), got shape {X.shape}")
    return X


def _check_kernel(X: np.ndarray, W, square: bool = True) -> np.ndarray:
    W = np.asarray(W)
    if W.ndim != 3 or W.shape[0] != X.shape[0]:
        raise ValueError(f"kernel shape {W.shape} does not match input channels {X.shape[0]}")
    kh, kw = W.shape[1:]
    if square and kh != kw:
        raise ValueError(f"kernel must be square, got {kh}x{kw}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel sizes must be odd, got {kh}x{kw}")
    return W


def _pad(X: np.ndarray, ph: int, pw: int) -> np.ndarray:
    return np.pad(X.astype(np.float64), ((0, 0), (ph, ph), (pw, pw)))


def _over_channels(fn, c: int) -> np.ndarray:
    """Run ``fn(channel_slice)`` over channel chunks, threaded if PELK_THREADS > 1.

    Each channel is computed identically regardless of chunking, so results
    are bitwise independent of the thread count.
    """
    n = min(num_threads(), c)
    if n <= 1:
        return fn(slice(0, c))
    bounds = np.linspace(0, c, n + 1).astype(int)
    chunks = [slice(bounds[i], bounds[i + 1]) for i in range(n)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        parts = list(pool.map(fn, chunks))
    return np.concatenate(parts, axis=0)


def _correlate(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Same-padded depthwise correlation with a (c, kh, kw) kernel, f64 result."""
    _, H, Wd = X.shape
    kh, kw = W.shape[1:]
    Xp = _pad(X, kh // 2, kw // 2)
    W64 = W.astype(np.float64)

    def run(cs: slice) -> np.ndarray:
        xp, w = Xp[cs], W64[cs]
        out = np.zeros((xp.shape[0], H, Wd))
        for i in range(kh):
            for j in range(kw):
                out += w[:, i, j, None, None] * xp[:, i:i + H, j:j + Wd]
        return out

    return _over_channels(run, X.shape[0])


def _kernel_grad(X: np.ndarray, dY: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """``dW[c, i, j] = sum_xy dY[c, x, y] * Xpad[c, x + i, y + j]`` in f64."""
    _, H, Wd = X.shape
    Xp = _pad(X, kh // 2, kw // 2)
    g = dY.astype(np.float64)
    dW = np.empty((X.shape[0], kh, kw))
    for i in range(kh):
        win = sliding_window_view(Xp[:, i:i + H, :], Wd, axis=2)  # (c, H, kw, W)
        dW[:, i, :] = np.einsum("chjw,chw->cj", win, g)
    return dW


def _flip(W: np.ndarray) -> np.ndarray:
    return W[:, ::-1, ::-1]


# dense ---------------------------------------------------------------------

def dw_forward(X, W) -> np.ndarray:
    X = _check_input(X)
    W = _check_kernel(X, W)
    return _correlate(X, W).astype(_out_dtype(X, W))


def dw_forward_posembed(X, W, pe: PositionalEmbedding) -> np.ndarray:
    """Literal per-tap evaluation of ``sum w(i, j) * (X(x+i, y+j) + h(i, j))``.

    ``h`` is added to every tap, including taps that land in the zero padding.
    Kept as the reference for the cheaper bias path.
    """
    X = _check_input(X)
    W = _check_kernel(X, W)
    if pe.h.shape != W.shape:
        raise ValueError(f"embedding shape {pe.h.shape} does not match kernel {W.shape}")
    c, H, Wd = X.shape
    k = W.shape[-1]
    Xp = _pad(X, k // 2, k // 2)
    W64, h = W.astype(np.float64), pe.h.astype(np.float64)
    out = np.zeros((c, H, Wd))
    for i in range(k):
        for j in range(k):
            out += W64[:, i, j, None, None] * (Xp[:, i:i + H, j:j + Wd] + h[:, i, j, None, None])
    return out.astype(_out_dtype(X, W, pe.h))


def dw_backward(X, W, dY) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of ``<dY, dw_forward(X, W)>`` with respect to X and W."""
    X = _check_input(X)
    W = _check_kernel(X, W)
    dY = np.asarray(dY)
    if dY.shape != X.shape:
        raise ValueError(f"output gradient shape {dY.shape} does not match input {X.shape}")
    k = W.shape[-1]
    dt = _out_dtype(X, W, dY)
    dX = _correlate(dY, _flip(W))
    dW = _kernel_grad(X, dY, k, k)
    return dX.astype(dt), dW.astype(dt)


# stripe --------------------------------------------------------------------

def _check_stripe(X, W_v, W_h):
    X = _check_input(X)
    W_v = _check_kernel(X, W_v, square=False)
    W_h = _check_kernel(X, W_h, square=False)
    if W_v.shape[1:] != W_h.shape[2:0:-1]:
        raise ValueError(f"stripe kernels must be KxN and NxK, got {W_v.shape[1:]} and {W_h.shape[1:]}")
    return X, W_v, W_h


def stripe_forward(X, W_v, W_h) -> np.ndarray:
    """Sum of a K x N and an N x K same-padded depthwise correlation."""
    X, W_v, W_h = _check_stripe(X, W_v, W_h)
    return (_correlate(X, W_v) + _correlate(X, W_h)).astype(_out_dtype(X, W_v, W_h))


def stripe_backward(X, W_v, W_h, dY) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    X, W_v, W_h = _check_stripe(X, W_v, W_h)
    dY = np.asarray(dY)
    if dY.shape != X.shape:
        raise ValueError(f"output gradient shape {dY.shape} does not match input {X.shape}")
    dt = _out_dtype(X, W_v, W_h, dY)
    dX = _correlate(dY, _flip(W_v)) + _correlate(dY, _flip(W_h))
    dWv = _kernel_grad(X, dY, *W_v.shape[1:])
    dWh = _kernel_grad(X, dY, *W_h.shape[1:])
    return dX.astype(dt), dWv.astype(dt), dWh.astype(dt)


# peripheral ----------------------------------------------------------------

def _integral(X: np.ndarray, r: int) -> np.ndarray:
    """Summed-area table of the zero-padded input with a leading zero row/column."""
    Xp = _pad(X, r, r)
    S = np.zeros((Xp.shape[0], Xp.shape[1] + 1, Xp.shape[2] + 1))
    np.cumsum(np.cumsum(Xp, axis=1), axis=2, out=S[:, 1:, 1:])
    return S


def _corner_weights(w: np.ndarray) -> np.ndarray:
    """2-D finite difference of the compact weights, shape (c, k'+1, k'+1).

    A region-constant kernel is a sum of boxes; each box sum is four corners of
    the integral image, so coefficients at shared corners combine.
    """
    z = np.pad(w, ((0, 0), (1, 1), (1, 1)))
    return z[:, :-1, :-1] - z[:, 1:, :-1] - z[:, :-1, 1:] + z[:, 1:, 1:]


def _peripheral_correlate(X: np.ndarray, weights: np.ndarray, grid: SharingGrid) -> np.ndarray:
    _, H, Wd = X.shape
    S = _integral(X, (grid.k - 1) // 2)
    coef = _corner_weights(weights.astype(np.float64))
    e = grid.edges

    def run(cs: slice) -> np.ndarray:
        s, cf = S[cs], coef[cs]
        out = np.zeros((s.shape[0], H, Wd))
        for a, ea in enumerate(e):
            for b, eb in enumerate(e):
                out += cf[:, a, b, None, None] * s[:, ea:ea + H, eb:eb + Wd]
        return out

    return _over_channels(run, X.shape[0])


def _check_compact(X: np.ndarray, ck: CompactKernel, pe: Optional[PositionalEmbedding]):
    if ck.channels != X.shape[0]:
        raise ValueError(f"kernel has {ck.channels} channels, input has {X.shape[0]}")
    if pe is not None and pe.h.shape != (ck.channels, ck.k, ck.k):
        raise ValueError(f"embedding shape {pe.h.shape} does not match kernel ({ck.channels}, {ck.k}, {ck.k})")


def peripheral_forward(X, ck: CompactKernel, pe: Optional[PositionalEmbedding] = None) -> np.ndarray:
    """Peripheral depthwise conv evaluated directly from the compact weights.

    Works in O(k'^2) per output pixel through box sums; the optional embedding
    enters as the precomputed per-channel bias.
    """
    X = _check_input(X)
    _check_compact(X, ck, pe)
    out = _peripheral_correlate(X, ck.weights, ck.grid)
    arrays = [X, ck.weights]
    if pe is not None:
        out += posembed_bias(expand(ck).astype(np.float64), pe).astype(np.float64)[:, None, None]
        arrays.append(pe.h)
    return out.astype(_out_dtype(*arrays))


def peripheral_backward(X, ck: CompactKernel, pe: Optional[PositionalEmbedding], dY
                        ) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Gradients ``(dX, dW_compact, dh)``; ``dh`` is None without an embedding."""
    X = _check_input(X)
    _check_compact(X, ck, pe)
    dY = np.asarray(dY)
    if dY.shape != X.shape:
        raise ValueError(f"output gradient shape {dY.shape} does not match input {X.shape}")
    grid = ck.grid
    _, H, Wd = X.shape
    dt = _out_dtype(X, ck.weights, dY, *([pe.h] if pe is not None else []))

    # a palindromic grid keeps the flipped kernel region-constant
    dX = _peripheral_correlate(dY, _flip(ck.weights), grid)

    S = _integral(X, (grid.k - 1) // 2)
    g = dY.astype(np.float64)
    e = grid.edges
    corner = np.empty((X.shape[0], e.size, e.size))
    for a, ea in enumerate(e):
        for b, eb in enumerate(e):
            corner[:, a, b] = np.einsum("chw,chw->c", S[:, ea:ea + H, eb:eb + Wd], g)
    dWc = corner[:, 1:, 1:] - corner[:, :-1, 1:] - corner[:, 1:, :-1] + corner[:, :-1, :-1]

    dh = None
    if pe is not None:
        total = g.sum(axis=(1, 2))
        dWc += scatter_grad(pe.h.astype(np.float64), grid) * total[:, None, None]
        dh = (expand(ck).astype(np.float64) * total[:, None, None]).astype(dt)
    return dX.astype(dt), dWc.astype(dt), dh


# partial -------------------------------------------------------------------

@dataclass(frozen=True)
class ConvSpec:
    """Depthwise conv configuration; stride 1, same zero padding, no dilation."""

    form: str
    channels: int
    k: int
    stripe_n: int = 5
    grid: Optional[SharingGrid] = None
    partial_fraction: Fraction = Fraction(1)

    def __post_init__(self):
        if self.form not in ("dense", "stripe", "peripheral"):
            raise ValueError(f"unknown conv form {self.form!r}")
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {self.k}")
        if self.form == "stripe" and (self.stripe_n < 1 or self.stripe_n % 2 == 0):
            raise ValueError(f"stripe width must be odd, got {self.stripe_n}")
        frac = Fraction(self.partial_fraction)
        if not 0 < frac <= 1:
            raise ValueError(f"partial fraction must be in (0, 1], got {frac}")
        object.__setattr__(self, "partial_fraction", frac)
        if self.form == "peripheral" and self.grid is None:
            object.__setattr__(self, "grid", build_grid(self.k, 2, 2))
        if self.grid is not None and self.grid.k != self.k:
            raise ValueError(f"grid covers k={self.grid.k}, spec has k={self.k}")
        if self.conv_channels < 1:
            raise ValueError(f"partial fraction {frac} of {self.channels} channels leaves no conv channels")

    @property
    def conv_channels(self) -> int:
        return int(self.partial_fraction * self.channels)  # floor for positive fractions

    @classmethod
    def partial(cls, channels: int, k: int, grid: Optional[SharingGrid] = None,
                fraction=DEFAULT_PARTIAL) -> "ConvSpec":
        return cls("peripheral", channels, k, grid=grid, partial_fraction=Fraction(fraction))


def partial_forward(X, spec: ConvSpec, ck: CompactKernel,
                    pe: Optional[PositionalEmbedding] = None) -> np.ndarray:
    """Convolve the first ``g`` channels, pass the rest through untouched."""
    X = _check_input(X)
    if X.shape[0] != spec.channels:
        raise ValueError(f"input has {X.shape[0]} channels, spec expects {spec.channels}")
    g = spec.conv_channels
    if ck.channels != g:
        raise ValueError(f"compact kernel has {ck.channels} channels, conv branch needs {g}")
    out = X.copy()
    out[:g] = peripheral_forward(X[:g], ck, pe).astype(X.dtype)
    return out
