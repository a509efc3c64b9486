"""Effective receptive field: input-gradient contribution maps and area ratios.

Contribution is ``|d(sum_c Y[c, center]) / dX|`` summed over input channels
and accumulated over random input samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf as _erf

from . import conv
from .arch import ArchConfig
from .grid import SharingGrid, build_grid
from .kernel import CompactKernel, PositionalEmbedding


@dataclass
class ContributionMap:
    scores: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2 or self.scores.shape[0] != self.scores.shape[1]:
            raise ValueError(f"contribution map must be square, got {self.scores.shape}")
        if np.any(self.scores < 0) or not np.all(np.isfinite(self.scores)):
            raise ValueError("contribution scores must be finite and non-negative")

    @property
    def side(self) -> int:
        return self.scores.shape[0]

    def support(self, rtol: float = 1e-12) -> np.ndarray:
        """Cells above ``rtol`` times the peak; filters summed-area round-off."""
        peak = float(self.scores.max(initial=0.0))
        return self.scores > rtol * peak


# probe network layers --------------------------------------------------------
# Each layer has forward(x) -> (y, cache) and backward(cache, dy) -> dx.

@dataclass
class DenseConv:
    weight: np.ndarray

    def forward(self, x):
        return conv.dw_forward(x, self.weight), None

    def backward(self, cache, dy):
        # input gradient does not depend on x
        return conv._correlate(dy, conv._flip(self.weight))


@dataclass
class StripeConv:
    w_v: np.ndarray
    w_h: np.ndarray

    def forward(self, x):
        return conv.stripe_forward(x, self.w_v, self.w_h), None

    def backward(self, cache, dy):
        return conv._correlate(dy, conv._flip(self.w_v)) + conv._correlate(dy, conv._flip(self.w_h))


@dataclass
class PeripheralConv:
    kernel: CompactKernel
    pe: Optional[PositionalEmbedding] = None

    def forward(self, x):
        return conv.peripheral_forward(x, self.kernel, self.pe), None

    def backward(self, cache, dy):
        return conv._peripheral_correlate(dy, conv._flip(self.kernel.weights), self.kernel.grid)


@dataclass
class Patchify:
    """Depthwise non-overlapping s x s conv with stride s (stem / downsampler)."""

    weight: np.ndarray  # (c, s, s)

    @property
    def stride(self) -> int:
        return self.weight.shape[-1]

    def forward(self, x):
        c, H, W = x.shape
        s = self.stride
        h, w = H // s, W // s
        if h < 1 or w < 1:
            raise ValueError(f"input {H}x{W} too small for stride {s}")
        blocks = x[:, :h * s, :w * s].reshape(c, h, s, w, s)
        return np.einsum("chiwj,cij->chw", blocks, self.weight), (H, W)

    def backward(self, cache, dy):
        H, W = cache
        c, h, w = dy.shape
        s = self.stride
        dx = np.zeros((c, H, W))
        dx[:, :h * s, :w * s] = np.einsum("chw,cij->chiwj", dy, self.weight).reshape(c, h * s, w * s)
        return dx


def _gelu(x):
    return 0.5 * x * (1.0 + _erf(x / np.sqrt(2.0)))


def _gelu_grad(x):
    return 0.5 * (1.0 + _erf(x / np.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


@dataclass
class Residual:
    """``x + gelu(layer(x))`` applied to the first ``g`` channels only; the rest pass through."""

    layer: object
    g: int

    def forward(self, x):
        pre, inner = self.layer.forward(x[:self.g])
        y = x.copy()
        y[:self.g] = x[:self.g] + _gelu(pre)
        return y, (pre, inner)

    def backward(self, cache, dy):
        pre, inner = cache
        dx = dy.copy()
        dx[:self.g] += self.layer.backward(inner, dy[:self.g] * _gelu_grad(pre))
        return dx


@dataclass
class ProbeNet:
    layers: List[object]
    channels: int
    stride: int = 1

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def input_grad(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the channel-summed central output with respect to ``x``."""
        y, caches = self.forward(np.asarray(x, dtype=np.float64))
        dy = np.zeros_like(y)
        dy[:, y.shape[1] // 2, y.shape[2] // 2] = 1.0
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(cache, dy)
        return dy


def _conv_layer(form: str, g: int, k: int, rng: np.random.Generator, *, stripe_n: int = 5,
                grid: Optional[SharingGrid] = None, pe: Optional[PositionalEmbedding] = None):
    if form == "dense":
        return DenseConv(rng.normal(0.0, 1.0 / k, size=(g, k, k)))
    if form == "stripe":
        std = 1.0 / np.sqrt(2 * k * stripe_n)
        return StripeConv(rng.normal(0.0, std, size=(g, k, stripe_n)),
                          rng.normal(0.0, std, size=(g, stripe_n, k)))
    if form == "peripheral":
        grid = grid or build_grid(k, 2, 2)
        w = rng.normal(0.0, 1.0 / k, size=(g, grid.k_prime, grid.k_prime))
        return PeripheralConv(CompactKernel(grid, w), pe)
    raise ValueError(f"unknown conv form {form!r}")


def single_layer_net(form: str, k: int, channels: int = 1, seed: int = 0, depth: int = 1,
                     r_c: int = 2) -> ProbeNet:
    """Stack of ``depth`` plain conv layers of one form, no stem, no nonlinearity."""
    rng = np.random.default_rng(seed)
    grid = build_grid(k, min(r_c, (k - 1) // 2), 2) if form == "peripheral" else None
    layers = [_conv_layer(form, channels, k, rng, grid=grid) for _ in range(depth)]
    return ProbeNet(layers, channels=channels)


def build_probe(cfg: ArchConfig, channels: int = 4, seed: int = 0,
                depth_scale: float = 1.0) -> ProbeNet:
    """Randomly initialised probe network with the spatial layout of ``cfg``.

    Width is reduced to ``channels`` (pointwise layers are omitted); stem,
    downsamplers, per-stage kernels, form, partial channels and one shared
    positional embedding per stage follow the config.
    """
    if channels < 1:
        raise ValueError("channels must be positive")
    rng = np.random.default_rng(seed)
    g = max(1, int(cfg.partial_fraction * channels))
    layers: List[object] = [Patchify(rng.normal(0.0, 0.25, size=(channels, 4, 4)))]
    for s in range(4):
        if s > 0:
            layers.append(Patchify(rng.normal(0.0, 0.5, size=(channels, 2, 2))))
        k = cfg.kernels[s]
        grid = cfg.grid(s) if cfg.form == "peripheral" else None
        pe = None
        if cfg.form == "peripheral" and cfg.posembed_per_stage:
            pe = PositionalEmbedding.init(g, k, seed=int(rng.integers(2**31)))
        depth = max(1, round(cfg.depths[s] * depth_scale))
        for _ in range(depth):
            layer = _conv_layer(cfg.form, g, k, rng, stripe_n=cfg.stripe_n, grid=grid, pe=pe)
            layers.append(Residual(layer, g))
    return ProbeNet(layers, channels=channels, stride=32)


def contribution_map(model: Union[ArchConfig, ProbeNet], seed: int = 0, n_samples: int = 1,
                     side: int = 64, channels: int = 4) -> ContributionMap:
    """Accumulated absolute input gradient of the central output over random inputs."""
    net = build_probe(model, channels=channels, seed=seed) if isinstance(model, ArchConfig) else model
    if side < 1 or side % min(net.stride, 4) != 0 or side < net.stride:
        raise ValueError(f"side {side} must be a multiple of the stem stride and at least {net.stride}")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed + 1)
    acc = np.zeros((side, side))
    for _ in range(n_samples):
        x = rng.standard_normal((net.channels, side, side))
        acc += np.abs(net.input_grad(x)).sum(axis=0)
    return ContributionMap(acc)


# area ratio ---------------------------------------------------------------------

_TIE = 1e-9


def _ring_mass(scores: np.ndarray) -> np.ndarray:
    side = scores.shape[0]
    c = side // 2
    idx = np.abs(np.arange(side) - c)
    ring = np.maximum(idx[:, None], idx[None, :])
    return np.bincount(ring.ravel(), weights=scores.ravel())


def square_side(cmap: ContributionMap, t: float) -> int:
    """Smallest odd R such that the centered R x R square holds at least ``t`` of the mass.

    The square is clipped at the map border, so R never exceeds the side.
    """
    if not 0 < t <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {t}")
    mass = _ring_mass(cmap.scores)
    total = mass.sum()
    if total <= 0:
        raise ValueError("contribution map has no mass")
    cum = np.cumsum(mass)
    # relative slack so exact ties survive rescaling
    rho = int(np.searchsorted(cum, t * total * (1 - _TIE), side="left"))
    rho = min(rho, mass.size - 1)
    return min(2 * rho + 1, cmap.side)


def area_ratio(cmap: ContributionMap, t: float) -> float:
    return (square_side(cmap, t) / cmap.side) ** 2


def ratio_table(cmap: ContributionMap, thresholds: Sequence[float]) -> List[Tuple[float, int, float]]:
    return [(t, square_side(cmap, t), area_ratio(cmap, t)) for t in thresholds]
