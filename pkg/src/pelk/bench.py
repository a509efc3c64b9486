"""Wall-clock micro-benchmark for the depthwise conv forms."""

from __future__ import annotations

import statistics
import time

import numpy as np

from . import conv
from .grid import build_grid
from .kernel import CompactKernel

FIELDS = ("form", "k", "channels", "H", "W", "iters", "mean_ms", "stddev_ms")


def make_op(form: str, k: int, channels: int, H: int, W: int, seed: int = 0, stripe_n: int = 5):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((channels, H, W)).astype(np.float32)
    if form == "dense":
        Wt = rng.standard_normal((channels, k, k)).astype(np.float32)
        return lambda: conv.dw_forward(X, Wt)
    if form == "stripe":
        n = min(stripe_n, k)
        Wv = rng.standard_normal((channels, k, n)).astype(np.float32)
        Wh = rng.standard_normal((channels, n, k)).astype(np.float32)
        return lambda: conv.stripe_forward(X, Wv, Wh)
    if form == "peripheral":
        grid = build_grid(k, min(2, (k - 1) // 2), 2)
        ck = CompactKernel.random(grid, channels, seed=seed, dtype=np.float32)
        return lambda: conv.peripheral_forward(X, ck)
    raise ValueError(f"unknown form {form!r}")


def run(form: str, k: int, channels: int, H: int, W: int, iters: int = 10, warmup: int = 1,
        seed: int = 0) -> dict:
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    if channels < 1 or H < 1 or W < 1:
        raise ValueError(f"invalid problem size c={channels} hw={H}x{W}")
    if iters < 1:
        raise ValueError("iters must be positive")
    op = make_op(form, k, channels, H, W, seed)
    for _ in range(warmup):
        op()
    times = []
    for _ in range(iters):
        t0 = time.perf_counter()
        op()
        times.append((time.perf_counter() - t0) * 1e3)
    return {
        "form": form, "k": k, "channels": channels, "H": H, "W": W, "iters": iters,
        "mean_ms": statistics.fmean(times),
        "stddev_ms": statistics.stdev(times) if len(times) > 1 else 0.0,
    }
