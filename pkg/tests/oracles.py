"""Brute-force reference implementations used only by the tests.

Nothing here calls into the code paths under test.
"""

import math

import numpy as np


def region_sizes_from_half(half):
    half = list(half)
    return half + half[-2::-1]


def cumulative_region_of(full, x, y):
    """Region index by walking cumulative sums, straight from the partition definition."""
    def locate(p):
        lo = 0
        for a, s in enumerate(full):
            if lo <= p < lo + s:
                return a
            lo += s
        raise IndexError(p)
    return locate(x), locate(y)


def expand_loop(weights, full):
    """Full kernel built cell by cell with a double loop over region bounds."""
    c, kp, _ = weights.shape
    k = sum(full)
    out = np.zeros((c, k, k), dtype=np.float64)
    edges = [0]
    for s in full:
        edges.append(edges[-1] + s)
    for a in range(kp):
        for b in range(kp):
            for x in range(edges[a], edges[a + 1]):
                for y in range(edges[b], edges[b + 1]):
                    out[:, x, y] = weights[:, a, b]
    return out


def conv_loop(X, W):
    """Depthwise same-padded cross-correlation with explicit loops (rectangular kernels)."""
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    c, H, Wd = X.shape
    _, kh, kw = W.shape
    rh, rw = kh // 2, kw // 2
    Y = np.zeros((c, H, Wd))
    for ch in range(c):
        for x in range(H):
            for y in range(Wd):
                acc = 0.0
                for i in range(kh):
                    xi = x + i - rh
                    if xi < 0 or xi >= H:
                        continue
                    for j in range(kw):
                        yj = y + j - rw
                        if 0 <= yj < Wd:
                            acc += W[ch, i, j] * X[ch, xi, yj]
                Y[ch, x, y] = acc
    return Y


def conv_vec_loop(X, W):
    """Same definition, vectorised over pixels only: one shifted copy per tap."""
    X = np.asarray(X, dtype=np.float64)
    c, H, Wd = X.shape
    _, kh, kw = W.shape
    Y = np.zeros((c, H, Wd))
    for i in range(kh):
        for j in range(kw):
            di, dj = i - kh // 2, j - kw // 2
            if abs(di) >= H or abs(dj) >= Wd:
                continue  # tap only ever sees padding
            shifted = np.zeros_like(X)
            xs = slice(max(0, -di), min(H, H - di))
            ys = slice(max(0, -dj), min(Wd, Wd - dj))
            xs_src = slice(max(0, di), min(H, H + di))
            ys_src = slice(max(0, dj), min(Wd, Wd + dj))
            shifted[:, xs, ys] = X[:, xs_src, ys_src]
            Y += W[:, i, j, None, None] * shifted
    return Y


def central_difference(f, arr, idx, eps=1e-3):
    old = arr[idx]
    arr[idx] = old + eps
    up = f()
    arr[idx] = old - eps
    down = f()
    arr[idx] = old
    return (up - down) / (2 * eps)


def max_rel(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def truncnorm_std_factor(a, b):
    """Std of a standard normal truncated to [a, b], from the closed-form moments."""
    pdf = lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
    cdf = lambda z: 0.5 * (1 + math.erf(z / math.sqrt(2)))
    Z = cdf(b) - cdf(a)
    mean = (pdf(a) - pdf(b)) / Z
    var = 1 + (a * pdf(a) - b * pdf(b)) / Z - mean ** 2
    return math.sqrt(var)
