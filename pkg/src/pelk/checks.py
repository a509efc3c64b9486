"""Finite-difference gradient checks and equivalence oracles used by the CLI."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List

import numpy as np

from . import conv
from .grid import build_grid
from .kernel import CompactKernel, PositionalEmbedding, expand, merge_reparam, posembed_bias


def rel_err(actual, expected) -> float:
    """Max-norm error relative to the max-norm of ``expected``."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = np.max(np.abs(expected)) if expected.size else 0.0
    diff = np.max(np.abs(actual - expected)) if expected.size else 0.0
    if scale == 0.0:
        return float(diff)
    return float(diff / scale)


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.error <= self.tol

    def row(self) -> list:
        return [self.name, f"{self.error:.3e}", f"{self.tol:.1e}",
                "PASS" if self.passed else "FAIL", self.detail]

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" {self.detail}" if self.detail else ""
        return f"{self.name},{self.error:.3e},{self.tol:.1e},{status}{extra}"


def _fd(loss: Callable[[], float], arr: np.ndarray, idx, eps: float) -> float:
    old = arr[idx]
    arr[idx] = old + eps
    up = loss()
    arr[idx] = old - eps
    down = loss()
    arr[idx] = old
    return (up - down) / (2 * eps)


def _sample(rng, shape, n) -> List[tuple]:
    flat = rng.choice(int(np.prod(shape)), size=min(n, int(np.prod(shape))), replace=False)
    return [np.unravel_index(i, shape) for i in flat]


def gradcheck(form: str = "peripheral", k: int = 13, central: int = 5, size: int = 12,
              channels: int = 2, seed: int = 0, n_coords: int = 50, eps: float = 1e-3,
              tol: float = 1e-4, stripe_n: int = 3) -> List[CheckResult]:
    """Central differences of ``<dY, forward>`` against the analytic backward, per argument."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((channels, size, size))
    dY = rng.standard_normal((channels, size, size))
    params: Dict[str, np.ndarray] = {"X": X}

    if form == "dense":
        params["W"] = rng.standard_normal((channels, k, k))
        fwd = lambda: conv.dw_forward(params["X"], params["W"])
        grads = dict(zip(("X", "W"), conv.dw_backward(X, params["W"], dY)))
    elif form == "stripe":
        if stripe_n % 2 == 0 or stripe_n > k:
            raise ValueError(f"stripe width must be odd and <= k, got {stripe_n}")
        params["W_v"] = rng.standard_normal((channels, k, stripe_n))
        params["W_h"] = rng.standard_normal((channels, stripe_n, k))
        fwd = lambda: conv.stripe_forward(params["X"], params["W_v"], params["W_h"])
        grads = dict(zip(("X", "W_v", "W_h"), conv.stripe_backward(X, params["W_v"], params["W_h"], dY)))
    elif form == "peripheral":
        if central < 1 or central % 2 == 0 or central > k:
            raise ValueError(f"central size must be odd and <= k, got {central}")
        grid = build_grid(k, (central - 1) // 2, 2)
        ck = CompactKernel(grid, rng.standard_normal((channels, grid.k_prime, grid.k_prime)))
        pe = PositionalEmbedding(rng.standard_normal((channels, k, k)))
        params["W_compact"], params["h"] = ck.weights, pe.h
        fwd = lambda: conv.peripheral_forward(params["X"], ck, pe)
        grads = dict(zip(("X", "W_compact", "h"), conv.peripheral_backward(X, ck, pe, dY)))
    else:
        raise ValueError(f"unknown form {form!r}")

    loss = lambda: float(np.sum(dY * fwd()))
    results = []
    for name, arr in params.items():
        coords = _sample(rng, arr.shape, n_coords)
        fd = np.array([_fd(loss, arr, c, eps) for c in coords])
        an = np.array([grads[name][c] for c in coords])
        results.append(CheckResult(f"{form}:d{name}", rel_err(fd, an), tol, f"n={len(coords)}"))
    return results


# equivalences -------------------------------------------------------------------

def check_sharing(seed: int, tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    k = int(rng.choice([5, 13, 33, 51]))
    r_c = int(rng.integers(0, min(3, (k - 1) // 2) + 1))
    size = int(rng.integers(8, 65))
    c = int(rng.integers(1, 4))
    grid = build_grid(k, r_c, 2)
    ck = CompactKernel.random(grid, c, seed=seed)
    X = rng.standard_normal((c, size, size))
    err = rel_err(conv.peripheral_forward(X, ck), conv.dw_forward(X, expand(ck)))
    return CheckResult("sharing", err, tol, f"k={k} r_c={r_c} hw={size}")


def check_posembed(seed: int, tol: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    c, k, size = 4, 13, 20
    X = rng.standard_normal((c, size, size))
    W = rng.standard_normal((c, k, k))
    pe = PositionalEmbedding(rng.standard_normal((c, k, k)))
    fast = conv.dw_forward(X, W) + posembed_bias(W, pe)[:, None, None]
    err = rel_err(fast, conv.dw_forward_posembed(X, W, pe))
    return CheckResult("posembed", err, tol, f"k={k}")


def check_reparam(seed: int, tol: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    c, K, ks, size = 2, 13, 5, 24
    X = rng.standard_normal((c, size, size))
    large = rng.standard_normal((c, K, K))
    small = rng.standard_normal((c, ks, ks))
    merged = conv.dw_forward(X, merge_reparam(large, small))
    err = rel_err(merged, conv.dw_forward(X, large) + conv.dw_forward(X, small))
    return CheckResult("reparam", err, tol, f"K={K} k_s={ks}")


def check_partial(seed: int, tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    c, k, size = 8, 13, 16
    spec = conv.ConvSpec.partial(c, k, fraction=Fraction(3, 8))
    g = spec.conv_channels
    X = rng.standard_normal((c, size, size)).astype(np.float32)
    ck = CompactKernel.random(spec.grid, g, seed=seed, dtype=np.float32)
    out = conv.partial_forward(X, spec, ck)
    identical = out[g:].tobytes() == X[g:].tobytes()
    err = rel_err(out[:g], conv.dw_forward(X[:g].astype(np.float64), expand(ck).astype(np.float64)))
    if not identical:
        err = float("inf")
    return CheckResult("partial", err, tol,
                       f"g={g} identity_channels={'bit-exact' if identical else 'MISMATCH'}")


EQUIV_CHECKS = {
    "sharing": check_sharing,
    "posembed": check_posembed,
    "reparam": check_reparam,
    "partial": check_partial,
}
