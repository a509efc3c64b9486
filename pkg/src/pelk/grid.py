"""Sharing grids: partition a k x k kernel into k' x k' shared regions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class SharingGrid:
    """Symmetric partition schedule.

    ``half`` lists cell sizes from the outermost cell to the center cell;
    ``full`` is its mirror image, so ``sum(full) == k``.

    ``r_c`` and ``m`` record how a grid was built and take no part in
    equality: two grids with the same cell sizes are the same geometry.
    """

    k: int
    k_prime: int
    half: Tuple[int, ...]
    full: Tuple[int, ...]
    r_c: int = field(default=0, compare=False)
    m: int = field(default=2, compare=False)

    @property
    def center(self) -> int:
        return (self.k_prime - 1) // 2

    @property
    def edges(self) -> np.ndarray:
        """Cumulative cell boundaries, length k' + 1, from 0 to k."""
        return np.concatenate([[0], np.cumsum(self.full)])

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "k_prime": self.k_prime,
            "half": list(self.half),
            "r_c": self.r_c,
            "m": self.m,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SharingGrid":
        g = build_custom_grid(d["half"])
        if "k" in d and d["k"] != g.k:
            raise GridError(f"k={d['k']} does not match sum of cells {g.k}")
        if "k_prime" in d and d["k_prime"] != g.k_prime:
            raise GridError(f"k_prime={d['k_prime']} does not match {g.k_prime}")
        return SharingGrid(g.k, g.k_prime, g.half, g.full,
                           r_c=int(d.get("r_c", g.r_c)), m=int(d.get("m", g.m)))

    @classmethod
    def from_json(cls, text: str) -> "SharingGrid":
        return cls.from_dict(json.loads(text))


def _mirror(half: Sequence[int]) -> Tuple[int, ...]:
    half = tuple(half)
    return half + half[-2::-1]


def build_grid(k: int, r_c: int = 2, m: int = 2) -> SharingGrid:
    """Exponential sharing grid for a k x k kernel.

    Per side (excluding the center cell) the schedule is ``r_c`` ones, then
    m, m**2, ... while they fit in (k - 1) / 2, then whatever remains as the
    outermost cell. The outermost cell can be smaller than its neighbour.

    >>> build_grid(51, 2, 2).half
    (9, 8, 4, 2, 1, 1, 1)
    """
    if not isinstance(k, (int, np.integer)) or k < 1 or k % 2 == 0:
        raise GridError(f"kernel size must be a positive odd integer, got {k}")
    if r_c < 0:
        raise GridError(f"central radius must be non-negative, got {r_c}")
    if m < 2:
        raise GridError(f"exponential base must be >= 2, got {m}")
    if k < 2 * r_c + 1:
        raise GridError(f"kernel size {k} is smaller than the central region {2 * r_c + 1}")

    radius = (k - 1) // 2
    side: List[int] = [1] * r_c
    total = r_c
    p = m
    while total + p <= radius:
        side.append(p)
        total += p
        p *= m
    if radius - total > 0:
        side.append(radius - total)

    half = tuple(reversed(side)) + (1,)
    full = _mirror(half)
    return SharingGrid(k=int(k), k_prime=len(full), half=half, full=full, r_c=int(r_c), m=int(m))


def build_custom_grid(half: Sequence[int]) -> SharingGrid:
    """Grid from an explicit half schedule (outermost first, center last).

    Only symmetry and tiling are enforced. ``r_c`` is taken as the run of
    ones next to the center.
    """
    half = tuple(int(s) for s in half)
    if not half:
        raise GridError("sharing grid must not be empty")
    if any(s < 1 for s in half):
        raise GridError(f"grid cells must be positive, got {list(half)}")
    full = _mirror(half)
    ones = 0
    for s in reversed(half):
        if s != 1:
            break
        ones += 1
    r_c = max(ones - 1, 0)
    return SharingGrid(k=sum(full), k_prime=len(full), half=half, full=full, r_c=r_c, m=2)


def parse_half(text: str) -> SharingGrid:
    try:
        cells = [int(tok) for tok in text.replace(" ", "").strip("[]").split(",") if tok]
    except ValueError as exc:
        raise GridError(f"cannot parse grid {text!r}") from exc
    return build_custom_grid(cells)


@dataclass(frozen=True)
class RegionPartition:
    """Region map of a grid: ``index[x]`` is the compact row/column of x."""

    k: int
    k_prime: int
    index: np.ndarray
    edges: np.ndarray

    def region_of(self, x: int, y: int) -> Tuple[int, int]:
        if not (0 <= x < self.k and 0 <= y < self.k):
            raise IndexError(f"position ({x}, {y}) outside a {self.k}x{self.k} kernel")
        return int(self.index[x]), int(self.index[y])

    def bounds(self, a: int, b: int) -> Tuple[int, int, int, int]:
        """Half-open rectangle ``(x_lo, x_hi, y_lo, y_hi)`` owned by region (a, b)."""
        e = self.edges
        return int(e[a]), int(e[a + 1]), int(e[b]), int(e[b + 1])

    def size(self, a: int, b: int) -> int:
        x0, x1, y0, y1 = self.bounds(a, b)
        return (x1 - x0) * (y1 - y0)


def partition(grid: SharingGrid) -> RegionPartition:
    edges = grid.edges
    index = np.repeat(np.arange(grid.k_prime), grid.full)
    if index.size != grid.k:
        raise GridError("grid cells do not tile the kernel")
    index.setflags(write=False)
    edges.setflags(write=False)
    return RegionPartition(k=grid.k, k_prime=grid.k_prime, index=index, edges=edges)


def param_ratio(grid: SharingGrid) -> Fraction:
    return Fraction(grid.k_prime ** 2, grid.k ** 2)


def central_ratio(grid: SharingGrid) -> Fraction:
    return Fraction((2 * grid.r_c + 1) ** 2, grid.k ** 2)


def is_standard(grid: SharingGrid) -> bool:
    """True if ``grid`` satisfies the exponential-schedule invariants."""
    half = grid.half
    if half[-1] != 1 or len(half) < grid.r_c + 1:
        return False
    if any(s != 1 for s in half[len(half) - 1 - grid.r_c:]):
        return False
    peripheral = list(reversed(half[: len(half) - 1 - grid.r_c]))
    # outermost cell holds the remainder
    return all(s == grid.m ** (i + 1) for i, s in enumerate(peripheral[:-1]))
