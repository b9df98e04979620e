"""Multiscale structural complexity of a frame.

A frame is repeatedly coarse-grained by replacing each G x G block with its
arithmetic mean, producing a pyramid of grids.  The overlap between two
pyramid levels is the normalised inner product of the two grids after each
has been replicated back to the original resolution.  The complexity at
scale n is the absolute mismatch between the cross-scale overlap and the
average of the two same-scale overlaps, and the total complexity is the sum
over scales.

Because coarse-graining is a block mean, the cross-scale overlap O(n+1, n)
collapses to the same-scale overlap O(n+1, n+1): replicating the coarser
grid over a block and summing it against the finer grid reproduces the
coarser grid's own mean square.  ``spatial_complexity`` exploits this to
work from per-level mean squares; ``overlap`` always evaluates the
replicated inner product so the identity stays observable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, RangeError

DEFAULT_BLOCK = 2


def _as_square_grid(pixels) -> np.ndarray:
    grid = np.asarray(pixels, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise DimensionError(f"expected a square 2-D grid, got shape {grid.shape}")
    return grid


@dataclass(frozen=True)
class Frame:
    """A square grid of pixel values in [-1, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        grid = _as_square_grid(self.pixels)
        if not np.all(np.isfinite(grid)):
            raise RangeError("frame contains non-finite pixels")
        if grid.min() < -1.0 - 1e-12 or grid.max() > 1.0 + 1e-12:
            raise RangeError("frame pixels must lie in [-1, 1]")
        object.__setattr__(self, "pixels", grid)

    @property
    def side(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_bytes(cls, buf: bytes, side: int) -> "Frame":
        """Build a frame from a row-major 8-bit grayscale buffer.

        Byte values are mapped affinely onto [-1, 1] (v / 127.5 - 1), so a
        mid-gray 127.5 would sit at zero and the mapping is symmetric.
        """
        raw = np.frombuffer(buf, dtype=np.uint8)
        if raw.size != side * side:
            raise DimensionError(
                f"buffer holds {raw.size} bytes, expected {side * side}"
            )
        grid = raw.astype(np.float64).reshape(side, side) / 127.5 - 1.0
        return cls(grid)

    @classmethod
    def from_array(cls, pixels, block: int = DEFAULT_BLOCK) -> "Frame":
        """Center-crop an arbitrary grid to the largest block-power square."""
        return cls(center_crop(pixels, block))


def center_crop(pixels, G: int = DEFAULT_BLOCK) -> np.ndarray:
    """Center-crop a grid to the largest square whose side is a power of G.

    Non-square and non-divisible inputs are reduced symmetrically; at least
    one full coarse-graining step must remain possible.
    """
    grid = np.asarray(pixels, dtype=np.float64)
    if grid.ndim != 2:
        raise DimensionError(f"expected a 2-D grid, got ndim={grid.ndim}")
    if G < 2:
        raise DimensionError("block size must be >= 2")
    short = min(grid.shape)
    if short < G:
        raise DimensionError(f"grid side {short} smaller than block size {G}")
    side = G ** int(np.floor(np.log(short) / np.log(G) + 1e-12))
    r0 = (grid.shape[0] - side) // 2
    c0 = (grid.shape[1] - side) // 2
    return grid[r0:r0 + side, c0:c0 + side].copy()


def max_depth(side: int, G: int = DEFAULT_BLOCK) -> int:
    """Number of coarse-graining steps that reduce ``side`` to one pixel."""
    n = 0
    while side % G == 0 and side > 1:
        side //= G
        n += 1
    return n


@dataclass(frozen=True)
class ScalePyramid:
    """Stack of grids produced by repeated G x G block averaging."""

    levels: list = field(repr=False)
    block_size: int
    depth: int

    def level_side(self, n: int) -> int:
        return self.levels[n].shape[0]

    def _check_level(self, n: int) -> None:
        if not 0 <= n <= self.depth:
            raise IndexError(f"level {n} outside [0, {self.depth}]")


@dataclass(frozen=True)
class ComplexityReport:
    """Per-scale complexities, their sum, and the overlaps they came from."""

    per_scale: list
    total: float
    overlaps: np.ndarray = field(repr=False)


def _block_mean(grid: np.ndarray, G: int) -> np.ndarray:
    side = grid.shape[0]
    return grid.reshape(side // G, G, side // G, G).mean(axis=(1, 3))


def build_pyramid(frame: Frame, G: int = DEFAULT_BLOCK, N: int | None = None) -> ScalePyramid:
    """Coarse-grain ``frame`` N times with G x G block means.

    ``N`` defaults to the full depth (down to a single pixel).  Raises
    DimensionError when the side is not divisible by G**N.
    """
    grid = frame.pixels
    side = frame.side
    if G < 2:
        raise DimensionError("block size must be >= 2")
    if N is None:
        N = max_depth(side, G)
    if N < 1:
        raise DimensionError("need at least one coarse-graining step")
    if side % (G ** N) != 0:
        raise DimensionError(f"side {side} not divisible by {G}^{N}")
    levels = [grid]
    for _ in range(N):
        levels.append(_block_mean(levels[-1], G))
    return ScalePyramid(levels=levels, block_size=G, depth=N)


def _replicate(grid: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(grid, factor, axis=0), factor, axis=1)


def overlap(pyramid: ScalePyramid, m: int, n: int) -> float:
    """Normalised inner product of levels m and n at original resolution.

    Each level-k pixel is replicated over its G**k x G**k footprint; the
    products are summed over all original-resolution positions and divided
    by the original pixel count.
    """
    pyramid._check_level(m)
    pyramid._check_level(n)
    G = pyramid.block_size
    side0 = pyramid.level_side(0)
    up_m = _replicate(pyramid.levels[m], G ** m)
    up_n = _replicate(pyramid.levels[n], G ** n)
    return float(np.sum(up_m * up_n) / (side0 * side0))


def spatial_complexity(frame: Frame, G: int = DEFAULT_BLOCK, N: int | None = None) -> ComplexityReport:
    """Total multiscale complexity of ``frame``.

    per_scale[n] = |O(n+1, n) - (O(n, n) + O(n+1, n+1)) / 2| for each
    coarse-graining step, and the total is their sum.  The same-scale
    overlap of a level equals its mean square, and the cross-scale overlap
    equals the coarser level's mean square (see module docstring), which is
    what this function computes; the replicated-product route is available
    through :func:`overlap` and is checked against this one in the tests.
    """
    pyramid = build_pyramid(frame, G, N)
    mean_sq = np.array([float(np.mean(lv * lv)) for lv in pyramid.levels])
    depth = pyramid.depth
    per_scale = [
        abs(mean_sq[n + 1] - 0.5 * (mean_sq[n] + mean_sq[n + 1]))
        for n in range(depth)
    ]
    # O(m, n) = mean square of the coarser of the two levels.
    grid_idx = np.maximum.outer(np.arange(depth + 1), np.arange(depth + 1))
    overlaps = mean_sq[grid_idx]
    return ComplexityReport(
        per_scale=per_scale,
        total=float(sum(per_scale)),
        overlaps=overlaps,
    )


def minmax_scale(values) -> tuple[np.ndarray, float, float]:
    """Scale a batch of values to [0, 1]; returns (scaled, lo, hi).

    A constant batch maps to zeros.  The (lo, hi) pair is returned so a run
    can log its scaling constants.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise RangeError("cannot scale an empty batch")
    if not np.all(np.isfinite(arr)):
        raise RangeError("non-finite value in batch")
    lo = float(arr.min())
    hi = float(arr.max())
    if hi - lo <= 0.0:
        return np.zeros_like(arr), lo, hi
    return (arr - lo) / (hi - lo), lo, hi
