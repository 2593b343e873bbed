"""Grayscale image container, color conversion and patchwise histogram equalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DimensionError, DomainError

# BT.601 luma weights
_LUMA = (0.299, 0.587, 0.114)


def _round_half_up(x):
    return np.floor(x + 0.5)


@dataclass(frozen=True)
class GrayImage:
    """2-D intensity raster with values in [0, max_level - 1]."""

    pixels: np.ndarray
    max_level: int = 256

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise DimensionError("image must be a non-empty 2-D raster")
        if not np.issubdtype(p.dtype, np.integer):
            raise DimensionError("pixel values must be integers")
        if self.max_level < 2:
            raise DomainError("max_level must be at least 2")
        if p.min() < 0 or p.max() >= self.max_level:
            raise DomainError("pixel values must lie in [0, max_level - 1]")
        object.__setattr__(self, "pixels", p)

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]

    def as_float(self) -> np.ndarray:
        return self.pixels.astype(np.float64)


@dataclass(frozen=True)
class PatchGrid:
    """Disjoint rectangular patches tiling an image exactly.

    Boundaries are half-open (row_start, row_stop, col_start, col_stop)
    tuples; edge patches absorb the remainder when dimensions do not
    divide evenly.
    """

    grid_rows: int
    grid_cols: int
    boundaries: tuple


def make_patch_grid(rows: int, cols: int, grid_rows: int = 8, grid_cols: int = 8) -> PatchGrid:
    """Split an image of the given size into a grid_rows x grid_cols tiling."""
    if grid_rows < 1 or grid_cols < 1:
        raise DomainError("grid must have at least one patch per axis")
    if grid_rows > rows or grid_cols > cols:
        raise DomainError("grid finer than the image")
    rb = np.linspace(0, rows, grid_rows + 1).astype(int)
    cb = np.linspace(0, cols, grid_cols + 1).astype(int)
    bounds = tuple(
        (int(rb[i]), int(rb[i + 1]), int(cb[j]), int(cb[j + 1]))
        for i in range(grid_rows)
        for j in range(grid_cols)
    )
    return PatchGrid(grid_rows, grid_cols, bounds)


@dataclass(frozen=True)
class Histogram:
    """Per-level counts plus cumulative counts of one image region."""

    counts: np.ndarray
    cdf: np.ndarray
    cdf_min: int


def to_grayscale(raster: np.ndarray, max_level: int = 256) -> GrayImage:
    """Convert an RGB raster to luminance; 2-D input passes through unchanged."""
    a = np.asarray(raster)
    if a.ndim == 2:
        return GrayImage(a.astype(np.uint16 if max_level > 256 else np.uint8), max_level)
    if a.ndim != 3 or a.shape[2] != 3:
        raise DimensionError("expected an (H, W) or (H, W, 3) raster")
    r, g, b = a[:, :, 0], a[:, :, 1], a[:, :, 2]
    if not (r.shape == g.shape == b.shape):
        raise DimensionError("channels must share dimensions")
    y = _LUMA[0] * r.astype(np.float64) + _LUMA[1] * g + _LUMA[2] * b
    y = np.clip(_round_half_up(y), 0, max_level - 1)
    return GrayImage(y.astype(np.uint16 if max_level > 256 else np.uint8), max_level)


def compute_histogram(img: GrayImage, region: tuple) -> Histogram:
    """Histogram of a rectangular region given as (row0, col0, n_rows, n_cols)."""
    r0, c0, nr, nc = region
    if nr < 1 or nc < 1:
        raise DomainError("empty region")
    if r0 < 0 or c0 < 0 or r0 + nr > img.rows or c0 + nc > img.cols:
        raise DomainError("region outside image bounds")
    patch = img.pixels[r0 : r0 + nr, c0 : c0 + nc]
    counts = np.bincount(patch.ravel(), minlength=img.max_level).astype(np.int64)
    cdf = np.cumsum(counts)
    nz = np.flatnonzero(counts)
    cdf_min = int(cdf[nz[0]])
    return Histogram(counts, cdf, cdf_min)


def _clip_counts(counts: np.ndarray, clip_limit: float) -> np.ndarray:
    """Cap bin heights at clip_limit x mean height, redistributing the excess."""
    limit = max(1, int(clip_limit * counts.sum() / len(counts)))
    clipped = np.minimum(counts, limit)
    excess = int(counts.sum() - clipped.sum())
    if excess > 0:
        add, rem = divmod(excess, len(counts))
        clipped = clipped + add
        if rem:
            clipped[:rem] += 1
    return clipped


def equalize_adaptive(
    img: GrayImage,
    grid: PatchGrid | None = None,
    *,
    literal_denominator: bool = False,
    clip_limit: float | None = None,
) -> GrayImage:
    """Remap each patch through its own cumulative histogram.

    Per patch, a value v maps to
    round_half_up((cdf(v) - cdf_min) / (P - cdf_min) * (L - 1)) where P is
    the patch pixel count.  `literal_denominator` swaps P for the full
    image pixel count instead (comparison mode; compresses output toward
    0).  A constant patch maps to 0.  No inter-patch interpolation is
    performed, so patch seams are visible on strongly varying input.
    """
    if grid is None:
        grid = make_patch_grid(img.rows, img.cols)
    L = img.max_level
    out = np.zeros_like(img.pixels)
    full_count = img.rows * img.cols
    for (r0, r1, c0, c1) in grid.boundaries:
        patch = img.pixels[r0:r1, c0:c1]
        counts = np.bincount(patch.ravel(), minlength=L).astype(np.int64)
        if clip_limit is not None:
            counts = _clip_counts(counts, clip_limit)
        cdf = np.cumsum(counts)
        nz = np.flatnonzero(counts)
        cdf_min = int(cdf[nz[0]])
        P = full_count if literal_denominator else patch.size
        denom = P - cdf_min
        if denom <= 0:
            out[r0:r1, c0:c1] = 0
            continue
        lut = _round_half_up((cdf - cdf_min) / denom * (L - 1))
        lut = np.clip(lut, 0, L - 1).astype(img.pixels.dtype)
        out[r0:r1, c0:c1] = lut[patch]
    return GrayImage(out, L)


def read_image(path) -> GrayImage:
    """Load an 8-bit grayscale or RGB PNG/JPEG as a GrayImage."""
    with Image.open(path) as im:
        if im.mode in ("RGB", "RGBA", "P"):
            arr = np.asarray(im.convert("RGB"))
            return to_grayscale(arr)
        arr = np.asarray(im.convert("L"))
    return GrayImage(arr.astype(np.uint8), 256)


def write_image(img: GrayImage, path) -> None:
    """Write a GrayImage as an 8-bit PNG (levels above 255 are scaled down)."""
    p = img.pixels
    if img.max_level > 256:
        p = (p.astype(np.float64) * 255.0 / (img.max_level - 1)).round()
    Image.fromarray(p.astype(np.uint8), mode="L").save(path, format="PNG")
