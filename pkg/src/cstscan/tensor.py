"""Directional-gradient tensor cascade and coherency selection.

For N orientations theta_k = 2*pi*k/N the cascade holds the N^2 windowed
products of steered derivative fields; the most coherent member is the one
whose top singular value (of the map treated as a matrix) is largest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, DomainError, NumericError
from .image import GrayImage

# Relative slack when comparing map strengths: orientation pairs that are
# analytically sign-flips of each other differ only by float noise in the
# angle coefficients, and must resolve to the row-major-first map.
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class OrientationSet:
    n: int
    angles: tuple

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("need at least 2 orientations")


def make_orientations(n: int) -> OrientationSet:
    """Angles 2*pi*k/n for k = 1..n, in radians."""
    if n < 2:
        raise DomainError("need at least 2 orientations")
    return OrientationSet(n, tuple(2.0 * np.pi * k / n for k in range(1, n + 1)))


@dataclass(frozen=True)
class GaussianWindow:
    """Normalized, centre-symmetric Gaussian weights (width x height, both odd)."""

    sigma: float
    width: int
    height: int
    weights: np.ndarray


def gaussian_window(sigma: float, width: int = 5, height: int | None = None) -> GaussianWindow:
    if height is None:
        height = width
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    if width % 2 == 0 or height % 2 == 0 or width < 1 or height < 1:
        raise DomainError("window dimensions must be odd and positive")
    u = np.arange(height) - height // 2
    v = np.arange(width) - width // 2
    w = np.exp(-(u[:, None] ** 2 + v[None, :] ** 2) / (2.0 * sigma * sigma))
    return GaussianWindow(sigma, width, height, w / w.sum())


@dataclass(frozen=True)
class GradientField:
    orientation_index: int  # k, 1-based
    values: np.ndarray


@dataclass(frozen=True)
class TensorMap:
    i: int  # orientation indices, 1-based
    j: int
    values: np.ndarray


@dataclass(frozen=True)
class TensorCascade:
    n: int
    maps: tuple  # n rows of n TensorMap

    def map_at(self, i: int, j: int) -> TensorMap:
        return self.maps[i - 1][j - 1]


@dataclass(frozen=True)
class SingularSpectrum:
    values: np.ndarray  # nonincreasing, length min(M, N)
    source_dims: tuple


def directional_gradients(img: GrayImage, orientations: OrientationSet) -> list[GradientField]:
    """Steered derivatives cos(theta)*d/du + sin(theta)*d/dv per orientation.

    Partials use central differences in the interior and one-sided
    differences on the border rows/columns (np.gradient semantics); u is
    the row axis, v the column axis.
    """
    f = img.as_float()
    du, dv = np.gradient(f)
    out = []
    for k, theta in enumerate(orientations.angles, start=1):
        out.append(GradientField(k, np.cos(theta) * du + np.sin(theta) * dv))
    return out


def tensor_map(g_i: GradientField, g_j: GradientField, window: GaussianWindow) -> TensorMap:
    """Window-weighted correlation of the product field g_i * g_j (zero padding)."""
    if g_i.values.shape != g_j.values.shape:
        raise ConfigurationError("gradient fields must share dimensions")
    rows, cols = g_i.values.shape
    if window.height > rows or window.width > cols:
        raise ConfigurationError("window larger than image")
    product = g_i.values * g_j.values
    values = ndimage.correlate(product, window.weights, mode="constant", cval=0.0)
    return TensorMap(g_i.orientation_index, g_j.orientation_index, values)


def build_cascade(img: GrayImage, orientations: OrientationSet, window: GaussianWindow) -> TensorCascade:
    """All n^2 ordered-pair tensor maps; (i, j) and (j, i) share their raster."""
    fields = directional_gradients(img, orientations)
    n = orientations.n
    grid = [[None] * n for _ in range(n)]
    for a in range(n):
        for b in range(a, n):
            m = tensor_map(fields[a], fields[b], window)
            grid[a][b] = m
            if a != b:
                grid[b][a] = TensorMap(b + 1, a + 1, m.values)
    return TensorCascade(n, tuple(tuple(row) for row in grid))


def singular_values(tmap: TensorMap | np.ndarray) -> SingularSpectrum:
    """Singular values of the map's value matrix, nonincreasing."""
    values = tmap.values if isinstance(tmap, TensorMap) else np.asarray(tmap, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NumericError("tensor map contains non-finite entries")
    sv = np.linalg.svd(values, compute_uv=False)
    return SingularSpectrum(sv, values.shape)


def top_singular_value(values: np.ndarray, tol: float = 1e-13, max_iter: int = 500) -> float:
    """Largest singular value by power iteration on A^T A, LAPACK fallback.

    The iteration starts from a fixed vector so identical inputs yield
    bit-identical estimates.
    """
    a = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NumericError("tensor map contains non-finite entries")
    n = a.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n))
    s_last = -1.0
    for _ in range(max_iter):
        w = a.T @ (a @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        s = float(np.sqrt(norm))
        if abs(s - s_last) <= tol * max(s, 1e-300):
            return s
        s_last = s
    return float(np.linalg.svd(a, compute_uv=False)[0])


def select_coherent(cascade: TensorCascade) -> TensorMap:
    """Map with the maximal top singular value; near-ties (relative 1e-9)
    resolve to the smallest (i, j) in row-major order."""
    best = None
    best_s = 0.0
    cache: dict[int, float] = {}
    for row in cascade.maps:
        for m in row:
            key = id(m.values)
            if key not in cache:
                cache[key] = top_singular_value(m.values)
            s = cache[key]
            if best is None or s > best_s + _TIE_RTOL * max(s, best_s):
                best, best_s = m, s
    return best
