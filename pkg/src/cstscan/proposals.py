"""Iterative contour-based proposal extraction.

One pass: build the tensor cascade, keep the most coherent map, binarize
it, clean the mask, label 8-connected components, box and crop each one,
erase the extracted regions, shrink the window scale, repeat until the
scan holds nothing else (or the iteration cap is reached).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import BoundsError, DomainError, LabelLookupError, NumericError
from .image import GrayImage
from .tensor import (
    TensorMap,
    build_cascade,
    gaussian_window,
    make_orientations,
    select_coherent,
)

_CROSS = ndimage.generate_binary_structure(2, 1)  # 3x3 cross
_SQUARE = np.ones((3, 3), bool)
_EIGHT = ndimage.generate_binary_structure(2, 2)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with inclusive spans: covers columns
    x_min..x_min+width-1 and rows y_min..y_min+height-1."""

    x_min: int
    y_min: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.x_min < 0 or self.y_min < 0:
            raise DomainError("degenerate bounding box")

    @property
    def x_max(self) -> int:
        return self.x_min + self.width - 1

    @property
    def y_max(self) -> int:
        return self.y_min + self.height - 1

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class Contour:
    """Closed 8-connected boundary; consecutive points (and last-to-first)
    are within Chebyshev distance 1."""

    points: tuple


@dataclass(frozen=True)
class LabeledRegions:
    label_image: np.ndarray  # 0 = background
    label_count: int


@dataclass(frozen=True)
class Proposal:
    box: BoundingBox
    crop: GrayImage
    iteration: int
    source_id: str = ""


@dataclass(frozen=True)
class CstConfig:
    n_orientations: int = 4
    window_size: int = 5
    sigma: float = 1.0
    sigma_floor: float = 0.5
    scale: float = 1.0          # current scaling factor, multiplies sigma
    scale_decay: float = 0.8
    binarization: str = "otsu"
    min_transition: float = 16.0  # Otsu threshold floor; below it a map is contentless
    min_blob_area: int = 64
    max_iterations: int = 8
    min_dim: int = 8
    max_area_frac: float = 0.95
    dedupe_iou: float = 0.8

    def __post_init__(self):
        if self.n_orientations < 2 or self.window_size < 1 or self.window_size % 2 == 0:
            raise DomainError("bad cascade geometry")
        if self.sigma <= 0 or self.sigma_floor <= 0 or self.scale <= 0:
            raise DomainError("scale parameters must be positive")
        if not (0.0 < self.scale_decay <= 1.0):
            raise DomainError("scale decay must lie in (0, 1]")
        if self.max_iterations < 1 or self.min_blob_area < 1 or self.min_dim < 1:
            raise DomainError("counts must be positive")
        if self.binarization != "otsu":
            raise DomainError("unknown binarization method %r" % (self.binarization,))

    @property
    def effective_sigma(self) -> float:
        return max(self.sigma * self.scale, self.sigma_floor)


def otsu_threshold(values: np.ndarray) -> float:
    """Threshold maximizing between-class variance over 256 bins spanning
    [min, max]; returns the upper edge midpoint of the chosen bin."""
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NumericError("cannot threshold non-finite values")
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return hi
    bins = np.clip(((v - lo) / (hi - lo) * 256.0).astype(np.int64), 0, 255)
    h = np.bincount(bins.ravel(), minlength=256).astype(np.float64)
    w = np.cumsum(h)
    mu = np.cumsum(h * np.arange(256))
    tot, mu_t = w[-1], mu[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        sigma_b = (mu_t * w - mu * tot) ** 2 / (w * (tot - w))
    sigma_b[~np.isfinite(sigma_b)] = -1.0
    t = int(np.argmax(sigma_b))
    return lo + (t + 0.5) / 256.0 * (hi - lo)


def binarize(tmap: TensorMap | np.ndarray) -> np.ndarray:
    """Otsu-threshold a tensor map; pixels strictly above threshold are set.
    A constant map yields an empty mask."""
    values = tmap.values if isinstance(tmap, TensorMap) else np.asarray(tmap, dtype=np.float64)
    if float(values.min()) >= float(values.max()):
        return np.zeros(values.shape, dtype=bool)
    return values > otsu_threshold(values)


def clean_mask(mask: np.ndarray, min_area: int) -> np.ndarray:
    """3x3-cross opening, then drop 8-connected components smaller than min_area."""
    m = ndimage.binary_opening(mask, _CROSS)
    lab, n = ndimage.label(m, structure=_EIGHT)
    if n == 0:
        return m
    areas = np.bincount(lab.ravel())
    small = np.flatnonzero(areas < min_area)
    small = small[small > 0]
    if small.size:
        m[np.isin(lab, small)] = False
    return m


def label_components(mask: np.ndarray) -> LabeledRegions:
    """8-connectivity labeling with labels in raster-scan discovery order."""
    lab, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        return LabeledRegions(lab.astype(np.int32), 0)
    flat = lab.ravel()
    first = np.full(n + 1, flat.size, dtype=np.int64)
    idx = np.flatnonzero(flat)
    # first occurrence index per label
    np.minimum.at(first, flat[idx], idx)
    order = np.argsort(first[1:], kind="stable") + 1
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order] = np.arange(1, n + 1, dtype=np.int32)
    return LabeledRegions(remap[lab], n)


_MOORE = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _trace_one(mask: np.ndarray, start: tuple) -> list:
    """Moore-neighbor boundary walk from the component's raster-first pixel.

    The walk stops when the post-start state (pixel, scan offset) recurs,
    i.e. after exactly one cycle around the outer boundary.
    """
    rows, cols = mask.shape

    def fg(r, c):
        return 0 <= r < rows and 0 <= c < cols and mask[r, c]

    points = []
    cur = start
    scan_from = 7  # west neighbor of the raster-first pixel is background
    cycle_state = None
    cap = 8 * int(mask.sum()) + 16
    for _ in range(cap):
        points.append(cur)
        move = None
        for step in range(8):
            d = (scan_from + step) % 8
            if fg(cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1]):
                move = d
                break
        if move is None:
            break  # isolated pixel
        cur = (cur[0] + _MOORE[move][0], cur[1] + _MOORE[move][1])
        scan_from = (move + 5) % 8  # one past the backtrack direction
        if cycle_state is None:
            cycle_state = (cur, scan_from)
        elif (cur, scan_from) == cycle_state:
            break
    if len(points) > 1 and points[-1] == points[0]:
        points.pop()
    return points


def trace_contours(mask: np.ndarray) -> list[Contour]:
    """One outer contour per 8-connected component; holes are not traced."""
    regions = label_components(mask)
    out = []
    for label in range(1, regions.label_count + 1):
        comp = regions.label_image == label
        rs, cs = np.nonzero(comp)  # raster order: index 0 is the first pixel
        pts = _trace_one(comp, (int(rs[0]), int(cs[0])))
        while len(pts) < 4:  # degenerate 1-2 pixel components: repeat the cycle
            pts = pts + pts
        out.append(Contour(tuple(pts)))
    return out


def bounding_box(regions: LabeledRegions, label: int) -> BoundingBox:
    """Minimal axis-aligned box over the label's pixels (inclusive spans)."""
    if label < 1 or label > regions.label_count:
        raise LabelLookupError("label %d not present" % label)
    rs, cs = np.nonzero(regions.label_image == label)
    if rs.size == 0:
        raise LabelLookupError("label %d not present" % label)
    return BoundingBox(
        x_min=int(cs.min()),
        y_min=int(rs.min()),
        width=int(cs.max() - cs.min() + 1),
        height=int(rs.max() - rs.min() + 1),
    )


def crop(img: GrayImage, box: BoundingBox) -> GrayImage:
    """Copy of the scan under the box."""
    if box.x_max >= img.cols or box.y_max >= img.rows:
        raise BoundsError("box outside image")
    sub = img.pixels[box.y_min : box.y_max + 1, box.x_min : box.x_max + 1].copy()
    return GrayImage(sub, img.max_level)


def remove_objects(img: GrayImage, regions: LabeledRegions) -> GrayImage:
    """Erase each labeled component from the scan.

    The component (holes filled) is dilated once by 3x3 to cover boundary
    transitions and overwritten with the median intensity of its 2-pixel
    outer ring, a local background estimate.  Untouched pixels are copied.
    """
    if regions.label_image.shape != img.pixels.shape:
        raise BoundsError("label raster does not match image")
    out = img.pixels.copy()
    global_median = None
    for label in range(1, regions.label_count + 1):
        rs, cs = np.nonzero(regions.label_image == label)
        pad = 4  # one dilation + two ring dilations + slack
        r0, r1 = max(0, rs.min() - pad), min(img.rows, rs.max() + pad + 1)
        c0, c1 = max(0, cs.min() - pad), min(img.cols, cs.max() + pad + 1)
        local = regions.label_image[r0:r1, c0:c1] == label
        comp = ndimage.binary_fill_holes(local)
        dilated = ndimage.binary_dilation(comp, _SQUARE)
        ring = ndimage.binary_dilation(dilated, _SQUARE, iterations=2) & ~dilated
        if ring.any():
            fill = np.median(out[r0:r1, c0:c1][ring])
        else:
            if global_median is None:
                global_median = np.median(img.pixels)
            fill = global_median
        out[r0:r1, c0:c1][dilated] = int(np.floor(fill + 0.5))
    return GrayImage(out, img.max_level)


def update_scaling(config: CstConfig, iteration: int) -> CstConfig:
    """Decay the scaling factor after a pass; sigma for the next pass becomes
    sigma * scale (floored at sigma_floor)."""
    if iteration < 1:
        raise DomainError("iteration counts from 1")
    return dataclasses.replace(config, scale=config.scale * config.scale_decay)


def _single_pass(img: GrayImage, config: CstConfig):
    """Cascade -> coherent map -> binarize -> clean, with the transition floor.

    Maps whose Otsu threshold falls below min_transition carry no separable
    structure (quantization/noise level) and yield an empty mask.  Returns
    (cleaned mask, cascade) so callers can dump the cascade for debugging.
    """
    orientations = make_orientations(config.n_orientations)
    window = gaussian_window(config.effective_sigma, config.window_size)
    cascade = build_cascade(img, orientations, window)
    coherent = select_coherent(cascade)
    values = coherent.values
    if float(values.min()) >= float(values.max()):
        return np.zeros(values.shape, dtype=bool), cascade
    thr = otsu_threshold(values)
    if thr < config.min_transition:
        return np.zeros(values.shape, dtype=bool), cascade
    return clean_mask(values > thr, config.min_blob_area), cascade


def _single_pass_mask(img: GrayImage, config: CstConfig) -> np.ndarray:
    return _single_pass(img, config)[0]


def has_more_objects(img: GrayImage, config: CstConfig, iteration: int = 1) -> bool:
    """True iff a fresh pass yields a cleaned component and the cap allows
    another iteration."""
    if iteration >= config.max_iterations:
        return False
    return bool(_single_pass_mask(img, config).any())


def iou_boxes(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union under the inclusive-span convention."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / float(a.area + b.area - inter)


def extract_proposals(
    scan: GrayImage,
    config: CstConfig | None = None,
    source_id: str = "",
    on_cascade=None,
) -> list[Proposal]:
    """Run the full extraction loop on one scan.

    Proposals are deduplicated across iterations (box IoU above the config
    threshold keeps the earlier one) and filtered by the size rules: both
    box sides at least min_dim, box area at most max_area_frac of the scan.
    `on_cascade(iteration, cascade)` is called once per pass when given
    (debug dumps).
    """
    if config is None:
        config = CstConfig()
    work = GrayImage(scan.pixels.copy(), scan.max_level)
    cfg = config
    raw: list[Proposal] = []
    for iteration in range(1, cfg.max_iterations + 1):
        mask, cascade = _single_pass(work, cfg)
        if on_cascade is not None:
            on_cascade(iteration, cascade)
        regions = label_components(mask)
        if regions.label_count == 0:
            break
        for label in range(1, regions.label_count + 1):
            box = bounding_box(regions, label)
            raw.append(Proposal(box, crop(work, box), iteration, source_id))
        work = remove_objects(work, regions)
        cfg = update_scaling(cfg, iteration)
    max_area = config.max_area_frac * scan.rows * scan.cols
    kept: list[Proposal] = []
    for p in raw:
        if p.box.width < config.min_dim or p.box.height < config.min_dim:
            continue
        if p.box.area > max_area:
            continue
        if any(iou_boxes(p.box, q.box) > config.dedupe_iou for q in kept):
            continue
        kept.append(p)
    return kept
