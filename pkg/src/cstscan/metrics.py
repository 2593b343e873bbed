"""Detection metrics: IoU, greedy matching, ratio metrics, PR/ROC sweeps,
average precision and AUC.

Threshold sweeps run over the fixed 1001-point grid 0, 0.001, ..., 1.0;
ratio metrics never raise on zero denominators (they return a flagged 0 so
full sweeps stay total).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .proposals import BoundingBox

SWEEP_STEP = 0.001
N_SWEEP = 1001


class MetricValue(NamedTuple):
    value: float
    defined: bool

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class GroundTruthBox:
    source_id: str
    box: BoundingBox
    label: str


@dataclass(frozen=True)
class DetectionRecord:
    source_id: str
    box: BoundingBox
    label: str
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise DomainError("score must lie in [0, 1]")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise DomainError("counts must be nonnegative")


@dataclass(frozen=True)
class CurvePoints:
    kind: str  # "pr" or "roc"
    points: tuple  # (threshold, x, y) triples, thresholds increasing


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Jaccard index of two boxes under the inclusive-span convention."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / float(a.area + b.area - inter)


def match_detections(
    dets: list[DetectionRecord],
    gts: list[GroundTruthBox],
    iou_threshold: float,
    label: str,
):
    """Greedy score-ordered matching for one class.

    Detections of the class (sorted by descending score, stable) each claim
    the unmatched same-class ground truth of highest IoU at or above the
    threshold; the rest are false positives.  Unmatched ground truths are
    false negatives, which makes a region extracted but classified to some
    other label count against its true class.  Returns (ConfusionCounts,
    per-detection tp flags aligned with the sorted class detections,
    sorted class detections).
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise DomainError("iou threshold must lie in (0, 1]")
    class_dets = sorted(
        (d for d in dets if d.label == label),
        key=lambda d: -d.score,
    )
    class_gts = [g for g in gts if g.label == label]
    matched = [False] * len(class_gts)
    flags = []
    for d in class_dets:
        best_iou, best_idx = 0.0, -1
        for i, g in enumerate(class_gts):
            if matched[i] or g.source_id != d.source_id:
                continue
            v = iou(d.box, g.box)
            if v > best_iou:
                best_iou, best_idx = v, i
        if best_idx >= 0 and best_iou >= iou_threshold:
            matched[best_idx] = True
            flags.append(True)
        else:
            flags.append(False)
    tp = sum(flags)
    counts = ConfusionCounts(tp=tp, fp=len(flags) - tp, tn=0, fn=len(class_gts) - tp)
    return counts, flags, class_dets


def _ratio(num: float, den: float) -> MetricValue:
    if den == 0:
        return MetricValue(0.0, False)
    return MetricValue(num / den, True)


def accuracy(c: ConfusionCounts) -> MetricValue:
    return _ratio(c.tp + c.tn, c.tp + c.fn + c.tn + c.fp)


def recall(c: ConfusionCounts) -> MetricValue:
    return _ratio(c.tp, c.tp + c.fn)


def precision(c: ConfusionCounts) -> MetricValue:
    return _ratio(c.tp, c.tp + c.fp)


def f1(c: ConfusionCounts) -> MetricValue:
    p, r = precision(c), recall(c)
    if not (p.defined and r.defined) or (p.value + r.value) == 0:
        return MetricValue(0.0, False)
    return MetricValue(2.0 * p.value * r.value / (p.value + r.value), True)


def fpr(c: ConfusionCounts) -> MetricValue:
    """False positive rate; by convention 1 when there are no negatives at
    all but false positives exist."""
    return _ratio(c.fp, c.tn + c.fp)


def sweep_thresholds() -> np.ndarray:
    return np.round(np.arange(N_SWEEP) * SWEEP_STEP, 3)


def sweep_curve(scored, kind: str) -> CurvePoints:
    """Threshold sweep over (score, is_positive) items.

    At threshold t an item is predicted positive iff score >= t.  PR curves
    emit (recall, precision) as (x, y), ROC curves emit (fpr, tpr).  Empty
    input yields a degenerate single-point curve tagged "<kind>-empty".
    """
    if kind not in ("pr", "roc"):
        raise DomainError("kind must be 'pr' or 'roc'")
    items = list(scored)
    if not items:
        return CurvePoints(kind + "-empty", ((0.0, 0.0, 0.0),))
    scores = np.asarray([s for s, _ in items], dtype=np.float64)
    if scores.min() < 0 or scores.max() > 1:
        raise DomainError("scores must lie in [0, 1]")
    pos = np.asarray([bool(p) for _, p in items])
    pos_sorted = np.sort(scores[pos])
    neg_sorted = np.sort(scores[~pos])
    n_pos, n_neg = len(pos_sorted), len(neg_sorted)
    ts = sweep_thresholds()
    # counts of items with score >= t
    tp = n_pos - np.searchsorted(pos_sorted, ts, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, ts, side="left")
    fn = n_pos - tp
    tn = n_neg - fp
    pts = []
    for i, t in enumerate(ts):
        if kind == "pr":
            r = tp[i] / n_pos if n_pos else 0.0
            p = tp[i] / (tp[i] + fp[i]) if (tp[i] + fp[i]) else 0.0
            pts.append((float(t), float(r), float(p)))
        else:
            x = fp[i] / n_neg if n_neg else 0.0
            y = tp[i] / n_pos if n_pos else 0.0
            pts.append((float(t), float(x), float(y)))
    return CurvePoints(kind, tuple(pts))


def detection_pr_curve(flags, scores, n_gt: int) -> CurvePoints:
    """PR curve for fixed-match detections: recall counts against the full
    ground-truth total, so detections dropped by the threshold turn their
    matches into misses."""
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(flags, dtype=bool)
    if scores.shape != flags.shape:
        raise DomainError("flags and scores must align")
    ts = sweep_thresholds()
    tp_scores = np.sort(scores[flags])
    all_scores = np.sort(scores)
    pts = []
    for t in ts:
        tp = len(tp_scores) - np.searchsorted(tp_scores, t, side="left")
        kept = len(all_scores) - np.searchsorted(all_scores, t, side="left")
        r = tp / n_gt if n_gt else 0.0
        p = tp / kept if kept else 0.0
        pts.append((float(t), float(r), float(p)))
    return CurvePoints("pr", tuple(pts))


def average_precision(curve: CurvePoints) -> float:
    """Riemann sum of precision against successive recall drops.

    Points are walked in threshold order; each point contributes its
    precision times the recall lost to the next point, with a terminal
    drop to recall 0 so mass at the top threshold still counts.
    """
    if not curve.kind.startswith("pr"):
        raise DomainError("average precision needs a PR curve")
    pts = curve.points
    total = 0.0
    for i, (_, r, p) in enumerate(pts):
        r_next = pts[i + 1][1] if i + 1 < len(pts) else 0.0
        total += p * (r - r_next)
    return float(total)


def mean_ap(per_class) -> float:
    """Arithmetic mean of per-class average precisions (callers exclude the
    normal class before this point)."""
    vals = list(per_class)
    if not vals:
        raise DomainError("mean over no classes")
    return float(np.mean(vals))


def auc(curve: CurvePoints) -> float:
    """Trapezoidal area under the ROC curve, points sorted by x (fpr)."""
    if not curve.kind.startswith("roc"):
        raise DomainError("auc needs a ROC curve")
    pts = sorted(curve.points, key=lambda t: (t[1], t[2]))
    xs = np.asarray([p[1] for p in pts])
    ys = np.asarray([p[2] for p in pts])
    if len(xs) < 2:
        return 0.0
    return float(np.sum((xs[1:] - xs[:-1]) * (ys[1:] + ys[:-1]) * 0.5))


def pixel_confusion(
    dets: list[DetectionRecord],
    gts: list[GroundTruthBox],
    dims: dict,
    label: str,
) -> ConfusionCounts:
    """Pixel-unit confusion: rasterize boxes per scan and count overlaps.

    `dims` maps source_id to (rows, cols).  Background pixels correctly
    outside every box are true negatives.
    """
    tp = fp = tn = fn = 0
    for source_id, (rows, cols) in dims.items():
        det_mask = np.zeros((rows, cols), dtype=bool)
        gt_mask = np.zeros((rows, cols), dtype=bool)
        for d in dets:
            if d.source_id == source_id and d.label == label:
                det_mask[d.box.y_min : d.box.y_max + 1, d.box.x_min : d.box.x_max + 1] = True
        for g in gts:
            if g.source_id == source_id and g.label == label:
                gt_mask[g.box.y_min : g.box.y_max + 1, g.box.x_min : g.box.x_max + 1] = True
        tp += int(np.sum(det_mask & gt_mask))
        fp += int(np.sum(det_mask & ~gt_mask))
        fn += int(np.sum(~det_mask & gt_mask))
        tn += int(np.sum(~det_mask & ~gt_mask))
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)
