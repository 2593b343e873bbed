"""Dataset manifests, annotations, splits, proposal-set IO and the
synthetic scan generator used for desk-scale verification."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import DomainError, ParseError, PlacementError, ValidationError
from .image import GrayImage, read_image, write_image
from .metrics import iou as box_iou
from .proposals import BoundingBox, Proposal

NORMAL_LABEL = "normal"


@dataclass(frozen=True)
class ManifestEntry:
    source_id: str
    image: str  # path relative to the manifest root


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    root: Path
    entries: tuple
    classes: tuple
    annotations: str | None = None  # relative path of the annotation file

    def image_path(self, entry: ManifestEntry) -> Path:
        return self.root / entry.image

    def source_ids(self) -> list:
        return [e.source_id for e in self.entries]


@dataclass(frozen=True)
class AnnotationRecord:
    source_id: str
    label: str
    box: BoundingBox


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    test_fraction: float
    seed: int = 0
    stratify: bool = False

    def __post_init__(self):
        if self.train_fraction <= 0 or self.test_fraction <= 0:
            raise DomainError("fractions must be positive")
        if abs(self.train_fraction + self.test_fraction - 1.0) > 1e-9:
            raise DomainError("fractions must sum to 1")


def load_manifest(path) -> DatasetManifest:
    """Parse and validate a manifest JSON file.

    Paths inside the manifest are relative to its directory.  Duplicate
    source ids and missing image files are rejected; when an annotation
    file is referenced, every annotated source id must resolve to an entry.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError("%s: line %d: %s" % (path, e.lineno, e.msg)) from e
    root = path.parent
    entries = []
    seen = set()
    for item in doc.get("entries", []):
        sid = item["source_id"]
        if sid in seen:
            raise ValidationError("duplicate source_id %r" % sid)
        seen.add(sid)
        entries.append(ManifestEntry(sid, item["image"]))
    missing = [e.source_id for e in entries if not (root / e.image).is_file()]
    if missing:
        raise ValidationError("missing image files for: %s" % ", ".join(missing))
    manifest = DatasetManifest(
        name=doc.get("name", path.stem),
        root=root,
        entries=tuple(entries),
        classes=tuple(doc.get("classes", [])),
        annotations=doc.get("annotations"),
    )
    if manifest.annotations:
        ann_path = root / manifest.annotations
        if not ann_path.is_file():
            raise ValidationError("annotation file missing: %s" % ann_path)
        unknown = {a.source_id for a in load_annotations(ann_path)} - seen
        if unknown:
            raise ValidationError("annotations reference unknown ids: %s" % sorted(unknown))
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "name": manifest.name,
        "classes": list(manifest.classes),
        "entries": [{"source_id": e.source_id, "image": e.image} for e in manifest.entries],
    }
    if manifest.annotations:
        doc["annotations"] = manifest.annotations
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_annotations(path) -> list[AnnotationRecord]:
    """Read JSON-lines annotations (source_id, label, x_min, y_min, width, height)."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.append(
                    AnnotationRecord(
                        rec["source_id"],
                        rec["label"],
                        BoundingBox(rec["x_min"], rec["y_min"], rec["width"], rec["height"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ParseError("%s: line %d: %s" % (path, lineno, e)) from e
    return out


def save_annotations(records, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "source_id": r.source_id,
                        "label": r.label,
                        "x_min": r.box.x_min,
                        "y_min": r.box.y_min,
                        "width": r.box.width,
                        "height": r.box.height,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def import_gdxray_annotations(series_dir, label_map) -> list[AnnotationRecord]:
    """Import corner-format ground truth from a series directory.

    Each <source_id>.txt holds one "x1 x2 y1 y2" row per object (corner
    pairs, inclusive).  `label_map` maps the series directory name to the
    label assigned to its boxes, or is a plain label string.
    """
    series_dir = Path(series_dir)
    label = label_map if isinstance(label_map, str) else label_map[series_dir.name]
    out = []
    for txt in sorted(series_dir.glob("*.txt")):
        for rowno, line in enumerate(txt.read_text().splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError("%s: row %d: expected 4 fields" % (txt, rowno))
            try:
                x1, x2, y1, y2 = (int(float(p)) for p in parts)
            except ValueError as e:
                raise ParseError("%s: row %d: %s" % (txt, rowno, e)) from e
            if min(x1, x2, y1, y2) < 0 or x2 < x1 or y2 < y1:
                raise ValidationError("%s: row %d: corners out of bounds" % (txt, rowno))
            out.append(
                AnnotationRecord(txt.stem, label, BoundingBox(x1, y1, x2 - x1 + 1, y2 - y1 + 1))
            )
    return out


def make_split(ids, spec: SplitSpec, labels=None):
    """Seeded shuffle-and-partition; optional per-label stratification.

    Returns (train_ids, test_ids), disjoint and exhaustive.  With
    stratification a parallel `labels` list is required and per-label
    proportions are preserved within one item.
    """
    ids = list(ids)
    rng = np.random.default_rng(spec.seed)
    if not spec.stratify:
        order = rng.permutation(len(ids))
        k = int(round(spec.train_fraction * len(ids)))
        train = [ids[i] for i in order[:k]]
        test = [ids[i] for i in order[k:]]
        return train, test
    if labels is None or len(labels) != len(ids):
        raise DomainError("stratified split needs one label per id")
    groups: dict = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    train, test = [], []
    for lab in sorted(groups):
        idx = groups[lab]
        order = rng.permutation(len(idx))
        k = int(round(spec.train_fraction * len(idx)))
        train.extend(ids[idx[i]] for i in order[:k])
        test.extend(ids[idx[i]] for i in order[k:])
    return train, test


# ---------------------------------------------------------------------------
# synthetic scans

@dataclass(frozen=True)
class ShapeClassSpec:
    name: str
    kind: str  # disc | rectangle | lshape | bar
    intensity: tuple  # inclusive (lo, hi) base level range
    size: tuple = (36, 88)  # side range; bars use (thickness, length) rules


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic scan generator.

    Shapes carry an internal stripe texture whose gradient magnitude is
    constant, and a short intensity ramp at the boundary, so transition
    energy is uniform across each object.  Overlapping or near-touching
    shapes must differ in background contrast (ratio and absolute level)
    so the extraction cascade can separate them across iterations.
    """

    rows: int = 256
    cols: int = 256
    max_level: int = 256
    background_level: float = 30.0
    background_noise: float = 1.5
    classes: tuple = (
        ShapeClassSpec("disc", "disc", (62, 78)),
        ShapeClassSpec("rectangle", "rectangle", (102, 118)),
        ShapeClassSpec("lshape", "lshape", (142, 158)),
        ShapeClassSpec("bar", "bar", (182, 198)),
    )
    count_range: tuple = (1, 6)
    max_overlap: float = 0.28
    min_gap: int = 14
    overlap_contrast_ratio: float = 1.9
    min_level_separation: int = 40
    texture: float = 0.5
    ramp: float = 1.5
    clutter_range: tuple = (0, 0)
    clutter_intensity: tuple = (70, 100)
    clutter_size: tuple = (10, 22)
    seed: int = 0

    def __post_init__(self):
        if self.rows < 32 or self.cols < 32:
            raise DomainError("scan too small")
        if not (0.0 <= self.max_overlap < 1.0):
            raise DomainError("overlap budget must lie in [0, 1)")
        if not self.classes:
            raise DomainError("need at least one shape class")


class Placement(NamedTuple):
    label: str
    kind: str
    row0: int
    col0: int
    height: int
    width: int
    base: float


class SynthScan(NamedTuple):
    image: GrayImage
    annotations: list
    placements: list


def rasterize_shape(kind: str, height: int, width: int) -> np.ndarray:
    """Boolean mask of a shape inside its (height, width) box."""
    m = np.zeros((height, width), dtype=bool)
    if kind == "disc":
        yy, xx = np.ogrid[:height, :width]
        ry, rx = (height - 1) / 2.0, (width - 1) / 2.0
        m = (yy - ry) ** 2 / max(ry, 0.5) ** 2 + (xx - rx) ** 2 / max(rx, 0.5) ** 2 <= 1.0
    elif kind == "lshape":
        m[:, : max(10, width // 2)] = True
        m[height - max(10, height // 2) :, :] = True
    elif kind in ("rectangle", "bar"):
        m[:] = True
    else:
        raise DomainError("unknown shape kind %r" % kind)
    return m


def _stripe_texture(rng, height, width):
    """Diagonal stripes of period 4: unit central-difference magnitude at
    every interior pixel, so windowed gradient energy is flat."""
    phase = int(rng.integers(0, 4))
    sign = 1 if rng.random() < 0.5 else -1
    k = np.add.outer(np.arange(height), sign * np.arange(width)) + phase
    s = np.where((k % 4) < 2, 1.0, -1.0)
    return s * (1.0 + 0.15 * rng.standard_normal((height, width)))


def _effective_amp(base: float, spec: SynthSpec) -> float:
    """Texture amplitude, capped so the stripes stay inside the level range
    (saturation would flatten the constant-gradient texture)."""
    contrast = base - spec.background_level
    amp = min(spec.texture * contrast, (spec.max_level - 3.0) - base, base - 2.0)
    return max(amp, 0.0)


def _paint(img, rng, row0, col0, mask, base, spec: SynthSpec):
    h, w = mask.shape
    dist = ndimage.distance_transform_edt(mask)
    alpha = np.minimum(dist / spec.ramp, 1.0)
    contrast = base - spec.background_level
    amp = _effective_amp(base, spec)
    fieldv = spec.background_level + alpha * (contrast + amp * _stripe_texture(rng, h, w))
    region = img[row0 : row0 + h, col0 : col0 + w]
    region[mask] = fieldv[mask]


def _sample_dims(rng, cls: ShapeClassSpec, spec: SynthSpec):
    if cls.kind == "bar":
        t = int(rng.integers(13, 21))
        length = int(rng.integers(50, min(90, spec.cols - 10)))
        return (t, length) if rng.random() < 0.5 else (length, t)
    lo, hi = cls.size
    hi = min(hi, spec.rows - 10, spec.cols - 10)
    return int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))


def _placement_ok(box, base, placed, spec: SynthSpec):
    c0, r0, w, h = box
    for p in placed:
        ix = min(c0 + w, p.col0 + p.width) - max(c0, p.col0)
        iy = min(r0 + h, p.row0 + p.height) - max(r0, p.row0)
        inter = max(0, ix) * max(0, iy)
        if inter:
            frac = inter / float(min(w * h, p.width * p.height))
            if frac > spec.max_overlap:
                return False
        near = ix > -spec.min_gap and iy > -spec.min_gap
        if near:
            if abs(base - p.base) < spec.min_level_separation:
                return False
            # transition energy scales with the effective texture amplitude,
            # so nearby objects must differ in amplitude, not just level
            amp_a = _effective_amp(base, spec)
            amp_b = _effective_amp(p.base, spec)
            if max(amp_a, amp_b) / max(min(amp_a, amp_b), 1e-9) < spec.overlap_contrast_ratio:
                return False
    return True


def generate_synthetic(spec: SynthSpec, source_id: str = "synth") -> SynthScan:
    """Composite seeded shapes onto a noisy background.

    Returns the scan, exact annotations (mask-extent boxes), and the
    placement records that reproduce them.  Raises PlacementError when a
    shape cannot be placed within the overlap budget in 1000 attempts.
    """
    rng = np.random.default_rng(spec.seed)
    img = spec.background_level + rng.normal(0.0, spec.background_noise, (spec.rows, spec.cols))
    lo, hi = spec.count_range
    count = int(rng.integers(lo, hi + 1)) if hi > lo else lo
    annotations = []
    placements = []
    for _ in range(count):
        cls = spec.classes[int(rng.integers(0, len(spec.classes)))]
        placed = False
        for _attempt in range(1000):
            base = float(rng.integers(cls.intensity[0], cls.intensity[1] + 1))
            h, w = _sample_dims(rng, cls, spec)
            r0 = int(rng.integers(4, spec.rows - h - 4))
            c0 = int(rng.integers(4, spec.cols - w - 4))
            if _placement_ok((c0, r0, w, h), base, placements, spec):
                placed = True
                break
        if not placed:
            raise PlacementError(
                "could not place a %r shape within the overlap budget" % cls.name
            )
        mask = rasterize_shape(cls.kind, h, w)
        _paint(img, rng, r0, c0, mask, base, spec)
        rs, cs = np.nonzero(mask)
        box = BoundingBox(
            x_min=c0 + int(cs.min()),
            y_min=r0 + int(rs.min()),
            width=int(cs.max() - cs.min() + 1),
            height=int(rs.max() - rs.min() + 1),
        )
        annotations.append(AnnotationRecord(source_id, cls.name, box))
        placements.append(Placement(cls.name, cls.kind, r0, c0, h, w, base))
    n_clutter = (
        int(rng.integers(spec.clutter_range[0], spec.clutter_range[1] + 1))
        if spec.clutter_range[1] > spec.clutter_range[0]
        else spec.clutter_range[0]
    )
    for _ in range(n_clutter):
        h = int(rng.integers(spec.clutter_size[0], spec.clutter_size[1] + 1))
        w = int(rng.integers(spec.clutter_size[0], spec.clutter_size[1] + 1))
        base = float(rng.integers(spec.clutter_intensity[0], spec.clutter_intensity[1] + 1))
        for _attempt in range(1000):
            r0 = int(rng.integers(4, spec.rows - h - 4))
            c0 = int(rng.integers(4, spec.cols - w - 4))
            if _placement_ok((c0, r0, w, h), base, placements, spec):
                _paint(img, rng, r0, c0, np.ones((h, w), dtype=bool), base, spec)
                placements.append(Placement(NORMAL_LABEL, "rectangle", r0, c0, h, w, base))
                break
        # clutter that cannot be placed is silently skipped
    pixels = np.clip(np.floor(img + 0.5), 0, spec.max_level - 1)
    dtype = np.uint16 if spec.max_level > 256 else np.uint8
    return SynthScan(GrayImage(pixels.astype(dtype), spec.max_level), annotations, placements)


# ---------------------------------------------------------------------------
# proposal sets

def _crop_filename(source_id: str, index: int) -> str:
    safe = "".join(c if (c.isalnum() or c in "-_.") else "_" for c in source_id)
    return "%s_%05d.png" % (safe, index)


def export_proposals(proposals, labels, out_dir) -> Path:
    """Write PNG crops plus an index.jsonl; `labels` is a parallel list of
    label names or None.  Returns the index path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if labels is None:
        labels = [None] * len(proposals)
    if len(labels) != len(proposals):
        raise DomainError("labels must align with proposals")
    index_path = out_dir / "index.jsonl"
    with open(index_path, "w") as fh:
        for i, (p, label) in enumerate(zip(proposals, labels)):
            name = _crop_filename(p.source_id, i)
            write_image(p.crop, out_dir / name)
            rec = {
                "source_id": p.source_id,
                "x_min": p.box.x_min,
                "y_min": p.box.y_min,
                "width": p.box.width,
                "height": p.box.height,
                "iteration": p.iteration,
                "crop": name,
            }
            if label is not None:
                rec["label"] = label
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return index_path


def load_proposal_set(in_dir):
    """Inverse of export_proposals: list of (Proposal, label-or-None)."""
    in_dir = Path(in_dir)
    index_path = in_dir / "index.jsonl"
    if not index_path.is_file():
        raise ValidationError("no index.jsonl under %s" % in_dir)
    out = []
    with open(index_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                box = BoundingBox(rec["x_min"], rec["y_min"], rec["width"], rec["height"])
                crop = read_image(in_dir / rec["crop"])
                prop = Proposal(box, crop, rec["iteration"], rec["source_id"])
            except (json.JSONDecodeError, KeyError, FileNotFoundError) as e:
                raise ParseError("%s: line %d: %s" % (index_path, lineno, e)) from e
            out.append((prop, rec.get("label")))
    return out


def assign_labels(proposals, annotations, iou_threshold: float = 0.5) -> list:
    """Label each proposal with its best-overlapping annotation's class, or
    "normal" when nothing reaches the IoU threshold."""
    by_source: dict = {}
    for a in annotations:
        by_source.setdefault(a.source_id, []).append(a)
    out = []
    for p in proposals:
        best_iou, best_label = 0.0, NORMAL_LABEL
        for a in by_source.get(p.source_id, []):
            v = box_iou(p.box, a.box)
            if v > best_iou:
                best_iou, best_label = v, a.label
        out.append(best_label if best_iou >= iou_threshold else NORMAL_LABEL)
    return out
