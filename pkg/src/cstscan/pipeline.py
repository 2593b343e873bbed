"""Shared command flows behind the CLI: synth, extract, train, classify,
evaluate and the end-to-end run.  Every flow is deterministic given
(config, seed, inputs) and echoes its effective configuration next to its
outputs."""

from __future__ import annotations

import dataclasses
import json
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import classify as clf
from . import data as dio
from . import metrics as mx
from .errors import CstError, ValidationError
from .image import GrayImage, equalize_adaptive, read_image, write_image
from .plots import render_curves_svg, write_curve_csv
from .proposals import BoundingBox, CstConfig, extract_proposals

log = logging.getLogger("cstscan")


@dataclass(frozen=True)
class RunConfig:
    cst: CstConfig
    training: clf.TrainingConfig
    seed: int = 0
    iou_threshold: float = 0.5
    unit: str = "boxes"
    equalize: bool = False
    eq1_literal: bool = False
    jobs: int = 1
    dump_tensors: str | None = None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "cst": dataclasses.asdict(self.cst),
            "training": dataclasses.asdict(self.training),
            "evaluate": {"iou_threshold": self.iou_threshold, "unit": self.unit},
            "extract": {"equalize": self.equalize, "eq1_literal": self.eq1_literal},
            "jobs": self.jobs,
            "dump_tensors": self.dump_tensors,
        }


def load_run_config(path=None, **overrides) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus flag overrides."""
    doc = {}
    if path is not None:
        doc = json.loads(Path(path).read_text())
    cst = CstConfig(**doc.get("cst", {}))
    training = clf.TrainingConfig(**doc.get("training", {}))
    ev = doc.get("evaluate", {})
    ex = doc.get("extract", {})
    merged = dict(
        cst=cst,
        training=training,
        seed=doc.get("seed", 0),
        iou_threshold=ev.get("iou_threshold", 0.5),
        unit=ev.get("unit", "boxes"),
        equalize=ex.get("equalize", False),
        eq1_literal=ex.get("eq1_literal", False),
        jobs=doc.get("jobs", 1),
        dump_tensors=doc.get("dump_tensors"),
    )
    for key, value in overrides.items():
        if value is not None:
            if key == "seed":
                merged["training"] = dataclasses.replace(merged["training"], seed=value)
            merged[key] = value
    return RunConfig(**merged)


def echo_config(config: RunConfig, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective_config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
    )


# ---------------------------------------------------------------------------
# synth

def run_synth(spec: dio.SynthSpec, count: int, out_dir) -> Path:
    """Write `count` seeded scans, their annotations and a manifest."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    entries = []
    annotations = []
    for i in range(count):
        sid = "synth-%05d" % i
        scan = dio.generate_synthetic(
            dataclasses.replace(spec, seed=spec.seed + i), source_id=sid
        )
        rel = "images/%s.png" % sid
        write_image(scan.image, out_dir / rel)
        entries.append(dio.ManifestEntry(sid, rel))
        annotations.extend(scan.annotations)
    dio.save_annotations(annotations, out_dir / "annotations.jsonl")
    manifest = dio.DatasetManifest(
        name="synthetic",
        root=out_dir,
        entries=tuple(entries),
        classes=tuple(c.name for c in spec.classes),
        annotations="annotations.jsonl",
    )
    path = out_dir / "manifest.json"
    dio.save_manifest(manifest, path)
    return path


# ---------------------------------------------------------------------------
# extract

def _prepare_scan(img: GrayImage, config: RunConfig) -> GrayImage:
    if config.equalize:
        return equalize_adaptive(img, literal_denominator=config.eq1_literal)
    return img


def _extract_one(args):
    """(source_id, image_path, RunConfig) -> (source_id, proposals, seconds)."""
    sid, image_path, config = args
    img = _prepare_scan(read_image(image_path), config)
    dumper = None
    if config.dump_tensors:
        dump_dir = Path(config.dump_tensors)
        dump_dir.mkdir(parents=True, exist_ok=True)

        def dumper(iteration, cascade):
            for row in cascade.maps:
                for m in row:
                    v = m.values
                    lo, hi = float(v.min()), float(v.max())
                    norm = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
                    arr = (norm * 255.0).round().astype(np.uint8)
                    Image.fromarray(arr, mode="L").save(
                        dump_dir / ("%s_it%d_t%d%d.png" % (sid, iteration, m.i, m.j))
                    )

    t0 = time.perf_counter()
    props = extract_proposals(img, config.cst, source_id=sid, on_cascade=dumper)
    return sid, props, time.perf_counter() - t0


def run_extract(manifest: dio.DatasetManifest, config: RunConfig, out_dir):
    """Extract proposals for every manifest entry.

    Returns (index_path, per_scan_counts, timings, failed_ids); failures
    are logged and skipped.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo_config(config, out_dir)
    entries = sorted(manifest.entries, key=lambda e: e.source_id)
    tasks = [(e.source_id, str(manifest.image_path(e)), config) for e in entries]
    results = {}
    timings = {}
    failed = []
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = {pool.submit(_extract_one, task): task[0] for task in tasks}
            for future, sid in futures.items():
                try:
                    _, props, dt = future.result()
                    results[sid] = props
                    timings[sid] = dt
                except (CstError, OSError) as e:
                    log.error("extraction failed for %s: %s", sid, e)
                    failed.append(sid)
    else:
        for task in tasks:
            try:
                sid, props, dt = _extract_one(task)
                results[sid] = props
                timings[sid] = dt
            except (CstError, OSError) as e:
                log.error("extraction failed for %s: %s", task[0], e)
                failed.append(task[0])
    failed.sort()
    proposals = []
    counts = {}
    for e in entries:
        if e.source_id in results:
            props = results[e.source_id]
            counts[e.source_id] = len(props)
            proposals.extend(props)
    index_path = dio.export_proposals(proposals, None, out_dir)
    return index_path, counts, timings, failed


# ---------------------------------------------------------------------------
# train

def run_train(config: RunConfig, proposals_dir, annotations_path, model_path, class_names=None):
    """Label proposals against ground truth, balance, train, save.

    Returns (model, mean training loss, sample count, training accuracy).
    The label set is the sorted annotation catalog plus "normal" unless
    given explicitly.
    """
    loaded = dio.load_proposal_set(proposals_dir)
    annotations = dio.load_annotations(annotations_path) if annotations_path else []
    props = [p for p, _ in loaded]
    labels = [lab for _, lab in loaded]
    if any(lab is None for lab in labels):
        labels = dio.assign_labels(props, annotations, config.iou_threshold)
    if class_names is None:
        class_names = sorted({a.label for a in annotations} | {lab for lab in labels})
        class_names = [n for n in class_names if n != dio.NORMAL_LABEL] + [dio.NORMAL_LABEL]
    label_set = clf.make_labels(class_names)
    items = clf.balance_training_set(list(zip(props, labels)), seed=config.seed)
    distinct = {lab for _, lab in items}
    if len(distinct) < 2:
        raise ValidationError("training needs at least 2 classes, got %s" % sorted(distinct))
    samples = [(clf.extract_features(p), label_set.id_of(lab)) for p, lab in items]
    model = clf.train(samples, config.training, labels=label_set)
    xs = np.asarray([f for f, _ in samples])
    ys = np.asarray([cid for _, cid in samples])
    onehot = np.zeros((len(samples), len(label_set)))
    onehot[np.arange(len(samples)), ys] = 1.0
    probs = clf.softmax(xs @ model.weights + model.biases)
    loss = clf.cross_entropy(probs, onehot) / len(samples)
    train_acc = float(np.mean(np.argmax(probs, axis=1) == ys))
    clf.save_model(model, model_path)
    return model, loss, len(samples), train_acc


# ---------------------------------------------------------------------------
# classify

def run_classify(model: clf.ClassifierModel, proposals_dir, out_path):
    """One detection record per proposal: argmax label, max softmax score,
    the full per-class probability row, and a filtered flag on "normal"."""
    loaded = dio.load_proposal_set(proposals_dir)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(out_path, "w") as fh:
        for prop, _ in loaded:
            label, probs = clf.predict(model, prop)
            rec = {
                "source_id": prop.source_id,
                "x_min": prop.box.x_min,
                "y_min": prop.box.y_min,
                "width": prop.box.width,
                "height": prop.box.height,
                "label": label.name,
                "score": round(float(probs[label.id]), 10),
                "filtered": label.name == dio.NORMAL_LABEL,
                "probs": {nm: round(float(p), 10) for nm, p in zip(model.labels.names, probs)},
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            n += 1
    return out_path, n


def load_detections(path):
    """Read classify output; returns (records, filtered flags, prob rows)."""
    records, filtered, probs = [], [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            records.append(
                mx.DetectionRecord(
                    rec["source_id"],
                    BoundingBox(rec["x_min"], rec["y_min"], rec["width"], rec["height"]),
                    rec["label"],
                    float(rec["score"]),
                )
            )
            filtered.append(bool(rec.get("filtered", False)))
            probs.append(rec.get("probs"))
    return records, filtered, probs


# ---------------------------------------------------------------------------
# evaluate

def _scan_dims(manifest: dio.DatasetManifest) -> dict:
    dims = {}
    for e in manifest.entries:
        with Image.open(manifest.image_path(e)) as im:
            dims[e.source_id] = (im.height, im.width)
    return dims


def run_evaluate(
    detections_path,
    annotations_path,
    out_dir,
    config: RunConfig,
    manifest: dio.DatasetManifest | None = None,
):
    """Score detections against ground truth; write report + curves.

    Detection AP uses greedy box matching; per-class ROC sweeps the class
    probability over all unfiltered proposals against their best-overlap
    truth labels.  With unit="pixels" the confusion metrics come from
    rasterized box overlap instead of greedy matching.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo_config(config, out_dir)
    records, filtered, probs = load_detections(detections_path)
    annotations = dio.load_annotations(annotations_path)
    gts = [mx.GroundTruthBox(a.source_id, a.box, a.label) for a in annotations]
    catalog = sorted({g.label for g in gts})
    unknown = sorted(
        {r.label for r in records} - set(catalog) - {dio.NORMAL_LABEL}
    )
    if unknown:
        raise ValidationError("detections carry unknown labels: %s" % unknown)
    active = [r for r, f in zip(records, filtered) if not f]
    # truth label per record for the classification ROC (records expose
    # .box and .source_id just like proposals)
    truth = dio.assign_labels(records, annotations, config.iou_threshold)
    dims = _scan_dims(manifest) if (manifest is not None and config.unit == "pixels") else None
    if config.unit == "pixels" and dims is None:
        raise ValidationError("pixel unit needs a manifest to size the scans")

    report_classes = {}
    pr_curves, roc_curves = {}, {}
    aps, aucs, matched_ious = [], [], []
    for cname in catalog:
        counts, flags, class_dets = mx.match_detections(
            active, gts, config.iou_threshold, cname
        )
        curve = mx.detection_pr_curve(
            flags, [d.score for d in class_dets], counts.tp + counts.fn
        )
        ap = mx.average_precision(curve)
        pr_curves[cname] = curve
        # matched IoUs for the mean-IoU report (replays the greedy matching)
        class_gts = [g for g in gts if g.label == cname]
        used = set()
        class_ious = []
        for d, flag in zip(class_dets, flags):
            if not flag:
                continue
            best, bi = 0.0, -1
            for i, g in enumerate(class_gts):
                if i in used or g.source_id != d.source_id:
                    continue
                v = mx.iou(d.box, g.box)
                if v > best:
                    best, bi = v, i
            if bi >= 0:
                used.add(bi)
                class_ious.append(best)
        matched_ious.extend(class_ious)
        mean_iou_c = float(np.mean(class_ious)) if class_ious else 0.0
        # classification ROC over all records with class probabilities
        roc_items = []
        for rec, t, prow in zip(records, truth, probs):
            if prow is not None and cname in prow:
                roc_items.append((min(max(prow[cname], 0.0), 1.0), t == cname))
            elif rec.label == cname:
                roc_items.append((rec.score, t == cname))
        roc = mx.sweep_curve(roc_items, "roc")
        roc_curves[cname] = roc
        auc_c = mx.auc(roc)
        if config.unit == "pixels":
            counts = mx.pixel_confusion(active, gts, dims, cname)
        report_classes[cname] = {
            "ap": round(ap, 6),
            "auc": round(auc_c, 6),
            "precision": round(mx.precision(counts).value, 6),
            "recall": round(mx.recall(counts).value, 6),
            "f1": round(mx.f1(counts).value, 6),
            "accuracy": round(mx.accuracy(counts).value, 6),
            "fpr": round(mx.fpr(counts).value, 6),
            "mean_iou": round(mean_iou_c, 6),
            "tp": counts.tp,
            "fp": counts.fp,
            "tn": counts.tn,
            "fn": counts.fn,
            "n_det": len(class_dets),
        }
        aps.append(ap)
        aucs.append(auc_c)
        write_curve_csv(pr_curves[cname], out_dir / ("pr_%s.csv" % cname))
        write_curve_csv(roc_curves[cname], out_dir / ("roc_%s.csv" % cname))
    report = {
        "unit": config.unit,
        "iou_threshold": config.iou_threshold,
        "classes": report_classes,
        "mean_ap": round(mx.mean_ap(aps), 6) if aps else 0.0,
        "mean_auc": round(float(np.mean(aucs)), 6) if aucs else 0.0,
        "mean_iou": round(float(np.mean(matched_ious)), 6) if matched_ious else 0.0,
    }
    render_curves_svg(pr_curves, "pr", out_dir / "pr_curves.svg", "precision-recall")
    render_curves_svg(roc_curves, "roc", out_dir / "roc_curves.svg", "ROC")
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


# ---------------------------------------------------------------------------
# end to end

def run_pipeline(manifest: dio.DatasetManifest, model: clf.ClassifierModel, config: RunConfig, out_dir):
    """extract -> classify -> evaluate, with per-image wall times."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo_config(config, out_dir)
    proposals_dir = out_dir / "proposals"
    index_path, counts, timings, failed = run_extract(manifest, config, proposals_dir)
    if failed:
        raise CstError("extract failed for: %s" % ", ".join(failed))
    detections_path = out_dir / "detections.jsonl"
    run_classify(model, proposals_dir, detections_path)
    if not manifest.annotations:
        raise ValidationError("pipeline needs a manifest with annotations to evaluate")
    report = run_evaluate(
        detections_path,
        manifest.root / manifest.annotations,
        out_dir,
        config,
        manifest=manifest,
    )
    times = sorted(timings.values())
    report["timing"] = {
        "per_image_seconds_mean": round(statistics.fmean(times), 6) if times else 0.0,
        "per_image_seconds_median": round(statistics.median(times), 6) if times else 0.0,
        "images": len(times),
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report
