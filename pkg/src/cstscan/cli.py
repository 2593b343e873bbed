"""Command-line surface: synth, extract, train, classify, evaluate, pipeline.

Exit codes: 0 success, 1 partial per-item failures, 2 fatal.  The CST_LOG
environment variable sets the log level (DEBUG, INFO, WARNING, ERROR).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import click

from . import data as dio
from . import pipeline as pl
from .classify import load_model
from .errors import CstError

log = logging.getLogger("cstscan")


def _setup_logging():
    level = os.environ.get("CST_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


_shared = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                 help="JSON run configuration."),
    click.option("--seed", type=int, default=None, help="Master seed override."),
    click.option("--jobs", type=int, default=None, help="Parallel workers per scan."),
]


def shared_options(fn):
    for opt in reversed(_shared):
        fn = opt(fn)
    return fn


def _fatal(e):
    log.error("%s", e)
    click.echo("error: %s" % e, err=True)
    sys.exit(2)


@click.group()
def main():
    _setup_logging()


@main.command()
@shared_options
@click.option("--count", type=int, default=20, show_default=True)
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="JSON overrides for the synthetic-scan spec.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def synth(config_path, seed, jobs, count, spec_path, out_dir):
    """Generate seeded synthetic scans plus manifest and annotations."""
    try:
        config = pl.load_run_config(config_path, seed=seed, jobs=jobs)
        spec_doc = json.loads(Path(spec_path).read_text()) if spec_path else {}
        if "classes" in spec_doc:
            spec_doc["classes"] = tuple(
                dio.ShapeClassSpec(
                    c["name"], c["kind"], tuple(c["intensity"]), tuple(c.get("size", (36, 88)))
                )
                for c in spec_doc["classes"]
            )
        for key in ("count_range", "clutter_range", "clutter_intensity", "clutter_size"):
            if key in spec_doc:
                spec_doc[key] = tuple(spec_doc[key])
        # precedence: --seed flag, then the spec file's own seed, then config
        seed_value = seed if seed is not None else spec_doc.get("seed", config.seed)
        spec = dataclasses.replace(dio.SynthSpec(**spec_doc), seed=seed_value)
        path = pl.run_synth(spec, count, out_dir)
        pl.echo_config(config, out_dir)
    except (CstError, OSError, json.JSONDecodeError, TypeError) as e:
        _fatal(e)
    click.echo("manifest: %s (%d scans)" % (path, count))


@main.command()
@shared_options
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--dump-tensors", "dump_tensors", type=click.Path(), default=None,
              help="Write every tensor map as a normalized PNG here.")
@click.option("--equalize/--no-equalize", default=None,
              help="Apply patchwise histogram equalization before extraction.")
@click.option("--eq1-literal", is_flag=True, default=False,
              help="Equalize with the full-image pixel count in the denominator.")
def extract(config_path, seed, jobs, manifest_path, out_dir, dump_tensors, equalize, eq1_literal):
    """Extract proposals for every scan in a manifest."""
    try:
        config = pl.load_run_config(
            config_path,
            seed=seed,
            jobs=jobs,
            dump_tensors=dump_tensors,
            equalize=equalize,
            eq1_literal=eq1_literal or None,
        )
        manifest = dio.load_manifest(manifest_path)
        index_path, counts, _, failed = pl.run_extract(manifest, config, out_dir)
    except (CstError, OSError) as e:
        _fatal(e)
    for sid in sorted(counts):
        click.echo("%s: %d proposals" % (sid, counts[sid]))
    click.echo("index: %s" % index_path)
    if failed:
        click.echo("failed scans: %s" % ", ".join(failed), err=True)
        sys.exit(1)


@main.command()
@shared_options
@click.option("--proposals", "proposals_dir", type=click.Path(exists=True), required=True)
@click.option("--annotations", "annotations_path", type=click.Path(exists=True), default=None,
              help="Ground truth for labeling unlabeled proposal sets.")
@click.option("--model", "model_path", type=click.Path(), required=True)
def train(config_path, seed, jobs, proposals_dir, annotations_path, model_path, **_):
    """Balance a labeled proposal set and train the baseline classifier."""
    try:
        config = pl.load_run_config(config_path, seed=seed, jobs=jobs)
        model, loss, n, acc = pl.run_train(config, proposals_dir, annotations_path, model_path)
        pl.echo_config(config, Path(model_path).parent or Path("."))
    except (CstError, OSError) as e:
        _fatal(e)
    click.echo(
        "trained on %d samples (%d classes); final mean loss %.6f, training accuracy %.4f"
        % (n, len(model.labels), loss, acc)
    )
    click.echo("model: %s" % model_path)


@main.command()
@shared_options
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--proposals", "proposals_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def classify(config_path, seed, jobs, model_path, proposals_dir, out_path):
    """Label a proposal set; normal proposals are kept but flagged filtered."""
    try:
        model = load_model(model_path)
        path, n = pl.run_classify(model, proposals_dir, out_path)
    except (CstError, OSError) as e:
        _fatal(e)
    click.echo("%d detections -> %s" % (n, path))


@main.command()
@shared_options
@click.option("--detections", "detections_path", type=click.Path(exists=True), required=True)
@click.option("--annotations", "annotations_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None,
              help="Needed for --unit pixels (scan dimensions).")
@click.option("--unit", type=click.Choice(["boxes", "pixels"]), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def evaluate(config_path, seed, jobs, detections_path, annotations_path, manifest_path, unit, out_dir):
    """Score detections against ground truth; writes report.json + curves."""
    try:
        config = pl.load_run_config(config_path, seed=seed, jobs=jobs, unit=unit)
        manifest = dio.load_manifest(manifest_path) if manifest_path else None
        report = pl.run_evaluate(detections_path, annotations_path, out_dir, config, manifest)
    except (CstError, OSError) as e:
        _fatal(e)
    click.echo(json.dumps({"mean_ap": report["mean_ap"], "mean_auc": report["mean_auc"],
                           "mean_iou": report["mean_iou"]}, sort_keys=True))
    click.echo("report: %s" % (Path(out_dir) / "report.json"))


@main.command()
@shared_options
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--unit", type=click.Choice(["boxes", "pixels"]), default=None)
@click.option("--dump-tensors", "dump_tensors", type=click.Path(), default=None)
def pipeline(config_path, seed, jobs, manifest_path, model_path, out_dir, unit, dump_tensors):
    """End-to-end: extract, classify, evaluate, with per-image timing."""
    stage = "setup"
    try:
        config = pl.load_run_config(
            config_path, seed=seed, jobs=jobs, unit=unit, dump_tensors=dump_tensors
        )
        stage = "load"
        manifest = dio.load_manifest(manifest_path)
        model = load_model(model_path)
        stage = "pipeline"
        report = pl.run_pipeline(manifest, model, config, out_dir)
    except (CstError, OSError) as e:
        log.error("stage %s failed: %s", stage, e)
        click.echo("error in stage %s: %s" % (stage, e), err=True)
        sys.exit(2)
    click.echo(json.dumps({
        "mean_ap": report["mean_ap"],
        "mean_auc": report["mean_auc"],
        "per_image_seconds_mean": report["timing"]["per_image_seconds_mean"],
        "per_image_seconds_median": report["timing"]["per_image_seconds_median"],
    }, sort_keys=True))
    click.echo("report: %s" % (Path(out_dir) / "report.json"))


if __name__ == "__main__":
    main()
