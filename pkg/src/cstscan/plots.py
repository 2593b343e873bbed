"""Curve figures rendered next to the CSV output.

CSV is the contract; the SVG figures are a best-effort convenience view
of the same points.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import CurvePoints

_AXIS_LABELS = {
    "pr": ("recall", "precision"),
    "roc": ("false positive rate", "true positive rate"),
}


def write_curve_csv(curve: CurvePoints, path) -> None:
    """threshold,x,y rows for every sweep point."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "x", "y"])
        for t, x, y in curve.points:
            w.writerow(["%.3f" % t, "%.10g" % x, "%.10g" % y])


def render_curves_svg(curves: dict, kind: str, path, title: str = "") -> Path:
    """Plot one or many named curves of the same kind into an SVG file."""
    base = kind.split("-")[0]
    xlabel, ylabel = _AXIS_LABELS.get(base, ("x", "y"))
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for name, curve in sorted(curves.items()):
        xs = [p[1] for p in curve.points]
        ys = [p[2] for p in curve.points]
        ax.plot(xs, ys, label=name, linewidth=1.2)
    if base == "roc":
        ax.plot([0, 1], [0, 1], linestyle=":", color="gray", linewidth=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    if curves:
        ax.legend(fontsize=8, loc="lower left" if base == "pr" else "lower right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
