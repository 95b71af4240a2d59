"""Tables, pie-chart fractions and SVG scatter plots for datasets and samples."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .sampling import LabelDistribution
from .stats import SimilarityReport

NORMAL_COLOR = "blue"
# distinct from NORMAL_COLOR; cycled when there are more classes
PALETTE = (
    "#d62728", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2",
    "#7f7f7f", "#bcbd22", "#17becf", "#000000", "#aec7e8", "#ffbb78",
)
MAX_MARKERS = 5000


def _fmt_prop(p: float) -> str:
    return f"{p:.8g}"


def _ensure_parent(path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


@dataclass(frozen=True)
class DistributionTable:
    title: str
    rows: Tuple[Tuple[str, int, float], ...]
    total: int

    def to_text(self) -> str:
        lines = [self.title, "Traffic Type\tcount\t%"]
        lines += [f"{name}\t{count}\t{_fmt_prop(p)}" for name, count, p in self.rows]
        lines.append(f"Total\t{self.total}\t")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class_name", "count", "proportion"])
        for name, count, p in self.rows:
            writer.writerow([name, count, _fmt_prop(p)])
        writer.writerow(["Total", self.total, ""])
        return buf.getvalue()


def _named_rows(dist: LabelDistribution, class_names: Sequence[str]):
    rows = [(str(class_names[k]), c, c / dist.total) for k, c in dist.counts.items()]
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows


def render_distribution_table(dist: LabelDistribution, class_names: Sequence[str],
                              title: str = "") -> DistributionTable:
    """Per-class count/proportion rows, largest class first."""
    return DistributionTable(title, tuple(_named_rows(dist, class_names)), dist.total)


# ------------------------------------------------------------------ #
#  Comparison table                                                   #
# ------------------------------------------------------------------ #


def verdict_cell(report: SimilarityReport) -> str:
    if report.overall_similar:
        return "similar"
    return f"{report.n_similar} similar, {report.n_different} different features"


_CELL = re.compile(r"^(\d+) similar, (\d+) different features$")


def parse_verdict_cell(cell: str) -> Optional[Tuple[int, int]]:
    """``(n_similar, n_different)`` from a cell; ``None`` for ``"similar"``."""
    if cell == "similar":
        return None
    m = _CELL.match(cell)
    if not m:
        raise ValueError(f"unrecognised verdict cell {cell!r}")
    return int(m.group(1)), int(m.group(2))


def render_comparison_table(
    entries: Sequence[Tuple[str, str, SimilarityReport, SimilarityReport]],
) -> str:
    """Tab-separated rows ``Dataset, Sample, Features, PCA``.

    Each entry is ``(dataset_name, sample_name, all_features_report, pca_report)``.
    """
    lines = ["Dataset\tSample\tFeatures\tPCA"]
    for dataset_name, sample_name, features, pca in entries:
        lines.append(f"{dataset_name}\t{sample_name}\t{verdict_cell(features)}\t{verdict_cell(pca)}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ #
#  Plots                                                              #
# ------------------------------------------------------------------ #


def class_colors(class_names: Sequence[str], normal_class: Optional[str],
                 order: Sequence[int]) -> Dict[int, str]:
    """Colour per class id: normal is blue, the rest cycle through PALETTE in ``order``."""
    colors: Dict[int, str] = {}
    i = 0
    for k in order:
        if class_names[k] == normal_class:
            colors[k] = NORMAL_COLOR
        else:
            colors[k] = PALETTE[i % len(PALETTE)]
            i += 1
    return colors


def emit_pie_fractions(dist: LabelDistribution, class_names: Sequence[str], path,
                       normal_class: Optional[str] = None) -> None:
    """CSV ``class_name,fraction,color`` with the normal class first and blue."""
    rows = _named_rows(dist, class_names)
    rows.sort(key=lambda r: r[0] != normal_class)  # stable: keeps count order otherwise
    ids = {str(class_names[k]): k for k in dist.counts}
    colors = class_colors(class_names, normal_class, [ids[name] for name, _, _ in rows])
    _ensure_parent(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class_name", "fraction", "color"])
        for name, _, p in rows:
            writer.writerow([name, _fmt_prop(p), colors[ids[name]]])


@dataclass
class PlotSpec:
    kind: str = "scatter3d_projection"
    data_path: str = ""
    width: int = 640
    height: int = 480
    color_map: Dict[int, str] = field(default_factory=dict)
    title: str = ""


def _scale(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    vmin, vmax = float(values.min()), float(values.max())
    span = vmax - vmin
    if span == 0 or not math.isfinite(span):
        return np.full(values.shape, (lo + hi) / 2)
    return lo + (values - vmin) / span * (hi - lo)


def emit_scatter_svg(points, labels, spec: PlotSpec, path,
                     class_names: Optional[Sequence[str]] = None) -> None:
    """Static SVG of 3-D points: pc1 on x, pc2 on y, pc3 as marker radius.

    Clouds above ``MAX_MARKERS`` points are thinned with a uniform stride.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("scatter plots need exactly 3 coordinate columns")
    if len(points) < 1:
        raise ValueError("nothing to plot")
    if len(labels) != len(points):
        raise ValueError("one label per point required")

    classes = sorted(set(labels.tolist()))
    stride = max(1, math.ceil(len(points) / MAX_MARKERS))
    pts, labs = points[::stride], labels[::stride]

    legend_w = 160
    margin = 30
    w, h = spec.width, spec.height
    plot_right = w - legend_w
    xs = _scale(pts[:, 0], margin, plot_right - margin)
    ys = _scale(pts[:, 1], h - margin, margin)
    rs = _scale(pts[:, 2], 1.5, 4.5)

    palette = {c: spec.color_map.get(c, PALETTE[i % len(PALETTE)]) for i, c in enumerate(classes)}
    name = (lambda c: str(class_names[c])) if class_names is not None else str

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
    ]
    if spec.title:
        out.append(f'<text x="{margin}" y="18" font-family="sans-serif" font-size="12">'
                   f'{_escape(spec.title)}</text>')
    out.append('<g id="markers" fill-opacity="0.6">')
    for x, y, r, c in zip(xs, ys, rs, labs.tolist()):
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}" fill="{palette[c]}"/>')
    out.append("</g>")
    out.append('<g id="legend" font-family="sans-serif" font-size="11">')
    for i, c in enumerate(classes):
        y = margin + 16 * i
        out.append(f'<rect x="{plot_right + 10}" y="{y}" width="10" height="10" fill="{palette[c]}"/>')
        out.append(f'<text x="{plot_right + 26}" y="{y + 9}">{_escape(name(c))}</text>')
    out.append("</g>")
    out.append("</svg>")

    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_point_cloud(points: np.ndarray, labels: Sequence[str], path) -> None:
    """CSV ``pc1..pck,label``."""
    _ensure_parent(path)
    k = points.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"pc{i + 1}" for i in range(k)] + ["label"])
        for row, lab in zip(points.tolist(), labels):
            writer.writerow([repr(v) for v in row] + [lab])


def write_json(obj, path) -> None:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_text(text: str, path) -> None:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
