"""Deterministic CSV/JSON/SVG rendering of audit outputs.

All blobs are pure functions of their inputs: fixed canvas geometry, fixed
number formatting (two decimals for rates, three for p-values), no
timestamps. Identical inputs produce byte-identical files, which the
acceptance suite checks by digest.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import ValidationError
from .manifest import SkinTone
from .metrics import AblationTable

CELL = 64
MARGIN_LEFT = 150
MARGIN_TOP = 120
MARGIN = 20

ALERT_COLOR = "#d62728"
NEUTRAL_COLOR = "#ededed"
BLANK_COLOR = "#ffffff"

HEATMAP_STYLES = ("rate", "raw_p", "adjusted_p")


def _rate_color(value: float) -> str:
    """Linear white -> deep blue ramp over [0, 1]."""
    value = min(max(value, 0.0), 1.0)
    start = (247, 251, 255)
    end = (8, 48, 107)
    rgb = tuple(round(s + (e - s) * value) for s, e in zip(start, end))
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _text_color(fill: str) -> str:
    r, g, b = (int(fill[i : i + 2], 16) for i in (1, 3, 5))
    luminance = 0.299 * r + 0.587 * g + 0.114 * b
    return "#ffffff" if luminance < 128 else "#000000"


def render_heatmap(
    matrix: np.ndarray | Sequence[Sequence[float]],
    tones: Sequence[SkinTone],
    style: str,
    alpha: float = 0.05,
    title: str = "",
) -> str:
    """Render a square per-pair matrix as an annotated SVG grid.

    ``rate`` paints the full matrix with a sequential ramp and two-decimal
    annotations. The p-value styles paint only the upper triangle (one cell
    per pair), three decimals, with cells below ``alpha`` in the alert color.
    """
    if style not in HEATMAP_STYLES:
        raise ValidationError(f"unknown heatmap style {style!r}")
    values = np.asarray(matrix, dtype=np.float64)
    n = len(tones)
    if values.shape != (n, n):
        raise ValidationError(
            f"matrix shape {values.shape} does not match {n} tone labels"
        )
    width = MARGIN_LEFT + n * CELL + MARGIN
    height = MARGIN_TOP + n * CELL + MARGIN
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace">'
    ]
    if title:
        parts.append(
            f'<text x="{MARGIN_LEFT}" y="24" font-size="14">{escape(title)}</text>'
        )
    for idx, tone in enumerate(tones):
        x = MARGIN_LEFT + idx * CELL + CELL // 2
        parts.append(
            f'<text x="{x}" y="{MARGIN_TOP - 8}" font-size="11" text-anchor="start" '
            f'transform="rotate(-45 {x} {MARGIN_TOP - 8})">{escape(tone.value)}</text>'
        )
        y = MARGIN_TOP + idx * CELL + CELL // 2 + 4
        parts.append(
            f'<text x="{MARGIN_LEFT - 6}" y="{y}" font-size="11" '
            f'text-anchor="end">{escape(tone.value)}</text>'
        )
    for i in range(n):
        for j in range(n):
            x = MARGIN_LEFT + j * CELL
            y = MARGIN_TOP + i * CELL
            if style == "rate":
                value = float(values[i, j])
                fill = _rate_color(value)
                label = f"{value:.2f}"
            elif j > i:
                value = float(values[i, j])
                fill = ALERT_COLOR if value < alpha else NEUTRAL_COLOR
                label = f"{value:.3f}"
            else:
                fill = BLANK_COLOR
                label = ""
            parts.append(
                f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                f'fill="{fill}" stroke="#999999"/>'
            )
            if label:
                parts.append(
                    f'<text x="{x + CELL // 2}" y="{y + CELL // 2 + 4}" font-size="12" '
                    f'text-anchor="middle" fill="{_text_color(fill)}">{label}</text>'
                )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


BAR_CHART_HEIGHT = 300
BAR_WIDTH = 26
SERIES_GAP = 6
GROUP_GAP = 30
AXIS_MARGIN = 60

SERIES_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def render_grouped_bars(
    table: AblationTable,
    group_axis: str,
    series_axis: str,
    title: str = "",
) -> str:
    """Accuracy bars grouped by one attribute with one bar per series level.

    Cells are pooled (exact counts) across any remaining attributes per model;
    bar height is the mean accuracy across models, whiskers plus/minus one
    standard deviation when more than one model is present.
    """
    if not table.cells:
        raise ValidationError("cannot render an empty ablation table")
    for axis in (group_axis, series_axis):
        if axis not in table.group_by:
            raise ValidationError(f"axis {axis!r} not among grouping {table.group_by}")
    g_pos = table.group_by.index(group_axis) + 1
    s_pos = table.group_by.index(series_axis) + 1

    pooled: dict[tuple[str, str, str], list[int]] = {}
    for key, cell in table.cells.items():
        slot = pooled.setdefault((key[0], key[g_pos], key[s_pos]), [0, 0])
        slot[0] += cell.correct
        slot[1] += cell.count
    groups = sorted({k[1] for k in pooled})
    series = sorted({k[2] for k in pooled})
    models = sorted({k[0] for k in pooled})

    stats: dict[tuple[str, str], tuple[float, float]] = {}
    for g in groups:
        for s in series:
            accs = [
                pooled[(m, g, s)][0] / pooled[(m, g, s)][1]
                for m in models
                if (m, g, s) in pooled and pooled[(m, g, s)][1] > 0
            ]
            if accs:
                mean = float(np.mean(accs))
                std = float(np.std(accs)) if len(accs) > 1 else 0.0
                stats[(g, s)] = (mean, std)

    group_width = len(series) * (BAR_WIDTH + SERIES_GAP) + GROUP_GAP
    width = AXIS_MARGIN + len(groups) * group_width + MARGIN
    height = BAR_CHART_HEIGHT + 2 * AXIS_MARGIN + 40
    base_y = AXIS_MARGIN + BAR_CHART_HEIGHT

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace">'
    ]
    if title:
        parts.append(f'<text x="{AXIS_MARGIN}" y="24" font-size="14">{escape(title)}</text>')
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = base_y - tick * BAR_CHART_HEIGHT
        parts.append(
            f'<line x1="{AXIS_MARGIN - 4}" y1="{y:.1f}" x2="{width - MARGIN}" '
            f'y2="{y:.1f}" stroke="#cccccc"/>'
        )
        parts.append(
            f'<text x="{AXIS_MARGIN - 8}" y="{y + 4:.1f}" font-size="11" '
            f'text-anchor="end">{tick:.2f}</text>'
        )
    for gi, g in enumerate(groups):
        gx = AXIS_MARGIN + gi * group_width
        for si, s in enumerate(series):
            if (g, s) not in stats:
                continue
            mean, std = stats[(g, s)]
            x = gx + si * (BAR_WIDTH + SERIES_GAP)
            bar_h = mean * BAR_CHART_HEIGHT
            color = SERIES_COLORS[si % len(SERIES_COLORS)]
            parts.append(
                f'<rect x="{x}" y="{base_y - bar_h:.1f}" width="{BAR_WIDTH}" '
                f'height="{bar_h:.1f}" fill="{color}"/>'
            )
            if std > 0.0:
                cx = x + BAR_WIDTH / 2
                top = base_y - min(mean + std, 1.0) * BAR_CHART_HEIGHT
                bottom = base_y - max(mean - std, 0.0) * BAR_CHART_HEIGHT
                parts.append(
                    f'<line x1="{cx:.1f}" y1="{top:.1f}" x2="{cx:.1f}" '
                    f'y2="{bottom:.1f}" stroke="#000000"/>'
                )
        label_x = gx + (group_width - GROUP_GAP) / 2
        parts.append(
            f'<text x="{label_x:.1f}" y="{base_y + 16}" font-size="11" text-anchor="middle" '
            f'transform="rotate(45 {label_x:.1f} {base_y + 16})">{escape(g)}</text>'
        )
    legend_y = height - 16
    legend_x = AXIS_MARGIN
    for si, s in enumerate(series):
        color = SERIES_COLORS[si % len(SERIES_COLORS)]
        parts.append(
            f'<rect x="{legend_x}" y="{legend_y - 10}" width="12" height="12" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{legend_x + 16}" y="{legend_y}" font-size="11">{escape(s)}</text>'
        )
        legend_x += 16 + 8 * len(s) + 24
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@dataclass
class ReportBundle:
    """Named artifact blobs plus the metadata that makes them reproducible."""

    metadata: dict
    tables: dict[str, str] = field(default_factory=dict)
    figures: dict[str, str] = field(default_factory=dict)

    def add_table(self, name: str, csv_text: str) -> None:
        self.tables[name] = csv_text

    def add_figure(self, name: str, svg_text: str) -> None:
        self.figures[name] = svg_text

    def write(self, outdir: str | Path) -> dict[str, str]:
        """Write tables/, figures/, and run.json; returns per-file digests."""
        outdir = Path(outdir)
        digests: dict[str, str] = {}
        for subdir, blobs, suffix in (
            ("tables", self.tables, ".csv"),
            ("figures", self.figures, ".svg"),
        ):
            directory = outdir / subdir
            if blobs:
                directory.mkdir(parents=True, exist_ok=True)
            for name, blob in sorted(blobs.items()):
                path = directory / f"{name}{suffix}"
                data = blob.encode("utf-8")
                path.write_bytes(data)
                digests[f"{subdir}/{name}{suffix}"] = hashlib.sha256(data).hexdigest()
        outdir.mkdir(parents=True, exist_ok=True)
        run_payload = dict(self.metadata)
        run_payload["artifacts"] = digests
        run_json = json.dumps(run_payload, indent=2, sort_keys=True) + "\n"
        (outdir / "run.json").write_bytes(run_json.encode("utf-8"))
        return digests
