"""Deterministic SVG emission of spatial domain maps.

No plotting library: the SVG is assembled from formatted strings so two
runs with the same inputs produce byte-identical files. Spots are circle
elements (exactly one per spot); the legend uses rect swatches so circle
counts stay structural.
"""

from __future__ import annotations

import numpy as np

from .clustering import ClusterAssignment
from .dataio import SpatialCoords
from .errors import ValidationError

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
)

MARGIN_FRACTION = 0.05


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def render_domain_svg(coords: SpatialCoords, assignment: ClusterAssignment) -> str:
    """Build the SVG document for a labeled spot scatter.

    One circle per spot, filled from a fixed 12-color palette (cycling by
    label), a legend with per-label counts, and a viewBox fitted to the
    data with a 5% margin. The y axis is flipped so larger y plots upward.
    """
    labels = assignment.labels
    if coords.n_spots != labels.shape[0]:
        raise ValidationError(
            f"{coords.n_spots} coordinates for {labels.shape[0]} labels"
        )
    x = coords.positions[:, 0]
    y = -coords.positions[:, 1]  # SVG y grows downward
    xmin, xmax = float(x.min()), float(x.max())
    ymin, ymax = float(y.min()), float(y.max())
    span_x = (xmax - xmin) or 1.0
    span_y = (ymax - ymin) or 1.0
    mx = MARGIN_FRACTION * span_x
    my = MARGIN_FRACTION * span_y
    radius = 0.012 * max(span_x, span_y)

    counts = np.bincount(labels)
    n_labels = counts.shape[0]
    entry_h = max(span_y / 12.0, 2.5 * radius)
    legend_w = 0.45 * span_x
    font = 0.6 * entry_h

    width = span_x + 2 * mx + legend_w
    height = max(span_y + 2 * my, n_labels * entry_h + 2 * my)
    view = f"{_fmt(xmin - mx)} {_fmt(ymin - my)} {_fmt(width)} {_fmt(height)}"

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{view}">',
        '<g class="spots">',
    ]
    for xi, yi, lab in zip(x, y, labels):
        color = PALETTE[int(lab) % len(PALETTE)]
        lines.append(
            f'<circle cx="{_fmt(xi)}" cy="{_fmt(yi)}" r="{_fmt(radius)}" '
            f'fill="{color}"/>'
        )
    lines.append("</g>")
    lines.append('<g class="legend">')
    lx = xmax + 2 * mx
    for lab in range(n_labels):
        color = PALETTE[lab % len(PALETTE)]
        ly = ymin + lab * entry_h
        lines.append('<g class="legend-entry">')
        lines.append(
            f'<rect x="{_fmt(lx)}" y="{_fmt(ly)}" width="{_fmt(0.8 * entry_h)}" '
            f'height="{_fmt(0.8 * entry_h)}" fill="{color}"/>'
        )
        lines.append(
            f'<text x="{_fmt(lx + entry_h)}" y="{_fmt(ly + 0.65 * entry_h)}" '
            f'font-size="{_fmt(font)}" font-family="sans-serif">'
            f"{lab} ({int(counts[lab])})</text>"
        )
        lines.append("</g>")
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def plot_domains(coords: SpatialCoords, assignment: ClusterAssignment, path: str) -> None:
    """Write the domain map SVG; byte-identical for identical inputs."""
    svg = render_domain_svg(coords, assignment)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(svg)
