"""Flat-file writers shared by the library and the command line.

Every CSV starts with a ``# config: {...}`` comment holding the resolved
configuration as JSON, so an output file can be fed back as a config.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CONFIG_PREFIX = "# config: "


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def csv_text(columns: Sequence[str], rows: Iterable[Sequence], config: dict) -> str:
    buf = io.StringIO()
    buf.write(CONFIG_PREFIX + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], config: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(columns, rows, config))
    return path


def read_config_header(path) -> dict:
    """Config JSON from the first line of a CSV written by :func:`write_csv`."""
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith(CONFIG_PREFIX):
        raise ValueError(f"{path}: no config header")
    return json.loads(first[len(CONFIG_PREFIX):])


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    config = read_config_header(path)
    with open(path, newline="") as fh:
        fh.readline()
        reader = csv.reader(fh)
        columns = next(reader)
        rows = list(reader)
    return config, columns, rows


# Fixed colour ramp for heatmaps (perceptually ordered, dark blue to yellow).
COLOR_RAMP = ((0.0, (68, 1, 84)), (0.25, (59, 82, 139)), (0.5, (33, 145, 140)),
              (0.75, (94, 201, 98)), (1.0, (253, 231, 37)))


def ramp_color(s: float) -> str:
    s = min(1.0, max(0.0, s))
    for (s0, c0), (s1, c1) in zip(COLOR_RAMP, COLOR_RAMP[1:]):
        if s <= s1:
            w = 0.0 if s1 == s0 else (s - s0) / (s1 - s0)
            rgb = [round(a + w * (b - a)) for a, b in zip(c0, c1)]
            return "#%02x%02x%02x" % tuple(rgb)
    return "#%02x%02x%02x" % COLOR_RAMP[-1][1]


def svg_heatmap(values: np.ndarray, x: np.ndarray, t: np.ndarray, title: str = "",
                max_cols: int = 200, max_rows: int = 200, cell: int = 3) -> str:
    """Space-time heatmap: x runs horizontally, time downward.

    The array is decimated to at most ``max_rows x max_cols`` cells. Colours
    come from :data:`COLOR_RAMP` between the data minimum and maximum, which
    are recorded in the SVG metadata. Output depends only on the input data.
    """
    values = np.asarray(values, dtype=float)
    nt, nx = values.shape
    ri = np.unique(np.linspace(0, nt - 1, min(nt, max_rows)).round().astype(int))
    ci = np.unique(np.linspace(0, nx - 1, min(nx, max_cols)).round().astype(int))
    sub = values[np.ix_(ri, ci)]
    vmin, vmax = float(np.min(values)), float(np.max(values))
    span = vmax - vmin
    width, height = len(ci) * cell, len(ri) * cell
    margin = 40
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width + 2 * margin}" '
        f'height="{height + 2 * margin}" shape-rendering="crispEdges">',
        f'<metadata>{json.dumps({"vmin": vmin, "vmax": vmax, "x": [float(x[0]), float(x[-1])], "t": [float(t[0]), float(t[-1])], "ramp": [list(c) for _, c in COLOR_RAMP]}, sort_keys=True)}</metadata>',
        f'<text x="{margin}" y="{margin - 20}" font-size="12">{title}</text>',
        f'<text x="{margin}" y="{margin - 6}" font-size="10">x in [{format_value(float(x[0]))}, {format_value(float(x[-1]))}], '
        f't downward in [{format_value(float(t[0]))}, {format_value(float(t[-1]))}], min {vmin:.6g}, max {vmax:.6g}</text>',
        f'<g transform="translate({margin},{margin})">',
    ]
    for r in range(sub.shape[0]):
        for c in range(sub.shape[1]):
            s = 0.5 if span == 0 else (sub[r, c] - vmin) / span
            out.append(f'<rect x="{c * cell}" y="{r * cell}" width="{cell}" height="{cell}" '
                       f'fill="{ramp_color(s)}"/>')
    out.append("</g></svg>")
    return "\n".join(out) + "\n"
