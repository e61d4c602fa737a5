"""Deterministic writers: JSON reports, CSV tables and SVG level lines.

Floats are written with 12 significant digits everywhere so that equal
inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bv import GridFunction, format_float, superlevel_set


class IOFailure(OSError):
    pass


def canonical(obj):
    """Round floats to 12 significant digits; NaN and infinities become strings."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return format_float(x)
        return float(format(x, ".12g"))
    if isinstance(obj, np.ndarray):
        return canonical(obj.tolist())
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(canonical(obj), sort_keys=True, indent=2) + "\n"


def _write_text(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_json(obj, path) -> Path:
    return _write_text(path, dumps(obj))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format_float(v) if isinstance(v, (float, int, np.floating,
                                                              np.integer)) else v
                            for v in row])
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_grid_csv(u: GridFunction, path) -> Path:
    """One row (x, y, u) per cell inside the domain, in grid order."""
    pts = u.mask.centers()
    vals = u.inside_values()
    return write_csv(path, ("x", "y", "u"),
                     ((float(p[0]), float(p[1]), float(v)) for p, v in zip(pts, vals)))


def write_convergence_csv(energies: Sequence[float], path) -> Path:
    return write_csv(path, ("iteration", "energy"),
                     ((i, float(e)) for i, e in enumerate(energies)))


def report_table(reports) -> str:
    """Fixed-width human-readable table of certificate reports."""
    head = f"{'check':<20} {'level':>12} {'measured':>14} {'bound':>14} {'margin':>14} " \
           f"{'tolerance':>12}  verdict"
    lines = [head, "-" * len(head)]
    for r in reports:
        level = "" if r.level is None else format_float(r.level)
        lines.append(f"{r.name:<20} {level:>12} {format_float(r.measured):>14} "
                     f"{format_float(r.bound):>14} {format_float(r.margin):>14} "
                     f"{format_float(r.tolerance):>12}  {r.verdict}"
                     + (f" ({r.reason})" if r.reason else ""))
    return "\n".join(lines) + "\n"


def _svg_points(poly: np.ndarray, x0: float, y1: float, scale: float) -> str:
    return " ".join(f"{format(float((p[0] - x0) * scale), '.6f')},"
                    f"{format(float((y1 - p[1]) * scale), '.6f')}" for p in poly)


def render_level_lines(u: GridFunction, levels: Sequence[float], out, size: int = 400) -> Path:
    """SVG with the domain outline and the clipped level lines of ``u``.

    Raises
    ------
    IOFailure
        If the file cannot be written.
    """
    d = u.domain
    x0, y0, x1, y1 = d.bounds
    span = max(x1 - x0, y1 - y0)
    pad = 0.05 * span
    x0, y0, x1, y1 = x0 - pad, y0 - pad, x1 + pad, y1 + pad
    scale = size / (span + 2 * pad)
    width = format((x1 - x0) * scale, ".6f")
    height = format((y1 - y0) * scale, ".6f")
    outline = np.vstack([d.points, d.points[:1]])
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<polyline class="domain" fill="none" stroke="black" stroke-width="1.5" '
        f'points="{_svg_points(outline, x0, y1, scale)}"/>',
    ]
    for t in levels:
        ls = superlevel_set(u, float(t))
        if not ls.contour:
            continue
        parts.append(f'<g class="level" data-level="{format_float(t)}" fill="none" '
                     f'stroke="steelblue" stroke-width="1">')
        for poly in ls.contour:
            parts.append(f'<polyline points="{_svg_points(poly, x0, y1, scale)}"/>')
        parts.append("</g>")
    parts.append("</svg>")
    return _write_text(out, "\n".join(parts) + "\n")
