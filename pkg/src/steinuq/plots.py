"""Dependency-free SVG renderings of run tables.

Output is deterministic: fixed 640x400 viewport, fixed margins, and all
coordinates formatted to three decimals, so the same table always renders
to the same bytes.  Two kinds are supported: a plain line plot of two
columns, and a band plot drawing mean +/- 2 stdev around the mean curve.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["read_table", "render_line", "render_band", "plot_file"]

WIDTH, HEIGHT = 640, 400
M_LEFT, M_RIGHT, M_TOP, M_BOTTOM = 70, 20, 36, 50
LINE_COLOR = "#1f77b4"
BAND_COLOR = "#9ecae1"


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Header names and a (rows, cols) float matrix; '#' lines are skipped."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: no table content")
    header = [name.strip() for name in lines[0].split(",")]
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(header):
            raise ValueError(f"{path}: row width {len(cells)} != header width {len(header)}")
        rows.append([float(c) for c in cells])
    if not rows:
        raise ValueError(f"{path}: table has a header but no rows")
    return header, np.asarray(rows, dtype=np.float64)


def _span(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    if lo == hi:  # widen degenerate ranges so the scale stays finite
        pad = 1.0 if lo == 0.0 else abs(lo) * 0.1
        return lo - pad, hi + pad
    return lo, hi


def _scaler(lo: float, hi: float, px_lo: float, px_hi: float):
    def to_px(v: float) -> float:
        return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo)

    return to_px


def _axes(xlo, xhi, ylo, yhi, xlabel, ylabel, title) -> list[str]:
    sx = _scaler(xlo, xhi, M_LEFT, WIDTH - M_RIGHT)
    sy = _scaler(ylo, yhi, HEIGHT - M_BOTTOM, M_TOP)
    parts = [
        f'<rect x="{M_LEFT}" y="{M_TOP}" width="{WIDTH - M_LEFT - M_RIGHT}" '
        f'height="{HEIGHT - M_TOP - M_BOTTOM}" fill="none" stroke="#333333" stroke-width="1"/>'
    ]
    for tick in np.linspace(xlo, xhi, 5):
        px = sx(float(tick))
        parts.append(
            f'<line x1="{px:.3f}" y1="{HEIGHT - M_BOTTOM}" x2="{px:.3f}" '
            f'y2="{HEIGHT - M_BOTTOM + 5}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{px:.3f}" y="{HEIGHT - M_BOTTOM + 20}" font-family="monospace" '
            f'font-size="11" text-anchor="middle">{tick:.4g}</text>'
        )
    for tick in np.linspace(ylo, yhi, 5):
        py = sy(float(tick))
        parts.append(
            f'<line x1="{M_LEFT - 5}" y1="{py:.3f}" x2="{M_LEFT}" y2="{py:.3f}" '
            f'stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{M_LEFT - 8}" y="{py + 4:.3f}" font-family="monospace" '
            f'font-size="11" text-anchor="end">{tick:.4g}</text>'
        )
    cx = (M_LEFT + WIDTH - M_RIGHT) / 2
    parts.append(
        f'<text x="{cx:.3f}" y="{HEIGHT - 12}" font-family="monospace" font-size="12" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="18" y="{(M_TOP + HEIGHT - M_BOTTOM) / 2:.3f}" font-family="monospace" '
        f'font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 18 {(M_TOP + HEIGHT - M_BOTTOM) / 2:.3f})">{ylabel}</text>'
    )
    if title:
        parts.append(
            f'<text x="{cx:.3f}" y="22" font-family="monospace" font-size="13" '
            f'text-anchor="middle">{title}</text>'
        )
    return parts


def _document(body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    return "\n".join([head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
                      *body, "</svg>"]) + "\n"


def _points(xs, ys, sx, sy) -> str:
    return " ".join(f"{sx(float(x)):.3f},{sy(float(y)):.3f}" for x, y in zip(xs, ys))


def render_line(x, y, xlabel: str = "", ylabel: str = "", title: str = "") -> str:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size == 0 or x.shape != y.shape:
        raise ValueError("line plot needs matching non-empty x and y")
    xlo, xhi = _span(x)
    ylo, yhi = _span(y)
    sx = _scaler(xlo, xhi, M_LEFT, WIDTH - M_RIGHT)
    sy = _scaler(ylo, yhi, HEIGHT - M_BOTTOM, M_TOP)
    body = _axes(xlo, xhi, ylo, yhi, xlabel, ylabel, title)
    body.append(
        f'<polyline points="{_points(x, y, sx, sy)}" fill="none" '
        f'stroke="{LINE_COLOR}" stroke-width="1.5"/>'
    )
    return _document(body)


def render_band(x, mean, std, xlabel: str = "", ylabel: str = "", title: str = "") -> str:
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if x.size == 0 or x.shape != mean.shape or x.shape != std.shape:
        raise ValueError("band plot needs matching non-empty x, mean and std")
    upper, lower = mean + 2.0 * std, mean - 2.0 * std
    xlo, xhi = _span(x)
    ylo, yhi = _span(np.concatenate([lower, upper]))
    sx = _scaler(xlo, xhi, M_LEFT, WIDTH - M_RIGHT)
    sy = _scaler(ylo, yhi, HEIGHT - M_BOTTOM, M_TOP)
    body = _axes(xlo, xhi, ylo, yhi, xlabel, ylabel, title)
    ring = (
        _points(x, upper, sx, sy) + " " + _points(x[::-1], lower[::-1], sx, sy)
    )
    body.append(f'<polygon points="{ring}" fill="{BAND_COLOR}" fill-opacity="0.6" stroke="none"/>')
    body.append(
        f'<polyline points="{_points(x, mean, sx, sy)}" fill="none" '
        f'stroke="{LINE_COLOR}" stroke-width="1.5"/>'
    )
    return _document(body)


def plot_file(csv_path, out_path, kind: str | None = None) -> str:
    """Render a run table to SVG; returns the kind used.

    ``kind=None`` picks "band" when the header carries mean/stdev columns
    and "line" otherwise (first column against the second).
    """
    header, data = read_table(csv_path)
    if kind is None:
        kind = "band" if "mean" in header and "stdev" in header else "line"
    if kind == "band":
        for required in ("mean", "stdev"):
            if required not in header:
                raise ValueError(f"band plot needs a {required!r} column, header is {header}")
        x = data[:, 0]
        svg = render_band(
            x,
            data[:, header.index("mean")],
            data[:, header.index("stdev")],
            xlabel=header[0],
            ylabel="mean +/- 2 stdev",
        )
    elif kind == "line":
        if len(header) < 2:
            raise ValueError("line plot needs at least two columns")
        svg = render_line(data[:, 0], data[:, 1], xlabel=header[0], ylabel=header[1])
    else:
        raise ValueError(f"unknown plot kind {kind!r} (expected 'line' or 'band')")
    Path(out_path).write_text(svg)
    return kind
