"""Self-contained SVG charts: SHAP beeswarm and grouped metric bars."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .data import NUCLEOTIDES

TOKEN_COLORS = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#999999")
SERIES_COLORS = ("#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948")
FONT = 'font-family="sans-serif" font-size="11"'


def _svg(width, height, body) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )


def _swarm_offsets(x, radius):
    """Greedy vertical offsets so points closer than ``2 * radius`` do not overlap."""
    min_d2 = (2 * radius) ** 2 * 0.99
    order = np.argsort(x, kind="stable")
    placed: list[tuple[float, float]] = []
    out = np.zeros(len(x))
    for i in order:
        xi = x[i]
        placed = [(px, py) for px, py in placed if xi - px < 2 * radius]
        k, y = 0, 0.0
        # try 0, +r, -r, +2r, -2r, ...
        while any((xi - px) ** 2 + (y - py) ** 2 < min_d2 for px, py in placed):
            k += 1
            y = ((k + 1) // 2) * radius * (1 if k % 2 else -1)
        out[i] = y
        placed.append((xi, y))
    return out


def beeswarm(rows: list[dict], title="SHAP values (log-odds)") -> str:
    """Beeswarm from :func:`amrnet.explain.summary_export` rows, coloured by token."""
    features = []
    for r in rows:
        if r["feature"] not in features:
            features.append(r["feature"])
    row_h, left, right, top = 40, 110, 30, 40
    width = 640
    height = top + row_h * max(1, len(features)) + 60
    values = np.array([r["shap"] for r in rows]) if rows else np.zeros(1)
    lo, hi = float(min(values.min(), 0.0)), float(max(values.max(), 0.0))
    span = hi - lo or 1.0
    sx = lambda v: left + (v - lo) / span * (width - left - right)  # noqa: E731
    body = [f'<text x="{width / 2}" y="20" text-anchor="middle" {FONT}>{escape(title)}</text>']
    zero = sx(0.0)
    body.append(f'<line x1="{zero:.2f}" y1="{top - 10}" x2="{zero:.2f}" y2="{height - 50}" stroke="#888"/>')
    radius = 3.0
    for k, name in enumerate(features):
        cy = top + row_h * k + row_h / 2
        body.append(f'<text x="{left - 8}" y="{cy + 4:.2f}" text-anchor="end" {FONT}>{escape(name)}</text>')
        pts = [r for r in rows if r["feature"] == name]
        xs = np.array([sx(r["shap"]) for r in pts])
        ys = np.clip(_swarm_offsets(xs, radius), -row_h / 2 + radius, row_h / 2 - radius)
        for r, x, y in zip(pts, xs, ys):
            color = TOKEN_COLORS[int(r["token"]) % len(TOKEN_COLORS)]
            body.append(f'<circle cx="{x:.2f}" cy="{cy + y:.2f}" r="{radius}" fill="{color}" fill-opacity="0.8"/>')
    axis_y = height - 50
    body.append(f'<line x1="{left}" y1="{axis_y}" x2="{width - right}" y2="{axis_y}" stroke="black"/>')
    for v in np.linspace(lo, hi, 5):
        body.append(f'<text x="{sx(v):.2f}" y="{axis_y + 14}" text-anchor="middle" {FONT}>{v:.3g}</text>')
    for t, (letter, color) in enumerate(zip(NUCLEOTIDES, TOKEN_COLORS)):
        x = left + 60 * t
        body.append(f'<circle cx="{x}" cy="{height - 18}" r="4" fill="{color}"/>')
        body.append(f'<text x="{x + 8}" y="{height - 14}" {FONT}>{letter}</text>')
    return _svg(width, height, body)


def metric_bars(table: dict[str, dict[str, float]], title="Test metrics") -> str:
    """Grouped bars: one group per metric, one bar per model.

    ``table`` maps model name to ``{metric name: value}``; values in [-1, 1].
    """
    models = list(table)
    metrics = list(next(iter(table.values()))) if table else []
    group_w, bar_gap = 90, 2
    left, top, plot_h = 50, 40, 220
    width = left + 20 + group_w * max(1, len(metrics))
    height = top + plot_h + 70 + 16 * len(models)
    y0 = top + plot_h / 2  # value 0; bars span [-1, 1]
    sy = lambda v: y0 - v * plot_h / 2  # noqa: E731
    body = [f'<text x="{width / 2}" y="20" text-anchor="middle" {FONT}>{escape(title)}</text>']
    for v in (-1, -0.5, 0, 0.5, 1):
        body.append(f'<line x1="{left}" y1="{sy(v)}" x2="{width - 20}" y2="{sy(v)}" stroke="#ddd"/>')
        body.append(f'<text x="{left - 6}" y="{sy(v) + 4}" text-anchor="end" {FONT}>{v:g}</text>')
    bar_w = (group_w - 10) / max(1, len(models)) - bar_gap
    for g, metric in enumerate(metrics):
        gx = left + 5 + g * group_w
        for m, model in enumerate(models):
            v = float(table[model][metric])
            x = gx + m * (bar_w + bar_gap)
            y, h = (sy(v), sy(0) - sy(v)) if v >= 0 else (sy(0), sy(v) - sy(0))
            color = SERIES_COLORS[m % len(SERIES_COLORS)]
            body.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{h:.2f}" fill="{color}">'
                        f"<title>{escape(model)} {escape(metric)} {v:.4f}</title></rect>")
        body.append(f'<text x="{gx + group_w / 2 - 5}" y="{top + plot_h + 16}" text-anchor="middle" {FONT}>'
                    f"{escape(metric)}</text>")
    for m, model in enumerate(models):
        y = top + plot_h + 40 + 16 * m
        body.append(f'<rect x="{left}" y="{y - 9}" width="10" height="10" fill="{SERIES_COLORS[m % 6]}"/>')
        body.append(f'<text x="{left + 16}" y="{y}" {FONT}>{escape(model)}</text>')
    return _svg(width, height, body)
