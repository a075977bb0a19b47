"""Static SVG line charts of per-episode training loss."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .errors import ConfigError

WIDTH, HEIGHT = 720, 420
MARGIN = {"left": 80, "right": 140, "top": 40, "bottom": 60}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _episode_means(records: Sequence) -> list[tuple[int, float]]:
    """Mean ``mean_loss`` per episode across seeds, skipping episodes without training."""
    acc: dict[int, list[float]] = defaultdict(list)
    for r in records:
        if r.mean_loss is not None:
            acc[r.episode].append(r.mean_loss)
    return [(ep, sum(v) / len(v)) for ep, v in sorted(acc.items())]


def emit_loss_chart(series: Mapping[str, Sequence], path: str | Path, title: str = "Training loss") -> Path:
    """One polyline of loss vs episode per variant in ``series``.

    ``series`` maps a label to MetricsRecord-like objects (``episode`` and
    ``mean_loss`` attributes).
    """
    if sum(len(recs) for recs in series.values()) < 2:
        raise ConfigError("a loss chart needs at least two records")
    lines = {label: _episode_means(recs) for label, recs in series.items()}
    points = [p for pts in lines.values() for p in pts]
    x0 = min((p[0] for p in points), default=0)
    x1 = max((p[0] for p in points), default=1)
    y0 = min((p[1] for p in points), default=0.0)
    y1 = max((p[1] for p in points), default=1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.5 * (abs(y0) or 1.0), y1 + 0.5 * (abs(y1) or 1.0)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"] + ph}" x2="{MARGIN["left"] + pw}" '
        f'y2="{MARGIN["top"] + ph}" stroke="black"/>',
        f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"]}" x2="{MARGIN["left"]}" '
        f'y2="{MARGIN["top"] + ph}" stroke="black"/>',
    ]
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{sx(fx):.1f}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle" '
                   f'font-size="11">{fx:.0f}</text>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{sy(fy) + 4:.1f}" text-anchor="end" '
                   f'font-size="11">{fy:.3g}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle" '
               f'font-size="13">episode</text>')
    out.append(f'<text x="18" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 18 {MARGIN["top"] + ph / 2:.1f})">mean batch loss</text>')
    for k, (label, pts) in enumerate(lines.items()):
        color = COLORS[k % len(COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{coords}"/>')
        ly = MARGIN["top"] + 20 * k + 10
        lx = MARGIN["left"] + pw + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}" font-size="12">{escape(str(label))}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
