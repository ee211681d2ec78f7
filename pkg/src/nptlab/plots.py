"""Minimal hand-written SVG scatter plots (no plotting dependency)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 560, 420
MARGIN = dict(left=70, right=150, top=30, bottom=55)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _range(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    pad = 0.05 * (hi - lo) if hi > lo else 0.05 * max(abs(lo), 1.0)
    return lo - pad, hi + pad


def _fmt(x: float) -> str:
    return f"{x:.3g}"


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str, xr, yr):
        self.xr, self.yr = xr, yr
        self.x0, self.x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.y0, self.y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{(self.x0 + self.x1) / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
            f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x1}" y2="{self.y0}" stroke="black"/>',
            f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x0}" y2="{self.y1}" stroke="black"/>',
            f'<text x="{(self.x0 + self.x1) / 2}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>',
            f'<text x="18" y="{(self.y0 + self.y1) / 2}" text-anchor="middle" '
            f'transform="rotate(-90 18 {(self.y0 + self.y1) / 2})">{escape(ylabel)}</text>',
        ]
        for i in range(5):
            fx = xr[0] + (xr[1] - xr[0]) * i / 4
            fy = yr[0] + (yr[1] - yr[0]) * i / 4
            px, py = self.px(fx), self.py(fy)
            self.parts.append(f'<line x1="{px:.2f}" y1="{self.y0}" x2="{px:.2f}" y2="{self.y0 + 4}" stroke="black"/>')
            self.parts.append(f'<text x="{px:.2f}" y="{self.y0 + 16}" text-anchor="middle">{_fmt(fx)}</text>')
            self.parts.append(f'<line x1="{self.x0 - 4}" y1="{py:.2f}" x2="{self.x0}" y2="{py:.2f}" stroke="black"/>')
            self.parts.append(f'<text x="{self.x0 - 7}" y="{py + 4:.2f}" text-anchor="end">{_fmt(fy)}</text>')

    def px(self, x):
        return self.x0 + (x - self.xr[0]) / (self.xr[1] - self.xr[0]) * (self.x1 - self.x0)

    def py(self, y):
        return self.y0 - (y - self.yr[0]) / (self.yr[1] - self.yr[0]) * (self.y0 - self.y1)

    def marker(self, x, y, color, size=4.0, cls="point", title=None):
        px, py = self.px(x), self.py(y)
        tip = f"<title>{escape(title)}</title>" if title else ""
        self.parts.append(f'<circle class="{cls}" cx="{px:.2f}" cy="{py:.2f}" r="{size}" fill="{color}" '
                          f'fill-opacity="0.75">{tip}</circle>')

    def arrow(self, x, y, color):
        ox, oy = self.px(0.0), self.py(0.0)
        self.parts.append(f'<line class="arrow" x1="{ox:.2f}" y1="{oy:.2f}" x2="{self.px(x):.2f}" '
                          f'y2="{self.py(y):.2f}" stroke="{color}" stroke-width="2.5"/>')

    def legend(self, entries):
        """``entries`` are (label, color, filled) triples."""
        x = self.x1 + 15
        for i, (label, color, filled) in enumerate(entries):
            y = self.y1 + 14 + 16 * i
            fill = color if filled else "white"
            self.parts.append(f'<rect class="legend" x="{x}" y="{y - 8}" width="9" height="9" fill="{fill}" '
                              f'stroke="{color}" stroke-width="2"/>')
            self.parts.append(f'<text x="{x + 14}" y="{y}">{escape(label)}</text>')

    def render(self) -> str:
        return '<?xml version="1.0" encoding="UTF-8"?>\n' + "\n".join(self.parts + ["</svg>"]) + "\n"


def _size_for(tau: float, taus) -> float:
    order = sorted(set(taus), reverse=True)
    return 3.0 + 2.0 * order.index(tau)


def scatter_svg(rows, xkey: str, ykey: str, title: str, xlabel: str, ylabel: str) -> str:
    """One circle per row; color by method, marker size by tau (larger = more imbalanced)."""
    if not rows:
        raise ValueError("nothing to plot")
    methods = sorted({r["method"] for r in rows})
    taus = sorted({r["tau"] for r in rows}, reverse=True)
    colors = {m: PALETTE[i % len(PALETTE)] for i, m in enumerate(methods)}
    c = _Canvas(title, xlabel, ylabel, _range(r[xkey] for r in rows), _range(r[ykey] for r in rows))
    for r in rows:
        x, y = r[xkey], r[ykey]
        if not (math.isfinite(x) and math.isfinite(y)):
            continue
        c.marker(x, y, colors[r["method"]], size=_size_for(r["tau"], taus),
                 title=f'{r["method"]} tau={r["tau"]} seed={r["seed"]}')
    entries = [(m, colors[m], True) for m in methods]
    entries += [(f"tau={t:g}: radius {_size_for(t, taus):g}", "#444444", False) for t in taus]
    c.legend(entries)
    return c.render()


def projection_svg(text_reps, image_reps, labels, title: str) -> str:
    """Project reps onto the top-2 principal directions of the text reps.

    Text reps are drawn as arrows from the origin, image reps as dots,
    colored by class.
    """
    g = np.asarray(text_reps, dtype=float)
    z = np.asarray(image_reps, dtype=float)
    _, _, vt = np.linalg.svd(g - g.mean(axis=0), full_matrices=False)
    basis = vt[:2].T
    if basis.shape[1] < 2:
        basis = np.eye(g.shape[1])[:, :2]
    gp, zp = g @ basis, z @ basis
    allx = np.concatenate([gp[:, 0], zp[:, 0], [0.0]])
    ally = np.concatenate([gp[:, 1], zp[:, 1], [0.0]])
    c = _Canvas(title, "principal direction 1", "principal direction 2", _range(allx), _range(ally))
    for (x, y), k in zip(zp, labels):
        c.marker(x, y, PALETTE[int(k) % len(PALETTE)], size=2.5, cls="image")
    for k, (x, y) in enumerate(gp):
        c.arrow(x, y, PALETTE[k % len(PALETTE)])
    c.legend([(f"class {k}", PALETTE[k % len(PALETTE)], True) for k in range(len(g))])
    return c.render()
