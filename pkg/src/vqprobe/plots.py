"""Static SVG figures, written by hand to avoid a plotting dependency.

Every figure uses the same frame: a fixed canvas with a plot area whose
y-axis maps data values linearly.  Reference lines and bars carry ``class``
and ``data-value`` attributes so tests can check geometry structurally.
"""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 64, 24, 40, 56
PLOT_W = WIDTH - LEFT - RIGHT
PLOT_H = HEIGHT - TOP - BOTTOM
NEG_LOG_P_CEILING = 12.0
PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


class Frame:
    def __init__(self, title: str, ymin: float, ymax: float, xmin: float = 0.0, xmax: float = 1.0,
                 xlabel: str = "", ylabel: str = ""):
        if ymax <= ymin:
            ymax = ymin + 1.0
        if xmax <= xmin:
            xmax = xmin + 1.0
        self.ymin, self.ymax, self.xmin, self.xmax = ymin, ymax, xmin, xmax
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text class="title" x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{escape(title)}</text>',
            f'<rect class="axes" x="{LEFT}" y="{TOP}" width="{PLOT_W}" height="{PLOT_H}" '
            f'fill="none" stroke="black"/>',
        ]
        if xlabel:
            self.text(WIDTH / 2, HEIGHT - 14, xlabel, cls="xlabel")
        if ylabel:
            self.parts.append(
                f'<text class="ylabel" x="16" y="{TOP + PLOT_H / 2:.1f}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="12" '
                f'transform="rotate(-90 16 {TOP + PLOT_H / 2:.1f})">{escape(ylabel)}</text>'
            )
        for v in (ymin, (ymin + ymax) / 2, ymax):
            self.text(LEFT - 6, self.y(v) + 4, f"{v:.3g}", anchor="end", cls="ytick")

    def x(self, v: float) -> float:
        return LEFT + (v - self.xmin) / (self.xmax - self.xmin) * PLOT_W

    def y(self, v: float) -> float:
        return TOP + (1.0 - (v - self.ymin) / (self.ymax - self.ymin)) * PLOT_H

    def text(self, x, y, s, anchor="middle", cls="label", size=11):
        self.parts.append(
            f'<text class="{cls}" x="{x:.2f}" y="{y:.2f}" text-anchor="{anchor}" '
            f'font-family="sans-serif" font-size="{size}">{escape(str(s))}</text>'
        )

    def polyline(self, xs, ys, color, cls="series"):
        pts = " ".join(f"{self.x(a):.2f},{self.y(b):.2f}" for a, b in zip(xs, ys))
        self.parts.append(
            f'<polyline class="{cls}" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )

    def hline(self, value, color, dash, label, cls="reference"):
        y = self.y(value)
        self.parts.append(
            f'<line class="{cls}" data-value="{value:.9g}" x1="{LEFT}" y1="{y:.2f}" '
            f'x2="{LEFT + PLOT_W}" y2="{y:.2f}" stroke="{color}" stroke-dasharray="{dash}"/>'
        )
        self.text(LEFT + PLOT_W - 4, y - 4, label, anchor="end", cls="reference-label", size=10)

    def bar(self, x0, width, value, color, cls="bar"):
        top = self.y(value)
        base = self.y(max(self.ymin, 0.0))
        self.parts.append(
            f'<rect class="{cls}" data-value="{value:.9g}" x="{x0:.2f}" y="{min(top, base):.2f}" '
            f'width="{width:.2f}" height="{abs(base - top):.2f}" fill="{color}"/>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def training_figures(steps, loss, ppl, K: int = 8, perplexity_fraction: float = 0.4) -> dict[str, str]:
    """Loss and perplexity curves; returns ``{filename: svg_text}``."""
    steps = np.asarray(steps, dtype=float)
    if steps.size == 0:
        raise ValueError("no training records to plot")
    loss = np.asarray(loss, dtype=float)
    ppl = np.asarray(ppl, dtype=float)
    x0, x1 = float(steps.min()), float(steps.max())

    f = Frame("Commitment loss", 0.0, float(loss.max()) * 1.05 or 1.0, x0, x1, "step", "loss")
    f.polyline(steps, loss, PALETTE[0])
    out = {"loss.svg": f.render()}

    g = Frame("Codebook perplexity", 0.0, K * 1.1, x0, x1, "step", "perplexity")
    g.polyline(steps, ppl, PALETTE[1])
    g.hline(perplexity_fraction * K, "red", "6,4", f"health {perplexity_fraction * K:.3g}", cls="reference threshold")
    g.hline(float(K), "grey", "2,3", f"max K = {K}", cls="reference maximum")
    out["perplexity.svg"] = g.render()
    return out


def neg_log10_p(p: float) -> float:
    if p <= 0:
        return NEG_LOG_P_CEILING
    return min(NEG_LOG_P_CEILING, -math.log10(p))


def report_figures(report: dict) -> dict[str, str]:
    """Per-intervention symbol histograms and the -log10(p) significance chart."""
    out = {}
    p_ref = report.get("thresholds", {}).get("p_max", 0.01)
    h2 = report.get("h2", [])
    for r in h2:
        counts = np.asarray(r["counts"], dtype=float)
        dists = counts / np.maximum(counts.sum(axis=1, keepdims=True), 1)
        K = dists.shape[1]
        f = Frame(f"{r['name']}: symbol distribution", 0.0, 1.0, 0, K,
                  "codebook entry", "frequency")
        slot = PLOT_W / K
        bw = slot * 0.8 / len(dists)
        for ci, (label, row) in enumerate(zip((r["condition_a"], r["condition_b"]), dists)):
            for k, v in enumerate(row):
                f.bar(LEFT + k * slot + slot * 0.1 + ci * bw, bw, float(v), PALETTE[ci % len(PALETTE)])
            f.text(LEFT + 8 + 120 * ci, TOP + 14, label, anchor="start", cls="legend")
        for k in range(K):
            f.text(LEFT + (k + 0.5) * slot, TOP + PLOT_H + 14, k, cls="xtick")
        out[f"symbols_{r['name']}.svg"] = f.render()

    ref = -math.log10(p_ref)
    values = [neg_log10_p(r["p"]) for r in h2]
    ymax = max([ref * 1.5] + [v * 1.1 for v in values])
    f = Frame("Chi-squared significance", 0.0, ymax, 0, max(len(values), 1), "", "-log10(p)")
    slot = PLOT_W / max(len(values), 1)
    for i, (r, v) in enumerate(zip(h2, values)):
        f.bar(LEFT + i * slot + slot * 0.2, slot * 0.6, v, PALETTE[0] if v > ref else "#999999")
        f.text(LEFT + (i + 0.5) * slot, TOP + PLOT_H + 14, r["name"], cls="xtick")
    f.hline(ref, "red", "6,4", f"p = {p_ref:g}", cls="reference threshold")
    out["significance.svg"] = f.render()
    return out
