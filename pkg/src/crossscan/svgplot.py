"""Self-contained SVG line and scatter plots, no plotting dependency.

Output is deterministic text: fixed layout, fixed decimal formatting and a
data block embedded as an XML comment so plotted values can be read back
or diffed.
"""

import math

PANEL_W = 420
PANEL_H = 320
MARGIN_L = 62
MARGIN_R = 16
MARGIN_T = 34
MARGIN_B = 46

PALETTE = ("#7b3294", "#1f78b4", "#00a6c4", "#d7191c", "#33a02c", "#ff7f00")


def _fmt(v):
    return f"{v:.2f}".rstrip("0").rstrip(".") if abs(v) < 1e6 else f"{v:.3g}"


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mag * mult
        if step >= raw:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


class _Panel:
    """One axes rectangle with linear or log-10 x mapping."""

    def __init__(self, x0, y0, title, xlabel, ylabel, xlim, ylim, log_x=False):
        self.x0, self.y0 = x0, y0
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.log_x = log_x
        lo, hi = xlim
        if log_x:
            lo, hi = math.log10(lo), math.log10(hi)
        if hi - lo < 1e-12:
            hi = lo + 1.0
        self.xlo, self.xhi = lo, hi
        ylo, yhi = ylim
        if yhi - ylo < 1e-12:
            yhi = ylo + 1.0
        pad = 0.05 * (yhi - ylo)
        self.ylo, self.yhi = ylo - pad, yhi + pad

    def px(self, x):
        if self.log_x:
            x = math.log10(max(x, 1e-300))
        frac = (x - self.xlo) / (self.xhi - self.xlo)
        return self.x0 + MARGIN_L + frac * (PANEL_W - MARGIN_L - MARGIN_R)

    def py(self, y):
        frac = (y - self.ylo) / (self.yhi - self.ylo)
        return self.y0 + PANEL_H - MARGIN_B - frac * (PANEL_H - MARGIN_T - MARGIN_B)

    def frame(self):
        left = self.x0 + MARGIN_L
        right = self.x0 + PANEL_W - MARGIN_R
        top = self.y0 + MARGIN_T
        bottom = self.y0 + PANEL_H - MARGIN_B
        parts = [
            f'<rect x="{left:.1f}" y="{top:.1f}" width="{right - left:.1f}" '
            f'height="{bottom - top:.1f}" fill="none" stroke="#444"/>',
            f'<text x="{(left + right) / 2:.1f}" y="{self.y0 + 18:.1f}" '
            f'text-anchor="middle" font-size="13">{self.title}</text>',
            f'<text x="{(left + right) / 2:.1f}" y="{bottom + 34:.1f}" '
            f'text-anchor="middle" font-size="11">{self.xlabel}</text>',
            f'<text x="{self.x0 + 14:.1f}" y="{(top + bottom) / 2:.1f}" '
            f'text-anchor="middle" font-size="11" transform="rotate(-90 '
            f'{self.x0 + 14:.1f} {(top + bottom) / 2:.1f})">{self.ylabel}</text>',
        ]
        if self.log_x:
            lo_dec = math.ceil(self.xlo - 1e-9)
            hi_dec = math.floor(self.xhi + 1e-9)
            xticks = [10.0 ** d for d in range(lo_dec, hi_dec + 1)]
        else:
            xticks = _ticks(self.xlo, self.xhi)
        for t in xticks:
            px = self.px(t)
            if left - 0.5 <= px <= right + 0.5:
                parts.append(f'<line x1="{px:.1f}" y1="{bottom:.1f}" x2="{px:.1f}" '
                             f'y2="{bottom + 4:.1f}" stroke="#444"/>')
                parts.append(f'<text x="{px:.1f}" y="{bottom + 16:.1f}" '
                             f'text-anchor="middle" font-size="10">{_fmt(t)}</text>')
        for t in _ticks(self.ylo, self.yhi):
            py = self.py(t)
            if top - 0.5 <= py <= bottom + 0.5:
                parts.append(f'<line x1="{left - 4:.1f}" y1="{py:.1f}" x2="{left:.1f}" '
                             f'y2="{py:.1f}" stroke="#444"/>')
                parts.append(f'<text x="{left - 7:.1f}" y="{py + 3:.1f}" '
                             f'text-anchor="end" font-size="10">{_fmt(t)}</text>')
        return parts


def _series_elems(panel, series):
    parts = []
    for i, s in enumerate(series):
        color = s.get("color", PALETTE[i % len(PALETTE)])
        xs, ys = s["x"], s["y"]
        sem = s.get("sem")
        if sem is not None and len(xs) > 1:
            upper = [(panel.px(x), panel.py(y + e)) for x, y, e in zip(xs, ys, sem)]
            lower = [(panel.px(x), panel.py(y - e)) for x, y, e in zip(xs, ys, sem)]
            pts = " ".join(f"{px:.1f},{py:.1f}" for px, py in upper + lower[::-1])
            parts.append(f'<polygon points="{pts}" fill="{color}" '
                         f'fill-opacity="0.18" stroke="none"/>')
        pts = " ".join(f"{panel.px(x):.1f},{panel.py(y):.1f}"
                       for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.8"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{panel.px(x):.1f}" cy="{panel.py(y):.1f}" '
                         f'r="2.4" fill="{color}"/>')
    return parts


def _legend(panel, series):
    parts = []
    lx = panel.x0 + MARGIN_L + 10
    ly = panel.y0 + MARGIN_T + 12
    for i, s in enumerate(series):
        color = s.get("color", PALETTE[i % len(PALETTE)])
        y = ly + 14 * i
        parts.append(f'<line x1="{lx:.1f}" y1="{y:.1f}" x2="{lx + 18:.1f}" '
                     f'y2="{y:.1f}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 23:.1f}" y="{y + 3.5:.1f}" '
                     f'font-size="10">{s["label"]}</text>')
    return parts


def _data_comment(tag, series):
    lines = [f"data panel={tag}"]
    for s in series:
        xs = " ".join(repr(float(v)) for v in s["x"])
        ys = " ".join(repr(float(v)) for v in s["y"])
        lines.append(f"series {s['label']} x: {xs}")
        lines.append(f"series {s['label']} y: {ys}")
        if s.get("sem") is not None:
            es = " ".join(repr(float(v)) for v in s["sem"])
            lines.append(f"series {s['label']} sem: {es}")
    body = "\n".join(lines).replace("--", "- -")
    return f"<!--\n{body}\n-->"


def write_line_plot(path, panels):
    """``panels`` is a list of dicts: title, xlabel, ylabel, series, log_x.

    Each series dict has label, x, y and optional sem (drawn as a band).
    """
    width = PANEL_W * len(panels)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}" '
             f'font-family="sans-serif">']
    for i, spec in enumerate(panels):
        series = spec["series"]
        xs = [v for s in series for v in s["x"]]
        ys = [v for s in series for v in s["y"]]
        for s in series:
            if s.get("sem") is not None:
                ys += [y + e for y, e in zip(s["y"], s["sem"])]
                ys += [y - e for y, e in zip(s["y"], s["sem"])]
        panel = _Panel(i * PANEL_W, 0, spec.get("title", ""),
                       spec.get("xlabel", ""), spec.get("ylabel", ""),
                       (min(xs), max(xs)), (min(ys), max(ys)),
                       log_x=spec.get("log_x", False))
        parts.extend(panel.frame())
        parts.extend(_series_elems(panel, series))
        parts.extend(_legend(panel, series))
        parts.append(_data_comment(spec.get("title", str(i)), series))
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def write_scatter_plot(path, groups, title="", xlabel="", ylabel=""):
    """Scatter of 2-D points; each group has label, points, color, marker
    ("cross" or "square" or "circle")."""
    xs = [p[0] for g in groups for p in g["points"]]
    ys = [p[1] for g in groups for p in g["points"]]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    panel = _Panel(0, 0, title, xlabel, ylabel,
                   (min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1),
                   (min(ys), max(ys)))
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" '
             f'height="{PANEL_H}" viewBox="0 0 {PANEL_W} {PANEL_H}" '
             f'font-family="sans-serif">']
    parts.extend(panel.frame())
    for i, g in enumerate(groups):
        color = g.get("color", PALETTE[i % len(PALETTE)])
        marker = g.get("marker", "circle")
        for x, y in g["points"]:
            px, py = panel.px(x), panel.py(y)
            if marker == "cross":
                parts.append(f'<path d="M{px - 3:.1f} {py - 3:.1f}L{px + 3:.1f} '
                             f'{py + 3:.1f}M{px - 3:.1f} {py + 3:.1f}L{px + 3:.1f} '
                             f'{py - 3:.1f}" stroke="{color}" stroke-width="1.2"/>')
            elif marker == "square":
                parts.append(f'<rect x="{px - 2.6:.1f}" y="{py - 2.6:.1f}" '
                             f'width="5.2" height="5.2" fill="none" '
                             f'stroke="{color}" stroke-width="1.2"/>')
            else:
                parts.append(f'<circle cx="{px:.1f}" cy="{py:.1f}" r="2.4" '
                             f'fill="{color}"/>')
    ly = MARGIN_T + 12
    for i, g in enumerate(groups):
        color = g.get("color", PALETTE[i % len(PALETTE)])
        y = ly + 14 * i
        parts.append(f'<circle cx="{MARGIN_L + 14:.1f}" cy="{y:.1f}" r="3" '
                     f'fill="{color}"/>')
        parts.append(f'<text x="{MARGIN_L + 22:.1f}" y="{y + 3.5:.1f}" '
                     f'font-size="10">{g["label"]}</text>')
    comment_series = [{"label": g["label"],
                       "x": [p[0] for p in g["points"]],
                       "y": [p[1] for p in g["points"]]} for g in groups]
    parts.append(_data_comment(title or "scatter", comment_series))
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
