"""Small self-contained SVG figures built with ElementTree."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence
from xml.etree import ElementTree as ET

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=60, right=20, top=40, bottom=60)
PALETTE = ["#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]
CHICK_COLOR = "#d62728"


def _f(v: float) -> str:
    return f"{v:.2f}"


def _svg(title: str) -> ET.Element:
    root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(WIDTH), height=str(HEIGHT),
                      viewBox=f"0 0 {WIDTH} {HEIGHT}")
    ET.SubElement(root, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT), fill="white")
    t = ET.SubElement(root, "text", x=_f(WIDTH / 2), y="24", attrib={"text-anchor": "middle",
                                                                  "font-family": "sans-serif",
                                                                  "font-size": "16"})
    t.text = title
    return root


def _text(parent, x, y, s, anchor="middle", size=12):
    el = ET.SubElement(parent, "text", x=_f(x), y=_f(y), attrib={"text-anchor": anchor,
                                                                "font-family": "sans-serif",
                                                                "font-size": str(size)})
    el.text = s
    return el


def _serialize(root: ET.Element) -> str:
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


@dataclass
class Bar:
    label: str
    mean: float | None
    err: float = 0.0
    points: Sequence[float] = ()
    color: str = PALETTE[0]


def bar_chart(title: str, bars: Sequence[Bar], band: tuple[float, float] | None = None,
              y_label: str = "preference (%)", chance: float = 50.0) -> str:
    """Bars on a fixed 0-100 axis with optional shaded band and a chance line."""
    root = _svg(title)
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def sy(v: float) -> float:
        return y0 - (y0 - y1) * max(0.0, min(100.0, v)) / 100.0

    if band is not None:
        lo, hi = band
        ET.SubElement(root, "rect", x=_f(x0), y=_f(sy(hi)), width=_f(x1 - x0), height=_f(sy(lo) - sy(hi)),
                      fill=CHICK_COLOR, attrib={"fill-opacity": "0.15"})
    for v in range(0, 101, 25):
        ET.SubElement(root, "line", x1=_f(x0 - 4), y1=_f(sy(v)), x2=_f(x0), y2=_f(sy(v)), stroke="black")
        _text(root, x0 - 8, sy(v) + 4, str(v), anchor="end")
    ET.SubElement(root, "line", x1=_f(x0), y1=_f(y0), x2=_f(x0), y2=_f(y1), stroke="black")
    ET.SubElement(root, "line", x1=_f(x0), y1=_f(y0), x2=_f(x1), y2=_f(y0), stroke="black")
    ET.SubElement(root, "line", x1=_f(x0), y1=_f(sy(chance)), x2=_f(x1), y2=_f(sy(chance)), stroke="gray",
                  attrib={"stroke-dasharray": "6 4"})
    label = _text(root, 18, (y0 + y1) / 2, y_label)
    label.set("transform", f"rotate(-90 18 {_f((y0 + y1) / 2)})")

    slot = (x1 - x0) / max(1, len(bars))
    for i, bar in enumerate(bars):
        cx = x0 + slot * (i + 0.5)
        w = slot * 0.5
        _text(root, cx, y0 + 18, bar.label)
        if bar.mean is None:
            _text(root, cx, y0 - 6, "n/a")
            continue
        ET.SubElement(root, "rect", x=_f(cx - w / 2), y=_f(sy(bar.mean)), width=_f(w),
                      height=_f(y0 - sy(bar.mean)), fill=bar.color, attrib={"fill-opacity": "0.7"})
        if bar.err > 0:
            ET.SubElement(root, "line", x1=_f(cx), y1=_f(sy(bar.mean - bar.err)), x2=_f(cx),
                          y2=_f(sy(bar.mean + bar.err)), stroke="black")
        for j, p in enumerate(bar.points):
            jitter = (j % 7 - 3) * w / 14
            ET.SubElement(root, "circle", cx=_f(cx + jitter), cy=_f(sy(p)), r="2.5", fill="black",
                          attrib={"fill-opacity": "0.6"})
    return _serialize(root)


def scatter(title: str, xy: Sequence[tuple[float, float]], groups: Sequence[str]) -> str:
    """Scatter plot coloured by group, chicks always red; axes are unitless."""
    root = _svg(title)
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"] - 120
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    names = sorted(set(groups), key=lambda g: (g != "chick", g))
    colors = {}
    k = 0
    for g in names:
        if g == "chick":
            colors[g] = CHICK_COLOR
        else:
            colors[g] = PALETTE[k % len(PALETTE)]
            k += 1
    if xy:
        xs = [p[0] for p in xy]
        ys = [p[1] for p in xy]
        xmin, xmax = min(xs), max(xs)
        ymin, ymax = min(ys), max(ys)
        xspan = (xmax - xmin) or 1.0
        yspan = (ymax - ymin) or 1.0
        for (x, y), g in zip(xy, groups):
            px = x0 + 10 + (x1 - x0 - 20) * (x - xmin) / xspan
            py = y0 - 10 - (y0 - y1 - 20) * (y - ymin) / yspan
            ET.SubElement(root, "circle", cx=_f(px), cy=_f(py), r="4", fill=colors[g],
                          attrib={"fill-opacity": "0.8"})
    ET.SubElement(root, "rect", x=_f(x0), y=_f(y1), width=_f(x1 - x0), height=_f(y0 - y1), fill="none",
                  stroke="black")
    _text(root, (x0 + x1) / 2, y0 + 24, "t-SNE 1")
    label = _text(root, 18, (y0 + y1) / 2, "t-SNE 2")
    label.set("transform", f"rotate(-90 18 {_f((y0 + y1) / 2)})")
    for i, g in enumerate(names):
        ly = y1 + 16 + 18 * i
        ET.SubElement(root, "circle", cx=_f(x1 + 20), cy=_f(ly - 4), r="5", fill=colors[g])
        _text(root, x1 + 30, ly, f"{g} ({list(groups).count(g)})", anchor="start")
    return _serialize(root)
