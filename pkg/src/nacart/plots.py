"""Static SVG renderings of benchmark and theory tables.

Hand-rolled markup: boxplots of per-method relative scores, and curves
with median lines plus interquartile ribbons. Output is self-contained
and deterministic (no fonts beyond the SVG default, no external refs).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

_WIDTH, _HEIGHT = 720, 440
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 24, 70

_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _header(title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="16" text-anchor="middle" '
        f'font-size="13">{title}</text>',
    ]


def _y_scale(lo: float, hi: float):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    lo -= 0.05 * span
    hi += 0.05 * span

    def to_px(v: float) -> float:
        frac = (v - lo) / (hi - lo)
        return _MARGIN_T + (1.0 - frac) * (_HEIGHT - _MARGIN_T - _MARGIN_B)

    return to_px, lo, hi


def _axis(lines: list[str], to_px, lo: float, hi: float) -> None:
    x0, x1 = _MARGIN_L, _WIDTH - _MARGIN_R
    for frac in np.linspace(0.0, 1.0, 5):
        v = lo + frac * (hi - lo)
        y = to_px(v)
        lines.append(
            f'<line x1="{x0}" y1="{y:.1f}" x2="{x1}" y2="{y:.1f}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        lines.append(
            f'<text x="{x0 - 6}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-size="10">{v:.3g}</text>'
        )


def boxplot_svg(groups: dict[str, Sequence[float]], title: str = "") -> str:
    """One box (quartiles, median, whiskers to min/max) per named group."""
    if not groups:
        raise ValueError("nothing to plot")
    all_vals = np.concatenate([np.asarray(v, dtype=float) for v in groups.values()])
    to_px, lo, hi = _y_scale(float(all_vals.min()), float(all_vals.max()))
    lines = _header(title)
    _axis(lines, to_px, lo, hi)
    names = list(groups)
    span = _WIDTH - _MARGIN_L - _MARGIN_R
    step = span / len(names)
    for i, name in enumerate(names):
        vals = np.asarray(groups[name], dtype=float)
        q1, med, q3 = np.percentile(vals, [25, 50, 75])
        cx = _MARGIN_L + (i + 0.5) * step
        half = min(22.0, 0.35 * step)
        color = _PALETTE[i % len(_PALETTE)]
        lines.append(
            f'<line x1="{cx:.1f}" y1="{to_px(float(vals.min())):.1f}" '
            f'x2="{cx:.1f}" y2="{to_px(float(vals.max())):.1f}" '
            f'stroke="{color}" stroke-width="1"/>'
        )
        lines.append(
            f'<rect x="{cx - half:.1f}" y="{to_px(q3):.1f}" '
            f'width="{2 * half:.1f}" height="{to_px(q1) - to_px(q3):.1f}" '
            f'fill="{color}" fill-opacity="0.35" stroke="{color}"/>'
        )
        lines.append(
            f'<line x1="{cx - half:.1f}" y1="{to_px(med):.1f}" '
            f'x2="{cx + half:.1f}" y2="{to_px(med):.1f}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        lines.append(
            f'<text x="{cx:.1f}" y="{_HEIGHT - _MARGIN_B + 14}" font-size="10" '
            f'text-anchor="end" transform="rotate(-35 {cx:.1f} '
            f'{_HEIGHT - _MARGIN_B + 14})">{name}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def curves_svg(
    x_values: Sequence[float],
    series: dict[str, dict],
    title: str = "",
    log_x: bool = False,
) -> str:
    """Median curves with optional interquartile ribbons.

    series maps a name to {"median": [...], optional "q1": [...], "q3": [...]}.
    """
    if not series:
        raise ValueError("nothing to plot")
    xs = np.asarray(x_values, dtype=float)
    if log_x:
        xs = np.log10(xs)
    x_lo, x_hi = float(xs.min()), float(xs.max())
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    vals = []
    for s in series.values():
        vals.extend(s["median"])
        vals.extend(s.get("q1", []))
        vals.extend(s.get("q3", []))
    arr = np.asarray(vals, dtype=float)
    to_py, lo, hi = _y_scale(float(arr.min()), float(arr.max()))

    def to_pxx(v: float) -> float:
        frac = (v - x_lo) / (x_hi - x_lo)
        return _MARGIN_L + frac * (_WIDTH - _MARGIN_L - _MARGIN_R)

    lines = _header(title)
    _axis(lines, to_py, lo, hi)
    for raw, scaled in zip(np.asarray(x_values, dtype=float), xs):
        lines.append(
            f'<text x="{to_pxx(scaled):.1f}" y="{_HEIGHT - _MARGIN_B + 14}" '
            f'text-anchor="middle" font-size="10">{raw:g}</text>'
        )
    for i, (name, s) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        if "q1" in s and "q3" in s:
            upper = [f"{to_pxx(x):.1f},{to_py(v):.1f}" for x, v in zip(xs, s["q3"])]
            low = [f"{to_pxx(x):.1f},{to_py(v):.1f}" for x, v in zip(xs[::-1], list(s["q1"])[::-1])]
            lines.append(
                f'<polygon points="{" ".join(upper + low)}" fill="{color}" '
                'fill-opacity="0.15" stroke="none"/>'
            )
        pts = " ".join(
            f"{to_pxx(x):.1f},{to_py(v):.1f}" for x, v in zip(xs, s["median"])
        )
        lines.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="2"><title>{name}</title></polyline>'
        )
        lines.append(
            f'<text x="{_WIDTH - _MARGIN_R - 4}" '
            f'y="{to_py(s["median"][-1]) - 4:.1f}" text-anchor="end" '
            f'font-size="10" fill="{color}">{name}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def records_box_svg(records, title: str = "relative scores") -> str:
    """Boxplot of RunRecord.r2 grouped by method, in method-name order."""
    groups: dict[str, list[float]] = {}
    for rec in records:
        groups.setdefault(rec.method, []).append(rec.r2)
    return boxplot_svg(groups, title=title)


def records_curve_svg(records, title: str = "consistency") -> str:
    """Median/quartile R2 curves over n_train, one series per method."""
    sizes = sorted({rec.n_train for rec in records})
    methods = sorted({rec.method for rec in records})
    series = {}
    for m in methods:
        med, q1, q3 = [], [], []
        for n in sizes:
            vals = [r.r2 for r in records if r.method == m and r.n_train == n]
            if not vals:
                raise ValueError(f"method {m} missing records at n={n}")
            a, b, c = np.percentile(vals, [25, 50, 75])
            q1.append(a)
            med.append(b)
            q3.append(c)
        series[m] = {"median": med, "q1": q1, "q3": q3}
    return curves_svg(sizes, series, title=title, log_x=True)


def emit_svg(records, path, kind: str = "box") -> None:
    """Write the boxplot or consistency-curve rendering of bench records."""
    if kind not in ("box", "curve"):
        raise ValueError("kind must be 'box' or 'curve'")
    if not records:
        raise ValueError("no records to plot")
    markup = records_box_svg(records) if kind == "box" else records_curve_svg(records)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(markup)
