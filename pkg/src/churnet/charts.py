"""Minimal deterministic SVG line charts for reports."""

from __future__ import annotations

import datetime as dt
from typing import Mapping, Optional, Sequence

_W, _H = 880, 440
_ML, _MR, _MT, _MB = 70, 20, 30, 50
_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"]


def rolling_mean(values: Sequence[Optional[float]], window: int) -> list[Optional[float]]:
    """Trailing mean over the last `window` non-missing points."""
    out: list[Optional[float]] = []
    for i in range(len(values)):
        chunk = [v for v in values[max(0, i - window + 1) : i + 1] if v is not None]
        out.append(sum(chunk) / len(chunk) if chunk else None)
    return out


def line_chart(
    x_labels: Sequence[str],
    series: Mapping[str, Sequence[Optional[float]]],
    title: str,
    y_label: str = "",
    deterministic: bool = True,
) -> str:
    """Multi-series SVG line chart; identical input gives identical bytes."""
    flat = [v for vs in series.values() for v in vs if v is not None]
    lo = min(flat) if flat else 0.0
    hi = max(flat) if flat else 1.0
    if hi == lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    n = max(len(x_labels), 2)

    def sx(i: int) -> float:
        return _ML + (_W - _ML - _MR) * i / (n - 1)

    def sy(v: float) -> float:
        return _MT + (_H - _MT - _MB) * (1 - (v - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'font-family="sans-serif" font-size="12">'
    ]
    if not deterministic:
        parts.append(f"<!-- generated {dt.datetime.now().isoformat()} -->")
    parts.append(f'<text x="{_W / 2:.1f}" y="18" text-anchor="middle" font-size="15">{title}</text>')
    parts.append(
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" height="{_H - _MT - _MB}" '
        f'fill="none" stroke="#999"/>'
    )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        v = lo + frac * (hi - lo)
        y = sy(v)
        parts.append(f'<line x1="{_ML}" y1="{y:.1f}" x2="{_W - _MR}" y2="{y:.1f}" stroke="#eee"/>')
        parts.append(f'<text x="{_ML - 6}" y="{y + 4:.1f}" text-anchor="end">{v:.4g}</text>')
    step = max(1, len(x_labels) // 10)
    for i in range(0, len(x_labels), step):
        parts.append(
            f'<text x="{sx(i):.1f}" y="{_H - _MB + 16}" text-anchor="middle">{x_labels[i]}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="16" y="{_H / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {_H / 2:.1f})">{y_label}</text>'
        )
    for s_idx, (name, vals) in enumerate(series.items()):
        color = _COLORS[s_idx % len(_COLORS)]
        segment: list[str] = []
        segments: list[list[str]] = []
        for i, v in enumerate(vals):
            if v is None:
                if segment:
                    segments.append(segment)
                    segment = []
                continue
            segment.append(f"{sx(i):.2f},{sy(v):.2f}")
        if segment:
            segments.append(segment)
        for seg in segments:
            parts.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="1.8" '
                f'points="{" ".join(seg)}"/>'
            )
        lx = _W - _MR - 130
        ly = _MT + 16 + 16 * s_idx
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 24}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 30}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
