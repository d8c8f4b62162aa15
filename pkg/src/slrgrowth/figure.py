"""
Bar chart of the total effect of sea-level rise on growth per coastal county.

Counties are drawn in coastline order. Consecutive counties of one state
share a fill, alternating between black and white from state to state. The
SVG text is a pure function of the inputs, so equal inputs give equal bytes.
"""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .design import slr_model_units

__all__ = ["bar_heights", "figure_impacts"]


def bar_heights(total_slr: float, total_slr2: float, slr_mm) -> np.ndarray:
    """``total_slr * s + total_slr2 * s**2`` with ``s`` in model units."""
    s = slr_model_units(slr_mm)
    if np.any(~np.isfinite(s)):
        raise ValueError("every county needs a finite sea-level rise")
    return total_slr * s + total_slr2 * s**2


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def figure_impacts(
    total_slr: float,
    total_slr2: float,
    counties: Sequence[tuple[str, str, float]],
    title: str = "Total effect of sea-level rise on growth",
    bar_width: float = 4.0,
    height: float = 300.0,
) -> str:
    """Render the per-county bars as an SVG document.

    Parameters
    ----------
    total_slr, total_slr2 : float
        Total impacts of the linear and squared sea-level-rise terms.
    counties : sequence of (fips, state, slr_mm)
        Coastal counties in coastline order.

    Raises
    ------
    ValueError
        A county lacks a sea-level-rise value.
    """
    for fips, _, v in counties:
        if v is None or not math.isfinite(v):
            raise ValueError(f"county {fips} has no sea-level rise")
    h = bar_heights(total_slr, total_slr2, [c[2] for c in counties])
    pad_l, pad_r, pad_t, pad_b = 60.0, 10.0, 30.0, 20.0
    width = pad_l + pad_r + bar_width * len(counties)
    top = float(max(h.max(initial=0.0), 0.0))
    bottom = float(min(h.min(initial=0.0), 0.0))
    span = (top - bottom) or 1.0
    scale = (height - pad_t - pad_b) / span
    zero_y = pad_t + top * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}"'
        f' viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        f'<text x="{_fmt(width / 2)}" y="18" text-anchor="middle" font-size="12">{escape(title)}</text>',
        f'<text x="4" y="{_fmt(pad_t)}" font-size="9">{top:.3g}</text>',
        f'<text x="4" y="{_fmt(height - pad_b)}" font-size="9">{bottom:.3g}</text>',
    ]
    fill, prev_state = "white", None
    for i, ((fips, state, _), v) in enumerate(zip(counties, h)):
        if state != prev_state:
            fill = "black" if fill == "white" else "white"
            prev_state = state
        x = pad_l + i * bar_width
        y = zero_y - max(v, 0.0) * scale
        out.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bar_width)}" height="{_fmt(abs(v) * scale)}"'
            f' fill="{fill}" stroke="black" stroke-width="0.3"><title>{escape(fips)} {escape(state)}'
            f" {v:.6g}</title></rect>"
        )
    out.append(
        f'<line x1="{_fmt(pad_l)}" y1="{_fmt(zero_y)}" x2="{_fmt(width - pad_r)}" y2="{_fmt(zero_y)}"'
        ' stroke="black" stroke-width="0.5"/>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
