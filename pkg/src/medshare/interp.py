"""Piecewise-linear interpolation through anchor points."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def piecewise_linear(xs: Sequence[float], ys: Sequence[float], x: float) -> float:
    """Interpolate through ``(xs, ys)``; outside the range, extend the end segments.

    Anchor points are returned exactly.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or len(xs) < 2:
        raise ValueError("need at least two anchor points of matching shape")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("anchor x values must be strictly increasing")
    hit = np.flatnonzero(xs == x)
    if hit.size:
        return float(ys[hit[0]])
    k = int(np.searchsorted(xs, x)) - 1
    k = min(max(k, 0), len(xs) - 2)
    slope = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
    return float(ys[k] + slope * (x - xs[k]))
