"""Comparison speckle filters: boxcar multilooking and the unfiltered single look."""

from __future__ import annotations

import numpy as np

from polgnlm.core import CovGrid, SlcGrid, outer_products


def boxcar_filter(slc: SlcGrid, window: int = 5) -> CovGrid:
    """Average of s s^H over a window x window neighbourhood clipped at the borders.

    Offsets are visited row-major and the sum runs over differences from the
    center outer product, the same order and form the PGNLM fast path uses,
    so PGNLM with flat weights over the same window reproduces this exactly.
    """
    if int(window) != window or window < 1 or window % 2 != 1:
        raise ValueError("window must be odd")
    r = window // 2
    h, w = slc.shape
    ops = outer_products(slc.data)
    acc = np.zeros_like(ops)
    n = np.zeros((h, w))
    for dy in range(-r, r + 1):
        i0, i1 = max(0, -dy), min(h, h - dy)
        for dx in range(-r, r + 1):
            j0, j1 = max(0, -dx), min(w, w - dx)
            if i0 >= i1 or j0 >= j1:
                continue
            acc[i0:i1, j0:j1] += ops[i0 + dy:i1 + dy, j0 + dx:j1 + dx] - ops[i0:i1, j0:j1]
            n[i0:i1, j0:j1] += 1.0
    return CovGrid(ops + acc / n[..., None])


def single_look(slc: SlcGrid) -> CovGrid:
    return CovGrid.from_outer_products(slc)
