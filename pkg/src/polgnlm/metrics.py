"""Estimation-quality measures against a known covariance field."""

from __future__ import annotations

import numpy as np

from polgnlm.core import CovGrid, frobenius_distances


def enl(values: np.ndarray) -> float:
    """Equivalent number of looks, mean^2 / variance."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    var = v.var()
    return float(v.mean() ** 2 / var) if var > 0 else float("inf")


def interior(a: np.ndarray, margin: int) -> np.ndarray:
    if margin <= 0:
        return a
    return a[margin:-margin, margin:-margin]


def mean_frobenius_error(est: CovGrid, truth: CovGrid, margin: int = 0) -> float:
    if est.shape != truth.shape:
        raise ValueError(f"grid sizes differ: {est.shape} vs {truth.shape}")
    return float(np.mean(interior(frobenius_distances(est.data, truth.data), margin)))


def channel_enl(est: CovGrid, mask: np.ndarray | None = None) -> tuple[float, float, float]:
    """ENL of the HH, HV and VV intensities over ``mask`` (all pixels by default)."""
    d = est.data[..., :3]
    sel = d.reshape(-1, 3) if mask is None else d[mask]
    return tuple(enl(sel[:, k]) for k in range(3))
