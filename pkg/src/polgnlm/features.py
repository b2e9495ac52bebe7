"""Per-pixel classification features from covariance grids, and NDVI."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from polgnlm.core import CovGrid, HermitianCov3, OpticalGrid

FEATURE_NAMES = ("c11", "c22", "c33", "mag_c13", "phase_c13")


@dataclass(frozen=True)
class FeatureVector:
    c11: float
    c22: float
    c33: float
    mag_c13: float
    phase_c13: float

    def as_array(self) -> np.ndarray:
        return np.array([self.c11, self.c22, self.c33, self.mag_c13, self.phase_c13])


def principal_phase(re, im) -> np.ndarray:
    """atan2 phase folded into (-pi, pi]; zero for zero magnitude."""
    re = np.asarray(re, dtype=np.float64)
    im = np.asarray(im, dtype=np.float64)
    ph = np.arctan2(im, re)
    ph = np.where(ph <= -np.pi, np.pi, ph)
    return np.where((re == 0) & (im == 0), 0.0, ph)


def feature_vector(cov: HermitianCov3) -> FeatureVector:
    c13 = cov.c13
    return FeatureVector(cov.d11, cov.d22, cov.d33, abs(c13),
                         float(principal_phase(c13.real, c13.imag)))


def extract_features(cov: CovGrid, db: bool = False) -> np.ndarray:
    """(H, W, 5) array of (C11, C22, C33, |C13|, angle C13).

    ``db`` converts the four power-like features to decibels (floored at
    1e-12 before the log); phase is left alone.
    """
    c = cov.data
    out = np.empty(c.shape[:2] + (5,))
    out[..., 0:3] = c[..., 0:3]
    out[..., 3] = np.hypot(c[..., 5], c[..., 6])
    out[..., 4] = principal_phase(c[..., 5], c[..., 6])
    if db:
        out[..., 0:4] = 10.0 * np.log10(np.maximum(out[..., 0:4], 1e-12))
    return out


def ndvi(opt: OpticalGrid, red_band: int, nir_band: int) -> np.ndarray:
    """(NIR - red) / (NIR + red) per pixel; 0 where NIR + red is 0."""
    for b in (red_band, nir_band):
        if not 0 <= b < opt.bands:
            raise ValueError(f"band index {b} outside 0..{opt.bands - 1}")
    if red_band == nir_band:
        raise ValueError("red and NIR bands must differ")
    red = opt.data[..., red_band]
    nir = opt.data[..., nir_band]
    den = nir + red
    safe = np.where(den == 0, 1.0, den)
    return np.where(den == 0, 0.0, (nir - red) / safe)


def ndvi_value(nir: float, red: float) -> float:
    den = nir + red
    return 0.0 if den == 0 else (nir - red) / den


def phase_is_principal(phase) -> bool:
    p = np.asarray(phase)
    return bool(np.all((p > -math.pi) & (p <= math.pi)))
