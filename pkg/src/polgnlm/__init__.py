"""Polarimetric guided nonlocal means speckle filtering and its evaluation pipeline."""

import os

# prefer OpenMP over an outdated TBB; the config attribute covers the case
# where numba was imported first (it only matters before threads launch)
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp tbb workqueue")

import numba  # noqa: E402

numba.config.THREADING_LAYER_PRIORITY = os.environ["NUMBA_THREADING_LAYER_PRIORITY"].split()

from polgnlm.core import (
    CovGrid,
    HermitianCov3,
    LabelGrid,
    OpticalGrid,
    ScatteringVector,
    SlcGrid,
    cov_add_scaled,
    frobenius_distance,
    outer_product,
)
from polgnlm.pgnlm import FilterParams, pgnlm_filter

__all__ = [
    "CovGrid",
    "FilterParams",
    "HermitianCov3",
    "LabelGrid",
    "OpticalGrid",
    "ScatteringVector",
    "SlcGrid",
    "cov_add_scaled",
    "frobenius_distance",
    "outer_product",
    "pgnlm_filter",
]

__version__ = "0.1.0"
