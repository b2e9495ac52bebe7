"""
Domain types for polarimetric SAR data and the 3x3 covariance algebra.

Covariances are stored as 9 real scalars in the order given by ``COV_FIELDS``
(three intensities, then real/imaginary parts of the upper triangle). The
lower triangle is implied by Hermitian symmetry and never stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

PSD_EPS = 1e-9

COV_FIELDS = (
    "d11", "d22", "d33",
    "c12_re", "c12_im",
    "c13_re", "c13_im",
    "c23_re", "c23_im",
)


class ScatteringVector(NamedTuple):
    """Complex scattering vector of one pixel, channels ordered (HH, HV, VV)."""

    hh: complex
    hv: complex
    vv: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.hh, self.hv, self.vv], dtype=np.complex128)

    @property
    def norm2(self) -> float:
        return abs(self.hh) ** 2 + abs(self.hv) ** 2 + abs(self.vv) ** 2


def _as_svec(s) -> np.ndarray:
    arr = np.asarray(s, dtype=np.complex128).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"scattering vector needs 3 channels, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("scattering vector contains non-finite samples")
    return arr


@dataclass(frozen=True)
class HermitianCov3:
    """3x3 Hermitian covariance held as 3 real diagonals and 3 complex upper entries."""

    d11: float = 0.0
    d22: float = 0.0
    d33: float = 0.0
    c12: complex = 0j
    c13: complex = 0j
    c23: complex = 0j

    @classmethod
    def zeros(cls) -> "HermitianCov3":
        return cls()

    @classmethod
    def diag(cls, a: float, b: float, c: float) -> "HermitianCov3":
        return cls(float(a), float(b), float(c))

    @classmethod
    def from_matrix(cls, m) -> "HermitianCov3":
        """Take the diagonal and upper triangle of a 3x3 matrix (assumed Hermitian)."""
        m = np.asarray(m, dtype=np.complex128)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got {m.shape}")
        return cls(m[0, 0].real, m[1, 1].real, m[2, 2].real,
                   complex(m[0, 1]), complex(m[0, 2]), complex(m[1, 2]))

    @classmethod
    def from_scalars(cls, v: Sequence[float]) -> "HermitianCov3":
        v = [float(x) for x in v]
        if len(v) != 9:
            raise ValueError("covariance needs exactly 9 scalars")
        return cls(v[0], v[1], v[2], complex(v[3], v[4]), complex(v[5], v[6]), complex(v[7], v[8]))

    def to_scalars(self) -> np.ndarray:
        return np.array([
            self.d11, self.d22, self.d33,
            self.c12.real, self.c12.imag,
            self.c13.real, self.c13.imag,
            self.c23.real, self.c23.imag,
        ])

    def to_matrix(self) -> np.ndarray:
        return cov_to_matrix(self.to_scalars())

    @property
    def trace(self) -> float:
        return self.d11 + self.d22 + self.d33

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.to_matrix())

    def is_psd(self, eps: float = PSD_EPS) -> bool:
        return bool(self.eigenvalues()[0] >= -eps * max(self.trace, 0.0))

    def is_positive_definite(self) -> bool:
        return bool(self.eigenvalues()[0] > 0.0)


def outer_product(s) -> HermitianCov3:
    """Return s s^H for a finite scattering vector."""
    v = _as_svec(s)
    return HermitianCov3.from_scalars(outer_products(v))


def cov_add_scaled(acc: HermitianCov3, c: HermitianCov3, w: float) -> HermitianCov3:
    if not math.isfinite(w):
        raise ValueError("weight must be finite")
    return HermitianCov3(
        acc.d11 + w * c.d11, acc.d22 + w * c.d22, acc.d33 + w * c.d33,
        acc.c12 + w * c.c12, acc.c13 + w * c.c13, acc.c23 + w * c.c23,
    )


def frobenius_distance(a: HermitianCov3, b: HermitianCov3) -> float:
    """Frobenius norm of a - b over the full implied 3x3 matrices."""
    d = a.to_scalars() - b.to_scalars()
    return float(math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2 + 2.0 * np.sum(d[3:] ** 2)))


# ---- vectorized helpers over (..., 9) scalar layouts -------------------------

def outer_products(svec: np.ndarray) -> np.ndarray:
    """s s^H for an array of scattering vectors (..., 3) -> (..., 9)."""
    s = np.asarray(svec, dtype=np.complex128)
    h, x, w = s[..., 0], s[..., 1], s[..., 2]
    c12 = h * np.conj(x)
    c13 = h * np.conj(w)
    c23 = x * np.conj(w)
    return np.stack([
        h.real ** 2 + h.imag ** 2,
        x.real ** 2 + x.imag ** 2,
        w.real ** 2 + w.imag ** 2,
        c12.real, c12.imag, c13.real, c13.imag, c23.real, c23.imag,
    ], axis=-1)


def cov_to_matrix(cov: np.ndarray) -> np.ndarray:
    """Expand (..., 9) scalar covariances into full (..., 3, 3) complex matrices."""
    c = np.asarray(cov, dtype=np.float64)
    m = np.zeros(c.shape[:-1] + (3, 3), dtype=np.complex128)
    m[..., 0, 0] = c[..., 0]
    m[..., 1, 1] = c[..., 1]
    m[..., 2, 2] = c[..., 2]
    m[..., 0, 1] = c[..., 3] + 1j * c[..., 4]
    m[..., 0, 2] = c[..., 5] + 1j * c[..., 6]
    m[..., 1, 2] = c[..., 7] + 1j * c[..., 8]
    m[..., 1, 0] = np.conj(m[..., 0, 1])
    m[..., 2, 0] = np.conj(m[..., 0, 2])
    m[..., 2, 1] = np.conj(m[..., 1, 2])
    return m


def matrix_to_cov(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.complex128)
    return np.stack([
        m[..., 0, 0].real, m[..., 1, 1].real, m[..., 2, 2].real,
        m[..., 0, 1].real, m[..., 0, 1].imag,
        m[..., 0, 2].real, m[..., 0, 2].imag,
        m[..., 1, 2].real, m[..., 1, 2].imag,
    ], axis=-1)


def frobenius_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return np.sqrt(np.sum(d[..., :3] ** 2, axis=-1) + 2.0 * np.sum(d[..., 3:] ** 2, axis=-1))


def min_eigenvalues(cov: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(cov_to_matrix(cov))[..., 0]


def psd_violations(cov: np.ndarray, eps: float = PSD_EPS) -> np.ndarray:
    """Boolean mask of matrices whose smallest eigenvalue is below -eps * trace."""
    c = np.asarray(cov, dtype=np.float64)
    trace = np.maximum(c[..., 0] + c[..., 1] + c[..., 2], 0.0)
    return min_eigenvalues(c) < -eps * trace


# ---- grids -------------------------------------------------------------------

def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    if a.flags.writeable:
        a = a.copy()
        a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SlcGrid:
    """Single-look complex scattering vectors, shape (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.complex128)
        if d.ndim != 3 or d.shape[2] != 3 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"SLC grid must have shape (H, W, 3), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("SLC grid contains non-finite samples")
        object.__setattr__(self, "data", _frozen(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def __getitem__(self, rc: tuple[int, int]) -> ScatteringVector:
        v = self.data[rc[0], rc[1]]
        return ScatteringVector(complex(v[0]), complex(v[1]), complex(v[2]))


@dataclass(frozen=True, eq=False)
class CovGrid:
    """Covariance matrices in the 9-scalar layout, shape (height, width, 9)."""

    data: np.ndarray
    check_psd: bool = False

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != 9 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"covariance grid must have shape (H, W, 9), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("covariance grid contains non-finite values")
        if self.check_psd and np.any(psd_violations(d)):
            raise ValueError("covariance grid contains matrices that are not PSD")
        object.__setattr__(self, "data", _frozen(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def __getitem__(self, rc: tuple[int, int]) -> HermitianCov3:
        return HermitianCov3.from_scalars(self.data[rc[0], rc[1]])

    def matrices(self) -> np.ndarray:
        return cov_to_matrix(self.data)

    @classmethod
    def from_outer_products(cls, slc: SlcGrid) -> "CovGrid":
        """Single-look covariance s s^H at every pixel."""
        return cls(outer_products(slc.data))

    @classmethod
    def constant(cls, cov: HermitianCov3, height: int, width: int) -> "CovGrid":
        return cls(np.broadcast_to(cov.to_scalars(), (height, width, 9)))


@dataclass(frozen=True, eq=False)
class OpticalGrid:
    """Real reflectances, band-interleaved by pixel, shape (height, width, bands)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[2] < 1 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"optical grid must have shape (H, W, B), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("optical grid contains non-finite values")
        object.__setattr__(self, "data", _frozen(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclass(frozen=True, eq=False)
class LabelGrid:
    """Integer class ids per pixel, shape (height, width). Negative ids mean unlabeled."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"label grid must have shape (H, W), got {d.shape}")
        if not np.issubdtype(d.dtype, np.integer):
            if not np.all(np.isfinite(d)) or np.any(d != np.round(d)):
                raise ValueError("label grid must hold integers")
        object.__setattr__(self, "data", _frozen(d.astype(np.int64)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape
