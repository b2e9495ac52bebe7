"""
Polarimetric guided nonlocal means (PGNLM) covariance estimation.

For every pixel s the estimate is a weighted sum of outer products s_t s_t^H
over predictors t in a search window around s. Weights come from
exp(-lam * [gamma * d_sar + (1 - gamma) * d_opt]), normalized to sum to one,
where d_sar compares SAR patches with the center pixel's own power in the
denominator and d_opt is the mean squared difference of optical patches.
The optical guide only shapes weights; no optical value reaches the output.

Predictors whose d_sar exceeds ``tau_sar`` are dropped. If fewer than
``n_min`` remain, the ``n_min`` predictors with smallest d_sar are used
instead. The center pixel has d_sar = 0 and always survives.

Border policy: the search window is clipped to the image, patches read
mirror-padded ("symmetric") data so every patch has the same size.

``pgnlm_filter`` is the fast path. It visits search offsets in row-major
order and, per offset, evaluates all pixels at once with separable patch
sums. Each output pixel is written by one worker and accumulates its
predictors in a fixed order, so the result does not depend on the number of
threads. Sums run over s_t s_t^H - s_s s_s^H with the center term added
back at the end. Since the weights sum to one this is the same estimate, and
a constant scene is reproduced exactly. ``pgnlm_reference`` evaluates the
same estimator pixel by pixel and is kept as a slow cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from numba import njit, prange

from polgnlm.core import CovGrid, OpticalGrid, SlcGrid, outer_products

NORM_FLOOR = 1e-300


@dataclass(frozen=True)
class FilterParams:
    """PGNLM settings. Windows are (2r+1) pixels wide."""

    search_radius: int = 19
    patch_radius: int = 4
    gamma: float = 0.85
    lam: float = 0.5
    tau_sar: float = 4.0
    n_min: int = 9

    def __post_init__(self):
        if int(self.search_radius) != self.search_radius or self.search_radius < 1:
            raise ValueError("search_radius must be an integer >= 1")
        if int(self.patch_radius) != self.patch_radius or self.patch_radius < 0:
            raise ValueError("patch_radius must be an integer >= 0")
        if self.patch_radius > self.search_radius:
            raise ValueError("patch_radius must not exceed search_radius")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not self.lam > 0 or not math.isfinite(self.lam):
            raise ValueError("lam must be a finite value > 0")
        if not self.tau_sar > 0:
            raise ValueError("tau_sar must be > 0 (use math.inf to disable pruning)")
        if int(self.n_min) != self.n_min or self.n_min < 1:
            raise ValueError("n_min must be an integer >= 1")

    @classmethod
    def from_windows(cls, search: int = 39, patch: int = 9, **kw) -> "FilterParams":
        if search % 2 != 1 or patch % 2 != 1:
            raise ValueError("search and patch windows must be odd")
        return cls(search_radius=search // 2, patch_radius=patch // 2, **kw)

    @property
    def search_window(self) -> int:
        return 2 * self.search_radius + 1

    @property
    def patch_window(self) -> int:
        return 2 * self.patch_radius + 1

    @property
    def patch_size(self) -> int:
        return self.patch_window ** 2


# ---- per-pixel definitions ---------------------------------------------------

def sar_pixel_dissimilarity(s_t, s_s) -> float:
    """||s_s - s_t||^2 / ||s_s||^2 with s_s the vector being estimated.

    A zero-norm s_s uses the floor 1e-300 in the denominator.
    """
    a = np.asarray(s_s, dtype=np.complex128).reshape(3)
    b = np.asarray(s_t, dtype=np.complex128).reshape(3)
    diff = a - b
    num = float(np.sum(diff.real ** 2 + diff.imag ** 2))
    den = max(float(np.sum(a.real ** 2 + a.imag ** 2)), NORM_FLOOR)
    return num / den


def _pad(data: np.ndarray, r: int) -> np.ndarray:
    return np.pad(data, ((r, r), (r, r), (0, 0)), mode="symmetric")


def _patch_index(rp: int):
    k = np.arange(-rp, rp + 1)
    ky, kx = np.meshgrid(k, k, indexing="ij")
    return ky.reshape(-1), kx.reshape(-1)


def _check_pixel(rc, shape):
    i, j = rc
    if not (0 <= i < shape[0] and 0 <= j < shape[1]):
        raise IndexError(f"pixel {rc} outside grid of shape {shape}")


def _patch_sar(padded: np.ndarray, rc, rp: int) -> np.ndarray:
    ky, kx = _patch_index(rp)
    return padded[rc[0] + rp + ky, rc[1] + rp + kx]


def sar_patch_dissimilarity(slc: SlcGrid, t, s, params: FilterParams) -> float:
    """Mean pixel dissimilarity over the patch offsets, centers t (predictor) and s."""
    _check_pixel(t, slc.shape)
    _check_pixel(s, slc.shape)
    rp = params.patch_radius
    padded = _pad(slc.data, rp)
    ps, pt = _patch_sar(padded, s, rp), _patch_sar(padded, t, rp)
    diff = ps - pt
    num = np.sum(diff.real ** 2 + diff.imag ** 2, axis=-1)
    den = np.maximum(np.sum(ps.real ** 2 + ps.imag ** 2, axis=-1), NORM_FLOOR)
    return float(np.mean(num / den))


def opt_patch_dissimilarity(opt: OpticalGrid, t, s, params: FilterParams) -> float:
    """Squared optical difference averaged over bands and patch offsets."""
    _check_pixel(t, opt.shape)
    _check_pixel(s, opt.shape)
    rp = params.patch_radius
    padded = _pad(opt.data, rp)
    d = _patch_sar(padded, s, rp) - _patch_sar(padded, t, rp)
    return float(np.mean(d ** 2))


def _check_pair(slc: SlcGrid, opt: OpticalGrid):
    if slc.shape != opt.shape:
        raise ValueError(f"SAR grid {slc.shape} and optical grid {opt.shape} differ in size")


def _candidates(s, shape, rs: int):
    i, j = s
    rows = np.arange(max(0, i - rs), min(shape[0], i + rs + 1))
    cols = np.arange(max(0, j - rs), min(shape[1], j + rs + 1))
    ti, tj = np.meshgrid(rows, cols, indexing="ij")
    return ti.reshape(-1), tj.reshape(-1)


def _pixel_weights(sar_pad, opt_pad, s, shape, params: FilterParams):
    """Candidate coordinates, their d_sar and normalized weights for center s."""
    rp, rs = params.patch_radius, params.search_radius
    ky, kx = _patch_index(rp)
    ti, tj = _candidates(s, shape, rs)

    cs = sar_pad[s[0] + rp + ky, s[1] + rp + kx]                        # (P, 3)
    ct = sar_pad[ti[:, None] + rp + ky, tj[:, None] + rp + kx]          # (T, P, 3)
    diff = cs[None] - ct
    num = np.sum(diff.real ** 2 + diff.imag ** 2, axis=-1)
    den = np.maximum(np.sum(cs.real ** 2 + cs.imag ** 2, axis=-1), NORM_FLOOR)
    d_sar = np.mean(num / den[None], axis=1)

    os_ = opt_pad[s[0] + rp + ky, s[1] + rp + kx]
    ot = opt_pad[ti[:, None] + rp + ky, tj[:, None] + rp + kx]
    d_opt = np.mean((os_[None] - ot) ** 2, axis=(1, 2))

    keep = d_sar <= params.tau_sar
    if keep.sum() < min(params.n_min, len(d_sar)):
        keep = np.zeros_like(keep)
        keep[np.argsort(d_sar, kind="stable")[:params.n_min]] = True
    raw = np.exp(-params.lam * (params.gamma * d_sar[keep] + (1.0 - params.gamma) * d_opt[keep]))
    return ti[keep], tj[keep], d_sar[keep], raw / raw.sum()


def predictor_weights(slc: SlcGrid, opt: OpticalGrid, s, params: FilterParams):
    """Retained predictors of pixel s as a list of ((row, col), weight), row-major."""
    _check_pair(slc, opt)
    _check_pixel(s, slc.shape)
    rp = params.patch_radius
    ti, tj, _, w = _pixel_weights(_pad(slc.data, rp), _pad(opt.data, rp), s, slc.shape, params)
    return [((int(a), int(b)), float(x)) for a, b, x in zip(ti, tj, w)]


def pgnlm_reference(slc: SlcGrid, opt: OpticalGrid, params: FilterParams) -> CovGrid:
    """Pixel-by-pixel evaluation of the estimator. Slow; for cross-checking."""
    _check_pair(slc, opt)
    rp = params.patch_radius
    sar_pad, opt_pad = _pad(slc.data, rp), _pad(opt.data, rp)
    ops = outer_products(slc.data)
    out = np.empty(slc.shape + (9,))
    for i in range(slc.height):
        for j in range(slc.width):
            ti, tj, _, w = _pixel_weights(sar_pad, opt_pad, (i, j), slc.shape, params)
            out[i, j] = ops[i, j] + w @ (ops[ti, tj] - ops[i, j])
    return CovGrid(out)


# ---- fast path -----------------------------------------------------------------

@njit(parallel=True, cache=True)
def _accumulate(P, N2, Q, OP, rs, rp, gamma, lam, tau):
    H, W = OP.shape[0], OP.shape[1]
    Hp, Wp = H + 2 * rp, W + 2 * rp
    B = Q.shape[2]
    pw = 2 * rp + 1
    npatch = pw * pw
    acc = np.zeros((H, W, 9))
    wsum = np.zeros((H, W))
    count = np.zeros((H, W), dtype=np.int64)
    f = np.empty((Hp, Wp))
    fo = np.empty((Hp, Wp))
    R = np.empty((Hp, W))
    Ro = np.empty((Hp, W))
    for dy in range(-rs, rs + 1):
        i0 = max(0, -dy)
        i1 = min(H, H - dy)
        if i0 >= i1:
            continue
        for dx in range(-rs, rs + 1):
            j0 = max(0, -dx)
            j1 = min(W, W - dx)
            if j0 >= j1:
                continue
            for a in prange(i0, i1 + 2 * rp):
                for b in range(j0, j1 + 2 * rp):
                    num = 0.0
                    for c in range(3):
                        d = P[a, b, c] - P[a + dy, b + dx, c]
                        num += d.real * d.real + d.imag * d.imag
                    f[a, b] = num / N2[a, b]
                    so = 0.0
                    for band in range(B):
                        e = Q[a, b, band] - Q[a + dy, b + dx, band]
                        so += e * e
                    fo[a, b] = so
                for j in range(j0, j1):
                    r = 0.0
                    ro = 0.0
                    for kx in range(pw):
                        r += f[a, j + kx]
                        ro += fo[a, j + kx]
                    R[a, j] = r
                    Ro[a, j] = ro
            for i in prange(i0, i1):
                for j in range(j0, j1):
                    ds = 0.0
                    do = 0.0
                    for ky in range(pw):
                        ds += R[i + ky, j]
                        do += Ro[i + ky, j]
                    ds = ds / npatch
                    do = do / (B * npatch)
                    if ds <= tau:
                        raw = math.exp(-lam * (gamma * ds + (1.0 - gamma) * do))
                        for c in range(9):
                            acc[i, j, c] += raw * (OP[i + dy, j + dx, c] - OP[i, j, c])
                        wsum[i, j] += raw
                        count[i, j] += 1
    return acc, wsum, count


@njit(cache=True)
def _floor_pixel(P, N2, Q, OP, i, j, rs, rp, gamma, lam, n_min, out):
    """Re-estimate pixel (i, j) from its n_min most similar predictors."""
    H, W = OP.shape[0], OP.shape[1]
    B = Q.shape[2]
    pw = 2 * rp + 1
    npatch = pw * pw
    r0, r1 = max(0, i - rs), min(H, i + rs + 1)
    c0, c1 = max(0, j - rs), min(W, j + rs + 1)
    n = (r1 - r0) * (c1 - c0)
    ds = np.empty(n)
    do = np.empty(n)
    ti = np.empty(n, dtype=np.int64)
    tj = np.empty(n, dtype=np.int64)
    m = 0
    for t0 in range(r0, r1):
        for t1 in range(c0, c1):
            dy = t0 - i
            dx = t1 - j
            sd = 0.0
            so = 0.0
            for ky in range(pw):
                r = 0.0
                ro = 0.0
                a = i + ky
                for kx in range(pw):
                    b = j + kx
                    num = 0.0
                    for c in range(3):
                        d = P[a, b, c] - P[a + dy, b + dx, c]
                        num += d.real * d.real + d.imag * d.imag
                    r += num / N2[a, b]
                    e2 = 0.0
                    for band in range(B):
                        e = Q[a, b, band] - Q[a + dy, b + dx, band]
                        e2 += e * e
                    ro += e2
                sd += r
                so += ro
            ds[m] = sd / npatch
            do[m] = so / (B * npatch)
            ti[m] = t0
            tj[m] = t1
            m += 1
    order = np.argsort(ds, kind="mergesort")
    keep = np.sort(order[:min(n_min, n)])
    for c in range(9):
        out[c] = 0.0
    wsum = 0.0
    for q in keep:
        raw = math.exp(-lam * (gamma * ds[q] + (1.0 - gamma) * do[q]))
        for c in range(9):
            out[c] += raw * (OP[ti[q], tj[q], c] - OP[i, j, c])
        wsum += raw
    for c in range(9):
        out[c] = OP[i, j, c] + out[c] / wsum


def _window_counts(n: int, r: int) -> np.ndarray:
    idx = np.arange(n)
    return np.minimum(n, idx + r + 1) - np.maximum(0, idx - r)


def set_threads(threads: Optional[int]) -> None:
    """Set the numba worker count (capped at the configured maximum)."""
    if threads is not None:
        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))


def pgnlm_filter(slc: SlcGrid, opt: OpticalGrid, params: FilterParams = FilterParams(),
                 threads: Optional[int] = None) -> CovGrid:
    """Estimate the covariance matrix of every pixel with PGNLM."""
    _check_pair(slc, opt)
    set_threads(threads)
    rp, rs = params.patch_radius, params.search_radius
    P = np.ascontiguousarray(_pad(slc.data, rp))
    N2 = np.maximum(np.sum(P.real ** 2 + P.imag ** 2, axis=-1), NORM_FLOOR)
    Q = np.ascontiguousarray(_pad(opt.data, rp))
    OP = np.ascontiguousarray(outer_products(slc.data))
    tau = float(params.tau_sar)

    acc, wsum, count = _accumulate(P, N2, Q, OP, rs, rp, float(params.gamma),
                                   float(params.lam), tau)
    out = OP + acc / wsum[:, :, None]

    n_cand = np.outer(_window_counts(slc.height, rs), _window_counts(slc.width, rs))
    short = np.argwhere(count < np.minimum(params.n_min, n_cand))
    for i, j in short:
        _floor_pixel(P, N2, Q, OP, int(i), int(j), rs, rp, float(params.gamma),
                     float(params.lam), int(params.n_min), out[i, j])
    return CovGrid(out)
