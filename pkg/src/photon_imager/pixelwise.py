"""Per-pixel baseline estimators: ML reflectivity, log-matched filter and histogram depth."""
from __future__ import annotations

import enum

import numpy as np
from scipy import ndimage, optimize

from . import streams
from .model import DetectionFrame, GaussianPulse, InstrumentConfig, PulseShape

MISSING = np.nan


def _check_k(cfg: InstrumentConfig, k):
    k = np.asarray(k)
    if np.any(k < 0) or np.any(k > cfg.N):
        raise ValueError(f"counts must lie in [0, {cfg.N}]")
    return k


def cml_reflectivity(cfg: InstrumentConfig, k, return_saturated: bool = False):
    """Constrained ML reflectivity ``max{(log(N/(N-k)) - B)/(eta S), 0}``.

    ``k == N`` gives ``+inf``; pass ``return_saturated=True`` to also get the
    boolean saturation mask.
    """
    k = _check_k(cfg, k).astype(float)
    saturated = k == cfg.N
    with np.errstate(divide="ignore"):
        log_ratio = -np.log1p(-k / cfg.N)
    est = np.maximum((log_ratio - cfg.B) / (cfg.eta * cfg.S), 0.0)
    est = np.where(saturated, np.inf, est)
    if return_saturated:
        return est, saturated
    return est


def normalized_count_reflectivity(cfg: InstrumentConfig, k):
    return _check_k(cfg, k) / (cfg.N * cfg.eta * cfg.S)


def _gaussian_lmf(times, cfg: InstrumentConfig):
    z = cfg.c * np.mean(times) / 2
    return float(np.clip(z, 0.0, np.nextafter(cfg.z_max, 0)))


def _lmf_objective(pulse: PulseShape, times, cfg: InstrumentConfig):
    def neg(z):
        return -np.sum(pulse.log_flux(times - 2 * z / cfg.c))

    def dneg(z):
        return (2 / cfg.c) * np.sum(pulse.dlog_flux(times - 2 * z / cfg.c))

    return neg, dneg


def lmf_grid_search(pulse: PulseShape, times, cfg: InstrumentConfig) -> float:
    """Maximize the summed log-flux over a depth grid of spacing ``c*delta/2``, then refine.

    Refinement finds the zero of the derivative inside the bracketing grid
    cells (Brent) when it changes sign, otherwise a bounded golden search.
    """
    times = np.asarray(times, dtype=float)
    dz = cfg.c * cfg.delta / 2
    grid = np.arange(0.0, cfg.z_max, dz)
    neg, dneg = _lmf_objective(pulse, times, cfg)
    vals = np.empty(grid.size)
    for a in range(0, grid.size, 2048):
        g = grid[a : a + 2048]
        vals[a : a + 2048] = -pulse.log_flux(times[None, :] - 2 * g[:, None] / cfg.c).sum(axis=1)
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    if hi <= lo:
        return float(grid[i])
    dlo, dhi = dneg(lo), dneg(hi)
    if dlo < 0 < dhi:
        z = optimize.brentq(dneg, lo, hi, xtol=1e-15 * max(hi, 1.0), rtol=4 * np.finfo(float).eps)
    else:
        res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        z = res.x
    cand = [z, grid[i]]
    return float(min(cand, key=neg))


def log_matched_filter_depth(cfg: InstrumentConfig, pulse: PulseShape, times, method: str = "auto") -> float:
    """Depth maximizing ``sum log s(t - 2z/c)`` over ``[0, c T_r/2)``; NaN if no times.

    Gaussian pulses use the closed form ``(c/2) * mean(t)``; ``method="grid"``
    forces the generic grid-and-refine path.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return MISSING
    if np.any(times < 0) or np.any(times >= cfg.T_r):
        raise ValueError("times must lie in [0, T_r)")
    if method == "auto" and isinstance(pulse, GaussianPulse):
        return _gaussian_lmf(times, cfg)
    return lmf_grid_search(pulse, times, cfg)


def log_matched_filter_image(frame: DetectionFrame, cfg: InstrumentConfig, pulse: PulseShape, keep=None):
    """Pixelwise log-matched filter depth; NaN where a pixel has no (kept) detections."""
    pix = frame.pixel_index()
    times = frame.times
    if keep is not None:
        pix, times = pix[keep], times[keep]
    npix = frame.counts.size
    if isinstance(pulse, GaussianPulse):
        cnt = np.bincount(pix, minlength=npix)
        tot = np.bincount(pix, weights=times, minlength=npix)
        with np.errstate(invalid="ignore", divide="ignore"):
            z = cfg.c * tot / cnt / 2
        z = np.clip(z, 0.0, np.nextafter(cfg.z_max, 0))
        z[cnt == 0] = MISSING
        return z.reshape(frame.counts.shape)
    out = np.full(npix, MISSING)
    order = np.argsort(pix, kind="stable")
    pix, times = pix[order], times[order]
    bounds = np.searchsorted(pix, np.arange(npix + 1))
    for p in range(npix):
        if bounds[p + 1] > bounds[p]:
            out[p] = lmf_grid_search(pulse, times[bounds[p] : bounds[p + 1]], cfg)
    return out.reshape(frame.counts.shape)


def histogram_depth(cfg: InstrumentConfig, pulse: PulseShape, times, bin_width: float | None = None) -> float:
    """Peak of the detection-time histogram mapped to depth; earliest bin wins ties."""
    if bin_width is None:
        bin_width = pulse.rms_width / 2
    if bin_width < cfg.delta:
        raise ValueError("bin_width must be at least delta")
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return MISSING
    nbins = int(np.ceil(cfg.T_r / bin_width))
    idx = np.minimum((times // bin_width).astype(np.int64), nbins - 1)
    hist = np.bincount(idx, minlength=nbins)
    peak = int(np.argmax(hist))
    center = (peak + 0.5) * bin_width
    return cfg.c / 2 * (center - pulse.centroid)


def histogram_depth_image(frame: DetectionFrame, cfg: InstrumentConfig, pulse: PulseShape, bin_width=None):
    return np.array(
        [histogram_depth(cfg, pulse, t, bin_width) for t in frame.time_lists()]
    ).reshape(frame.counts.shape)


class Imputation(enum.Enum):
    NEIGHBOR_MEAN = "neighbor_mean"
    RANDOM_UNIFORM = "random_uniform"


_NEIGHBORS = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=float)


def impute_missing(image, strategy=Imputation.NEIGHBOR_MEAN, cfg: InstrumentConfig | None = None, seed: int = 0):
    """Fill NaN pixels.

    NEIGHBOR_MEAN repeatedly replaces each missing pixel that has known
    8-neighbours by their mean (all replacements in a pass use the values from
    the start of that pass). RANDOM_UNIFORM draws depths from ``[0, c T_r/2)``.
    """
    strategy = Imputation(strategy)
    img = np.array(image, dtype=float)
    missing = np.isnan(img)
    if not missing.any():
        return img
    if strategy is Imputation.RANDOM_UNIFORM:
        if cfg is None:
            raise ValueError("RANDOM_UNIFORM imputation needs the instrument config")
        ids = np.flatnonzero(missing.ravel())
        img.flat[ids] = streams.uniform(seed, ids, streams.IMPUTE, 0) * cfg.z_max
        return img
    if missing.all():
        raise ValueError("cannot impute from neighbours: every pixel is missing")
    while missing.any():
        known = (~missing).astype(float)
        vals = np.where(missing, 0.0, img)
        s = ndimage.convolve(vals, _NEIGHBORS, mode="constant")
        cnt = ndimage.convolve(known, _NEIGHBORS, mode="constant")
        fill = missing & (cnt > 0)
        img[fill] = s[fill] / cnt[fill]
        missing = missing & ~fill
    return img


def median_filtered_depth(depth_with_missing, size: int = 3):
    """Denoised pixelwise baseline: neighbour-mean imputation then a median filter."""
    return ndimage.median_filter(impute_missing(depth_with_missing), size=size, mode="reflect")
