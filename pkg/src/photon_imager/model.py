"""Acquisition constants, data containers and the low-flux photon-counting laws.

Every detection at a pixel is either a signal photon (time drawn from the
shifted, normalized pulse) or a background count (uniform on ``[0, T_r)``).
The count over ``N`` pulses is binomial with per-pulse success probability
``1 - exp(-(eta*alpha*S + B))``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, special, stats

SPEED_OF_LIGHT = 2.998e8
GAUSSIAN_SUPPORT_SIGMAS = 6.0
LOW_FLUX_LIMIT = 0.1


class LowFluxWarning(UserWarning):
    """Per-pulse mean count is too large for the single-detection model."""


@dataclass(frozen=True)
class InstrumentConfig:
    """Acquisition constants.

    ``S`` and ``B`` are mean signal (at unit reflectivity, before ``eta``) and
    background counts per repetition period; ``B`` lumps ambient light and
    dark counts.
    """

    eta: float
    S: float
    B: float
    N: int
    T_r: float
    T_p: float
    delta: float = 8e-12
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.S < 0 or self.B < 0:
            raise ValueError("S and B must be nonnegative")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        if self.T_r <= 0 or self.T_p <= 0 or self.delta <= 0 or self.c <= 0:
            raise ValueError("T_r, T_p, delta and c must be positive")
        if not self.T_p < self.T_r / 100:
            raise ValueError("pulse width must satisfy T_p < T_r/100")
        if not self.delta < self.T_p:
            raise ValueError("time bin must satisfy delta < T_p")

    @property
    def z_max(self) -> float:
        """Unambiguous range ``c*T_r/2`` (exclusive upper bound on depth)."""
        return self.c * self.T_r / 2

    @property
    def acquisition_time(self) -> float:
        return self.N * self.T_r

    def replace(self, **changes) -> "InstrumentConfig":
        return InstrumentConfig(**{**self.__dict__, **changes})


@dataclass(frozen=True)
class Scene:
    alpha: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=np.float64)
        z = np.array(self.z, dtype=np.float64)
        if alpha.ndim != 2 or alpha.shape[0] != alpha.shape[1]:
            raise ValueError(f"reflectivity must be square, got shape {alpha.shape}")
        if z.shape != alpha.shape:
            raise ValueError("reflectivity and depth shapes differ")
        if not (np.all(np.isfinite(alpha)) and np.all(alpha >= 0)):
            raise ValueError("reflectivity must be finite and nonnegative")
        if not (np.all(np.isfinite(z)) and np.all(z >= 0)):
            raise ValueError("depth must be finite and nonnegative")
        alpha.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    def check(self, cfg: InstrumentConfig) -> None:
        """Raise if depths alias; warn if the low-flux assumption breaks."""
        if np.any(self.z >= cfg.z_max):
            raise ValueError(f"depths must be below c*T_r/2 = {cfg.z_max:g} m")
        check_low_flux(cfg, self.alpha)


def check_low_flux(cfg: InstrumentConfig, alpha) -> bool:
    flux = cfg.eta * np.max(alpha) * cfg.S + cfg.B
    if flux >= LOW_FLUX_LIMIT:
        warnings.warn(
            f"max per-pulse flux {flux:.3g} >= {LOW_FLUX_LIMIT}; low-flux model is inaccurate",
            LowFluxWarning,
            stacklevel=2,
        )
        return False
    return True


# --------------------------------------------------------------------------
# pulse shapes


class PulseShape:
    """Photon-flux waveform ``s(t)`` of one pulse emitted at ``t = 0``.

    Subclasses provide ``flux``, ``dflux``, ``cdf_inverse`` and ``support``.
    ``S`` is the integral of the flux.
    """

    S: float
    support: tuple

    def flux(self, t):
        raise NotImplementedError

    def dflux(self, t):
        raise NotImplementedError

    def cdf_inverse(self, u):
        """Quantile function of the normalized pulse."""
        raise NotImplementedError

    @property
    def flux_floor(self) -> float:
        return 1e-12 * self.S / self.rms_width

    def log_flux(self, t):
        return np.log(np.maximum(self.flux(t), self.flux_floor))

    def dlog_flux(self, t):
        """Derivative of ``log max(s, floor)``; zero where the floor is active."""
        s = self.flux(t)
        ds = self.dflux(t)
        active = s > self.flux_floor
        return np.where(active, ds / np.where(active, s, 1.0), 0.0)

    @property
    def centroid(self) -> float:
        raise NotImplementedError

    @property
    def rms_width(self) -> float:
        raise NotImplementedError

    def is_log_concave(self) -> bool:
        return True


@dataclass(frozen=True)
class GaussianPulse(PulseShape):
    """Gaussian pulse centred at ``t = 0``, truncated at six RMS widths."""

    S: float
    T_p: float

    def __post_init__(self):
        if self.S < 0 or self.T_p <= 0:
            raise ValueError("Gaussian pulse needs S >= 0 and T_p > 0")

    @property
    def support(self):
        w = GAUSSIAN_SUPPORT_SIGMAS * self.T_p
        return (-w, w)

    @property
    def peak(self) -> float:
        return self.S / (math.sqrt(2 * math.pi) * self.T_p)

    def flux(self, t):
        t = np.asarray(t, dtype=float)
        inside = np.abs(t) <= GAUSSIAN_SUPPORT_SIGMAS * self.T_p
        return np.where(inside, self.peak * np.exp(-0.5 * (t / self.T_p) ** 2), 0.0)

    def dflux(self, t):
        t = np.asarray(t, dtype=float)
        return -t / self.T_p**2 * self.flux(t)

    def log_flux(self, t):
        # log-quadratic everywhere so the depth likelihood stays convex off-support
        t = np.asarray(t, dtype=float)
        return math.log(self.peak) - 0.5 * (t / self.T_p) ** 2 if self.S > 0 else np.full_like(t, -np.inf)

    def dlog_flux(self, t):
        return -np.asarray(t, dtype=float) / self.T_p**2

    def cdf_inverse(self, u):
        lo = special.ndtr(-GAUSSIAN_SUPPORT_SIGMAS)
        u = lo + np.asarray(u, dtype=float) * (1 - 2 * lo)
        return self.T_p * special.ndtri(u)

    def integral(self, a, b):
        """Integral of the flux over ``[a, b]``."""
        a = np.clip(a, *self.support)
        b = np.clip(b, *self.support)
        return self.S * (special.ndtr(b / self.T_p) - special.ndtr(a / self.T_p))

    @property
    def centroid(self) -> float:
        return 0.0

    @property
    def rms_width(self) -> float:
        return self.T_p


class SampledPulse(PulseShape):
    """Piecewise-linear flux through ``(times, fluxes)``, rescaled so its integral is ``S``.

    Zero outside ``[times[0], times[-1]]``.
    """

    N_TABLE = 10_000

    def __init__(self, times, fluxes, S: float):
        times = np.asarray(times, dtype=float)
        fluxes = np.asarray(fluxes, dtype=float)
        if times.ndim != 1 or times.shape != fluxes.shape or times.size < 2:
            raise ValueError("times and fluxes must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if np.any(fluxes < 0) or not np.any(fluxes > 0):
            raise ValueError("fluxes must be nonnegative and not all zero")
        if S <= 0:
            raise ValueError("S must be positive")
        area = integrate.trapezoid(fluxes, times)
        self.times = times
        self.fluxes = fluxes * (S / area)
        self.S = float(S)
        self.support = (float(times[0]), float(times[-1]))
        self.times.setflags(write=False)
        self.fluxes.setflags(write=False)
        self._slopes = np.diff(self.fluxes) / np.diff(times)
        # tabulated quantile function; the CDF of a piecewise-linear density is exact
        # piecewise-quadratic, so invert it on a dense knot set
        grid = np.linspace(times[0], times[-1], self.N_TABLE)
        cdf = self.cumulative(grid) / self.S
        cdf[-1] = 1.0
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        self._q_cdf = cdf[keep]
        self._q_t = grid[keep]

    def __repr__(self):
        return f"SampledPulse(n={self.times.size}, S={self.S:g}, support={self.support})"

    def flux(self, t):
        return np.interp(t, self.times, self.fluxes, left=0.0, right=0.0)

    def dflux(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        inside = (idx >= 0) & (idx < self.times.size - 1)
        return np.where(inside, self._slopes[np.clip(idx, 0, self._slopes.size - 1)], 0.0)

    def cumulative(self, t):
        """Integral of the flux from the support start to ``t``."""
        t = np.clip(np.asarray(t, dtype=float), *self.support)
        seg_area = 0.5 * (self.fluxes[1:] + self.fluxes[:-1]) * np.diff(self.times)
        cum = np.concatenate([[0.0], np.cumsum(seg_area)])
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 2)
        dt = t - self.times[idx]
        return cum[idx] + self.fluxes[idx] * dt + 0.5 * self._slopes[idx] * dt**2

    def integral(self, a, b):
        return self.cumulative(b) - self.cumulative(a)

    def cdf_inverse(self, u):
        return np.interp(u, self._q_cdf, self._q_t)

    @property
    def centroid(self) -> float:
        t = np.linspace(*self.support, 20001)
        return float(integrate.trapezoid(t * self.flux(t), t) / self.S)

    @property
    def rms_width(self) -> float:
        t = np.linspace(*self.support, 20001)
        m = self.centroid
        return float(np.sqrt(integrate.trapezoid((t - m) ** 2 * self.flux(t), t) / self.S))

    def log_concavity_violation(self) -> Optional[tuple]:
        """First sample triple ``(i-1, i, i+1)`` where log-flux is not concave, else None.

        Zero-flux samples are allowed only at the two ends of the support.
        """
        f = self.fluxes
        positive = np.flatnonzero(f > 0)
        lo, hi = positive[0], positive[-1]
        if np.any(f[lo : hi + 1] <= 0):
            i = int(lo + np.flatnonzero(f[lo : hi + 1] <= 0)[0])
            return (i - 1, i, i + 1)
        logf = np.log(f[lo : hi + 1])
        t = self.times[lo : hi + 1]
        slopes = np.diff(logf) / np.diff(t)
        bad = np.flatnonzero(np.diff(slopes) > 1e-9 * (1 + np.abs(slopes[1:])))
        if bad.size:
            i = int(lo + bad[0] + 1)
            return (i - 1, i, i + 1)
        return None

    def is_log_concave(self) -> bool:
        return self.log_concavity_violation() is None


# --------------------------------------------------------------------------
# detection data


@dataclass(frozen=True)
class DetectionFrame:
    """Per-pixel detection counts and times.

    Times are stored flat in row-major pixel order; pixel ``p`` owns
    ``times[offsets[p]:offsets[p+1]]``. ``labels`` (True for signal photons)
    is only populated by the simulator and never serialized.
    """

    counts: np.ndarray
    times: np.ndarray
    labels: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        times = np.asarray(self.times, dtype=np.float64).ravel()
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("counts must be a square 2-D array")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        if counts.sum() != times.size:
            raise ValueError("number of times does not match the total count")
        if self.labels is not None and np.asarray(self.labels).shape != times.shape:
            raise ValueError("labels must align with times")
        counts.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "times", times)

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts.ravel())])

    def pixel_times(self, i: int, j: int) -> np.ndarray:
        off = self.offsets
        p = i * self.n + j
        return self.times[off[p] : off[p + 1]]

    def pixel_index(self) -> np.ndarray:
        """Flat pixel index of every stored time."""
        return np.repeat(np.arange(self.counts.size), self.counts.ravel())

    def time_lists(self) -> list:
        off = self.offsets
        return [self.times[off[p] : off[p + 1]] for p in range(self.counts.size)]

    def validate(self, cfg: InstrumentConfig) -> None:
        if np.any(self.counts > cfg.N):
            raise ValueError("a pixel has more detections than pulses")
        if self.times.size and (self.times.min() < 0 or self.times.max() >= cfg.T_r):
            raise ValueError("detection times must lie in [0, T_r)")
        if not is_quantized(self.times, cfg.delta):
            raise ValueError("detection times are not multiples of delta")


def is_quantized(times, delta: float) -> bool:
    """True iff every time is bit-exactly ``m * delta`` for an integer ``m``."""
    times = np.asarray(times, dtype=float)
    return bool(np.all(np.rint(times / delta) * delta == times))


@dataclass(frozen=True)
class CensorMask:
    """Which detections are kept as signal; aligned with ``DetectionFrame.times``."""

    counts: np.ndarray
    keep: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        keep = np.asarray(self.keep, dtype=bool).ravel()
        if keep.size != counts.sum():
            raise ValueError("keep flags must align with the frame's detections")
        counts.setflags(write=False)
        keep.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "keep", keep)

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def sizes(self) -> np.ndarray:
        """``|U|`` per pixel as an n-by-n array."""
        pix = np.repeat(np.arange(self.counts.size), self.counts.ravel())
        return np.bincount(pix[self.keep], minlength=self.counts.size).reshape(self.counts.shape)

    def indices(self) -> list:
        """Per-pixel (row-major) arrays of 0-based kept detection indices."""
        off = np.concatenate([[0], np.cumsum(self.counts.ravel())])
        return [np.flatnonzero(self.keep[off[p] : off[p + 1]]) for p in range(self.counts.size)]

    @classmethod
    def from_indices(cls, counts, indices) -> "CensorMask":
        counts = np.asarray(counts, dtype=np.int64)
        off = np.concatenate([[0], np.cumsum(counts.ravel())])
        keep = np.zeros(off[-1], dtype=bool)
        for p, idx in enumerate(indices):
            idx = np.asarray(idx, dtype=np.int64)
            if idx.size and (idx.min() < 0 or idx.max() >= counts.flat[p]):
                raise ValueError(f"pixel {p}: index out of range")
            keep[off[p] + idx] = True
        return cls(counts, keep)


# --------------------------------------------------------------------------
# probability laws


def _check_alpha(alpha):
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0) or np.any(~np.isfinite(alpha)):
        raise ValueError("reflectivity must be finite and nonnegative")
    return alpha


def per_pulse_flux(cfg: InstrumentConfig, alpha):
    """Mean detections per repetition period, ``eta*alpha*S + B``."""
    return cfg.eta * _check_alpha(alpha) * cfg.S + cfg.B


def rate_function(cfg: InstrumentConfig, pulse: PulseShape, alpha, z, t):
    """Detection rate (counts/s) at time ``t`` after a pulse."""
    alpha = _check_alpha(alpha)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= cfg.T_r):
        raise ValueError("t must lie in [0, T_r)")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(z >= cfg.z_max):
        raise ValueError("z must lie in [0, c*T_r/2)")
    return cfg.eta * alpha * pulse.flux(t - 2 * z / cfg.c) + cfg.B / cfg.T_r


def p_no_detect(cfg: InstrumentConfig, alpha):
    """Probability of no detection during one repetition period."""
    return np.exp(-per_pulse_flux(cfg, alpha))


def log_p_no_detect(cfg: InstrumentConfig, alpha):
    return -per_pulse_flux(cfg, alpha)


def detect_probability(cfg: InstrumentConfig, alpha):
    """``1 - P0`` evaluated without cancellation."""
    return -np.expm1(-per_pulse_flux(cfg, alpha))


def mean_count(cfg: InstrumentConfig, alpha):
    """``C(alpha) = N (1 - P0)``."""
    return cfg.N * detect_probability(cfg, alpha)


def log_count_pmf(cfg: InstrumentConfig, alpha, k):
    """Log of the binomial count probability.

    Uses scipy's binomial pmf (accurate to a few ulps, so it sums to one
    within 1e-12 even for N = 1e4; a plain log-gamma difference loses about
    1e-11 there) and falls back to the log-gamma form where the probability
    underflows.
    """
    k = np.asarray(k)
    if np.any(k < 0) or np.any(k > cfg.N) or np.any(k != np.floor(k)):
        raise ValueError(f"k must be an integer in [0, {cfg.N}]")
    x = per_pulse_flux(cfg, alpha)
    p1 = -np.expm1(-x)
    pmf = stats.binom.pmf(k, cfg.N, p1)
    with np.errstate(divide="ignore"):
        direct = np.where(pmf > 1e-290, np.log(np.maximum(pmf, 1e-300)), -np.inf)
        log_p1 = np.log(p1)
    log_binom = special.gammaln(cfg.N + 1) - special.gammaln(k + 1) - special.gammaln(cfg.N - k + 1)
    # 0 * log(0) = 0 for the k == 0 term
    fallback = log_binom - (cfg.N - k) * x + np.where(k > 0, k * log_p1, 0.0)
    return np.where(np.isfinite(direct), direct, fallback)


def count_pmf(cfg: InstrumentConfig, alpha, k):
    """Binomial probability of ``k`` detections from ``N`` pulses."""
    return np.exp(log_count_pmf(cfg, alpha, k))


def poisson_limit_pmf(C, k):
    return stats.poisson.pmf(k, C)


def signal_probability(cfg: InstrumentConfig, alpha):
    """Probability that a detection is a signal photon."""
    sig = cfg.eta * _check_alpha(alpha) * cfg.S
    total = sig + cfg.B
    if np.any(total <= 0):
        raise ValueError("signal probability undefined when eta*alpha*S + B = 0")
    return sig / total


def detection_time_pdf(cfg: InstrumentConfig, pulse: PulseShape, alpha, z, t):
    """Density of one detection time on ``[0, T_r)`` (signal/background mixture)."""
    alpha = _check_alpha(alpha)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= cfg.T_r):
        raise ValueError("t must lie in [0, T_r)")
    sig = cfg.eta * alpha * cfg.S
    total = sig + cfg.B
    if np.any(total <= 0):
        raise ValueError("detection-time density undefined when alpha = 0 and B = 0")
    w_s = sig / total
    w_b = cfg.B / total
    return w_s * pulse.flux(t - 2 * np.asarray(z, dtype=float) / cfg.c) / pulse.S + w_b / cfg.T_r
