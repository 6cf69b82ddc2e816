"""Cramér-Rao bounds and closed-form MSEs, with Monte-Carlo checks."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .model import (
    GaussianPulse,
    InstrumentConfig,
    PulseShape,
    SampledPulse,
    detect_probability,
    mean_count,
    per_pulse_flux,
)

Z95 = 1.959963984540054


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class Estimate:
    """Monte-Carlo estimate with a 95% normal-theory confidence interval."""

    value: float
    ci_lo: float
    ci_hi: float
    trials: int
    excluded: int = 0

    @classmethod
    def from_samples(cls, samples, excluded: int = 0) -> "Estimate":
        samples = np.asarray(samples, dtype=float)
        m = float(samples.mean())
        half = Z95 * float(samples.std(ddof=1)) / math.sqrt(samples.size)
        return cls(m, m - half, m + half, samples.size, excluded)


# --------------------------------------------------------------------------
# reflectivity


def crlb_reflectivity(cfg: InstrumentConfig, alpha, approximate: bool = False):
    """``(exp(eta alpha S + B) - 1) / (N eta^2 S^2)``; the low-flux form drops the exponential."""
    x = per_pulse_flux(cfg, alpha)
    num = x if approximate else np.expm1(x)
    return num / (cfg.N * (cfg.eta * cfg.S) ** 2)


def poisson_limit_ml_reflectivity(cfg: InstrumentConfig, k):
    """Unconstrained Poisson-limit ML estimate ``k/(N eta S) - B/(eta S)`` (may be negative)."""
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ValueError("k must be nonnegative")
    return k / (cfg.N * cfg.eta * cfg.S) - cfg.B / (cfg.eta * cfg.S)


def poisson_limit_mse(cfg: InstrumentConfig, alpha):
    """``(alpha/(eta S) + B/(eta S)^2) / N``, the MSE of the Poisson-limit estimator."""
    a = cfg.eta * cfg.S
    return (np.asarray(alpha, dtype=float) / a + cfg.B / a**2) / cfg.N


def mc_poisson_limit_mse(cfg: InstrumentConfig, alpha: float, trials: int, seed: int = 0) -> Estimate:
    """Monte-Carlo MSE of the Poisson-limit estimator with binomial counts."""
    rng = np.random.default_rng(seed)
    k = rng.binomial(cfg.N, float(detect_probability(cfg, alpha)), size=trials)
    err = poisson_limit_ml_reflectivity(cfg, k) - alpha
    return Estimate.from_samples(err**2)


def unconstrained_ml_reflectivity(cfg: InstrumentConfig, k):
    """``(log(N/(N-k)) - B)/(eta S)``; ``inf`` at ``k = N``."""
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore"):
        return (-np.log1p(-k / cfg.N) - cfg.B) / (cfg.eta * cfg.S)


def ml_bias_test(cfg: InstrumentConfig, alpha: float, trials: int, seed: int = 0) -> Estimate:
    """Monte-Carlo bias of the unconstrained ML reflectivity estimate.

    Uses ``k/N`` as a control variate (its mean ``1 - P0`` is known exactly):
    the sampled quantity is ``-log(1 - k/N) - k/N``, whose spread is far
    smaller than the estimator's. Draws with ``k = N`` are dropped and
    counted in ``excluded``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if trials < 2:
        raise ValueError("need at least two trials")
    rng = np.random.default_rng(seed)
    p1 = float(detect_probability(cfg, alpha))
    k = rng.binomial(cfg.N, p1, size=trials)
    saturated = k == cfg.N
    y = k[~saturated] / cfg.N
    a = cfg.eta * cfg.S
    resid = (-np.log1p(-y) - y) / a
    offset = (p1 - cfg.B) / a - alpha
    est = Estimate.from_samples(resid, excluded=int(saturated.sum()))
    return Estimate(est.value + offset, est.ci_lo + offset, est.ci_hi + offset, est.trials, est.excluded)


# --------------------------------------------------------------------------
# depth


def _quad(func, a, b, points=None, epsrel=1e-10):
    val, err, info, *msg = integrate.quad(
        func, a, b, points=points, epsabs=0.0, epsrel=epsrel,
        limit=max(500, 4 * len(points) if points is not None else 0), full_output=True
    )
    if msg and err > 1e-6 * max(abs(val), 1e-300):
        raise QuadratureError(f"quadrature did not converge: estimate {val:g}, achieved abs error {err:g}")
    return val


def crlb_depth(cfg: InstrumentConfig, pulse: PulseShape, alpha: float, z: float) -> float:
    """Depth CRLB ``(1/C) * ((2/c)^2 * integral(pdot^2 / p))^-1`` in m^2.

    ``p`` is the normalized single-pulse rate over ``[0, T_r)`` and ``pdot`` its
    time derivative (analytic for Gaussian pulses, central differences at step
    ``delta`` otherwise). For sampled pulses the pulse part of the integral is
    taken where the whole difference stencil lies inside the pulse support, so
    the one-sided stencil at the support edge cannot divide a finite slope by a
    vanishing rate.
    """
    x = float(per_pulse_flux(cfg, alpha))
    if x <= 0:
        raise ValueError("need eta*alpha*S + B > 0")
    shift = 2 * z / cfg.c
    amp = cfg.eta * alpha
    bg = cfg.B / cfg.T_r
    inset = 0.0 if isinstance(pulse, GaussianPulse) else cfg.delta
    lo = max(0.0, shift + pulse.support[0] + inset)
    hi = min(cfg.T_r, shift + pulse.support[1] - inset)
    if hi <= lo or amp == 0:
        return math.inf
    total = amp * float(pulse.integral(-shift, cfg.T_r - shift)) + cfg.B

    if isinstance(pulse, GaussianPulse):
        def dflux(tau):
            return pulse.dflux(tau)
    else:
        h = cfg.delta

        def dflux(tau):
            return (pulse.flux(tau + h) - pulse.flux(tau - h)) / (2 * h)

    def integrand(t):
        tau = t - shift
        lam = amp * float(pulse.flux(tau)) + bg
        if lam <= 0:
            return 0.0
        return (amp * float(dflux(tau))) ** 2 / (total * lam)

    points = None
    if isinstance(pulse, SampledPulse):
        # the stencil has kinks wherever tau or tau +- delta crosses a sample time
        knots = np.unique(np.concatenate([pulse.times + d for d in (-cfg.delta, 0.0, cfg.delta)])) + shift
        points = knots[(knots > lo) & (knots < hi)]
    else:
        points = [shift] if lo < shift < hi else None
    fisher_time = _quad(integrand, lo, hi, points=points)
    fisher = (2 / cfg.c) ** 2 * fisher_time
    return 1.0 / (float(mean_count(cfg, alpha)) * fisher)


def expint_excess(C: float) -> float:
    """``integral_0^C (e^t - 1)/t dt``; power series below 1, quadrature above."""
    if C < 0:
        raise ValueError("C must be nonnegative")
    if C < 1:
        total, term, k = 0.0, 1.0, 0
        while True:
            k += 1
            term *= C / k
            add = term / k
            total += add
            if add <= 1e-17 * total:
                return total
    return _quad(lambda t: math.expm1(t) / t, 0.0, C, epsrel=1e-12)


def random_guess_mse(cfg: InstrumentConfig, z: float, uncorrected: bool = False) -> float:
    """MSE of a depth guess drawn uniformly from ``[0, c T_r/2)``.

    The exact value is ``(c T_r/2)^2/12 + (z - c T_r/4)^2``. ``uncorrected=True``
    drops the ``1/12`` (the variance of a unit uniform), giving the commonly
    quoted but too large ``(c T_r/2)^2 + (z - c T_r/4)^2``.
    """
    half_range = cfg.c * cfg.T_r / 2
    spread = half_range**2 if uncorrected else half_range**2 / 12
    return spread + (z - half_range / 2) ** 2


def mse_depth_gaussian_from_count(cfg: InstrumentConfig, C: float, z: float, uncorrected: bool = False) -> float:
    """MSE of the mean-time depth estimate with uniform guessing when no photon arrives.

    Background-free, Gaussian pulse, Poisson(C) detections:
    ``e^-C * guess + (c T_p/2)^2 e^-C integral_0^C (e^t - 1)/t dt`` with
    ``guess`` from :func:`random_guess_mse`.
    """
    if C < 0:
        raise ValueError("C must be nonnegative")
    guess = random_guess_mse(cfg, z, uncorrected)
    width = (cfg.c * cfg.T_p / 2) ** 2
    if C == 0:
        return guess
    if C < 700:
        pulse_term = math.exp(-C) * expint_excess(C)
    else:
        # e^-C * integral ~ (1/C) sum_k k!/C^k
        pulse_term = sum(math.factorial(j) / C ** (j + 1) for j in range(6))
    return math.exp(-C) * guess + width * pulse_term


def mse_depth_gaussian(cfg: InstrumentConfig, alpha: float, z: float, uncorrected: bool = False) -> float:
    """Closed-form depth MSE at reflectivity ``alpha``; requires ``B = 0``."""
    if cfg.B != 0:
        raise ValueError("the closed-form depth MSE assumes B = 0")
    return mse_depth_gaussian_from_count(cfg, float(mean_count(cfg, alpha)), z, uncorrected)


def mc_depth_mse_gaussian(cfg: InstrumentConfig, C: float, z: float, trials: int, seed: int = 0) -> Estimate:
    """Simulate the mean-time estimator photon by photon (Poisson counts, Gaussian pulse, B = 0)."""
    rng = np.random.default_rng(seed)
    pulse = GaussianPulse(1.0, cfg.T_p)
    k = rng.poisson(C, size=trials)
    total = int(k.sum())
    times = 2 * z / cfg.c + pulse.cdf_inverse(rng.random(total))
    owner = np.repeat(np.arange(trials), k)
    sums = np.bincount(owner, weights=times, minlength=trials)
    est = np.empty(trials)
    hit = k > 0
    est[hit] = cfg.c / 2 * sums[hit] / k[hit]
    est[~hit] = rng.random(int((~hit).sum())) * cfg.z_max
    return Estimate.from_samples((est - z) ** 2)


# --------------------------------------------------------------------------
# sweeps

SWEEP_HEADER = ("param", "value", "bound", "mc_estimate", "ci_lo", "ci_hi")


def reflectivity_sweep(cfg: InstrumentConfig, param: str, values, alpha: float = 1.0, trials: int = 100_000, seed: int = 0):
    """Reflectivity CRLB against Monte-Carlo MSE of the Poisson-limit estimator.

    ``param`` is ``alpha``, ``N`` or ``sbr`` (SBR varies ``B`` at fixed ``S``).
    """
    rows = []
    for m, v in enumerate(values):
        if param == "alpha":
            c, a = cfg, float(v)
        elif param == "N":
            c, a = cfg.replace(N=int(v)), alpha
        elif param == "sbr":
            c, a = cfg.replace(B=cfg.eta * alpha * cfg.S / float(v)), alpha
        else:
            raise ValueError(f"unknown sweep parameter {param!r}")
        mc = mc_poisson_limit_mse(c, a, trials, seed + m)
        rows.append((param, float(v), float(crlb_reflectivity(c, a)), mc.value, mc.ci_lo, mc.ci_hi))
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([r[0]] + [repr(float(x)) for x in r[1:]])
