"""Penalized maximum-likelihood reconstruction of reflectivity and depth.

Both problems are ``min f(x) + beta*TV(x)`` over a box, with ``f`` a
pixel-separable convex negative log-likelihood. They are solved by
accelerated forward-backward splitting with a monotone safeguard (an
iterate is only accepted if it lowers the objective) and adaptive restart.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import (
    CensorMask,
    DetectionFrame,
    GaussianPulse,
    InstrumentConfig,
    PulseShape,
    SampledPulse,
)
from .pixelwise import impute_missing, log_matched_filter_image, normalized_count_reflectivity
from .tv import tv_prox, tv_seminorm

DEFAULT_BETA_ALPHA = 1.0
DEFAULT_BETA_Z = 10.0


class DivergenceError(RuntimeError):
    pass


class PulseNotLogConcaveError(ValueError):
    pass


@dataclass
class SolverSettings:
    beta: float
    max_iters: int = 500
    rel_tol: float = 1e-8
    step_rule: str = "backtracking"
    lipschitz: Optional[float] = None
    tv_gap_tol: float = 1e-8
    accelerate: bool = True

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.step_rule not in ("backtracking", "fixed-Lipschitz"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass
class SolverResult:
    image: np.ndarray
    objective: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


# --------------------------------------------------------------------------
# negative log-likelihoods


def reflectivity_nll(cfg: InstrumentConfig, alpha, k):
    """Per-pixel ``(N-k) eta S alpha - k log(1 - exp(-(eta S alpha + B)))``."""
    alpha = np.asarray(alpha, dtype=float)
    k = np.asarray(k, dtype=float)
    a = cfg.eta * cfg.S
    x = a * alpha + cfg.B
    with np.errstate(divide="ignore"):
        log_p1 = np.log(-np.expm1(-x))
    return (cfg.N - k) * a * alpha - np.where(k > 0, k * log_p1, 0.0)


def reflectivity_nll_grad(cfg: InstrumentConfig, alpha, k):
    alpha = np.asarray(alpha, dtype=float)
    k = np.asarray(k, dtype=float)
    a = cfg.eta * cfg.S
    x = a * alpha + cfg.B
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(k > 0, k * a / np.expm1(x), 0.0)
    return (cfg.N - k) * a - tail


def reflectivity_lipschitz(cfg: InstrumentConfig, k) -> float:
    """Largest curvature of the reflectivity NLL over ``alpha >= 0`` (attained at 0)."""
    kmax = float(np.max(k))
    if kmax == 0:
        return 0.0
    if cfg.B == 0:
        return math.inf
    a = cfg.eta * cfg.S
    return kmax * a * a * math.exp(cfg.B) / math.expm1(cfg.B) ** 2


def depth_nll(cfg: InstrumentConfig, pulse: PulseShape, z, times) -> float:
    """``-sum log s(t - 2z/c)`` for one pixel; zero for an empty set."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return 0.0
    return float(-np.sum(pulse.log_flux(times - 2 * z / cfg.c)))


def depth_nll_grad(cfg: InstrumentConfig, pulse: PulseShape, z, times) -> float:
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return 0.0
    return float((2 / cfg.c) * np.sum(pulse.dlog_flux(times - 2 * z / cfg.c)))


# --------------------------------------------------------------------------
# generic solver


def solve_tv_penalized(
    f: Callable,
    grad_f: Callable,
    x0: np.ndarray,
    settings: SolverSettings,
    lower=None,
    upper=None,
    lipschitz: Optional[float] = None,
    telemetry=None,
) -> SolverResult:
    """Minimize ``f(x) + beta*TV(x)`` over the box.

    ``f`` returns the summed data term (``inf`` outside its domain).
    ``telemetry`` is an optional writable text stream receiving
    ``iter,objective,step`` CSV lines for each accepted iterate.
    """
    beta = settings.beta
    fixed = settings.step_rule == "fixed-Lipschitz"
    if fixed:
        L = settings.lipschitz if settings.lipschitz is not None else lipschitz
        if L is None or not np.isfinite(L):
            raise ValueError("no finite Lipschitz constant available; use step_rule='backtracking'")
        L = max(L, 1e-12)
    else:
        L = settings.lipschitz or (lipschitz if lipschitz and np.isfinite(lipschitz) else 1.0)

    def objective(x, fx=None):
        fx = f(x) if fx is None else fx
        return fx + beta * tv_seminorm(x) if beta else fx

    def prox(v, step, dual):
        return tv_prox(v, beta * step, lower, upper, gap_tol=settings.tv_gap_tol, dual_init=dual, return_dual=True)

    x = np.clip(np.asarray(x0, dtype=float), lower, upper) if (lower is not None or upper is not None) else np.array(x0, dtype=float)
    fx = f(x)
    F = objective(x, fx)
    if not np.isfinite(F):
        raise ValueError("initial point has infinite objective")
    history = [(0, F, 1.0 / L)]
    if telemetry is not None:
        telemetry.write(f"0,{F!r},{1.0 / L!r}\n")
    y = x.copy()
    t = 1.0
    dual = None
    increases = 0
    converged = False
    it = 0
    for it in range(1, settings.max_iters + 1):
        fy = f(y) if y is not x else fx
        gy = grad_f(y)
        while True:
            step = 1.0 / L
            z, new_dual = prox(y - step * gy, step, dual)
            fz = f(z)
            if fixed:
                break
            d = z - y
            if np.isfinite(fz) and fz <= fy + np.vdot(gy, d) + 0.5 * L * np.vdot(d, d):
                break
            L *= 2.0
        dual = new_dual
        Fz = objective(z, fz)
        if Fz <= F:
            x_prev, F_prev = x, F
            x, fx, F = z, fz, Fz
            increases = 0
            history.append((it, F, step))
            if telemetry is not None:
                telemetry.write(f"{it},{F!r},{step!r}\n")
            if abs(F_prev - F) <= settings.rel_tol * max(abs(F_prev), 1e-300):
                converged = True
                break
            if settings.accelerate:
                t_next = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
                y = x + ((t - 1) / t_next) * (x - x_prev)
                if lower is not None or upper is not None:
                    y = np.clip(y, lower, upper)
                t = t_next
            else:
                y = x
        else:
            increases += 1
            if fixed and increases >= 10:
                raise DivergenceError(
                    "objective increased for 10 consecutive fixed-step iterations; use step_rule='backtracking'"
                )
            if y is x and not fixed:
                # no progress even from the accepted point: prox accuracy floor reached
                converged = True
                break
            # restart momentum from the last accepted point
            y = x
            t = 1.0
        if not fixed:
            L = max(L * 0.9, 1e-12)
    return SolverResult(x, F, it, converged, history)


# --------------------------------------------------------------------------
# step 1: reflectivity


def pml_reflectivity(
    frame: DetectionFrame,
    cfg: InstrumentConfig,
    settings: SolverSettings,
    x0=None,
    telemetry=None,
) -> SolverResult:
    """Reflectivity image minimizing the binomial NLL plus ``beta*TV`` over ``alpha >= 0``."""
    k = frame.counts.astype(float)
    if x0 is None:
        x0 = normalized_count_reflectivity(cfg, frame.counts)
    x0 = np.asarray(x0, dtype=float)
    if cfg.B == 0:
        # keep detected pixels strictly inside the domain of the log term
        x0 = np.where((k > 0) & (x0 <= 0), 1.0 / (cfg.N * cfg.eta * cfg.S), x0)

    def f(a):
        return math.fsum(reflectivity_nll(cfg, a, k).ravel())

    def g(a):
        return reflectivity_nll_grad(cfg, a, k)

    return solve_tv_penalized(
        f, g, x0, settings, lower=0.0, upper=None,
        lipschitz=reflectivity_lipschitz(cfg, k), telemetry=telemetry,
    )


# --------------------------------------------------------------------------
# step 3: depth


def check_log_concave(pulse: PulseShape) -> None:
    if isinstance(pulse, SampledPulse):
        bad = pulse.log_concavity_violation()
        if bad is not None:
            raise PulseNotLogConcaveError(f"sampled pulse is not log-concave at sample triple {bad}")


def initial_depth(frame: DetectionFrame, mask: CensorMask, cfg: InstrumentConfig, pulse: PulseShape, rom=None):
    """Per-pixel log-matched filter on kept detections; gaps filled from neighbours.

    Falls back to ``c*t_ROM/2`` and then to ``c*T_r/4`` when no pixel has kept data.
    """
    z = log_matched_filter_image(frame, cfg, pulse, keep=mask.keep)
    if np.all(np.isnan(z)):
        if rom is not None and np.any(np.isfinite(rom)):
            z = np.where(np.isfinite(rom), cfg.c * np.asarray(rom) / 2, np.nan)
            z = np.clip(impute_missing(z), 0, np.nextafter(cfg.z_max, 0))
            return z
        return np.full(frame.counts.shape, cfg.z_max / 2)
    return impute_missing(z)


def pml_depth(
    frame: DetectionFrame,
    mask: CensorMask,
    cfg: InstrumentConfig,
    pulse: PulseShape,
    settings: SolverSettings,
    x0=None,
    rom=None,
    telemetry=None,
) -> SolverResult:
    """Depth image minimizing the censored log-pulse NLL plus ``beta*TV`` over ``[0, c T_r/2)``."""
    check_log_concave(pulse)
    keep = mask.keep
    pix = frame.pixel_index()[keep]
    times = frame.times[keep]
    shape = frame.counts.shape
    npix = frame.counts.size
    scale = 2 / cfg.c
    if x0 is None:
        x0 = initial_depth(frame, mask, cfg, pulse, rom)

    def f(z):
        return -math.fsum(pulse.log_flux(times - scale * z.ravel()[pix]))

    def g(z):
        w = scale * pulse.dlog_flux(times - scale * z.ravel()[pix])
        return np.bincount(pix, weights=w, minlength=npix).reshape(shape)

    lip = None
    if isinstance(pulse, GaussianPulse):
        sizes = np.bincount(pix, minlength=npix)
        lip = float(sizes.max(initial=0)) * scale**2 / pulse.T_p**2
    upper = np.nextafter(cfg.z_max, 0)
    return solve_tv_penalized(f, g, x0, settings, lower=0.0, upper=upper, lipschitz=lip, telemetry=telemetry)
