"""Synthetic test scenes and flux calibration."""
from __future__ import annotations

import numpy as np
from scipy import optimize

from .model import InstrumentConfig, Scene

STEP_HEIGHTS_MM = (4, 8, 16, 32, 64)
KINDS = ("chart", "step", "mannequinoid")


def chart(n: int, depth: float = 7.5, levels: int = 16) -> Scene:
    """Vertical bars of linearly increasing reflectivity ``1/levels .. 1`` at one depth."""
    col = np.minimum((np.arange(n) * levels) // n, levels - 1)
    alpha = np.tile((col + 1) / levels, (n, 1))
    return Scene(alpha, np.full((n, n), float(depth)))


def step_target(n: int, depth: float = 7.5, reflectivity: float = 0.8, heights_mm=STEP_HEIGHTS_MM) -> Scene:
    """Flat board with square plateaus raised towards the sensor by ``heights_mm``."""
    z = np.full((n, n), float(depth))
    k = len(heights_mm)
    side = max(n // (2 * k + 1), 1)
    top = (n - side) // 2
    for m, h in enumerate(heights_mm):
        left = (2 * m + 1) * n // (2 * k + 1)
        z[top : top + side, left : left + side] = depth - h / 1000.0
    return Scene(np.full((n, n), float(reflectivity)), z)


def _gauss(u, v, cu, cv, su, sv):
    return np.exp(-0.5 * (((u - cu) / su) ** 2 + ((v - cv) / sv) ** 2))


def mannequinoid(
    n: int,
    wall_depth: float = 7.5,
    relief: float = 0.5,
    background_reflectivity: float = 0.7,
    figure_scale: float = 1.0,
) -> Scene:
    """A smooth figure-like depth relief in front of a tilted wall.

    Depth is smooth everywhere (sums of Gaussian bumps on a plane). The
    reflectivity is bright and gently shaded on the figure and uniformly
    dimmer on the wall, with a sharp silhouette between them.
    ``figure_scale < 1`` shrinks the figure about the image centre; with a
    black wall this gives the mostly-empty frames of a dark room.
    """
    if figure_scale <= 0:
        raise ValueError("figure_scale must be positive")
    t = (np.arange(n) + 0.5) / n * 2 - 1
    vv, u0 = np.meshgrid(t, t, indexing="ij")
    v, u = vv / figure_scale, u0 / figure_scale
    bumps = (
        0.55 * _gauss(u, v, 0.0, -0.55, 0.16, 0.18)
        + 1.0 * _gauss(u, v, 0.0, 0.25, 0.32, 0.45)
        + 0.35 * _gauss(u, v, -0.45, 0.0, 0.15, 0.3)
        + 0.35 * _gauss(u, v, 0.45, 0.0, 0.15, 0.3)
    )
    z = wall_depth + 0.15 * u0 - relief * bumps
    head = ((u / 0.2) ** 2 + ((v + 0.55) / 0.23) ** 2) <= 1
    torso = ((u / 0.4) ** 2 + ((v - 0.3) / 0.6) ** 2) <= 1
    arms = ((np.abs(u) - 0.45) / 0.12) ** 2 + (v / 0.38) ** 2 <= 1
    figure = head | torso | arms
    shade = 0.75 + 0.25 * np.cos(2.5 * u) * np.cos(1.5 * (v - 0.1))
    wall = background_reflectivity * (0.8 + 0.2 * (vv + 1) / 2)
    alpha = np.where(figure, shade, wall)
    return Scene(alpha, z)


def make_scene(kind: str, n: int, **params) -> Scene:
    if n < 16:
        raise ValueError("scenes need n >= 16")
    kind = kind.lower()
    if kind == "chart":
        return chart(n, **params)
    if kind in ("step", "steptarget", "step_target"):
        return step_target(n, **params)
    if kind == "mannequinoid":
        return mannequinoid(n, **params)
    raise ValueError(f"unknown scene kind {kind!r}; expected one of {KINDS}")


def calibrate_instrument(
    scene: Scene,
    ppp: float,
    sbr: float,
    eta: float = 0.35,
    N: int = 1000,
    T_r: float = 100e-9,
    T_p: float = 270e-12,
    delta: float = 8e-12,
) -> InstrumentConfig:
    """Choose ``S`` and ``B`` so the scene averages ``ppp`` detections per pixel at the given SBR.

    SBR is the scene mean of ``eta*alpha*S/B``, so ``B = eta*S*mean(alpha)/sbr``.
    """
    mean_alpha = float(scene.alpha.mean())
    if mean_alpha <= 0 or sbr <= 0 or ppp <= 0:
        raise ValueError("need a non-black scene, positive SBR and positive ppp")

    def mean_count(S):
        B = eta * S * mean_alpha / sbr
        return float(np.mean(N * -np.expm1(-(eta * scene.alpha * S + B)))) - ppp

    hi = 1.0
    while mean_count(hi) < 0:
        hi *= 2
        if hi > 1e12:
            raise ValueError("target ppp is unreachable")
    S = optimize.brentq(mean_count, 0.0, hi, xtol=1e-15, rtol=1e-13)
    B = eta * S * mean_alpha / sbr
    return InstrumentConfig(eta=eta, S=S, B=B, N=N, T_r=T_r, T_p=T_p, delta=delta)
