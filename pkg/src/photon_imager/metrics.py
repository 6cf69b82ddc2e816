"""Image quality metrics."""
from __future__ import annotations

import math

import numpy as np

from .model import InstrumentConfig, Scene


def _pair(reference, estimate):
    ref = np.asarray(reference, dtype=float)
    est = np.asarray(estimate, dtype=float)
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {est.shape}")
    return ref, est


def mse(reference, estimate) -> float:
    ref, est = _pair(reference, estimate)
    return math.fsum(((ref - est) ** 2).ravel()) / ref.size


def psnr(reference, estimate) -> float:
    """Peak SNR in dB with the peak taken from the reference; ``inf`` for a perfect match."""
    ref, est = _pair(reference, estimate)
    peak = float(np.max(ref**2))
    if peak == 0:
        raise ValueError("reference image is all zero")
    err = mse(ref, est)
    if err == 0:
        return math.inf
    return 10 * math.log10(peak / err)


def rmse(reference, estimate) -> float:
    return math.sqrt(mse(reference, estimate))


def sbr(scene: Scene, cfg: InstrumentConfig) -> float:
    """Scene-averaged signal-to-background ratio ``mean(eta*alpha*S/B)``."""
    if cfg.B == 0:
        return math.inf
    return float(np.mean(cfg.eta * scene.alpha * cfg.S / cfg.B))


def pixel_rmse_map(reference, estimates) -> np.ndarray:
    """Per-pixel RMSE over a stack of estimates (first axis = trial)."""
    est = np.asarray(estimates, dtype=float)
    return np.sqrt(np.mean((est - np.asarray(reference, dtype=float)[None]) ** 2, axis=0))
