"""Rank-ordered-mean rejection of background detections."""
from __future__ import annotations

import numpy as np

from .model import CensorMask, DetectionFrame, InstrumentConfig, PulseShape

_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def rom_times(frame: DetectionFrame) -> np.ndarray:
    """Median of the pooled detection times of each pixel's 8 in-bounds neighbours.

    Pixels whose neighbours hold no detections get ``+inf``.
    """
    n = frame.n
    lists = frame.time_lists()
    rom = np.full((n, n), np.inf)
    for i in range(n):
        for j in range(n):
            pooled = [
                lists[(i + di) * n + (j + dj)]
                for di, dj in _OFFSETS
                if 0 <= i + di < n and 0 <= j + dj < n
            ]
            pooled = np.concatenate(pooled)
            if pooled.size:
                rom[i, j] = np.median(pooled)
    return rom


def censor_threshold(cfg: InstrumentConfig, alpha_hat) -> np.ndarray:
    """Half-width ``2 T_p B / (eta alpha S + B)`` of the acceptance window."""
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    return 2 * cfg.T_p * cfg.B / (cfg.eta * alpha_hat * cfg.S + cfg.B)


def censor_detections(
    frame: DetectionFrame,
    cfg: InstrumentConfig,
    pulse: PulseShape,
    alpha_hat,
    rom=None,
) -> CensorMask:
    """Keep detections strictly within the threshold of the neighbourhood ROM time.

    With ``B == 0`` there is nothing to reject and every detection is kept.
    """
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    if alpha_hat.shape != frame.counts.shape:
        raise ValueError("reflectivity estimate must match the frame shape")
    if np.any(alpha_hat < 0):
        raise ValueError("reflectivity estimate must be nonnegative")
    if cfg.B == 0:
        return CensorMask(frame.counts, np.ones(frame.times.size, dtype=bool))
    if rom is None:
        rom = rom_times(frame)
    pix = frame.pixel_index()
    thr = censor_threshold(cfg, alpha_hat).ravel()[pix]
    with np.errstate(invalid="ignore"):
        keep = np.abs(frame.times - np.asarray(rom).ravel()[pix]) < thr
    return CensorMask(frame.counts, keep)
