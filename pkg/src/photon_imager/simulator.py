"""Exact sampling of SPAD detection frames under the low-flux model."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import stats

from . import streams
from .model import (
    DetectionFrame,
    InstrumentConfig,
    PulseShape,
    Scene,
    detect_probability,
)

MAX_GROUND_TRUTH_PULSES = 10_000_000
_MAX_REJECTION_ROUNDS = 64


def quantize(times, cfg: InstrumentConfig) -> np.ndarray:
    """Round times down to a multiple of ``delta``, staying inside ``[0, T_r)``."""
    bins = np.floor(np.asarray(times) / cfg.delta)
    last = np.ceil(cfg.T_r / cfg.delta) - 1
    while last * cfg.delta >= cfg.T_r:
        last -= 1
    return np.clip(bins, 0, last) * cfg.delta


def _detection_times(seed, pix, ell, w_s, shift, cfg, pulse):
    """Draw times for detections ``ell`` of pixels ``pix``; returns (times, is_signal)."""
    is_signal = streams.uniform(seed, pix, streams.LABEL, ell) < w_s
    t = streams.uniform(seed, pix, streams.BACKGROUND_TIME, ell) * cfg.T_r
    sig = np.flatnonzero(is_signal)
    pending = sig
    for attempt in range(_MAX_REJECTION_ROUNDS):
        if pending.size == 0:
            break
        u = streams.uniform(seed, pix[pending], streams.SIGNAL_TIME + 16 * attempt, ell[pending])
        cand = shift[pending] + pulse.cdf_inverse(u)
        ok = (cand >= 0) & (cand < cfg.T_r)
        t[pending[ok]] = cand[ok]
        pending = pending[~ok]
    else:
        if pending.size:
            raise RuntimeError("signal time rejection did not terminate; pulse does not fit in [0, T_r)")
    return t, is_signal


def _times_for_counts(seed, counts_flat, pixel_ids, w_s, shift, cfg, pulse):
    pix = np.repeat(pixel_ids, counts_flat)
    starts = np.concatenate([[0], np.cumsum(counts_flat)[:-1]])
    ell = np.arange(pix.size) - np.repeat(starts, counts_flat)
    local = np.repeat(np.arange(pixel_ids.size), counts_flat)
    t, lab = _detection_times(seed, pix, ell, w_s[local], shift[local], cfg, pulse)
    return quantize(t, cfg), lab


def _chunks(total: int, threads: int):
    threads = max(1, int(threads))
    edges = np.linspace(0, total, threads + 1).astype(int)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def simulate_frame(
    scene: Scene,
    cfg: InstrumentConfig,
    pulse: PulseShape,
    seed: int,
    threads: int = 1,
) -> DetectionFrame:
    """Simulate ``N`` pulses at every pixel.

    Pixel ``(i, j)`` draws from its own counter-based substream keyed by
    ``(seed, i*n + j)``, so the frame is identical for any ``threads``.
    """
    scene.check(cfg)
    alpha = scene.alpha.ravel()
    p1 = detect_probability(cfg, alpha)
    total = cfg.eta * alpha * cfg.S + cfg.B
    w_s = np.divide(cfg.eta * alpha * cfg.S, total, out=np.zeros_like(total), where=total > 0)
    shift = 2 * scene.z.ravel() / cfg.c
    npix = alpha.size

    def work(bounds):
        a, b = bounds
        ids = np.arange(a, b)
        u = streams.uniform(seed, ids, streams.COUNT, 0)
        k = stats.binom.ppf(u, cfg.N, p1[a:b]).astype(np.int64)
        t, lab = _times_for_counts(seed, k, ids, w_s[a:b], shift[a:b], cfg, pulse)
        return k, t, lab

    chunks = _chunks(npix, threads)
    if len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=len(chunks)) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    counts = np.concatenate([p[0] for p in parts]).reshape(scene.alpha.shape)
    times = np.concatenate([p[1] for p in parts])
    labels = np.concatenate([p[2] for p in parts])
    return DetectionFrame(counts, times, labels)


def simulate_ground_truth_frame(
    scene: Scene,
    cfg: InstrumentConfig,
    pulse: PulseShape,
    seed: int,
    min_detections: int,
    return_pulses: bool = False,
):
    """Keep pulsing every pixel until it has ``min_detections`` detections.

    Pulses are fired one at a time, so the pulse count per pixel is a sum of
    ``min_detections`` geometric gaps. Raises if any pixel would need more than
    ten million pulses.
    """
    if min_detections < 1:
        raise ValueError("min_detections must be >= 1")
    scene.check(cfg)
    alpha = scene.alpha.ravel()
    p1 = detect_probability(cfg, alpha)
    if np.any(p1 <= 0):
        raise RuntimeError("a pixel has zero detection probability; ground-truth acquisition would never stop")
    # expected pulses already far beyond the cap
    if np.any(min_detections / p1 > MAX_GROUND_TRUTH_PULSES):
        raise RuntimeError(f"expected pulse count exceeds the cap of {MAX_GROUND_TRUTH_PULSES}")
    ids = np.arange(alpha.size)
    gap_u = streams.uniform(seed, ids[:, None], streams.BLOCK, np.arange(min_detections)[None, :])
    log_q = np.log1p(-p1)[:, None]
    gaps = np.maximum(np.ceil(np.log(gap_u) / log_q), 1)
    pulses = gaps.sum(axis=1)
    if np.any(pulses > MAX_GROUND_TRUTH_PULSES):
        raise RuntimeError(f"pulse count exceeded the cap of {MAX_GROUND_TRUTH_PULSES}")
    total = cfg.eta * alpha * cfg.S + cfg.B
    w_s = cfg.eta * alpha * cfg.S / total
    shift = 2 * scene.z.ravel() / cfg.c
    counts = np.full(alpha.size, min_detections, dtype=np.int64)
    t, lab = _times_for_counts(seed, counts, ids, w_s, shift, cfg, pulse)
    frame = DetectionFrame(counts.reshape(scene.alpha.shape), t, lab)
    if return_pulses:
        return frame, pulses.reshape(scene.alpha.shape).astype(np.int64)
    return frame

