"""End-to-end run: simulate, baseline estimates, the three PML steps, metrics and files.

Each stage failure is re-raised as :class:`StageError` carrying the stage
name; the CLI maps stage names to exit codes (``EXIT_CODES``).
"""
from __future__ import annotations

import contextlib
import csv
import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import formats
from .censor import censor_detections, rom_times
from .metrics import pixel_rmse_map, psnr, rmse, sbr
from .model import GaussianPulse, InstrumentConfig, Scene
from .pixelwise import (
    cml_reflectivity,
    histogram_depth_image,
    impute_missing,
    log_matched_filter_image,
    median_filtered_depth,
)
from .plots import color_range, save_heatmap
from .pml import DEFAULT_BETA_ALPHA, DEFAULT_BETA_Z, SolverSettings, pml_depth, pml_reflectivity
from .simulator import simulate_frame

STAGES = ("load", "simulate", "pixelwise", "reflectivity", "censor", "depth", "metrics", "write", "bounds")
EXIT_CODES = {name: 10 + i for i, name in enumerate(STAGES)}
METRICS_HEADER = ("metric", "value", "units")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.exit_code = EXIT_CODES[stage]


@contextlib.contextmanager
def stage(name: str, timings: dict | None = None):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    if timings is not None:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


@dataclass
class PipelineOptions:
    seed: int = 0
    trials: int = 1
    beta_alpha: float = DEFAULT_BETA_ALPHA
    beta_z: float = DEFAULT_BETA_Z
    threads: int = 1
    max_iters: int = 500
    rel_tol: float = 1e-8
    plots: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.beta_alpha < 0 or self.beta_z < 0:
            raise ValueError("penalty weights must be nonnegative")


@dataclass
class Reconstruction:
    """All images produced from one simulated frame."""

    frame: object
    mask: object
    alpha_pixelwise: np.ndarray
    z_pixelwise: np.ndarray
    z_median: np.ndarray
    z_histogram: np.ndarray
    alpha_pml: np.ndarray
    z_pml: np.ndarray


def reconstruct(scene: Scene, cfg: InstrumentConfig, opts: PipelineOptions, seed: int,
                timings: dict | None = None, log_dir: Path | None = None) -> Reconstruction:
    """Run simulate, pixelwise baselines and PML steps 1-3 for one seed."""
    pulse = GaussianPulse(cfg.S, cfg.T_p)
    with stage("simulate", timings):
        frame = simulate_frame(scene, cfg, pulse, seed, threads=opts.threads)
    with stage("pixelwise", timings):
        alpha_pix = cml_reflectivity(cfg, frame.counts)
        z_raw = log_matched_filter_image(frame, cfg, pulse)
        if np.all(np.isnan(z_raw)):
            raise ValueError("no detections in the frame; depth baselines are undefined")
        z_pix = impute_missing(z_raw)
        z_med = median_filtered_depth(z_raw)
        z_hist = impute_missing(histogram_depth_image(frame, cfg, pulse))

    def log(name):
        if log_dir is None:
            return contextlib.nullcontext(None)
        fh = open(log_dir / name, "w")
        fh.write("iter,objective,step\n")
        return fh

    with stage("reflectivity", timings), log("reflectivity_solver.csv") as tel:
        settings = SolverSettings(beta=opts.beta_alpha, max_iters=opts.max_iters, rel_tol=opts.rel_tol)
        alpha_pml = pml_reflectivity(frame, cfg, settings, telemetry=tel).image
    with stage("censor", timings):
        rom = rom_times(frame)
        mask = censor_detections(frame, cfg, pulse, alpha_pml, rom)
    with stage("depth", timings), log("depth_solver.csv") as tel:
        settings = SolverSettings(beta=opts.beta_z, max_iters=opts.max_iters, rel_tol=opts.rel_tol)
        z_pml = pml_depth(frame, mask, cfg, pulse, settings, rom=rom, telemetry=tel).image
    return Reconstruction(frame, mask, alpha_pix, z_pix, z_med, z_hist, alpha_pml, z_pml)


def compute_metrics(scene: Scene, cfg: InstrumentConfig, rec: Reconstruction) -> list:
    """``(metric, value, units)`` rows for one reconstruction."""
    counts = rec.frame.counts
    rows = [
        ("mean_ppp", float(counts.mean()), "photons"),
        ("zero_count_fraction", float(np.mean(counts == 0)), "1"),
        ("sbr", sbr(scene, cfg), "1"),
        ("kept_fraction", float(rec.mask.keep.mean()) if rec.mask.keep.size else math.nan, "1"),
        ("psnr_alpha_pixelwise", psnr(scene.alpha, rec.alpha_pixelwise), "dB"),
        ("psnr_alpha_pml", psnr(scene.alpha, rec.alpha_pml), "dB"),
        ("rmse_z_pixelwise", rmse(scene.z, rec.z_pixelwise), "m"),
        ("rmse_z_median_filtered", rmse(scene.z, rec.z_median), "m"),
        ("rmse_z_histogram", rmse(scene.z, rec.z_histogram), "m"),
        ("rmse_z_pml", rmse(scene.z, rec.z_pml), "m"),
    ]
    labels = rec.frame.labels
    if labels is not None and rec.mask.keep.any():
        rows.append(("kept_signal_fraction", float(labels[rec.mask.keep].mean()), "1"))
    return rows


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for name, value, units in rows:
            w.writerow([name, repr(float(value)), units])


def read_metrics_csv(path) -> dict:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        if tuple(next(r)) != METRICS_HEADER:
            raise ValueError("unexpected metrics header")
        return {name: float(value) for name, value, _ in r}


def run_pipeline(config_path, scene_path, out_dir, options: PipelineOptions | None = None) -> dict:
    """Run the full pipeline and write every artifact into ``out_dir``.

    Files: ``scene.peis`` (truth), ``frame.peid``, ``mask.peim``, image pairs
    ``pixelwise.peis``, ``median.peis``, ``histogram.peis``, ``pml.peis``
    (reflectivity, depth), solver logs, ``metrics.csv``, SVG heatmaps and
    ``report.json``. With ``trials > 1`` also ``rmse_maps_pml.peis`` and
    ``rmse_maps_pixelwise.peis`` (per-pixel RMSE of reflectivity and depth
    over seeds ``seed .. seed + trials - 1``).
    """
    opts = options or PipelineOptions()
    out = Path(out_dir)
    timings: dict = {}
    with stage("load", timings):
        cfg = formats.read_config(config_path)
        scene = formats.read_scene(scene_path)
        scene.check(cfg)
        out.mkdir(parents=True, exist_ok=True)

    rec = reconstruct(scene, cfg, opts, opts.seed, timings, log_dir=out)
    with stage("metrics", timings):
        rows = compute_metrics(scene, cfg, rec)

    extra_alpha, extra_z = [], []
    if opts.trials > 1:
        stacks = {"alpha_pml": [rec.alpha_pml], "z_pml": [rec.z_pml],
                  "alpha_pix": [rec.alpha_pixelwise], "z_med": [rec.z_median]}
        per_trial = [dict((r[0], r[1]) for r in rows)]
        for s in range(opts.seed + 1, opts.seed + opts.trials):
            r = reconstruct(scene, cfg, opts, s, timings)
            stacks["alpha_pml"].append(r.alpha_pml)
            stacks["z_pml"].append(r.z_pml)
            stacks["alpha_pix"].append(r.alpha_pixelwise)
            stacks["z_med"].append(r.z_median)
            with stage("metrics", timings):
                per_trial.append(dict((m[0], m[1]) for m in compute_metrics(scene, cfg, r)))
        with stage("metrics", timings):
            maps = {k: pixel_rmse_map(scene.alpha if k.startswith("alpha") else scene.z, v)
                    for k, v in stacks.items()}
            units = {m[0]: m[2] for m in rows}
            for name in units:
                vals = [t[name] for t in per_trial if name in t]
                rows.append((f"trials_mean_{name}", float(np.mean(vals)), units[name]))
            extra_alpha = [maps["alpha_pml"], maps["alpha_pix"]]
            extra_z = [maps["z_pml"], maps["z_med"]]

    with stage("write", timings):
        formats.write_scene(out / "scene.peis", scene)
        formats.write_frame(out / "frame.peid", rec.frame)
        formats.write_mask(out / "mask.peim", rec.mask)
        formats.write_image_pair(out / "pixelwise.peis", rec.alpha_pixelwise, rec.z_pixelwise)
        formats.write_image_pair(out / "median.peis", rec.alpha_pixelwise, rec.z_median)
        formats.write_image_pair(out / "histogram.peis", rec.alpha_pixelwise, rec.z_histogram)
        formats.write_image_pair(out / "pml.peis", rec.alpha_pml, rec.z_pml)
        write_metrics_csv(out / "metrics.csv", rows)
        ranges = {
            "reflectivity": color_range(scene.alpha, symmetric_zero=True),
            "depth": color_range(scene.z),
        }
        plots = {}
        if opts.plots:
            for name, img in [("truth", scene.alpha), ("pixelwise", rec.alpha_pixelwise), ("pml", rec.alpha_pml)]:
                f = f"reflectivity_{name}.svg"
                save_heatmap(out / f, np.clip(img, *ranges["reflectivity"]), *ranges["reflectivity"], f"reflectivity: {name}", "1", "gray")
                plots[f] = "reflectivity"
            for name, img in [("truth", scene.z), ("median", rec.z_median), ("pml", rec.z_pml)]:
                f = f"depth_{name}.svg"
                save_heatmap(out / f, img, *ranges["depth"], f"depth: {name}", "m", "viridis")
                plots[f] = "depth"
        if opts.trials > 1:
            formats.write_image_pair(out / "rmse_maps_pml.peis", extra_alpha[0], extra_z[0])
            formats.write_image_pair(out / "rmse_maps_pixelwise.peis", extra_alpha[1], extra_z[1])
            ranges["rmse_reflectivity"] = color_range(*extra_alpha, symmetric_zero=True)
            ranges["rmse_depth"] = color_range(*extra_z, symmetric_zero=True)
            if opts.plots:
                for name, a, z in [("pml", extra_alpha[0], extra_z[0]), ("pixelwise", extra_alpha[1], extra_z[1])]:
                    save_heatmap(out / f"rmse_reflectivity_{name}.svg", a, *ranges["rmse_reflectivity"],
                                 f"reflectivity RMSE: {name}", "1", "magma")
                    save_heatmap(out / f"rmse_depth_{name}.svg", z, *ranges["rmse_depth"],
                                 f"depth RMSE: {name}", "m", "magma")
                    plots[f"rmse_reflectivity_{name}.svg"] = "rmse_reflectivity"
                    plots[f"rmse_depth_{name}.svg"] = "rmse_depth"
        report = {
            "config": formats.config_to_dict(cfg),
            "options": asdict(opts),
            "seeds": list(range(opts.seed, opts.seed + opts.trials)),
            "n": scene.n,
            "metrics": {name: value for name, value, _ in rows},
            "colorbar_ranges": {k: list(v) for k, v in ranges.items()},
            "plots": plots,
        }
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    report["timings_s"] = timings
    return report



def trend_grid(scene: Scene, base: InstrumentConfig, acquisition_times, sbrs, seeds,
               opts: PipelineOptions | None = None) -> list:
    """Mean PML depth RMSE over ``seeds`` for each (acquisition time, SBR) pair.

    The source strength ``S`` and period ``T_r`` stay those of ``base``; the
    acquisition time sets ``N = round(T_a / T_r)`` and the SBR sets
    ``B = eta*S*mean(alpha)/SBR``, so SBR changes only the background level.
    Returns rows ``(T_a, sbr, N, B, mean_ppp, mean_rmse_z_pml, rmse_per_seed)``.
    """
    opts = opts or PipelineOptions(plots=False)
    rows = []
    for s in sbrs:
        for t_a in acquisition_times:
            N = int(round(t_a / base.T_r))
            cfg = base.replace(N=N, B=base.eta * base.S * float(scene.alpha.mean()) / s)
            per_seed, ppp = [], []
            for seed in seeds:
                rec = reconstruct(scene, cfg, opts, seed)
                per_seed.append(rmse(scene.z, rec.z_pml))
                ppp.append(float(rec.frame.counts.mean()))
            rows.append((t_a, s, N, cfg.B, float(np.mean(ppp)), float(np.mean(per_seed)), per_seed))
    return rows
