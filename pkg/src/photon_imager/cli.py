"""Command-line interface: ``photon-imager <subcommand> ...``.

Exit codes: 0 on success, 2 for usage errors (argparse), and ``10 + i`` when
stage ``i`` of ``pipeline.STAGES`` fails:

====  ============
code  stage
====  ============
10    load
11    simulate
12    pixelwise
13    reflectivity
14    censor
15    depth
16    metrics
17    write
18    bounds
====  ============

Penalty weights resolve as CLI flag, then built-in default (the JSON config
holds acquisition constants only).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import formats
from .bounds import reflectivity_sweep, write_sweep_csv
from .censor import censor_detections, rom_times
from .metrics import psnr, rmse, sbr
from .model import GaussianPulse
from .pipeline import (
    PipelineOptions,
    StageError,
    run_pipeline,
    stage,
    write_metrics_csv,
)
from .pixelwise import (
    cml_reflectivity,
    histogram_depth_image,
    impute_missing,
    log_matched_filter_image,
)
from .pml import DEFAULT_BETA_ALPHA, DEFAULT_BETA_Z, SolverSettings, pml_depth, pml_reflectivity
from .scenes import KINDS, calibrate_instrument, make_scene
from .simulator import simulate_frame

DEFAULT_SWEEPS = {
    "alpha": [0.05, 0.1, 0.2, 0.5, 1.0],
    "N": [100, 200, 500, 1000, 2000],
    "sbr": [0.5, 1.0, 2.0, 5.0, 10.0],
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="photon-imager", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, config=True, scene=False, frame=False, seed=False, betas=False, threads=False):
        if config:
            sp.add_argument("--config", required=True, help="JSON instrument config")
        if scene:
            sp.add_argument("--scene", required=True, help="PEIS scene file")
        if frame:
            sp.add_argument("--frame", required=True, help="PEID detection file")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        if betas:
            sp.add_argument("--beta-alpha", type=float, default=None, help=f"default {DEFAULT_BETA_ALPHA}")
            sp.add_argument("--beta-z", type=float, default=None, help=f"default {DEFAULT_BETA_Z}")
        if threads:
            sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", required=True)

    sp = sub.add_parser("scene", help="generate a synthetic scene")
    sp.add_argument("--kind", choices=KINDS, required=True)
    sp.add_argument("--n", type=int, default=128)
    sp.add_argument("--ppp", type=float, default=None, help="also write a calibrated config for this mean count")
    sp.add_argument("--sbr", type=float, default=1.0)
    sp.add_argument("--config-out", default=None, help="where to write the calibrated config")
    common(sp, config=False)

    sp = sub.add_parser("simulate", help="simulate a detection frame")
    common(sp, scene=True, seed=True, threads=True)

    sp = sub.add_parser("estimate", help="reconstruct reflectivity and depth (PEIS output)")
    sp.add_argument("--method", choices=("pixelwise", "histogram", "pml"), required=True)
    sp.add_argument("--mask", default=None, help="PEIM mask for pml (computed if absent)")
    common(sp, frame=True, betas=True)

    sp = sub.add_parser("censor", help="compute the censoring mask (PEIM output)")
    sp.add_argument("--reflectivity", default=None, help="PEIS whose first image is the reflectivity estimate")
    common(sp, frame=True, betas=True)

    sp = sub.add_parser("bounds", help="reflectivity bound vs Monte-Carlo sweep (CSV output)")
    sp.add_argument("--sweep", choices=tuple(DEFAULT_SWEEPS), required=True)
    sp.add_argument("--values", type=float, nargs="+", default=None)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--trials", type=int, default=100_000)
    common(sp, seed=True)

    sp = sub.add_parser("metrics", help="PSNR/RMSE of an estimate against a scene (CSV output)")
    sp.add_argument("--estimate", required=True, help="PEIS estimate (reflectivity, depth)")
    sp.add_argument("--config", default=None, help="optional, adds the SBR row")
    common(sp, config=False, scene=True)

    sp = sub.add_parser("pipeline", help="simulate and reconstruct end to end")
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--no-plots", action="store_true")
    common(sp, scene=True, seed=True, betas=True, threads=True)
    return p


def _betas(args):
    ba = DEFAULT_BETA_ALPHA if args.beta_alpha is None else args.beta_alpha
    bz = DEFAULT_BETA_Z if getattr(args, "beta_z", None) is None else args.beta_z
    return ba, bz


def _cmd_scene(args):
    with stage("load"):
        scene = make_scene(args.kind, args.n)
    with stage("write"):
        formats.write_scene(args.out, scene)
        if args.ppp is not None:
            cfg = calibrate_instrument(scene, args.ppp, args.sbr)
            formats.write_config(args.config_out or Path(args.out).with_suffix(".json"), cfg)


def _cmd_simulate(args):
    with stage("load"):
        cfg = formats.read_config(args.config)
        scene = formats.read_scene(args.scene)
    with stage("simulate"):
        frame = simulate_frame(scene, cfg, GaussianPulse(cfg.S, cfg.T_p), args.seed, threads=args.threads)
    with stage("write"):
        formats.write_frame(args.out, frame)


def _load_frame(args):
    with stage("load"):
        cfg = formats.read_config(args.config)
        frame = formats.read_frame(args.frame)
        frame.validate(cfg)
    return cfg, frame, GaussianPulse(cfg.S, cfg.T_p)


def _cmd_estimate(args):
    cfg, frame, pulse = _load_frame(args)
    beta_alpha, beta_z = _betas(args)
    if args.method in ("pixelwise", "histogram"):
        with stage("pixelwise"):
            alpha = cml_reflectivity(cfg, frame.counts)
            if args.method == "pixelwise":
                z = log_matched_filter_image(frame, cfg, pulse)
            else:
                z = histogram_depth_image(frame, cfg, pulse)
            z = impute_missing(z)
    else:
        with stage("reflectivity"):
            alpha = pml_reflectivity(frame, cfg, SolverSettings(beta=beta_alpha)).image
        with stage("censor"):
            rom = rom_times(frame)
            if args.mask:
                mask = formats.read_mask(args.mask, frame.counts)
            else:
                mask = censor_detections(frame, cfg, pulse, alpha, rom)
        with stage("depth"):
            z = pml_depth(frame, mask, cfg, pulse, SolverSettings(beta=beta_z), rom=rom).image
    with stage("write"):
        formats.write_image_pair(args.out, alpha, z)


def _cmd_censor(args):
    cfg, frame, pulse = _load_frame(args)
    beta_alpha, _ = _betas(args)
    if args.reflectivity:
        with stage("load"):
            alpha = formats.read_image_pair(args.reflectivity)[0]
    else:
        with stage("reflectivity"):
            alpha = pml_reflectivity(frame, cfg, SolverSettings(beta=beta_alpha)).image
    with stage("censor"):
        mask = censor_detections(frame, cfg, pulse, alpha)
    with stage("write"):
        formats.write_mask(args.out, mask)


def _cmd_bounds(args):
    with stage("load"):
        cfg = formats.read_config(args.config)
    with stage("bounds"):
        values = args.values if args.values is not None else DEFAULT_SWEEPS[args.sweep]
        rows = reflectivity_sweep(cfg, args.sweep, values, alpha=args.alpha, trials=args.trials, seed=args.seed)
    with stage("write"):
        write_sweep_csv(rows, args.out)


def _cmd_metrics(args):
    with stage("load"):
        scene = formats.read_scene(args.scene)
        alpha, z = formats.read_image_pair(args.estimate)
        cfg = formats.read_config(args.config) if args.config else None
    with stage("metrics"):
        rows = [
            ("psnr_alpha", psnr(scene.alpha, alpha), "dB"),
            ("rmse_alpha", rmse(scene.alpha, alpha), "1"),
            ("rmse_z", rmse(scene.z, z), "m"),
        ]
        if cfg is not None:
            rows.append(("sbr", sbr(scene, cfg), "1"))
    with stage("write"):
        write_metrics_csv(args.out, rows)


def _cmd_pipeline(args):
    beta_alpha, beta_z = _betas(args)
    opts = PipelineOptions(seed=args.seed, trials=args.trials, beta_alpha=beta_alpha, beta_z=beta_z,
                           threads=args.threads, plots=not args.no_plots)
    report = run_pipeline(args.config, args.scene, args.out, opts)
    print(json.dumps(report["metrics"], indent=2, sort_keys=True))


COMMANDS = {
    "scene": _cmd_scene,
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "censor": _cmd_censor,
    "bounds": _cmd_bounds,
    "metrics": _cmd_metrics,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except StageError as exc:
        print(f"photon-imager: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
