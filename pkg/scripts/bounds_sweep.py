#!/usr/bin/env python3
"""Tabulate estimator bounds next to Monte-Carlo estimates.

Writes ``reflectivity_<param>.csv`` for the alpha, N and SBR sweeps and
``depth_mse.csv`` comparing the background-free depth MSE expression, the
depth CRLB and Monte Carlo over a range of mean counts.

    python3 scripts/bounds_sweep.py --out-dir bounds/
"""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from photon_imager.bounds import (
    crlb_depth,
    mc_depth_mse_gaussian,
    mse_depth_gaussian_from_count,
    reflectivity_sweep,
    write_sweep_csv,
)
from photon_imager.cli import DEFAULT_SWEEPS
from photon_imager.model import GaussianPulse, InstrumentConfig


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="bounds")
    ap.add_argument("--trials", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--depth", type=float, default=5.0, help="true depth for the depth table (m)")
    args = ap.parse_args(argv)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    cfg = InstrumentConfig(eta=0.35, S=2e-3, B=0.35 * 2e-3, N=1000, T_r=100e-9, T_p=270e-12)
    for param, values in DEFAULT_SWEEPS.items():
        rows = reflectivity_sweep(cfg, param, values, trials=args.trials, seed=args.seed)
        write_sweep_csv(rows, out / f"reflectivity_{param}.csv")
        for r in rows:
            print(f"{param}={r[1]:<8g} bound={r[2]:.4e} mc={r[3]:.4e} [{r[4]:.4e}, {r[5]:.4e}]")

    dcfg = cfg.replace(B=0.0)
    pulse = GaussianPulse(dcfg.S, dcfg.T_p)
    with open(out / "depth_mse.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["C", "mse_closed_form", "crlb", "mc_estimate", "ci_lo", "ci_hi"])
        for i, C in enumerate([0.25, 0.5, 1, 2, 5, 10, 20, 50, 100]):
            alpha = -np.log1p(-C / dcfg.N) / (dcfg.eta * dcfg.S)
            exact = mse_depth_gaussian_from_count(dcfg, C, args.depth)
            bound = crlb_depth(dcfg, pulse, alpha, args.depth)
            mc = mc_depth_mse_gaussian(dcfg, C, args.depth, trials=args.trials, seed=args.seed + i)
            w.writerow([C, repr(exact), repr(bound), repr(mc.value), repr(mc.ci_lo), repr(mc.ci_hi)])
            print(f"C={C:<6g} mse={exact:.4e} crlb={bound:.4e} mc={mc.value:.4e}")


if __name__ == "__main__":
    main()
