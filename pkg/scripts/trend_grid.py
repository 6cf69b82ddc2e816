#!/usr/bin/env python3
"""PML depth RMSE over a grid of acquisition times and signal-to-background ratios.

The source strength is calibrated once (mean ppp at the longest acquisition
time and SBR 1); SBR then changes only the background level.

    python3 scripts/trend_grid.py --out trend.csv
"""
from __future__ import annotations

import argparse
import csv

from photon_imager.pipeline import trend_grid
from photon_imager.scenes import calibrate_instrument, make_scene


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--ppp", type=float, default=1.2, help="mean ppp at T_a = 100 us, SBR 1")
    ap.add_argument("--ta-us", type=float, nargs="+", default=[25.0, 50.0, 100.0])
    ap.add_argument("--sbr", type=float, nargs="+", default=[1.0, 7.0])
    ap.add_argument("--seeds", type=int, default=5, help="use seeds 0 .. seeds-1")
    ap.add_argument("--out", default="trend.csv")
    args = ap.parse_args(argv)

    scene = make_scene("mannequinoid", args.n)
    base = calibrate_instrument(scene, args.ppp, 1.0)
    rows = trend_grid(scene, base, [t * 1e-6 for t in args.ta_us], args.sbr, range(args.seeds))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T_a_s", "sbr", "N", "B", "mean_ppp", "mean_rmse_z_pml", "rmse_per_seed"])
        for t_a, s, N, B, ppp, m, per in rows:
            w.writerow([repr(t_a), repr(s), N, repr(B), repr(ppp), repr(m), ";".join(repr(v) for v in per)])
            print(f"T_a={t_a * 1e6:6.1f} us  SBR={s:4.1f}  N={N:5d}  ppp={ppp:.3f}  RMSE={100 * m:.2f} cm")


if __name__ == "__main__":
    main()
