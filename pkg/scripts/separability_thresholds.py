"""Separability thresholds of a two-mode squeezed vacuum.

Tabulates, for a grid of squeezing parameters, the fiber length at which the
state becomes separable (thermal fibers) and the largest amplifier gain that
keeps it entangled, comparing the numerical PPT crossing with the closed forms.

    python scripts/separability_thresholds.py [--n-th 0.5 1 2] [--out thresholds.csv]
"""

import argparse
import csv
import sys

import numpy as np

from entrans.experiments import SweepConfig, run


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--zeta", type=float, nargs="+", default=[0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0])
    parser.add_argument("--n-th", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    parser.add_argument("--out", help="CSV path (default: stdout)")
    args = parser.parse_args()

    rows = []
    for zeta in args.zeta:
        for n_th in args.n_th:
            s = run(SweepConfig("tmsv-separability", zeta=zeta, n_th=n_th)).summary
            rows.append(["fiber", zeta, n_th, s["crossing"], s["lmax_closed_form"]])
        s = run(SweepConfig("amplifier-gain", zeta=zeta)).summary
        rows.append(["amplifier", zeta, 0.0, s["crossing_T_sq"], s["T_max_sq_closed_form"]])

    handle = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(handle)
    writer.writerow(["device", "zeta", "n_th", "numerical_crossing", "closed_form", "abs_diff"])
    for device, zeta, n_th, crossing, closed in rows:
        diff = abs(crossing - closed) if crossing is not None else np.nan
        writer.writerow([device, zeta, n_th, f"{crossing:.12g}", f"{closed:.12g}", f"{diff:.3g}"])
    if args.out:
        handle.close()


if __name__ == "__main__":
    main()
