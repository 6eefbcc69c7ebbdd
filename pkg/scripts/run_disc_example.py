#!/usr/bin/env python3
"""Constant-data disc: energy vs sigma_plus * perimeter across an eps sweep."""

import argparse
import time

import numpy as np

from aclab.boundary_data import BoundaryData
from aclab.connection1d import solve_halfline
from aclab.geometry import build_disc, distance_field
from aclab.minimize import SolveSettings, minimize
from aclab.potential import quartic_double_well


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.08, 0.04])
    ap.add_argument("--r", type=float, default=1.0)
    ap.add_argument("--z", type=float, default=0.0)
    args = ap.parse_args()

    p = quartic_double_well()
    half = solve_halfline(p, [args.z])
    print(f"sigma_plus({args.z}) = {half.action:.9f}, "
          f"optimal arrival set {half.arrival_set}")
    b = BoundaryData(mode="const_z", m=1, z=[args.z], bound_m=2.0)
    settings = SolveSettings(seed=11)
    for eps in args.eps:
        t0 = time.monotonic()
        d = build_disc(args.r, eps / 4)
        f, rep = minimize(d, p, b, eps, settings, halfline=half)
        lead = half.action * d.perimeter()
        deficit = lead - rep.final_energy
        dist = distance_field(d, "boundary")
        bulk = d.inside & (dist >= eps ** (1.0 / 3.0))
        devs = [float(np.max(np.abs(f.values[bulk, 0] - a))) for a in (-1.0, 1.0)]
        print(f"eps={eps}: E={rep.final_energy:.6f}  sp*H1={lead:.6f}  "
              f"deficit/(lead eps^(1/3))={deficit / (lead * eps ** (1 / 3)):.4f}  "
              f"bulk max dev to nearest well = {min(devs):.2e}  "
              f"[{time.monotonic() - t0:.0f} s]")


if __name__ == "__main__":
    main()
