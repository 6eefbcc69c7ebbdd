#!/usr/bin/env python3
"""Layer dichotomy experiment: the same data on a long vs a tall stadium.

Minimizes the rescaled energy at eps = 0.04 on (l, h) = (2, 1) and (0.5, 1)
and prints the classification, the winning multistart branch and the energies
of both metastable layer states.
"""

import argparse
import time

from aclab.analysis import classify_layer
from aclab.boundary_data import BoundaryData
from aclab.connection1d import solve_connection
from aclab.geometry import build_stadium
from aclab.minimize import SolveSettings, minimize
from aclab.potential import quartic_double_well


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=0.04)
    ap.add_argument("--dx", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    p = quartic_double_well()
    conn = solve_connection(p, [-1.0])
    sigma = conn.action
    print(f"sigma = {sigma:.6f}   2*sigma*h and 2*sigma*l below per case")
    settings = SolveSettings(seed=args.seed)
    for l, h in ((2.0, 1.0), (0.5, 1.0)):
        t0 = time.monotonic()
        d = build_stadium(l, h, args.dx)
        b = BoundaryData(mode="step_h3", m=1, eps=args.eps, c0=2.0,
                         a_minus=[-1.0], a_plus=[1.0], bound_m=2.0)
        f, rep = minimize(d, p, b, args.eps, settings, conn=conn)
        label = classify_layer(f, d, p).classification
        print(f"\n(l, h) = ({l}, {h}): {label}  "
              f"[{time.monotonic() - t0:.0f} s]")
        print(f"  winner {rep.winner}, E = {rep.final_energy:.6f} "
              f"(2*sigma*h = {2 * sigma * h:.4f}, 2*sigma*l = {2 * sigma * l:.4f})")
        for br in rep.branches:
            print(f"  {br.init:32s} converged={br.converged} "
                  f"E={br.energy:.6f} iters={br.iterations}")


if __name__ == "__main__":
    main()
