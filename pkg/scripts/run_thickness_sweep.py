#!/usr/bin/env python3
"""Boundary-layer thickness scaling: t(eps)/eps growth under eps-halving.

Solves the l < h stadium over a decreasing eps list with continuation and
prints the thickness diagnostics at the probe x = l/2: the layer is strictly
thicker than O(eps) (t/eps grows), the rescaled wall slope eps |u_y(x, 0)|
shrinks, and the Hamiltonian side fluxes decay.
"""

import argparse
import time

from aclab.analysis import thickness_scaling
from aclab.boundary_data import BoundaryData
from aclab.connection1d import solve_connection
from aclab.geometry import build_stadium
from aclab.minimize import SolveSettings, interpolate_field, minimize
from aclab.potential import quartic_double_well


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.08, 0.04, 0.02])
    ap.add_argument("--l", type=float, default=1.0)
    ap.add_argument("--h", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    p = quartic_double_well()
    conn = solve_connection(p, [-1.0])
    settings = SolveSettings(seed=args.seed, multistart=("comparison_field",))
    fields = []
    prev = None
    for eps in args.eps:
        t0 = time.monotonic()
        d = build_stadium(args.l, args.h, eps / 4)
        b = BoundaryData(mode="step_h3", m=1, eps=eps, c0=2.0,
                         a_minus=[-1.0], a_plus=[1.0], bound_m=2.0)
        extra = []
        if prev is not None:
            extra.append(("continuation", interpolate_field(prev, d, b, eps)))
        f, rep = minimize(d, p, b, eps, settings, conn=conn, extra_inits=extra)
        prev = f
        fields.append(f)
        print(f"eps={eps}: E={rep.final_energy:.6f} winner={rep.winner} "
              f"[{time.monotonic() - t0:.0f} s]")

    rect = (args.l / 4, 3 * args.l / 4, 0.0, args.h / 2)
    trend = thickness_scaling(fields, p, args.l / 2, conn.endpoints[1],
                              flux_rect=rect)
    print(f"\nprobe x = {trend.probe_x}")
    for pt in trend.points:
        print(f"eps={pt.eps}: t={pt.thickness:.4f}  t/eps={pt.t_over_eps:.3f}  "
              f"eps|u_y(wall)|={pt.eps_wall_slope:.5f}  "
              f"|side flux|={pt.abs_side_flux:.3e}")
    print(f"t/eps increasing: {trend.t_over_eps_increasing}")
    print(f"wall slope decreasing: {trend.wall_slope_decreasing}")
    print(f"side flux decreasing: {trend.side_flux_decreasing}")


if __name__ == "__main__":
    main()
