"""Grid-convergence study of the metric solve against the eikonal distance oracle.

    python3 scripts/eikonal_convergence.py --resolutions 50 100 200 --out out/eikonal
"""

import argparse
from pathlib import Path

import numpy as np

from hjlab import emit_plot_data, hopf_lax_metric_oracle, solve_metric
from hjlab.solvers import fit_order
from hjlab.coefficients import Constant, DiffusionSpec, HamiltonianSpec, ProblemSpec
from hjlab.domain_grid import Domain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolutions", type=float, nargs="+", default=[50, 100, 200])
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--m", type=float, default=2.0)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    pb = ProblemSpec(HamiltonianSpec(args.m), DiffusionSpec(), Constant(0.0), 0.0, Domain.interval(-3, 3))
    hs, errs = [], []
    for res in args.resolutions:
        sol = solve_metric(pb, args.mu, 0.0, resolution=res)
        g = sol.grid
        exact = hopf_lax_metric_oracle(args.m, args.mu, g.coords, 0.0)
        err = float(np.max(np.abs(sol.values.values - exact)[g.member]))
        hs.append(g.spacing)
        errs.append(err)
        print(f"h={g.spacing:.5f}  sup error={err:.5f}  iterations={sum(s.iterations for s in sol.stats)}")
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            emit_plot_data(sol, "profile", args.out / f"metric_res{int(res)}.csv")
    if len(hs) > 2:
        print(f"observed order {fit_order(hs, errs):.3f}")


if __name__ == "__main__":
    main()
