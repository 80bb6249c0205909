"""Hoelder exponent of bounded state-constrained solutions for m > 2.

    python3 scripts/holder_study.py --m 3 4 --resolution 50
"""

import argparse

import numpy as np

from hjlab import build_grid, measure_holder, solve_state_constraint
from hjlab.coefficients import Constant, DiffusionSpec, HamiltonianSpec, ProblemSpec
from hjlab.domain_grid import Domain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=float, nargs="+", default=[3.0, 4.0])
    ap.add_argument("--A", type=float, default=0.25, help="constant diffusion coefficient")
    ap.add_argument("--resolution", type=float, default=50)
    args = ap.parse_args()

    dom = Domain.interval(-1, 1)
    g = build_grid(dom, args.resolution)
    for m in args.m:
        pb = ProblemSpec(HamiltonianSpec(m), DiffusionSpec(Constant(np.sqrt(2 * args.A))), Constant(0.0), 1.0, dom)
        u, path = solve_state_constraint(pb, g)
        fit = measure_holder(u, None, m)
        print(f"m={m:g}  fitted exponent={fit.exponent:.4f}  predicted={(m - 2) / (m - 1):.4f}  "
              f"pairs={fit.pairs}  path steps={len(path.solutions)}")


if __name__ == "__main__":
    main()
