"""Scaling of the interior Lipschitz constant with the source size or the diffusion size.

    python3 scripts/lipschitz_scaling.py --branch source --out out/lip
    python3 scripts/lipschitz_scaling.py --branch diffusion
"""

import argparse
from pathlib import Path

import numpy as np

from hjlab import build_grid, emit_plot_data, lipschitz_scaling_study, solve_state_constraint
from hjlab.coefficients import Constant, Cosine, DiffusionSpec, HamiltonianSpec, ProblemSpec, Scaled
from hjlab.domain_grid import Domain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--branch", choices=["source", "diffusion"], default="source")
    ap.add_argument("--scalings", type=float, nargs="+", default=None)
    ap.add_argument("--resolution", type=float, default=50)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    dom = Domain.interval(-2, 2)
    g = build_grid(dom, args.resolution)
    if args.branch == "source":
        scalings = args.scalings or [4, 16, 64, 256]

        def make(lam):
            return ProblemSpec(HamiltonianSpec(2.0), DiffusionSpec(), Scaled(Cosine(1.0, 0.5, np.pi / 2), lam), 1.0, dom)

        def solve(p):
            return solve_state_constraint(p, g)[0]
    else:
        scalings = args.scalings or [1, 2, 4]

        def make(scale):
            return ProblemSpec(HamiltonianSpec(2.0), DiffusionSpec(Constant(scale)), Constant(0.0), 1.0, dom)

        def solve(p):
            return solve_state_constraint(p, g, path=[0.01])[0]

    rep = lipschitz_scaling_study(make, scalings, solve, Domain.interval(-1, 1), branch=args.branch)
    for row in rep.details["rows"]:
        print(f"scaling={row['scaling']:g}  K={row['K']:.4f}")
    print(rep.line(), f"(dominant branch: {rep.details['dominant_branch']})")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        Ks = [row["K"] for row in rep.details["rows"]]
        emit_plot_data((scalings, Ks), "scaling", args.out / f"scaling_{args.branch}.csv")


if __name__ == "__main__":
    main()
