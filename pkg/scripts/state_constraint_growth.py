"""Boundary growth of the maximal state-constrained subsolution.

For m < 2 fits the power law in the boundary distance; for m = 2 fits ``c (1 - log d)``.

    python3 scripts/state_constraint_growth.py --m 1.5 --resolution 200
    python3 scripts/state_constraint_growth.py --m 2 --A 0.5
"""

import argparse
from pathlib import Path

import numpy as np

from hjlab import barrier_sandwich_check, build_grid, emit_plot_data, solve_state_constraint
from hjlab.coefficients import Constant, DiffusionSpec, HamiltonianSpec, ProblemSpec
from hjlab.domain_grid import Domain
from hjlab.state_constraints import geometric_path, predicted_log_coefficient


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=float, default=1.5)
    ap.add_argument("--A", type=float, default=0.0, help="constant diffusion coefficient")
    ap.add_argument("--resolution", type=float, default=200)
    ap.add_argument("--path-steps", type=int, default=1,
                    help="number of geometric epsilon steps starting at 1 (1 keeps the forcing fixed)")
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    dom = Domain.interval(-1, 1)
    g = build_grid(dom, args.resolution)
    pb = ProblemSpec(HamiltonianSpec(args.m), DiffusionSpec(Constant(np.sqrt(2 * args.A))), Constant(0.0), 1.0, dom)
    u, path = solve_state_constraint(pb, g, path=geometric_path(1.0, 0.5, args.path_steps), early_stop=False)
    kw = {}
    if args.m < 2:
        kw["expected_exponent"] = -(2 - args.m) / (args.m - 1)
    elif args.m == 2:
        kw["predicted_log_coefficient"] = predicted_log_coefficient(args.A, 1.0)
    rep = barrier_sandwich_check(u, args.m, **kw)
    print(rep.line())
    print(f"epsilon-path violations: {path.violations()}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        emit_plot_data(u, "profile", args.out / "solution.csv")
        emit_plot_data(path, "epsilon_path", args.out / "epsilon_path.csv")


if __name__ == "__main__":
    main()
