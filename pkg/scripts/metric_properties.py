"""Structural checks of the metric solution: subadditivity, monotonicity and concavity in mu.

    python3 scripts/metric_properties.py --resolution 100
"""

import argparse

from hjlab import (
    check_concavity_in_mu,
    check_domain_monotonicity,
    check_mu_monotonicity,
    check_subadditivity,
)
from hjlab.coefficients import Constant, Cosine, DiffusionSpec, HamiltonianSpec, ProblemSpec
from hjlab.domain_grid import Domain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=float, default=100)
    ap.add_argument("--variable", action="store_true", help="use a variable b with diffusion instead of eikonal")
    args = ap.parse_args()

    if args.variable:
        ham, diff = HamiltonianSpec(2.0, Cosine(1.2, 0.4, 1.3)), DiffusionSpec(Constant(0.3))
    else:
        ham, diff = HamiltonianSpec(2.0), DiffusionSpec()
    big = ProblemSpec(ham, diff, Constant(0.0), 0.0, Domain.interval(-4, 4))
    small = ProblemSpec(ham, diff, Constant(0.0), 0.0, Domain.interval(-3, 3))
    res = args.resolution
    triples = [((-2.5,), (0.0,), (2.5,)), ((2.5,), (1.5,), (-2.0,))]
    print(check_subadditivity(big, 1.0, triples, resolution=res).line())
    print(check_mu_monotonicity(small, [1.0, 2.0, 4.0], 0.0, resolution=res).line())
    print(check_concavity_in_mu(small, 1.0, 4.0, 0.0, resolution=res).line())
    print(check_domain_monotonicity(small, Domain.interval(-3, 3), Domain.interval(-2.5, 2), 1.0, (0.0,),
                                    res / 2).line())


if __name__ == "__main__":
    main()
