import pytest

from hjlab.coefficients import Constant, Cosine, DiffusionSpec, HamiltonianSpec, ProblemSpec
from hjlab.domain_grid import Domain, build_grid


def eikonal(domain, m=2.0, b=1.0):
    return ProblemSpec(HamiltonianSpec(m, Constant(b)), DiffusionSpec(), Constant(0.0), 0.0, domain)


@pytest.fixture
def interval():
    return Domain.interval(-1.0, 1.0)


@pytest.fixture
def viscous_problem(interval):
    """delta = 1, m = 2, mild diffusion and a cosine source on (-1, 1)."""
    return ProblemSpec(HamiltonianSpec(2.0, Constant(1.0)), DiffusionSpec(Constant(0.3)),
                       Cosine(1.0, 0.5), 1.0, interval)


@pytest.fixture
def grid50(interval):
    return build_grid(interval, 50)
