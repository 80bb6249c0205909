import numpy as np
import pytest

from hjlab.coefficients import Constant, Cosine, DiffusionSpec, HamiltonianSpec, ProblemSpec
from hjlab.domain_grid import Domain, GridFunction, build_grid, distance_to_boundary
from hjlab.scheme import make_discretization
from hjlab.state_constraints import (
    barrier_sandwich_check,
    fill_excluded,
    geometric_path,
    predicted_log_coefficient,
    singular_forcing,
    solve_state_constraint,
)

DOM = Domain.interval(-1, 1)


def test_geometric_path():
    assert geometric_path(1.0, 0.5, 4) == [1.0, 0.5, 0.25, 0.125]


def test_singular_forcing_power(grid50):
    phi = singular_forcing(grid50, 1.5)
    d = distance_to_boundary(grid50).values
    inner = d > 0
    assert np.allclose(phi[inner], d[inner] ** -3.0)
    assert phi[0] == 0.0


def test_fill_excluded_linear_extrapolation(grid50):
    pb = ProblemSpec(HamiltonianSpec(2.0), delta=1.0, domain=DOM)
    disc = make_discretization(pb, grid50, boundary="excluded")
    u = np.where(disc.present, 3.0 * grid50.coords[..., 0], 0.0)
    filled = fill_excluded(disc, u)
    assert filled[0] == pytest.approx(-3.0) and filled[-1] == pytest.approx(3.0)


def test_epsilon_path_monotone_small():
    g = build_grid(DOM, 40)
    pb = ProblemSpec(HamiltonianSpec(1.5, Cosine(1.0, 0.3)), DiffusionSpec(Constant(0.2)), Cosine(0.0, 1.0), 1.0, DOM)
    u, ep = solve_state_constraint(pb, g, path=geometric_path(steps=5), early_stop=False)
    assert len(ep.solutions) == 5
    assert ep.violations() == 0 and ep.monotone
    assert all(s.converged for s in ep.stats)


def test_m_above_two_solves_directly():
    g = build_grid(DOM, 30)
    pb = ProblemSpec(HamiltonianSpec(3.0), DiffusionSpec(Constant(0.3)), Constant(1.0), 1.0, DOM)
    u, ep = solve_state_constraint(pb, g)
    assert ep.epsilons == [0.0] and ep.stats[0].converged
    assert np.all(np.isfinite(u.values))


def test_requires_positive_decay():
    g = build_grid(DOM, 20)
    with pytest.raises(ValueError):
        solve_state_constraint(ProblemSpec(HamiltonianSpec(2.0), domain=DOM), g)


def test_rejects_increasing_path():
    g = build_grid(DOM, 20)
    with pytest.raises(ValueError, match="decreasing"):
        solve_state_constraint(ProblemSpec(HamiltonianSpec(2.0), delta=1.0, domain=DOM), g, path=[0.1, 0.2])


def test_no_blowup_regime_for_bounded_function():
    g = build_grid(DOM, 100)
    rep = barrier_sandwich_check(GridFunction(g, np.ones(g.shape)), 1.5)
    assert rep.passed and rep.measured == {"regime": "no blow-up"}


def test_fit_recovers_exact_power_law():
    g = build_grid(DOM, 200)
    d = np.maximum(distance_to_boundary(g).values, 1e-3)
    rep = barrier_sandwich_check(GridFunction(g, 2.0 + 0.3 * d**-1.0), 1.5)
    assert rep.measured == pytest.approx(-1.0, abs=1e-4)
    assert rep.details["coefficient"] == pytest.approx(0.3, rel=1e-3)


def test_fit_recovers_log_coefficient():
    g = build_grid(DOM, 200)
    d = np.maximum(distance_to_boundary(g).values, 1e-3)
    rep = barrier_sandwich_check(GridFunction(g, 1.0 + 0.7 * (1 - np.log(d))), 2.0, predicted_log_coefficient=0.7)
    assert rep.passed and rep.measured == pytest.approx(0.7, abs=1e-9)


@pytest.mark.parametrize("A,eps,b", [(0.0, 1.0, 1.0), (0.5, 0.25, 2.0), (1.0, 0.0, 1.0)])
def test_predicted_log_coefficient_solves_balance(A, eps, b):
    c = predicted_log_coefficient(A, eps, b)
    assert b * c * c - A * c == pytest.approx(eps)
    assert c >= 0
