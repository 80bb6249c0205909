import numpy as np
import pytest

from hjlab.coefficients import hopf_lax_metric_oracle
from hjlab.domain_grid import Domain, GeometryError
from hjlab.metric_problem import (
    BracketError,
    check_concavity_in_mu,
    check_domain_monotonicity,
    check_mu_monotonicity,
    check_subadditivity,
    estimate_hbar_star,
    interior_lipschitz,
    m_tilde,
    solve_metric,
)

from conftest import eikonal

DOM = Domain.interval(-3, 3)
PB = eikonal(DOM)


@pytest.fixture(scope="module")
def sol50():
    return solve_metric(PB, 1.0, 0.0, resolution=50)


def test_eikonal_close_to_oracle(sol50):
    g = sol50.grid
    exact = hopf_lax_metric_oracle(2.0, 1.0, g.coords)
    assert sol50.feasible
    assert np.max(np.abs(sol50.values.values - exact)[g.member]) < 0.05


def test_target_values_zero(sol50):
    g = sol50.grid
    assert np.all(sol50.values.values[np.abs(g.axes[0]) <= 1] == 0.0)


def test_slopes_near_sqrt_mu_away_from_edge(sol50):
    g = sol50.grid
    q = np.abs(np.diff(sol50.values.values)) / g.spacing
    x = 0.5 * (g.axes[0][1:] + g.axes[0][:-1])
    away = (np.abs(x) > 1.1) & (np.abs(x) < 2.8)
    assert np.allclose(q[away], 1.0, atol=0.05)
    P = np.broadcast_to(sol50.params.gradient_bound, g.shape)
    assert 1.0 <= interior_lipschitz(sol50) <= P[g.member].max()


def test_m_tilde_takes_ball_sup(sol50):
    assert m_tilde(sol50, [1.5]) == pytest.approx(1.5, abs=0.05)
    with pytest.raises(GeometryError):
        m_tilde(sol50, [2.5])


def test_target_must_fit():
    with pytest.raises(GeometryError):
        solve_metric(PB, 1.0, 2.5, resolution=20)


def test_subadditivity_collinear_equality():
    pb = eikonal(Domain.interval(-4, 4))
    rep = check_subadditivity(pb, 1.0, [((-2.5,), (0.0,), (2.5,))], resolution=40)
    row = rep.details["triples"][0]
    assert rep.passed
    assert row["m_yz"] == pytest.approx(row["m_yx"] + row["m_xz"], abs=0.15)


def test_mu_monotone():
    assert check_mu_monotonicity(PB, [1.0, 2.0, 4.0], 0.0, resolution=30).passed


def test_concavity_spot_value():
    rep = check_concavity_in_mu(PB, 1.0, 4.0, 0.0, resolution=50, sample=[(2.0,)])
    pt = rep.details["points"][0]
    assert rep.passed
    assert pt["mid"] == pytest.approx(np.sqrt(2.5), abs=0.02)


def test_domain_monotone_nested_intervals():
    rep = check_domain_monotonicity(PB, Domain.interval(-3, 3), Domain.interval(-2.5, 2), 1.0, 0.0, 20)
    assert rep.passed and rep.details["shared_operator"]


def test_infeasible_level_flagged():
    sol = solve_metric(PB, -0.5, 0.0, resolution=20, max_iter=20000)
    assert not sol.feasible


def test_hbar_star_bracket():
    lo, hi = estimate_hbar_star(PB, 0.0, (-0.5, 0.5), width=0.25, resolution=20, max_iter=20000)
    assert lo <= 0.0 <= hi + 1e-12
    with pytest.raises(BracketError):
        estimate_hbar_star(PB, 0.0, (0.5, 1.0), resolution=20, max_iter=20000)
