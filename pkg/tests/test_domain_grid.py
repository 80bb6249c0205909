import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hjlab.domain_grid import (
    BOUNDARY,
    INTERIOR,
    TARGET,
    Domain,
    GeometryError,
    GridFunction,
    barrier_zeta,
    build_grid,
    distance_to_boundary,
    plateau_constant,
    zeta,
)

coord = st.floats(-0.999, 0.999, allow_nan=False)


@given(coord)
def test_interval_distance_exact(x):
    d = Domain.interval(-1, 1).distance(np.array([[x]]))[0]
    assert d == pytest.approx(1 - abs(x), abs=1e-15)


@given(coord, coord)
def test_box_distance_exact(x, y):
    d = Domain.box([-1, -2], [1, 2]).distance(np.array([[x, 2 * y]]))[0]
    assert d == pytest.approx(min(1 - abs(x), 2 - 2 * abs(y)), abs=1e-14)


@given(coord, coord)
def test_ball_distance_exact(x, y):
    dom = Domain.ball([0.5, 0.0], 2.0)
    p = np.array([[x, y]])
    assert dom.distance(p)[0] == pytest.approx(2.0 - np.hypot(x - 0.5, y), abs=1e-14)


def test_interval_classification():
    g = build_grid(Domain.interval(0, 1), 10)
    assert g.shape == (11,)
    assert g.kind[0] == BOUNDARY and g.kind[-1] == BOUNDARY
    assert np.all(g.kind[1:-1] == INTERIOR)


def test_annulus_marks_target_nodes():
    g = build_grid(Domain.annulus(Domain.interval(-3, 3), [0.0], 1.0), 10)
    assert np.all(g.kind[np.abs(g.axes[0]) <= 1 + 1e-9] == TARGET)
    assert g.kind[0] == BOUNDARY


def test_ball_grid_boundary_nodes_touch_outside():
    g = build_grid(Domain.ball([0, 0], 1.0), 10)
    assert g.mask(BOUNDARY).any()
    assert np.all(np.linalg.norm(g.coords[g.member], axis=-1) <= 1 + 1e-9)


@pytest.mark.parametrize("make", [
    lambda: Domain.interval(1, 1),
    lambda: Domain.box([0, 0], [1, -1]),
    lambda: Domain.ball([0, 0], 0.0),
    lambda: Domain.annulus(Domain.interval(-1, 1), [0.0], 1.0),
    lambda: Domain.annulus(Domain.interval(-3, 3), [0.0, 0.0], 1.0),
    lambda: build_grid(Domain.interval(0, 1), 4),
])
def test_geometry_violations(make):
    with pytest.raises(GeometryError):
        make()


def test_distance_to_boundary_range(grid50):
    d = distance_to_boundary(grid50).values
    assert d.min() == 0.0
    assert d.max() == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=11, max_size=11))
def test_csv_round_trip_exact(tmp_path_factory, vals):
    g = build_grid(Domain.interval(0, 1), 10)
    u = GridFunction(g, np.array(vals))
    path = u.to_csv(tmp_path_factory.mktemp("csv") / "u.csv")
    back = GridFunction.from_csv(g, path)
    assert np.array_equal(back.values, u.values)


def test_csv_round_trip_2d(tmp_path):
    g = build_grid(Domain.ball([0, 0], 1.0), 8)
    rng = np.random.default_rng(0)
    u = GridFunction(g, rng.normal(size=g.shape))
    back = GridFunction.from_csv(g, u.to_csv(tmp_path / "u.csv"))
    assert np.array_equal(back.values, u.values)
    header = (tmp_path / "u.csv").read_text().splitlines()[0]
    assert header == "i,j,x,y,value"


def test_nonfinite_values_rejected(grid50):
    vals = np.zeros(grid50.shape)
    vals[3] = np.nan
    with pytest.raises(ValueError, match="node"):
        GridFunction(grid50, vals)


def test_zeta_forms():
    assert zeta(0.5, 1.5) == pytest.approx(0.5 ** -1.0)
    assert zeta(0.5, 2.0) == pytest.approx(1 - np.log(0.5))
    assert zeta(3.0, 1.5) == pytest.approx(1.0)
    assert zeta(3.0, 2.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        zeta(0.5, 3.0)


def test_barrier_finite_and_plateau(grid50):
    z = barrier_zeta(grid50, 1.5)
    assert np.all(np.isfinite(z.values))
    inner = distance_to_boundary(grid50).values >= grid50.domain.eps0()
    assert z.values[inner].max() <= plateau_constant(grid50.domain, 1.5) + 1e-12
