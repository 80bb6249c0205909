"""Maximal subsolutions of state-constraint problems via a vanishing boundary forcing.

For ``1 < m <= 2`` the right side is raised to ``f + eps * d^{-m/(m-1)}`` and the
forced problems are solved along a decreasing sequence of ``eps``. The discrete
operator (in particular its gradient bound) is held fixed along the path, so the
solutions decrease monotonically in ``eps`` by discrete comparison.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from .coefficients import ProblemSpec
from .domain_grid import BOUNDARY, Grid, GridFunction, distance_to_boundary, zeta
from .report import Report, digest
from .scheme import Discretization, SchemeParams, _shift, make_discretization, make_params, one_sided_slopes
from .solvers import SolveStats, default_tolerance, solve_stationary


def geometric_path(start: float = 1.0, ratio: float = 0.5, steps: int = 10) -> list[float]:
    return [start * ratio**k for k in range(steps)]


@dataclass
class EpsilonPath:
    epsilons: list
    solutions: list
    stats: list = field(default_factory=list)
    tolerance: float = 0.0
    max_violation: float = 0.0
    exponents: list = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        return self.max_violation <= 10 * self.tolerance

    def violations(self, slack: float | None = None) -> int:
        """Number of (node, step) pairs with ``u^eps > u^eps' + slack`` for eps < eps'."""
        slack = 10 * self.tolerance if slack is None else slack
        n = 0
        for a, b in zip(self.solutions, self.solutions[1:]):
            n += int(np.count_nonzero(b.values - a.values > slack))
        return n

    def to_csv(self, path, inner: np.ndarray | None = None) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "sup_inner", "fitted_exponent"])
            for k, (eps, u) in enumerate(zip(self.epsilons, self.solutions)):
                mask = inner if inner is not None else u.grid.member
                expo = self.exponents[k] if k < len(self.exponents) else float("nan")
                w.writerow([repr(float(eps)), repr(u.sup(mask)), repr(float(expo))])
        return path


def singular_forcing(grid: Grid, m: float) -> np.ndarray:
    """``d^{-m/(m-1)}`` at nodes off the boundary (0 elsewhere)."""
    d = distance_to_boundary(grid).values
    with np.errstate(divide="ignore"):
        phi = np.where(d > 0, d, np.inf) ** (-m / (m - 1))
    return np.where(grid.member & (d > 0), phi, 0.0)


def fill_excluded(disc: Discretization, u: np.ndarray) -> np.ndarray:
    """Values at excluded member nodes by one-sided linear extrapolation from present nodes.

    Uses ``2 u_1 - u_2`` along each axis where two present nodes line up
    (``u_1`` alone otherwise) and keeps the largest candidate.
    """
    g = disc.grid
    pres = disc.present
    missing = g.member & ~pres
    cand = np.full(u.shape, -np.inf)
    for k in range(g.dim):
        n = g.shape[k]
        for s in (-1, 1):
            one = np.roll(u, -s, axis=k)
            two = np.roll(u, -2 * s, axis=k)
            ok1 = np.roll(pres, -s, axis=k)
            ok2 = np.roll(pres, -2 * s, axis=k) & ok1
            idx = np.arange(n)
            bad1 = (idx + s < 0) | (idx + s >= n)
            bad2 = (idx + 2 * s < 0) | (idx + 2 * s >= n)
            shape = [1] * g.dim
            shape[k] = n
            ok1 = ok1 & ~bad1.reshape(shape)
            ok2 = ok2 & ~bad2.reshape(shape)
            val = np.where(ok2, 2 * one - two, one)
            cand = np.where(ok1, np.maximum(cand, val), cand)
    out = u.copy()
    fill = missing & np.isfinite(cand)
    out[fill] = cand[fill]
    return out


def solve_state_constraint(problem: ProblemSpec, grid: Grid, params: SchemeParams | None = None,
                           path: list | None = None, tol: float | None = None, *, P=None,
                           rule: str = "hypothesis", early_stop: bool = True, inner_depth: float | None = None,
                           init: GridFunction | None = None) -> tuple[GridFunction, EpsilonPath]:
    """Maximal subsolution of ``delta u - tr(A D^2 u) + H(Du, x) = f`` in the domain of ``grid``.

    Boundary nodes are not unknowns: interior nodes next to them use ghost values.
    For ``m <= 2`` the forced problems along ``path`` (default ``1, 1/2, ..., 2^-9``)
    are solved in turn, warm-started; with ``early_stop`` the path ends once two
    successive solutions agree within ``10 tol`` on the inner region. For ``m > 2``
    a single unforced solve is done.
    """
    if not problem.delta > 0:
        raise ValueError("state-constraint solves need delta > 0")
    m = problem.m
    base = make_discretization(problem, grid, boundary="excluded")
    if m > 2:
        path = [0.0]
        phi = np.zeros(grid.shape)
    else:
        path = geometric_path() if path is None else [float(e) for e in path]
        if any(b >= a for a, b in zip(path, path[1:])) or min(path) <= 0:
            raise ValueError("epsilon path must be positive and strictly decreasing")
        phi = singular_forcing(grid, m)
    d = distance_to_boundary(grid).values
    depth = grid.domain.eps0() if inner_depth is None else inner_depth
    inner = base.active & (d >= depth)

    disc0 = base.with_rhs(rhs_singular=np.where(base.active, path[0] * phi, 0.0))
    tol = default_tolerance(disc0) if tol is None else tol
    u0 = init if init is not None else GridFunction(grid, np.zeros(grid.shape))
    u, st = solve_stationary(problem, params, u0, tol=tol, disc=disc0, P=P, rule=rule)
    params = st.params
    sols, stats = [u], [st]
    for eps in path[1:]:
        disc = base.with_rhs(rhs_singular=np.where(base.active, eps * phi, 0.0))
        u, st = solve_stationary(problem, params, sols[-1], tol=tol, disc=disc)
        sols.append(u)
        stats.append(st)
        if early_stop and float(np.max(np.abs(u.values - sols[-2].values)[inner], initial=0.0)) < 10 * tol:
            break
    slopes = one_sided_slopes(disc0, sols[-1].values)
    if np.any(slopes > np.broadcast_to(params.gradient_bound, grid.shape) * (1 + 1e-9)):
        warnings.warn("solution slopes exceed the fixed gradient bound on the path", RuntimeWarning, stacklevel=2)
    filled = [GridFunction(grid, fill_excluded(base, s.values)) for s in sols]
    viol = 0.0
    for a, b in zip(sols, sols[1:]):
        viol = max(viol, float(np.max((b.values - a.values)[base.active], initial=0.0)))
    ep = EpsilonPath(list(path[: len(sols)]), filled, stats, tol, viol)
    if not ep.monotone:
        warnings.warn(f"epsilon path not monotone: violation {viol:.3g} > 10 tol", RuntimeWarning, stacklevel=2)
    return filled[-1], ep


# ----------------------------------------------------------- growth checks


def _band(u: GridFunction, band) -> np.ndarray:
    g = u.grid
    d = distance_to_boundary(g).values
    lo, hi = (10 * g.spacing, g.domain.eps0()) if band is None else band
    return g.member & (g.kind != BOUNDARY) & (d >= lo) & (d <= hi)


def barrier_sandwich_check(u: GridFunction, m: float, band=None, expected_exponent: float | None = None,
                           exponent_tol: float = 0.15, predicted_log_coefficient: float | None = None,
                           coefficient_tol: float = 0.2, blowup_threshold: float = 1e-6) -> Report:
    """Fit the growth of ``u`` against the distance ``d`` on a boundary band ``lo <= d <= hi``.

    For ``m < 2`` fits ``u ~ alpha + c d^gamma`` and compares ``gamma`` to
    ``expected_exponent`` (default ``(m-2)/(m-1)``). For ``m = 2`` fits
    ``u ~ alpha + c (1 - log d)`` and compares ``c`` to ``predicted_log_coefficient``.
    Also reports constants with ``c zeta - C <= u <= C zeta`` on the band.
    """
    mask = _band(u, band)
    g = u.grid
    if np.count_nonzero(mask) < 4:
        raise ValueError("boundary band holds fewer than 4 nodes at this resolution")
    d = distance_to_boundary(g).values[mask]
    y = u.values[mask]
    z = zeta(d, m) if m <= 2 else np.ones_like(d)
    info = {"band_nodes": int(mask.sum()), "d_range": [float(d.min()), float(d.max())]}
    spread = float(y.max() - y.min())
    if spread <= blowup_threshold * (1 + np.abs(y).max()):
        return Report("barrier_sandwich", True, measured={"regime": "no blow-up"}, expected=None,
                      tolerance=exponent_tol, inputs_digest=digest(u.values), details=info)
    if m == 2:
        A = np.stack([np.ones_like(d), 1 - np.log(d)], axis=1)
        (alpha, c), *_ = np.linalg.lstsq(A, y, rcond=None)
        gamma = 0.0
        fit = A @ np.array([alpha, c])
    else:
        g0 = (m - 2) / (m - 1) if expected_exponent is None else expected_exponent
        order = np.argsort(d)
        lo_i, hi_i = order[0], order[-1]
        c0 = (y[lo_i] - y[hi_i]) / (d[lo_i] ** g0 - d[hi_i] ** g0)
        p0 = [y[hi_i] - c0 * d[hi_i] ** g0, c0, g0]
        model = lambda dd, a, c, gm: a + c * dd**gm  # noqa: E731
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            (alpha, c, gamma), _ = curve_fit(model, d, y, p0=p0, maxfev=20000)
        fit = model(d, alpha, c, gamma)
    rel_resid = float(np.sqrt(np.mean((fit - y) ** 2)) / (np.std(y) + 1e-300))
    upper = float(np.max(y / z)) if np.all(z > 0) else float("nan")
    lower_shift = float(np.max(c * z - y)) if m <= 2 else float("nan")
    info.update(alpha=float(alpha), coefficient=float(c), fit_residual=rel_resid,
                sandwich={"c": float(c), "C_lower_shift": lower_shift, "C_upper": upper})
    if m == 2:
        ok = predicted_log_coefficient is None or abs(c - predicted_log_coefficient) <= coefficient_tol
        return Report("barrier_sandwich", ok, measured=float(c), expected=predicted_log_coefficient,
                      tolerance=coefficient_tol, inputs_digest=digest(u.values), details=info)
    exp_target = (m - 2) / (m - 1) if expected_exponent is None else expected_exponent
    ok = abs(gamma - exp_target) <= exponent_tol
    return Report("barrier_sandwich", ok, measured=float(gamma), expected=exp_target, tolerance=exponent_tol,
                  inputs_digest=digest(u.values), details=info)


def predicted_log_coefficient(A: float, eps: float, b: float = 1.0) -> float:
    """Coefficient ``c`` of ``-log d`` for ``-A u'' + b|u'|^2 = eps d^{-2}`` near the boundary.

    Substituting ``u = -c log d`` gives ``b c^2 - A c = eps``.
    """
    return (A + np.sqrt(A * A + 4 * b * eps)) / (2 * b)
