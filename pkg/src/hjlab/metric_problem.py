"""Maximal subsolutions of ``-tr(A D^2 u) + H(Du, x) = mu`` vanishing on a unit ball.

The discrete maximal solution is reached by monotone decrease from a large
supersolution, with target nodes pinned to zero and ghost stencils at the outer
boundary. For ``m <= 2`` a vanishing boundary forcing ``eps d^{-m/(m-1)}`` is
applied along a decreasing path ending at ``eps = 0``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import ProblemSpec, structural_constants
from .domain_grid import BOUNDARY, TARGET, Domain, GeometryError, Grid, GridFunction, build_grid
from .report import Report, digest
from .scheme import (
    Discretization,
    SchemeParams,
    _shift,
    estimate_gradient_bound,
    make_discretization,
    make_params,
    one_sided_slopes,
)
from .solvers import SolveStats, UnboundedError, default_tolerance, solve_stationary
from .state_constraints import fill_excluded, singular_forcing

DEFAULT_METRIC_PATH = (1.0, 0.25, 1 / 16, 1 / 64)


class BracketError(ValueError):
    """Bisection bracket does not straddle the feasibility threshold."""


@dataclass
class MetricSolution:
    mu: float
    center: tuple
    values: GridFunction
    hbar_star_estimate: tuple | None = None
    feasible: bool = True
    stats: list = field(default_factory=list)
    params: SchemeParams | None = field(default=None, repr=False)
    tolerance: float = 0.0
    epsilons: list = field(default_factory=list)

    @property
    def grid(self) -> Grid:
        return self.values.grid

    def __call__(self, point) -> float:
        return self.values(point)

    def to_csv(self, path) -> Path:
        return self.values.to_csv(path)


def _target_distance(grid: Grid) -> np.ndarray:
    dom = grid.domain
    r = np.linalg.norm(grid.coords - np.asarray(dom.center), axis=-1) - dom.radius
    return np.maximum(r, 0.0)


def metric_grid(domain: Domain, center, resolution: float) -> Grid:
    return build_grid(Domain.annulus(domain.region, center, 1.0), resolution)


def metric_discretization(problem: ProblemSpec, grid: Grid, mu: float) -> Discretization:
    return make_discretization(problem, grid, boundary="excluded", extra_rhs=mu, delta=0.0)


def solve_metric(problem: ProblemSpec, mu: float, center, grid: Grid | None = None, params: SchemeParams | None = None,
                 tol: float | None = None, *, resolution: float | None = None, path=DEFAULT_METRIC_PATH,
                 P=None, rule: str = "hypothesis", max_iter: int = 1_000_000, init: GridFunction | None = None,
                 floor: float | None = None, raise_unbounded: bool = False) -> MetricSolution:
    """Discrete maximal subsolution vanishing on ``B_1(center)`` inside ``problem.domain``.

    The operator (slope bound and dissipation) is fixed from the largest forcing
    on the path and reused for every later ``eps`` and the final unforced solve.
    When the iterates fall below ``floor`` (default ``-(2 P diam + 1)``, below any
    bounded solution with slopes under the unforced bound ``P``) the level is
    reported infeasible (``feasible=False``), or ``UnboundedError`` is raised with
    ``raise_unbounded``.
    """
    center = tuple(float(c) for c in np.atleast_1d(center))
    if grid is None:
        if problem.domain is None or resolution is None:
            raise ValueError("need a grid, or a problem domain and a resolution")
        grid = metric_grid(problem.domain, center, resolution)
    elif grid.domain.kind != "annulus" or tuple(grid.domain.center) != center:
        grid = grid.with_target(center, 1.0)
    m = problem.m
    base = metric_discretization(problem, grid, mu)
    eps_list = [float(e) for e in path] if m <= 2 else []
    eps_list = eps_list + [0.0]
    phi = singular_forcing(grid, m) if m <= 2 else np.zeros(grid.shape)

    tol = default_tolerance(base) if tol is None else tol
    dist = _target_distance(grid)
    if floor is None:
        # a bounded solution vanishing on the target with slopes <= P stays above -P diam
        P_unforced = float(np.max(estimate_gradient_bound(base)[base.active]))
        floor = -(2.0 * P_unforced * grid.domain.diameter() + 1.0)
    stats: list = []
    u0 = None if init is None else init.values
    try:
        if len(eps_list) > 1:
            first = base.with_rhs(rhs_singular=np.where(base.active, eps_list[0] * phi, 0.0))
            p_path = make_params(first, rule=rule)
            u0, st_path, _ = _descend(problem, base, p_path, [e * phi for e in eps_list[:-1]], dist, tol,
                                      max_iter, floor, rule, u0)
            stats += st_path
        auto = params is None
        if auto:
            Pf = estimate_gradient_bound(base) if P is None else np.broadcast_to(np.asarray(P, dtype=float), grid.shape)
            params = make_params(base, P=Pf, rule=rule)
        # the unforced operator differs from the path one, so restart from a barrier
        cur, st_final, params = _descend(problem, base, params, [np.zeros(grid.shape)], dist, tol, max_iter,
                                         floor, rule if auto else None, None)
        stats += st_final
    except UnboundedError:
        if raise_unbounded:
            raise
        return MetricSolution(mu, center, GridFunction(grid, np.zeros(grid.shape)), feasible=False,
                              stats=stats, params=params, tolerance=tol, epsilons=eps_list)
    vals = fill_excluded(base, cur)
    vals[grid.kind == TARGET] = 0.0
    return MetricSolution(mu, center, GridFunction(grid, vals), feasible=True, stats=stats, params=params,
                          tolerance=tol, epsilons=eps_list)


def _descend(problem, base, params, singulars, dist, tol, max_iter, floor, rule, init, attempts: int = 12):
    """Projected descent through the forcings in ``singulars`` (warm-started in turn).

    Starts from ``init`` or the barrier ``K dist + 1``. A stalled descent means the
    start was not a supersolution: ``K`` is doubled and the run repeated. With a
    ``rule`` the slope bound is doubled where the result violates it.
    """
    grid = base.grid
    K = float(np.max(np.broadcast_to(params.gradient_bound, grid.shape)[base.active]))
    for _ in range(attempts):
        w = K * dist + 1.0 if init is None else init
        cur = np.where(base.pinned, 0.0, np.where(base.present, w, 0.0))
        stats = []
        ok = True
        for sing in singulars:
            disc = base.with_rhs(rhs_singular=np.where(base.active, sing, 0.0))
            gf, st = solve_stationary(problem, params, GridFunction(grid, cur), tol=tol, disc=disc, projected=True,
                                      max_iter=max_iter, adapt=False, floor=floor)
            cur = gf.values
            stats.append(st)
            if st.status == "stalled":
                ok = False
                break
            if not st.converged:
                return cur, stats, params
        init = None
        if not ok:
            K *= 2
            continue
        if rule is not None:
            slopes = one_sided_slopes(base, cur)
            Pn = np.broadcast_to(np.asarray(params.gradient_bound, dtype=float), grid.shape)
            over = base.active & (slopes > Pn * (1 + 1e-9))
            if over.any():
                params = make_params(base, P=np.where(over, 2 * Pn, Pn), rule=rule)
                K *= 2
                continue
        return cur, stats, params
    raise RuntimeError("metric descent did not settle after repeated restarts")


# ----------------------------------------------------------------- m tilde


def m_tilde(sol: MetricSolution, y) -> float:
    """``sup`` of the solution over nodes in the closed unit ball about ``y``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    g = sol.grid
    outer = g.domain.region
    if float(outer.distance(y[None, :])[0]) < 1.0 - 1e-9:
        raise GeometryError(f"unit ball about {tuple(y)} leaves the domain")
    ball = g.member & (np.linalg.norm(g.coords - y, axis=-1) <= 1.0 + 1e-9)
    if not ball.any():
        raise GeometryError("no nodes in the unit ball")
    return float(np.max(sol.values.values[ball]))


def interior_lipschitz(sol: MetricSolution) -> float:
    """Largest axis difference quotient between non-boundary nodes."""
    g = sol.grid
    best = 0.0
    interior = g.member & (g.kind != BOUNDARY)
    for k in range(g.dim):
        a = np.abs(_shift(sol.values.values, k, 1) - sol.values.values) / g.spacing
        ok = interior & _shift(interior, k, 1)
        edge = [slice(None)] * g.dim
        edge[k] = slice(-1, None)
        ok[tuple(edge)] = False
        if ok.any():
            best = max(best, float(np.max(a[ok])))
    return best


def check_subadditivity(problem: ProblemSpec, mu: float, triples, resolution: float, **solve_kw) -> Report:
    """``m~(y,z) <= m~(y,x) + m~(x,z) + 10 h L`` for each triple ``(y, x, z)``."""
    cache: dict = {}

    def sol(c):
        key = tuple(np.round(np.atleast_1d(np.asarray(c, dtype=float)), 12))
        if key not in cache:
            cache[key] = solve_metric(problem, mu, key, resolution=resolution, **solve_kw)
        return cache[key]

    rows = []
    worst = np.inf
    ok = True
    for y, x, z in triples:
        s_z, s_x = sol(z), sol(x)
        L = max(interior_lipschitz(s_z), interior_lipschitz(s_x))
        h = s_z.grid.spacing
        lhs = m_tilde(s_z, y)
        rhs = m_tilde(s_x, y) + m_tilde(s_z, x)
        slack = rhs + 10 * h * L - lhs
        rows.append({"y": list(np.atleast_1d(y)), "x": list(np.atleast_1d(x)), "z": list(np.atleast_1d(z)),
                     "m_yz": lhs, "m_yx": m_tilde(s_x, y), "m_xz": m_tilde(s_z, x), "L": L, "slack": slack})
        worst = min(worst, slack)
        ok &= slack >= 0
    return Report("subadditivity", bool(ok), measured=float(worst), expected=">= 0", tolerance="10 h L",
                  inputs_digest=digest({"problem": problem, "mu": mu, "triples": triples, "res": resolution}),
                  details={"triples": rows})


def check_mu_monotonicity(problem: ProblemSpec, mus, center, resolution: float, **solve_kw) -> Report:
    """``mu1 <= mu2`` implies ``m_mu1 <= m_mu2 + tol`` nodewise."""
    mus = sorted(float(v) for v in mus)
    sols = [solve_metric(problem, mu, center, resolution=resolution, **solve_kw) for mu in mus]
    worst = -np.inf
    for a, b in zip(sols, sols[1:]):
        worst = max(worst, float(np.max(a.values.values - b.values.values)))
    tol = max(s.tolerance for s in sols)
    return Report("mu_monotonicity", worst <= tol, measured=worst, expected="<= 0", tolerance=tol,
                  inputs_digest=digest({"problem": problem, "mus": mus, "center": center, "res": resolution}),
                  details={"mus": mus})


def check_concavity_in_mu(problem: ProblemSpec, mu1: float, mu2: float, center, resolution: float,
                          sample=None, **solve_kw) -> Report:
    """``m_{(mu1+mu2)/2} >= (m_mu1 + m_mu2)/2 - tol`` at the sample points (all nodes by default)."""
    if mu1 > mu2:
        mu1, mu2 = mu2, mu1
    s1 = solve_metric(problem, mu1, center, resolution=resolution, **solve_kw)
    s2 = solve_metric(problem, mu2, center, resolution=resolution, **solve_kw)
    sm = solve_metric(problem, 0.5 * (mu1 + mu2), center, resolution=resolution, **solve_kw)
    gap = sm.values.values - 0.5 * (s1.values.values + s2.values.values)
    g = s1.grid
    if sample is None:
        mask = g.member
    else:
        mask = np.zeros(g.shape, dtype=bool)
        for p in sample:
            mask[g.nearest_index(p)] = True
    tol = max(s1.tolerance, s2.tolerance, sm.tolerance)
    worst = float(np.min(gap[mask]))
    details = {}
    if sample is not None:
        details["points"] = [{"x": list(np.atleast_1d(p)), "mid": sm(p), "mean": 0.5 * (s1(p) + s2(p))} for p in sample]
    return Report("concavity_in_mu", worst >= -tol, measured=worst, expected=">= 0", tolerance=tol,
                  inputs_digest=digest({"problem": problem, "mu": [mu1, mu2], "center": center, "res": resolution}),
                  details=details)


def _embed(inner: Grid, outer: Grid) -> tuple[np.ndarray, ...]:
    """Lattice indices in ``outer`` of every node of ``inner``."""
    idx = []
    for a_in, a_out in zip(inner.axes, outer.axes):
        k = np.rint((a_in - a_out[0]) / outer.spacing).astype(int)
        if np.any(k < 0) or np.any(k >= len(a_out)) or np.max(np.abs(a_out[np.clip(k, 0, len(a_out) - 1)] - a_in)) > 1e-9:
            raise GeometryError("the smaller domain's lattice is not a sublattice of the larger one")
        idx.append(k)
    return np.ix_(*idx)


def check_domain_monotonicity(problem: ProblemSpec, U: Domain, V: Domain, mu: float, center,
                              resolution: float, **solve_kw) -> Report:
    """``V`` inside ``U`` implies ``m^U <= m^V + tol`` on the unknown and target nodes of ``V``.

    Both solves use the same slope bound (hence the same dissipation) on shared
    nodes, so that the two discrete operators agree there.
    """
    gU = metric_grid(U, center, resolution)
    gV = metric_grid(V, center, resolution)
    ix = _embed(gV, gU)
    if np.any(gV.member & ~gU.member[ix]):
        raise GeometryError("V is not contained in U")
    pU = ProblemSpec(problem.hamiltonian, problem.diffusion, problem.f, 0.0, U)
    pV = ProblemSpec(problem.hamiltonian, problem.diffusion, problem.f, 0.0, V)
    path = solve_kw.get("path", DEFAULT_METRIC_PATH)
    eps0 = float(path[0]) if problem.m <= 2 and len(path) else 0.0

    def first_P(p, g):
        base = metric_discretization(p, g, mu)
        phi = singular_forcing(g, p.m) if p.m <= 2 else np.zeros(g.shape)
        return estimate_gradient_bound(base.with_rhs(rhs_singular=np.where(base.active, eps0 * phi, 0.0)))

    PU = first_P(pU, gU)
    PV = first_P(pV, gV)
    common = np.maximum(PU[ix], PV)
    PU = PU.copy()
    PU[ix] = np.where(gV.member, common, PU[ix])
    PV = np.where(gV.member, common, PV)
    sU = solve_metric(pU, mu, center, gU, P=PU, **solve_kw)
    sV = solve_metric(pV, mu, center, gV, P=PV, **solve_kw)
    shared = metric_discretization(pV, gV, mu).present
    diff = sU.values.values[ix] - sV.values.values
    tol = max(sU.tolerance, sV.tolerance)
    worst = float(np.max(diff[shared]))
    PUa = np.broadcast_to(sU.params.gradient_bound, gU.shape)[ix]
    PVa = np.broadcast_to(sV.params.gradient_bound, gV.shape)
    same_op = bool(np.allclose(PUa[shared], PVa[shared]))
    return Report("domain_monotonicity", worst <= tol, measured=worst, expected="<= 0", tolerance=tol,
                  inputs_digest=digest({"problem": problem, "U": U, "V": V, "mu": mu, "center": center,
                                        "res": resolution}),
                  details={"shared_operator": same_op, "nodes": int(shared.sum())})


def estimate_hbar_star(problem: ProblemSpec, center, bracket, width: float = 0.05, resolution: float = 20,
                       max_iter: int = 200_000, **solve_kw) -> tuple[float, float]:
    """Bisection for the critical level: feasible iff the metric solve stays bounded.

    ``bracket = (lo, hi)`` must have ``lo`` infeasible and ``hi`` feasible.
    """
    lo, hi = map(float, bracket)
    if not lo < hi:
        raise BracketError("bracket must satisfy lo < hi")

    def feasible(mu):
        s = solve_metric(problem, mu, center, resolution=resolution, max_iter=max_iter, **solve_kw)
        return s.feasible and all(st.converged for st in s.stats)

    f_lo, f_hi = feasible(lo), feasible(hi)
    if f_lo or not f_hi:
        raise BracketError(f"bracket ({lo}, {hi}) does not straddle the threshold "
                           f"(feasible at lo: {f_lo}, at hi: {f_hi})")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


def check_oscillation_bound(problem: ProblemSpec, sol: MetricSolution, probes, ratio_limit: float = 5.0) -> Report:
    """Fit ``C`` in ``osc_{B_1(x)} m <= C [((1+L1)^{1/2} L2 / a5)^{2/(m-1)} + ((M5 + mu)/a5)^{1/m}]``.

    Passes when the fitted constants agree across probes within ``ratio_limit``.
    """
    g = sol.grid
    m = problem.m
    rows = []
    for x in probes:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ball = g.member & (np.linalg.norm(g.coords - x, axis=-1) <= 1.0 + 1e-9)
        if not ball.any():
            raise GeometryError(f"probe ball about {tuple(x)} holds no nodes")
        v = sol.values.values[ball]
        osc = float(v.max() - v.min())
        sc = structural_constants(problem, 5.0, center=x)
        a5, M5, l1, l2 = sc.as_tuple()
        bound = ((1 + l1) ** 0.5 * l2 / a5) ** (2 / (m - 1)) + (max(M5 + sol.mu, 0.0) / a5) ** (1 / m)
        rows.append({"x": x.tolist(), "osc": osc, "bracket": bound, "C": osc / bound if bound > 0 else float("inf")})
    Cs = np.array([r["C"] for r in rows])
    pos = Cs[Cs > 0]
    ratio = float(pos.max() / pos.min()) if len(pos) else 1.0
    return Report("oscillation_bound", ratio <= ratio_limit, measured=ratio, expected=f"<= {ratio_limit}",
                  tolerance=None, inputs_digest=digest(sol.values.values),
                  details={"probes": rows, "C_max": float(Cs.max())})
