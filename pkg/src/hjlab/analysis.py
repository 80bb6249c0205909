"""Regularity measurements, comparison and convexity checks, and scaling studies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .coefficients import ProblemSpec, structural_constants
from .domain_grid import Domain, GridFunction
from .report import Report, digest
from .scheme import Discretization, SchemeParams, make_discretization, residual, residual_scale
from .solvers import Trajectory

FP_FACTOR = 1e3


class SamplingError(ValueError):
    """Not enough pairs (or distance range) to measure a regularity exponent."""


class InputError(ValueError):
    """A check's preconditions do not hold for the supplied functions."""


@dataclass
class RegularityFit:
    pairs: int
    exponent: float
    constant: float
    residual: float
    subdomain: dict
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"pairs": self.pairs, "exponent": self.exponent, "constant": self.constant,
                "residual": self.residual, "subdomain": self.subdomain, **self.details}


def _subdomain_mask(u: GridFunction, subdomain) -> tuple[np.ndarray, dict]:
    g = u.grid
    if subdomain is None:
        return g.member.copy(), {"kind": "all"}
    if isinstance(subdomain, Domain):
        return g.member & subdomain.contains(g.coords), subdomain.describe()
    mask = np.asarray(subdomain, dtype=bool)
    if mask.shape != g.shape:
        raise ValueError("subdomain mask shape does not match the grid")
    return g.member & mask, {"kind": "mask", "nodes": int(mask.sum())}


def _axis_increments(values: np.ndarray, mask: np.ndarray, k: int, axis: int) -> np.ndarray:
    n = values.shape[axis]
    if k >= n:
        return np.empty(0)
    a = [slice(None)] * values.ndim
    b = [slice(None)] * values.ndim
    a[axis], b[axis] = slice(k, n), slice(0, n - k)
    ok = mask[tuple(a)] & mask[tuple(b)]
    return np.abs(values[tuple(a)] - values[tuple(b)])[ok]


def _random_pairs(u: GridFunction, mask: np.ndarray, n: int, seed: int, rmin: float, rmax: float):
    """Pairs with log-uniform target distances in ``[rmin, rmax]``."""
    rng = np.random.default_rng(seed)
    pts = u.grid.coords[mask]
    vals = u.values[mask]
    if len(pts) < 2 or not rmax > rmin:
        return np.empty(0), np.empty(0)
    i = rng.integers(0, len(pts), size=4 * n)
    r = np.exp(rng.uniform(np.log(rmin), np.log(rmax), size=4 * n))
    direction = rng.normal(size=(4 * n, pts.shape[1]))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    target = pts[i] + r[:, None] * direction
    tree = cKDTree(pts)
    _, j = tree.query(target)
    dist = np.linalg.norm(pts[i] - pts[j], axis=1)
    keep = (dist >= rmin) & (i != j)
    i, j, dist = i[keep][:n], j[keep][:n], dist[keep][:n]
    return dist, np.abs(vals[i] - vals[j])


def measure_lipschitz(u: GridFunction, subdomain=None, n_random: int = 1000, seed: int = 0) -> RegularityFit:
    """Largest difference quotient over axis neighbours and random pairs in ``subdomain``."""
    mask, desc = _subdomain_mask(u, subdomain)
    g = u.grid
    h = g.spacing
    axis_max = []
    count = 0
    for ax in range(g.dim):
        inc = _axis_increments(u.values, mask, 1, ax)
        count += inc.size
        axis_max.append(float(inc.max() / h) if inc.size else 0.0)
    span = float(np.max(np.ptp(g.coords[mask], axis=0))) if mask.any() else 0.0
    dist, diff = _random_pairs(u, mask, n_random, seed, h, max(span, h))
    rand_max = float(np.max(diff / dist)) if dist.size else 0.0
    count += dist.size
    if count == 0:
        raise SamplingError("no node pairs inside the subdomain")
    K = max(max(axis_max), rand_max)
    return RegularityFit(count, 1.0, K, 0.0, desc, {"axis_max": axis_max, "random_max": rand_max})


def modulus_of_continuity(u: GridFunction, mask: np.ndarray, min_sep: int = 3, n_scales: int = 12,
                          n_random: int = 1000, seed: int = 0) -> tuple[np.ndarray, np.ndarray, int]:
    """``omega(r) = max |u(x) - u(y)|`` over pairs at distance ``r`` (axis offsets plus random pairs)."""
    g = u.grid
    h = g.spacing
    kmax = max(min_sep, max(int(np.sum(np.any(mask, axis=tuple(a for a in range(g.dim) if a != ax))))
                            for ax in range(g.dim)) // 2)
    ks = np.unique(np.round(np.geomspace(min_sep, kmax, n_scales)).astype(int))
    r = ks * h
    omega = np.zeros(len(ks))
    count = 0
    for n, k in enumerate(ks):
        for ax in range(g.dim):
            inc = _axis_increments(u.values, mask, int(k), ax)
            count += inc.size
            if inc.size:
                omega[n] = max(omega[n], float(inc.max()))
    dist, diff = _random_pairs(u, mask, n_random, seed, min_sep * h, float(r[-1]))
    count += dist.size
    if dist.size:
        edges = np.sqrt(r[1:] * r[:-1])
        bins = np.searchsorted(edges, dist)
        for b, dv in zip(bins, diff):
            omega[b] = max(omega[b], dv)
    return r, omega, count


def measure_holder(u: GridFunction, subdomain=None, m: float | None = None, min_sep: int = 3,
                   seed: int = 0) -> RegularityFit:
    """Log-log slope of the modulus of continuity over separations ``>= min_sep`` spacings.

    The separations must span at least a decade. ``m`` (``> 2``) only sets the
    reference exponent ``(m-2)/(m-1)`` stored in ``details``.
    """
    if m is not None and not m > 2:
        raise ValueError("Hoelder fits are meant for m > 2")
    mask, desc = _subdomain_mask(u, subdomain)
    r, omega, count = modulus_of_continuity(u, mask, min_sep, seed=seed)
    if len(r) < 3 or r[-1] / r[0] < 10 - 1e-9:
        raise SamplingError(f"separations {r[0]:.3g}..{r[-1]:.3g} span less than a decade")
    expected = None if m is None else (m - 2) / (m - 1)
    if np.all(omega <= 1e-12 * (1 + np.abs(u.values[mask]).max())):
        return RegularityFit(count, float("nan"), 0.0, 0.0, desc,
                             {"status": "not applicable (constant)", "expected": expected})
    ok = omega > 0
    A = np.stack([np.log(r[ok]), np.ones(ok.sum())], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, np.log(omega[ok]), rcond=None)
    fit_res = float(np.sqrt(np.mean((A @ coef - np.log(omega[ok])) ** 2)))
    return RegularityFit(count, float(coef[0]), float(np.exp(coef[1])), fit_res, desc,
                         {"expected": expected, "r": r.tolist(), "omega": omega.tolist()})


# ------------------------------------------------------------ scaling laws


def k_bracket_terms(problem: ProblemSpec, R: float = 2.0, u_sup: float = 0.0) -> dict:
    """The two terms of the Lipschitz bound: diffusion and source branches."""
    sc = structural_constants(problem, R)
    a, M, l1, l2 = sc.as_tuple()
    m = problem.m
    diff = ((1 + l1) ** 0.5 * l2 / a) ** (2 / (m - 1))
    src = ((M + problem.delta * u_sup) / a) ** (1 / m)
    return {"diffusion": float(diff), "source": float(src), "constants": [a, M, l1, l2]}


def fit_slope(x, y) -> tuple[float, float]:
    """Least-squares slope and intercept of ``log y`` against ``log x``."""
    A = np.stack([np.log(np.asarray(x, dtype=float)), np.ones(len(x))], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(np.asarray(y, dtype=float)), rcond=None)
    return float(coef[0]), float(coef[1])


def lipschitz_scaling_study(make_problem: Callable[[float], ProblemSpec], scalings, solve: Callable,
                            subdomain=None, expected_slope: float | None = None, slope_tol: float = 0.25,
                            branch: str | None = None, dominance: float = 3.0, R: float = 2.0) -> Report:
    """Measure ``K`` for each scaled problem and fit the log-log slope against the scaling.

    ``solve(problem) -> GridFunction``. The dominating branch of the bound is read
    off at the largest scaling; if neither branch leads by ``dominance`` the
    study is flagged inconclusive in ``details``.
    """
    scalings = [float(s) for s in scalings]
    Ks, rows = [], []
    for s in scalings:
        pb = make_problem(s)
        u = solve(pb)
        K = measure_lipschitz(u, subdomain).constant
        terms = k_bracket_terms(pb, R, u.sup())
        Ks.append(K)
        rows.append({"scaling": s, "K": K, **terms})
    slope, icpt = fit_slope(scalings, Ks)
    top = rows[int(np.argmax(scalings))]
    if top["diffusion"] >= dominance * top["source"]:
        dom = "diffusion"
    elif top["source"] >= dominance * top["diffusion"]:
        dom = "source"
    else:
        dom = "inconclusive"
    if expected_slope is None:
        m = make_problem(scalings[0]).m
        expected_slope = 2 / (m - 1) if (branch or dom) == "diffusion" else 1 / m
    ok = abs(slope - expected_slope) <= slope_tol
    return Report("lipschitz_scaling", ok, measured=slope, expected=expected_slope, tolerance=slope_tol,
                  inputs_digest=digest({"scalings": scalings, "problem": make_problem(scalings[0])}),
                  details={"rows": rows, "intercept": icpt, "dominant_branch": dom, "requested_branch": branch})


# ------------------------------------------------------- comparison checks


def _disc_for(problem: ProblemSpec, u: GridFunction, boundary: str, disc: Discretization | None):
    return disc if disc is not None else make_discretization(problem, u.grid, boundary=boundary)


def comparison_check(u: GridFunction, v: GridFunction, problem: ProblemSpec, params: SchemeParams,
                     tol: float = 1e-8, boundary: str = "pinned", disc: Discretization | None = None,
                     C: float = 10.0) -> Report:
    """Discrete comparison: a subsolution ``u`` lies below a supersolution ``v`` up to ``C tol / delta``."""
    if not problem.delta > 0:
        raise InputError("comparison needs delta > 0")
    disc = _disc_for(problem, u, boundary, disc)
    ru, rv = residual(disc, params, u.values), residual(disc, params, v.values)
    act = disc.active
    bad = act & (ru > tol)
    if bad.any():
        raise InputError(f"u is not a subsolution at node {tuple(int(i) for i in np.argwhere(bad)[0])}")
    bad = act & (rv < -tol)
    if bad.any():
        raise InputError(f"v is not a supersolution at node {tuple(int(i) for i in np.argwhere(bad)[0])}")
    bad = disc.pinned & (u.values > v.values + tol)
    if bad.any():
        raise InputError(f"boundary data not ordered at node {tuple(int(i) for i in np.argwhere(bad)[0])}")
    slack = C * tol / disc.delta
    gap = float(np.max((u.values - v.values)[disc.present]))
    return Report("comparison", gap <= slack, measured=gap, expected="<= 0", tolerance=slack,
                  inputs_digest=digest([digest(u.values), digest(v.values), digest(problem)]))


def _fp_tol(disc, params, arrays, flux) -> np.ndarray:
    scale = np.zeros(disc.grid.shape)
    for a in arrays:
        scale = np.maximum(scale, residual_scale(disc, params, a, flux))
    return FP_FACTOR * np.finfo(float).eps * (scale + 1.0)


def convex_combination_check(u: GridFunction, v: GridFunction, lam: float, problem: ProblemSpec,
                             params: SchemeParams, levels: tuple | None = None, boundary: str = "active",
                             disc: Discretization | None = None, flux: str = "lf") -> Report:
    """``residual(lam u + (1-lam) v) <= lam residual(u) + (1-lam) residual(v)`` nodewise.

    With ``levels=(mu_u, nu_v)`` the scalar form is checked instead: both inputs
    must be subsolutions of those levels and the combination one of the mixed level.
    The tolerance is ``1e3`` machine epsilons times the size of the residual's pieces.
    """
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    disc = _disc_for(problem, u, boundary, disc)
    w = lam * u.values + (1 - lam) * v.values
    ru = residual(disc, params, u.values, flux)
    rv = residual(disc, params, v.values, flux)
    rw = residual(disc, params, w, flux)
    tol = _fp_tol(disc, params, [u.values, v.values, w], flux)
    if levels is None:
        bound = lam * ru + (1 - lam) * rv
    else:
        mu_u, nu_v = levels
        if np.any(ru[disc.active] > mu_u + tol[disc.active]) or np.any(rv[disc.active] > nu_v + tol[disc.active]):
            raise InputError("inputs are not subsolutions of the stated levels")
        bound = np.full(rw.shape, lam * mu_u + (1 - lam) * nu_v)
    excess = np.where(disc.active, rw - bound - tol, -np.inf)
    worst = float(np.max(excess))
    return Report("convex_combination", worst <= 0, measured=float(np.max(np.where(disc.active, rw - bound, -np.inf))),
                  expected="<= 0", tolerance=float(np.max(tol)),
                  inputs_digest=digest([digest(u.values), digest(v.values), lam, flux]),
                  details={"lambda": lam, "flux": flux})


def extrapolation_check(u: GridFunction, v: GridFunction, lam: float, problem: ProblemSpec, params: SchemeParams,
                        levels: tuple | None = None, boundary: str = "active", disc: Discretization | None = None,
                        flux: str = "lf") -> Report:
    """``residual((1+lam) v - lam u) >= (1+lam) residual(v) - lam residual(u)`` nodewise."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    disc = _disc_for(problem, u, boundary, disc)
    w = (1 + lam) * v.values - lam * u.values
    ru = residual(disc, params, u.values, flux)
    rv = residual(disc, params, v.values, flux)
    rw = residual(disc, params, w, flux)
    tol = _fp_tol(disc, params, [u.values, v.values, w], flux) * (1 + lam)
    if levels is None:
        bound = (1 + lam) * rv - lam * ru
    else:
        mu_u, nu_v = levels
        act = disc.active
        if np.any(ru[act] > mu_u + tol[act]) or np.any(rv[act] < nu_v - tol[act]):
            raise InputError("u must be a subsolution of mu and v a supersolution of nu")
        bound = np.full(rw.shape, (1 + lam) * nu_v - lam * mu_u)
    deficit = np.where(disc.active, bound - rw, -np.inf)
    worst = float(np.max(deficit - np.where(disc.active, tol, 0.0)))
    return Report("extrapolation", worst <= 0, measured=float(np.max(deficit)), expected="<= 0",
                  tolerance=float(np.max(tol)), inputs_digest=digest([digest(u.values), digest(v.values), lam, flux]),
                  details={"lambda": lam, "flux": flux})


def time_comparison_check(traj_u: Trajectory, traj_v: Trajectory, tol: float = 0.0) -> Report:
    """``u <= v + tol`` at every common snapshot."""
    if len(traj_u.snapshots) != len(traj_v.snapshots) or not np.allclose(traj_u.times, traj_v.times):
        raise InputError("trajectories have different snapshot times")
    worst = -np.inf
    where = None
    for (t, a), (_, b) in zip(traj_u.snapshots, traj_v.snapshots):
        gap = a.values - b.values
        mask = a.grid.member
        g = float(np.max(gap[mask]))
        if g > worst:
            worst, where = g, t
    return Report("time_comparison", worst <= tol, measured=worst, expected="<= 0", tolerance=tol,
                  inputs_digest=digest([digest(s.values) for _, s in traj_u.snapshots + traj_v.snapshots]),
                  details={"worst_time": where})


def time_lipschitz_check(traj: Trajectory, T0: float, subdomain=None, tol: float = 1e-8) -> RegularityFit:
    """Verify ``u_t >= -T0`` on the snapshots and record spatial Lipschitz constants per snapshot."""
    violation = None
    for (t0, a), (t1, b) in zip(traj.snapshots, traj.snapshots[1:]):
        ut = (b.values - a.values) / (t1 - t0)
        mask = a.grid.member
        bad = mask & (ut < -T0 - tol)
        if bad.any():
            i = tuple(int(k) for k in np.argwhere(bad)[0])
            violation = {"node": i, "time": t1, "u_t": float(ut[i])}
            break
    Ks = [measure_lipschitz(s, subdomain).constant for _, s in traj.snapshots]
    desc = _subdomain_mask(traj.snapshots[0][1], subdomain)[1]
    return RegularityFit(len(Ks), 1.0, float(max(Ks)), 0.0, desc,
                         {"precondition_ok": violation is None, "violation": violation, "K_per_snapshot": Ks,
                          "times": traj.times.tolist(), "T0": T0})
