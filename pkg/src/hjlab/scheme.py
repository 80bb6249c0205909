"""Monotone finite-difference operator for ``delta u - tr(A D^2 u) + H(Du, x) - f``.

Lax-Friedrichs numerical Hamiltonian plus centred second differences (a sign-split
7-point stencil for the cross derivative in 2-D). Lax-Friedrichs is used instead of
Godunov because it only needs a dissipation bound and is jointly convex in the pair
of one-sided differences, so the discrete convex-combination identities hold exactly.

The power term is continued linearly beyond the per-node slope bound ``P`` so
that the explicit iteration stays monotone from any starting guess.

Nodes whose neighbour is missing (state-constraint edges) see a ghost value
``u_i + h P_i``: the outward slope is pinned at the certified gradient bound. This is
the finite stand-in for the blow-up of state-constrained solutions and keeps the
operator monotone and convex.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .coefficients import ProblemSpec
from .domain_grid import BOUNDARY, INTERIOR, TARGET, Grid, GridFunction


class MonotonicityError(RuntimeError):
    """The scheme parameters are not certified monotone."""


@dataclass(frozen=True)
class SchemeParams:
    """Dissipation ``theta``, pseudo-time step ``dt`` and gradient bound ``P``.

    Each may be a scalar or a lattice-shaped array (per-node values).
    """

    theta: float | np.ndarray
    dt: float | np.ndarray
    gradient_bound: float | np.ndarray
    cfl_certified: bool = False
    theta_rule: str = "hypothesis"

    def describe(self) -> dict:
        def summary(v):
            v = np.asarray(v, dtype=float)
            return float(v) if v.ndim == 0 else {"min": float(v.min()), "max": float(v.max())}

        return {
            "theta": summary(self.theta),
            "dt": summary(self.dt),
            "gradient_bound": summary(self.gradient_bound),
            "cfl_certified": self.cfl_certified,
            "theta_rule": self.theta_rule,
        }


def lf_hamiltonian(spec, p_minus, p_plus, x, theta: float) -> float:
    """``H((p- + p+)/2, x) - theta/2 * sum_i (p+_i - p-_i)``."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    pm = np.atleast_1d(np.asarray(p_minus, dtype=float))
    pp = np.atleast_1d(np.asarray(p_plus, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(spec(((pm + pp) / 2)[None, :], x[None, :])[0] - 0.5 * theta * np.sum(pp - pm))


def _shift(a: np.ndarray, axis: int, step: int) -> np.ndarray:
    """``out[i] = a[i + step]`` along ``axis``; wrapped entries are garbage and must be masked."""
    return np.roll(a, -step, axis=axis)


@dataclass(eq=False)
class Discretization:
    """Problem data frozen onto a grid together with the unknown / known node sets.

    ``active`` nodes carry the equation; ``present`` nodes (a superset) supply
    neighbour values, the rest are off the computational domain.
    """

    problem: ProblemSpec
    grid: Grid
    active: np.ndarray
    present: np.ndarray
    rhs_regular: np.ndarray
    rhs_singular: np.ndarray
    delta: float
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        g = self.grid
        x = g.coords
        H = self.problem.hamiltonian
        self.m = H.m
        self.h = g.spacing
        self.b = np.where(g.member, H.b(x), 1.0)
        self.drift = None if H.drift is None else H.drift(x)
        A = self.problem.diffusion.A(x)
        self.a00 = A[..., 0, 0]
        if g.dim == 2:
            self.a11 = A[..., 1, 1]
            self.a01 = A[..., 0, 1]
        self.lam = np.where(g.member, H.dp_constant(x), 1.0)
        self.avail = {}
        for k in range(g.dim):
            for s in (-1, 1):
                ok = _shift(self.present, k, s)
                edge = [slice(None)] * g.dim
                edge[k] = slice(-1, None) if s == 1 else slice(0, 1)
                ok = ok.copy()
                ok[tuple(edge)] = False
                self.avail[(k, s)] = ok
        if g.dim == 2:
            for s0 in (-1, 1):
                for s1 in (-1, 1):
                    ok = np.roll(self.present, (-s0, -s1), axis=(0, 1)).copy()
                    ok[-1 if s0 == 1 else 0, :] = False
                    ok[:, -1 if s1 == 1 else 0] = False
                    self.avail[("d", s0, s1)] = ok

    @property
    def rhs(self) -> np.ndarray:
        return self.rhs_regular + self.rhs_singular

    @property
    def pinned(self) -> np.ndarray:
        return self.present & ~self.active

    def with_rhs(self, rhs_regular=None, rhs_singular=None, delta=None) -> Discretization:
        return Discretization(
            self.problem, self.grid, self.active, self.present,
            self.rhs_regular if rhs_regular is None else rhs_regular,
            self.rhs_singular if rhs_singular is None else rhs_singular,
            self.delta if delta is None else delta,
        )

    def hamiltonian(self, pbar: np.ndarray, P=None) -> np.ndarray:
        """``b|p|^m + v.p``, continued linearly in |p| beyond ``P`` when given.

        The continuation is convex and C^1, keeps |H_p| bounded by the value at
        ``P`` for any iterate, and is inactive once slopes respect the bound.
        """
        m = self.m
        r = np.sqrt(np.sum(pbar * pbar, axis=-1))
        if P is None:
            g = r * r if m == 2 else r**m
        else:
            rc = np.minimum(r, P)
            g = rc**m + m * rc ** (m - 1) * (r - rc)
        out = self.b * g
        if self.drift is not None:
            out = out + np.sum(self.drift * pbar, axis=-1)
        return out

    def diag_coefficient(self, theta) -> np.ndarray:
        """Derivative of the residual in the node's own value (an upper bound at edges)."""
        d = self.grid.dim
        h = self.h
        if d == 1:
            c = self.a00 * 2 / h**2
        else:
            c = 2 * (self.a00 + self.a11 - np.abs(self.a01)) / h**2
        return self.delta + d * np.asarray(theta) / h + c


def make_discretization(problem: ProblemSpec, grid: Grid, boundary: str = "active", extra_rhs=0.0,
                        singular_rhs=None, delta: float | None = None) -> Discretization:
    """Pick unknowns on ``grid``.

    boundary: ``"active"`` (boundary nodes carry the equation with ghost stencils),
    ``"pinned"`` (Dirichlet: boundary values are held) or ``"excluded"`` (boundary
    nodes are dropped; their interior neighbours use ghost stencils).
    Target nodes are always pinned.
    """
    kind = grid.kind
    if boundary == "active":
        active = (kind == INTERIOR) | (kind == BOUNDARY)
        present = grid.member.copy()
    elif boundary == "pinned":
        active = kind == INTERIOR
        present = grid.member.copy()
    elif boundary == "excluded":
        active = kind == INTERIOR
        present = (kind == INTERIOR) | (kind == TARGET)
    else:
        raise ValueError(f"unknown boundary mode {boundary!r}")
    f = np.where(grid.member, problem.f(grid.coords), 0.0) + extra_rhs
    sing = np.zeros(grid.shape) if singular_rhs is None else np.where(active, singular_rhs, 0.0)
    return Discretization(problem, grid, active, present, np.asarray(f, dtype=float), sing,
                          problem.delta if delta is None else float(delta))


FLUXES = ("lf", "central", "min")


def residual_terms(disc: Discretization, params: SchemeParams, u: np.ndarray, flux: str = "lf") -> dict:
    """The pieces of the residual: ``delta u``, ``-tr(A D^2 u)``, numerical Hamiltonian, ``-rhs``.

    ``flux='lf'`` is the scheme. ``'central'`` drops the dissipation (theta = 0)
    and ``'min'`` takes, per axis, the smaller of ``H`` at the two one-sided
    differences; both are kept only as test controls (``'min'`` is not convex).
    """
    h = disc.h
    g = disc.grid
    P = np.asarray(params.gradient_bound, dtype=float)
    theta = np.asarray(params.theta, dtype=float)
    ghost = u + h * P
    pbar = np.empty(g.shape + (g.dim,))
    jump = np.zeros(g.shape)
    second = []
    one_sided = []
    for k in range(g.dim):
        up = np.where(disc.avail[(k, 1)], _shift(u, k, 1), ghost)
        um = np.where(disc.avail[(k, -1)], _shift(u, k, -1), ghost)
        pbar[..., k] = (up - um) / (2 * h)
        jump += (up - 2 * u + um) / h
        second.append((up - 2 * u + um) / h**2)
        one_sided.append(((u - um) / h, (up - u) / h))
    if flux == "lf":
        ham = disc.hamiltonian(pbar, P) - 0.5 * theta * jump
    elif flux == "central":
        ham = disc.hamiltonian(pbar, P)
    elif flux == "min":
        pick = np.empty_like(pbar)
        for k, (pm, pp) in enumerate(one_sided):
            pick[..., k] = np.where(np.abs(pm) <= np.abs(pp), pm, pp)
        ham = disc.hamiltonian(pick, P)
    else:
        raise ValueError(f"unknown flux {flux!r}")
    if g.dim == 1:
        diff = disc.a00 * second[0]
    else:
        c = np.abs(disc.a01)
        diff = (disc.a00 - c) * second[0] + (disc.a11 - c) * second[1]
        if np.any(c > 0):
            dghost = u + np.sqrt(2) * h * P
            pos = disc.a01 >= 0
            upp = np.where(pos, np.roll(u, (-1, -1), axis=(0, 1)), np.roll(u, (-1, 1), axis=(0, 1)))
            umm = np.where(pos, np.roll(u, (1, 1), axis=(0, 1)), np.roll(u, (1, -1), axis=(0, 1)))
            ok_pp = np.where(pos, disc.avail[("d", 1, 1)], disc.avail[("d", 1, -1)])
            ok_mm = np.where(pos, disc.avail[("d", -1, -1)], disc.avail[("d", -1, 1)])
            upp = np.where(ok_pp, upp, dghost)
            umm = np.where(ok_mm, umm, dghost)
            diff = diff + c * (upp - 2 * u + umm) / h**2
    return {"decay": disc.delta * u, "diffusion": -diff, "hamiltonian": ham, "source": -disc.rhs}


def residual(disc: Discretization, params: SchemeParams, u: np.ndarray, flux: str = "lf") -> np.ndarray:
    """Nodal residual on active nodes (zero elsewhere)."""
    t = residual_terms(disc, params, u, flux)
    res = t["decay"] + t["diffusion"] + t["hamiltonian"] + t["source"]
    return np.where(disc.active, res, 0.0)


def residual_scale(disc: Discretization, params: SchemeParams, u: np.ndarray, flux: str = "lf") -> np.ndarray:
    """Sum of the absolute sizes of the residual's pieces (the floating-point error scale)."""
    t = residual_terms(disc, params, u, flux)
    mag = sum(np.abs(v) for v in t.values())
    # the differences cancel large neighbour values; count those too
    mag = mag + np.abs(u) * (disc.diag_coefficient(params.theta) + 1.0)
    return np.where(disc.active, mag, 0.0)


def one_sided_slopes(disc: Discretization, u: np.ndarray) -> np.ndarray:
    """Largest |one-sided difference| to a present neighbour at each node."""
    out = np.zeros(disc.grid.shape)
    for (key, ok) in disc.avail.items():
        if key[0] == "d":
            nb = np.roll(u, (-key[1], -key[2]), axis=(0, 1))
            slope = np.abs(nb - u) / (np.sqrt(2) * disc.h)
        else:
            slope = np.abs(_shift(u, key[0], key[1]) - u) / disc.h
        out = np.maximum(out, np.where(ok, slope, 0.0))
    return np.where(disc.active, out, 0.0)


# ------------------------------------------------------------ certificates


@dataclass
class Certificate:
    ok: bool
    failures: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


THETA_MARGIN = 0.05


def required_theta(disc: Discretization, P, rule: str = "hypothesis") -> np.ndarray:
    """Minimum dissipation for slopes bounded by ``P``.

    ``"hypothesis"``: ``Lambda1(x) (2P+1)^{m-1}`` from the structural bound on H_p.
    ``"sharp"``: ``(1 + margin)(m b P^{m-1} + |v|)``, the actual sup of |H_p| over
    |p| <= P with a small strict margin; less numerical viscosity.
    """
    P = np.asarray(P, dtype=float)
    if rule == "hypothesis":
        return disc.lam * (2 * P + 1) ** (disc.m - 1)
    if rule == "sharp":
        v = 0.0 if disc.drift is None else np.linalg.norm(disc.drift, axis=-1)
        return (1 + THETA_MARGIN) * (disc.m * disc.b * P ** (disc.m - 1) + v)
    raise ValueError(f"unknown theta rule {rule!r}")


def certify_monotonicity(disc: Discretization, params: SchemeParams) -> Certificate:
    """Check dissipation, time step and (2-D) diagonal dominance at every active node."""
    fails = []
    act = disc.active
    theta = np.broadcast_to(np.asarray(params.theta, dtype=float), disc.grid.shape)
    P = np.broadcast_to(np.asarray(params.gradient_bound, dtype=float), disc.grid.shape)
    need = required_theta(disc, P, params.theta_rule)
    bad = act & (theta < need * (1 - 1e-12))
    if bad.any():
        i = tuple(int(v) for v in np.argwhere(bad)[0])
        label = "Lambda1(2P+1)^(m-1)" if params.theta_rule == "hypothesis" else "sup|H_p|"
        fails.append(f"theta={theta[i]:.6g} < {label}={need[i]:.6g} at node {i}")
    dt = np.broadcast_to(np.asarray(params.dt, dtype=float), disc.grid.shape)
    limit = 1.0 / disc.diag_coefficient(theta)
    bad = act & (dt > limit * (1 + 1e-12))
    if bad.any():
        i = tuple(int(v) for v in np.argwhere(bad)[0])
        fails.append(f"dt={dt[i]:.6g} exceeds monotone bound {limit[i]:.6g} at node {i}")
    if disc.grid.dim == 2:
        c = np.abs(disc.a01)
        bad = act & ((c > disc.a00 + 1e-14) | (c > disc.a11 + 1e-14))
        if bad.any():
            i = tuple(int(v) for v in np.argwhere(bad)[0])
            fails.append(f"A not diagonally dominant at node {i}: |A12|={c[i]:.6g}")
    return Certificate(ok=not fails, failures=fails)


def certified(disc: Discretization, params: SchemeParams) -> SchemeParams:
    cert = certify_monotonicity(disc, params)
    if not cert:
        raise MonotonicityError("; ".join(cert.failures))
    return replace(params, cfl_certified=True)


def estimate_gradient_bound(disc: Discretization, safety: float = 2.0, level: float | None = None) -> np.ndarray:
    """Per-node a-priori slope bound from the local balance ``b|p|^m ~ |rhs|``.

    When boundary nodes are excluded (state constraints) and there is diffusion,
    the slope of the diffusion-driven boundary layer,
    ``(A (1-gamma) / b)^{1/(m-1)} d^{-1/(m-1)}`` with ``gamma = (m-2)/(m-1)``, is added.
    Takes the max over each node's neighbourhood so that steep forcing is felt by
    the adjacent stencils too.
    """
    m = disc.m
    act = disc.active
    if level is None:
        level = 1.0 + float(np.max(np.abs(disc.rhs_regular[act]))) if act.any() else 1.0
    r = level + np.abs(disc.rhs_singular)
    P = safety * (r / disc.b) ** (1 / m)
    constrained = bool(np.any(disc.grid.member & ~disc.present))
    amax = disc.a00 if disc.grid.dim == 1 else np.maximum(disc.a00, disc.a11)
    if constrained and np.any(amax[act] > 0):
        d = np.maximum(disc.grid.domain.distance(disc.grid.coords), 0.5 * disc.h)
        layer = (amax * (1 / (m - 1)) / disc.b) ** (1 / (m - 1)) * d ** (-1 / (m - 1))
        P = P + safety * layer
    if disc.drift is not None:
        P = P + (np.linalg.norm(disc.drift, axis=-1) / disc.b) ** (1 / (m - 1))
    P = np.where(disc.grid.member, P, 0.0)
    out = P.copy()
    for (key, ok) in disc.avail.items():
        if key[0] == "d":
            continue
        out = np.maximum(out, np.where(ok, _shift(P, key[0], key[1]), 0.0))
    return np.where(disc.grid.member, out, 1.0)


def make_params(disc: Discretization, P=None, cfl: float = 0.9, theta=None, rule: str = "hypothesis") -> SchemeParams:
    """Certified per-node parameters: minimal ``theta`` for ``rule`` and ``dt = cfl / diag``."""
    if P is None:
        P = estimate_gradient_bound(disc)
    P = np.broadcast_to(np.asarray(P, dtype=float), disc.grid.shape).copy()
    if theta is None:
        theta = required_theta(disc, P, rule)
    dt = cfl / disc.diag_coefficient(theta)
    return certified(disc, SchemeParams(theta=theta, dt=dt, gradient_bound=P, theta_rule=rule))


def uniform_params(disc: Discretization, P: float, cfl: float = 0.9, rule: str = "hypothesis") -> SchemeParams:
    """Spatially uniform theta and dt (extremes over active nodes)."""
    act = disc.active
    theta = float(np.max(required_theta(disc, P, rule)[act]))
    dt = float(cfl / np.max(disc.diag_coefficient(theta)[act]))
    return certified(disc, SchemeParams(theta=theta, dt=dt, gradient_bound=float(P), theta_rule=rule))


def discrete_residual(problem: ProblemSpec, params: SchemeParams, u: GridFunction, node,
                      certified_mode: bool = True, boundary: str = "active") -> float:
    """Residual of ``u`` at one node for the stationary problem on ``u.grid``."""
    if certified_mode and not params.cfl_certified:
        raise MonotonicityError("parameters carry no monotonicity certificate")
    disc = make_discretization(problem, u.grid, boundary=boundary)
    return float(residual(disc, params, u.values)[tuple(node)])
