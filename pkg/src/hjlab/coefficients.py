"""Coefficient library: power-law convex Hamiltonians, diffusion square roots, structural constants.

The admissible Hamiltonians are ``H(p, x) = b(x)|p|^m + v(x).p`` with ``b > 0`` and
``m > 1``. Spatial fields come from a small closed set of analytic forms so that
their bounds and Lipschitz constants can be audited by dense sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .domain_grid import Domain

# ---------------------------------------------------------------- scalar fields


class Field:
    """Scalar field evaluated on points of shape ``(..., d)``."""

    is_constant = False

    def __call__(self, x) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def describe(self) -> dict:
        return {"form": type(self).__name__.lower()}


@dataclass(frozen=True)
class Constant(Field):
    value: float

    is_constant = True

    def __call__(self, x):
        return np.full(np.shape(x)[:-1], float(self.value))

    def describe(self):
        return {"form": "constant", "value": self.value}


@dataclass(frozen=True)
class Quadratic(Field):
    """``c0 + c2 |x - center|^2``."""

    c0: float
    c2: float
    center: tuple[float, ...] | None = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = np.zeros(x.shape[-1]) if self.center is None else np.asarray(self.center)
        return self.c0 + self.c2 * np.sum((x - c) ** 2, axis=-1)

    def describe(self):
        return {"form": "quadratic", "c0": self.c0, "c2": self.c2, "center": self.center}


@dataclass(frozen=True)
class Cosine(Field):
    """``c0 + amp * prod_i cos(k x_i)``."""

    c0: float
    amp: float
    k: float = np.pi

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.c0 + self.amp * np.prod(np.cos(self.k * x), axis=-1)

    def describe(self):
        return {"form": "cosine", "c0": self.c0, "amp": self.amp, "k": self.k}


@dataclass(frozen=True)
class Ramp(Field):
    """``min(cap, c0 + slope |x - center|)``, a piecewise-linear radial ramp."""

    c0: float
    slope: float
    cap: float
    center: tuple[float, ...] | None = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = np.zeros(x.shape[-1]) if self.center is None else np.asarray(self.center)
        return np.minimum(self.cap, self.c0 + self.slope * np.linalg.norm(x - c, axis=-1))

    def describe(self):
        return {"form": "ramp", "c0": self.c0, "slope": self.slope, "cap": self.cap, "center": self.center}


@dataclass(frozen=True)
class Scaled(Field):
    """``factor * base``; used by scaling studies."""

    base: Field
    factor: float

    @property
    def is_constant(self):
        return self.base.is_constant

    def __call__(self, x):
        return self.factor * self.base(x)

    def describe(self):
        return {"form": "scaled", "factor": self.factor, "base": self.base.describe()}


@dataclass(frozen=True)
class FromFunction(Field):
    """Wraps a vectorised python function (manufactured sources, forcing terms)."""

    func: Callable = field(compare=False)
    label: str = "custom"

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float) * np.ones(np.shape(x)[:-1])

    def describe(self):
        return {"form": "function", "label": self.label}


# ------------------------------------------------------ drift and diffusion


@dataclass(frozen=True)
class Drift:
    """Vector field ``scale(x) * direction``."""

    direction: tuple[float, ...]
    scale: Field = Constant(1.0)

    def __call__(self, x):
        return self.scale(x)[..., None] * np.asarray(self.direction, dtype=float)

    @property
    def is_constant(self):
        return self.scale.is_constant

    def describe(self):
        return {"direction": list(self.direction), "scale": self.scale.describe()}


@dataclass(frozen=True)
class DiffusionSpec:
    """Diffusion square root ``sigma(x)``; either ``s(x) * Id`` or a constant matrix.

    ``A(x) = sigma^T sigma / 2``.
    """

    scale: Field = Constant(0.0)
    matrix: tuple | None = None

    @property
    def is_constant(self):
        return self.matrix is not None or self.scale.is_constant

    def sigma(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        if self.matrix is not None:
            s = np.asarray(self.matrix, dtype=float).reshape(-1, d)
            return np.broadcast_to(s, x.shape[:-1] + s.shape)
        return self.scale(x)[..., None, None] * np.eye(d)

    def A(self, x) -> np.ndarray:
        s = self.sigma(x)
        return 0.5 * np.swapaxes(s, -1, -2) @ s

    def describe(self):
        if self.matrix is not None:
            return {"matrix": [list(r) for r in np.atleast_2d(self.matrix)]}
        return {"scale": self.scale.describe()}


@dataclass(frozen=True)
class HamiltonianSpec:
    """``H(p, x) = b(x) |p|^m + v(x).p``."""

    m: float
    b: Field = Constant(1.0)
    drift: Drift | None = None

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError(f"growth exponent m={self.m} must exceed 1")

    def __call__(self, p, x) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        norm = np.sqrt(np.sum(p * p, axis=-1))
        out = self.b(x) * (norm * norm if self.m == 2 else norm**self.m)
        if self.drift is not None:
            out = out + np.sum(self.drift(x) * p, axis=-1)
        return out

    def grad_p(self, p, x) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        norm = np.linalg.norm(p, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = self.m * norm ** (self.m - 2) * p
        g = np.where(norm > 0, g, 0.0) * self.b(x)[..., None]
        if self.drift is not None:
            g = g + self.drift(x)
        return g

    def dp_constant(self, x) -> np.ndarray:
        """Local constant in |H(p)-H(q)| <= c (|p|+|q|+1)^{m-1} |p-q|."""
        c = kappa(self.m) * self.b(x)
        if self.drift is not None:
            c = c + np.linalg.norm(self.drift(x), axis=-1)
        return c

    def describe(self):
        return {"m": self.m, "b": self.b.describe(), "drift": None if self.drift is None else self.drift.describe()}


@dataclass(frozen=True)
class ProblemSpec:
    """``delta u - tr(A D^2 u) + H(Du, x) = f`` on ``domain``."""

    hamiltonian: HamiltonianSpec
    diffusion: DiffusionSpec = DiffusionSpec()
    f: Field = Constant(0.0)
    delta: float = 0.0
    domain: Domain | None = None

    @property
    def m(self) -> float:
        return self.hamiltonian.m

    def describe(self):
        return {
            "hamiltonian": self.hamiltonian.describe(),
            "diffusion": self.diffusion.describe(),
            "f": self.f.describe(),
            "delta": self.delta,
            "domain": None if self.domain is None else self.domain.describe(),
        }


def kappa(m: float) -> float:
    """sup ||p|^m - |q|^m| / ((|p|+|q|+1)^{m-1} |p-q|) over p, q."""
    return max(1.0, m / 2 ** (m - 1))


def eval_H(spec: HamiltonianSpec, p, x) -> np.ndarray:
    return spec(p, x)


# -------------------------------------------------------- structural constants


class HypothesisViolation(ValueError):
    """A structural hypothesis fails on the sampled set."""


@dataclass(frozen=True)
class StructuralConstants:
    a: float
    M: float
    lambda1: float
    lambda2: float
    R: float
    details: dict = field(default_factory=dict, compare=False)

    def as_tuple(self):
        return self.a, self.M, self.lambda1, self.lambda2


def _ball_samples(R: float, dim: int, density: float, center=None):
    n = int(np.ceil(2 * R * density)) + 1
    ax = np.linspace(-R, R, n)
    if dim == 1:
        pts = ax[:, None]
    else:
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        pts = np.stack([X, Y], axis=-1)
    if center is not None:
        pts = pts + np.asarray(center)
    inside = np.linalg.norm(pts - (0 if center is None else np.asarray(center)), axis=-1) <= R + 1e-12
    return pts, inside, ax[1] - ax[0]


def _lip(vals: np.ndarray, inside: np.ndarray, h: float) -> float:
    """Max adjacent difference quotient of a (possibly matrix-valued) sampled field."""
    best = 0.0
    for ax in range(inside.ndim):
        n = inside.shape[ax]
        a = [slice(None)] * inside.ndim
        b = [slice(None)] * inside.ndim
        a[ax], b[ax] = slice(1, n), slice(0, n - 1)
        ok = inside[tuple(a)] & inside[tuple(b)]
        diff = vals[tuple(a)] - vals[tuple(b)]
        if diff.ndim > inside.ndim:
            diff = np.linalg.norm(diff, ord=2, axis=(-2, -1)) if diff.ndim - inside.ndim == 2 else np.linalg.norm(diff, axis=-1)
        else:
            diff = np.abs(diff)
        if ok.any():
            best = max(best, float(np.max(diff[ok])) / h)
    return best


def structural_constants(problem: ProblemSpec, R: float, density: float | None = None, center=None, margin: float = 1.01) -> StructuralConstants:
    """Certified (a_R, M_R, Lambda_1, Lambda_2) for ``H - f`` and ``sigma`` on the ball B_R.

    Fields are sampled on a lattice (1000 points per unit length in 1-D; coarser in
    2-D to bound the sample count); bounds of non-constant fields are inflated by
    ``margin``.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    dim = problem.domain.dim if problem.domain is not None else 1
    if density is None:
        density = 1000.0 if dim == 1 else min(1000.0, 1500.0 / R)
    pts, inside, h = _ball_samples(R, dim, density, center)
    H = problem.hamiltonian
    m = H.m

    def mg(fld):
        return 1.0 if getattr(fld, "is_constant", False) else margin

    b = H.b(pts)[inside]
    b_min, b_max = float(b.min()), float(b.max())
    if b_min <= 0:
        raise HypothesisViolation(
            f"coercivity a_R|p|^m - M_R <= H(p,x) fails: inf b = {b_min:.6g} <= 0 on B_{R}"
        )
    lip_b = _lip(H.b(pts), inside, h) * mg(H.b)
    b_min /= mg(H.b)
    b_max *= mg(H.b)

    if H.drift is not None:
        vv = H.drift(pts)
        v_max = float(np.max(np.linalg.norm(vv[inside], axis=-1))) * mg(H.drift)
        lip_v = _lip(vv, inside, h) * mg(H.drift)
    else:
        v_max = lip_v = 0.0

    fv = problem.f(pts)
    f_plus = max(0.0, float(fv[inside].max())) * mg(problem.f)
    f_minus = max(0.0, float(-fv[inside].min())) * mg(problem.f)
    lip_f = _lip(fv, inside, h) * mg(problem.f)

    sig = problem.diffusion.sigma(pts)
    s_max = float(np.max(np.linalg.norm(sig[inside], ord=2, axis=(-2, -1)))) * mg(problem.diffusion)
    lip_s = _lip(sig, inside, h) * mg(problem.diffusion)

    A = problem.diffusion.A(pts)[inside]
    if np.min(np.linalg.eigvalsh(A)) < -1e-12:
        raise HypothesisViolation("A = sigma^T sigma / 2 is not nonnegative definite")

    if v_max > 0:
        a = min(1.0, b_min / 2)
        c = b_min / 2
        t = (v_max / (c * m)) ** (1 / (m - 1))
        young = t * v_max * (1 - 1 / m)
    else:
        a = min(1.0, b_min)
        young = 0.0
    M = max(1.0, f_plus + young, lip_v + lip_f)
    lam1 = max(1.0, kappa(m) * b_max + v_max, b_max + v_max + f_minus, lip_b + lip_v)
    lam2 = max(s_max, lip_s)
    details = dict(
        b_min=b_min, b_max=b_max, lip_b=lip_b, v_max=v_max, lip_v=lip_v,
        f_plus=f_plus, f_minus=f_minus, lip_f=lip_f, sigma_max=s_max, lip_sigma=lip_s,
        samples=int(inside.sum()), margin=margin,
    )
    return StructuralConstants(a=a, M=M, lambda1=lam1, lambda2=lam2, R=R, details=details)


def audit_hypotheses(problem: ProblemSpec, consts: StructuralConstants, n: int = 2000, seed: int = 0) -> dict:
    """Check the structural inequalities for ``H - f`` at random samples; returns worst slacks.

    A negative slack means the inequality is violated.
    """
    rng = np.random.default_rng(seed)
    dim = problem.domain.dim if problem.domain is not None else 1
    R = consts.R
    x = rng.uniform(-R, R, size=(n, dim))
    x *= np.minimum(1.0, R / np.maximum(np.linalg.norm(x, axis=-1), 1e-300))[:, None]
    y = rng.uniform(-R, R, size=(n, dim))
    y *= np.minimum(1.0, R / np.maximum(np.linalg.norm(y, axis=-1), 1e-300))[:, None]
    scale = 10.0 ** rng.uniform(-2, 2, size=(n, 1))
    p = rng.normal(size=(n, dim)) * scale
    q = p + rng.normal(size=(n, dim)) * 10.0 ** rng.uniform(-3, 1, size=(n, 1))
    H = problem.hamiltonian
    m = H.m
    a, M, L1, L2 = consts.as_tuple()

    def Ht(pp, xx):
        return H(pp, xx) - problem.f(xx)

    np_ = np.linalg.norm(p, axis=-1)
    nq = np.linalg.norm(q, axis=-1)
    lower = Ht(p, x) - (a * np_**m - M)
    upper = L1 * (np_**m + 1) - Ht(p, x)
    lip = (L1 * np_**m + M) * np.linalg.norm(x - y, axis=-1) - np.abs(Ht(p, x) - Ht(p, y))
    dp = L1 * (np_ + nq + 1) ** (m - 1) * np.linalg.norm(p - q, axis=-1) - np.abs(H(p, x) - H(q, x))
    sig_x = problem.diffusion.sigma(x)
    sig_y = problem.diffusion.sigma(y)
    sbnd = L2 - np.linalg.norm(sig_x, ord=2, axis=(-2, -1))
    slip = L2 * np.linalg.norm(x - y, axis=-1) - np.linalg.norm(sig_x - sig_y, ord=2, axis=(-2, -1))
    return {
        "Hsubq_lower": float(lower.min()),
        "Hsubq_upper": float(upper.min()),
        "HsubqLip": float(lip.min()),
        "HsubqDp": float(dp.min()),
        "sigbnd": float(sbnd.min()),
        "siglip": float(slip.min()),
    }


# ------------------------------------------------------------- closed forms


class AccuracyError(RuntimeError):
    """A numerical sup/inf could not be bracketed."""


def legendre_constant(m: float) -> float:
    return (m - 1) * m ** (-m / (m - 1))


def legendre_transform(spec: HamiltonianSpec, q, x, numeric: bool = False, bound: float = 10.0) -> float:
    """``L(q, x) = sup_p (p.q - H(p, x))``.

    Closed form for drift-free Hamiltonians; otherwise (or when ``numeric``) a
    concave maximisation over the box ``|p_i| <= bound``, rejected if the maximiser
    sits on the box boundary.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = spec.m
    if spec.drift is None and not numeric:
        b = float(spec.b(x[None, :])[0])
        return float(legendre_constant(m) * b ** (-1 / (m - 1)) * np.linalg.norm(q) ** (m / (m - 1)))

    def neg(p):
        return -(p @ q - float(spec(p[None, :], x[None, :])[0]))

    def jac(p):
        return -(q - spec.grad_p(p[None, :], x[None, :])[0])

    b = float(spec.b(x[None, :])[0])
    v = np.zeros_like(q) if spec.drift is None else spec.drift(x[None, :])[0]
    w = q - v
    nw = np.linalg.norm(w)
    p0 = np.zeros_like(q) if nw == 0 else w / nw * (nw / (b * m)) ** (1 / (m - 1))
    p0 = np.clip(p0, -bound, bound)
    res = optimize.minimize(neg, p0, jac=jac, method="L-BFGS-B", bounds=[(-bound, bound)] * len(q),
                            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500})
    if np.any(np.abs(np.abs(res.x) - bound) < 1e-6 * bound):
        raise AccuracyError(f"maximiser {res.x} touches the search box |p| <= {bound}")
    return float(-res.fun)


def hopf_lax_metric_oracle(m: float, mu: float, x, center=0.0, radius: float = 1.0) -> np.ndarray:
    """Maximal subsolution of ``|Du|^m = mu`` vanishing on ``B(center, radius)``.

    Minimises the travel cost ``T -> mu T + T L(D/T)`` with ``D`` the distance to the
    ball and ``L(q) = c_m |q|^{m/(m-1)}``; the minimiser is explicit.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if x.shape[-1] != center.shape[-1]:
        x = x[..., None]
    D = np.maximum(np.linalg.norm(x - center, axis=-1) - radius, 0.0)
    mp = m / (m - 1)
    c = legendre_constant(m)
    T = D * (c * (mp - 1) / mu) ** (1 / mp)
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = mu * T + c * D**mp * T ** (1 - mp)
    return np.where(D > 0, cost, 0.0)
