"""Pseudo-time Jacobi relaxation for the stationary problem and an explicit march in time."""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .coefficients import ProblemSpec
from .domain_grid import Grid, GridFunction
from .scheme import (
    Discretization,
    MonotonicityError,
    SchemeParams,
    _shift,
    make_discretization,
    make_params,
    one_sided_slopes,
    residual,
)

DEFAULT_MAX_ITER = 1_000_000


class InstabilityError(FloatingPointError):
    """Non-finite values appeared during an iteration."""


class UnboundedError(RuntimeError):
    """Iterates decreased without bound (no solution exists for the given data)."""


@dataclass
class SolveStats:
    iterations: int
    final_residual_sup: float
    converged: bool
    wall_time: float
    tolerance: float = float("nan")
    adapt_rounds: int = 0
    status: str = "converged"
    params: SchemeParams | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("params")
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class Trajectory:
    snapshots: list
    dt: float
    T: float

    def __post_init__(self):
        times = [t for t, _ in self.snapshots]
        if times[0] != 0.0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must start at 0 and increase strictly")

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])

    def final(self) -> GridFunction:
        return self.snapshots[-1][1]

    def to_json(self, path=None) -> str:
        text = json.dumps({"dt": self.dt, "T": self.T, "times": self.times.tolist()}, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_csv(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        return [gf.to_csv(directory / f"snapshot_{k:04d}.csv") for k, (_, gf) in enumerate(self.snapshots)]


def default_tolerance(disc: Discretization) -> float:
    act = disc.active
    return 1e-8 * (1.0 + float(np.max(np.abs(disc.rhs_regular[act])))) if act.any() else 1e-8


def _check_finite(u: np.ndarray, r: np.ndarray, disc: Discretization, it: int):
    bad = disc.active & ~(np.isfinite(r) & np.isfinite(u))
    if bad.any():
        i = tuple(int(v) for v in np.argwhere(bad)[0])
        raise InstabilityError(f"non-finite value at node {i} after {it} iterations")


def relax(disc: Discretization, params: SchemeParams, u: np.ndarray, tol: float,
          max_iter: int = DEFAULT_MAX_ITER, projected: bool = False, floor: float | None = None):
    """Iterate ``u <- u - dt * residual(u)`` on active nodes until ``sup|residual| <= tol``.

    ``projected`` only lets values decrease (``u <- min(u, u - dt r)``); started from
    a supersolution this decreases monotonically to the maximal solution. A
    projected run whose positive residual has vanished but which keeps a negative
    one reports ``status='stalled'``. ``floor`` aborts with ``UnboundedError`` when
    an active value drops below it.

    Returns ``(u, iterations, residual_sup, status)``.
    """
    u = np.array(u, dtype=float)
    dt = np.where(disc.active, params.dt, 0.0)
    act = disc.active
    rs = np.inf
    for it in range(max_iter + 1):
        r = residual(disc, params, u)
        rs = float(np.max(np.abs(r)))
        if not np.isfinite(rs):
            _check_finite(u, r, disc, it)
        if rs <= tol:
            return u, it, rs, "converged"
        if it == max_iter:
            break
        if projected:
            rp = np.maximum(r, 0.0)
            if float(rp.max()) <= tol * 1e-3:
                return u, it, rs, "stalled"
            u -= dt * rp
        else:
            u -= dt * r
        if floor is not None and it % 64 == 0 and float(np.min(u[act])) < floor:
            raise UnboundedError(f"iterates fell below {floor:.6g} after {it} iterations")
    return u, max_iter, rs, "budget exhausted"


def _widen(disc: Discretization, P: np.ndarray, mask: np.ndarray, factor: float) -> np.ndarray:
    grow = mask.copy()
    for key, ok in disc.avail.items():
        if key[0] == "d":
            continue
        grow |= ok & _shift(mask, key[0], key[1])
    return np.where(grow, P * factor, P)


def _local_max(disc: Discretization, a: np.ndarray, width: int = 2) -> np.ndarray:
    out = a.copy()
    for _ in range(width):
        prev = out.copy()
        for key, ok in disc.avail.items():
            if key[0] != "d":
                out = np.maximum(out, np.where(ok, _shift(prev, key[0], key[1]), 0.0))
    return out


def solve_stationary(problem: ProblemSpec, params: SchemeParams | None = None, init: GridFunction | None = None,
                     dirichlet: GridFunction | None = None, tol: float | None = None, *, grid: Grid | None = None,
                     boundary: str = "active", disc: Discretization | None = None, P=None,
                     max_iter: int = DEFAULT_MAX_ITER, projected: bool = False, adapt: bool | None = None,
                     max_rounds: int = 8, floor: float | None = None, rule: str = "hypothesis",
                     tighten: bool = False) -> tuple[GridFunction, SolveStats]:
    """Solve ``delta u - tr(A D^2 u) + H(Du, x) = f`` on the grid of ``init`` (or ``grid``).

    Pinned nodes (targets, plus boundary nodes when ``boundary='pinned'``) keep the
    values of ``dirichlet`` (default: ``init``). With ``params=None`` certified
    per-node parameters are built from a local slope estimate, and the estimate
    is doubled wherever the computed solution's one-sided slopes exceed it.
    ``tighten`` re-solves once with the bound shrunk to the observed local slopes,
    which cuts numerical viscosity; ``rule`` selects the dissipation floor.
    """
    if grid is None:
        if init is None:
            raise ValueError("need an initial guess or a grid")
        grid = init.grid
    if disc is None:
        disc = make_discretization(problem, grid, boundary=boundary)
    if disc.delta < 0:
        raise ValueError("delta must be nonnegative")
    if disc.delta == 0 and not disc.pinned.any():
        raise ValueError("delta = 0 needs a nonempty pinned target set")
    if params is not None and not params.cfl_certified:
        raise MonotonicityError("parameters carry no monotonicity certificate")
    auto = params is None
    adapt = auto if adapt is None else adapt
    if auto:
        params = make_params(disc, P=P, rule=rule)
    u = np.zeros(grid.shape) if init is None else init.values.copy()
    if dirichlet is not None:
        u = np.where(disc.pinned, dirichlet.values, u)
    tol = default_tolerance(disc) if tol is None else tol
    t0 = time.perf_counter()
    total = 0
    rounds = 0
    pending_tighten = tighten and auto
    while True:
        u, it, rs, status = relax(disc, params, u, tol, max_iter - total, projected, floor)
        total += it
        if not adapt or status != "converged" or rounds >= max_rounds:
            break
        slopes = one_sided_slopes(disc, u)
        P_now = np.broadcast_to(np.asarray(params.gradient_bound, dtype=float), grid.shape)
        over = disc.active & (slopes > P_now * (1 + 1e-9))
        if pending_tighten:
            pending_tighten = False
            rounds += 1
            params = make_params(disc, P=_local_max(disc, 1.05 * slopes + 0.05), rule=rule)
            continue
        if not over.any():
            break
        rounds += 1
        params = make_params(disc, P=_widen(disc, P_now, over, 2.0), rule=rule)
    stats = SolveStats(total, rs, status == "converged", time.perf_counter() - t0, tol, rounds, status, params)
    return GridFunction(grid, np.where(disc.present, u, 0.0)), stats


def solve_time_dependent(problem: ProblemSpec, params: SchemeParams | None, u0: GridFunction, T: float,
                         snapshot_every: int = 0, *, boundary: str = "pinned", disc: Discretization | None = None,
                         P=None) -> Trajectory:
    """March ``u_t - tr(A D^2 u) + H(Du, x) = f`` explicitly up to time ``T``.

    ``boundary='pinned'`` holds the initial boundary values (Dirichlet);
    ``'state_constraint'`` lets boundary nodes evolve with ghost stencils.
    A single uniform step ``dt = min_i dt_i`` (shrunk so it divides ``T``) is used.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    mode = {"pinned": "pinned", "dirichlet": "pinned", "state_constraint": "active"}[boundary]
    grid = u0.grid
    if disc is None:
        disc = make_discretization(problem, grid, boundary=mode, delta=0.0)
    if params is None:
        params = make_params(disc, P=P)
    elif not params.cfl_certified:
        raise MonotonicityError("parameters carry no monotonicity certificate")
    dt0 = float(np.min(np.broadcast_to(params.dt, grid.shape)[disc.active]))
    n = int(np.ceil(T / dt0 - 1e-12))
    dt = T / n
    u = u0.values.copy()
    snaps = [(0.0, GridFunction(grid, u))]
    for k in range(1, n + 1):
        r = residual(disc, params, u)
        u = u - dt * r
        if not np.all(np.isfinite(u[disc.active])):
            _check_finite(u, np.zeros_like(u), disc, k)
        if k == n or (snapshot_every and k % snapshot_every == 0):
            snaps.append((T if k == n else k * dt, GridFunction(grid, np.where(disc.present, u, 0.0))))
    return Trajectory(snaps, dt, T)


def fit_order(spacings, errors) -> float:
    """Least-squares slope of log(error) against log(spacing)."""
    h = np.asarray(spacings, dtype=float)
    e = np.asarray(errors, dtype=float)
    if len(h) < 3:
        raise ValueError("need at least three resolutions")
    order = np.argsort(h)
    if np.any(np.diff(e[order]) < 0):
        warnings.warn("errors are not monotone in the spacing", RuntimeWarning, stacklevel=2)
    e = np.maximum(e, np.finfo(float).tiny)
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def richardson_order(error_at: Callable[[float], float], resolutions) -> tuple[float, list[float]]:
    """Observed convergence order from ``error_at(resolution)`` over ``resolutions``.

    Returns the fitted slope and the list of errors.
    """
    resolutions = list(resolutions)
    errors = [float(error_at(r)) for r in resolutions]
    return fit_order([1.0 / r for r in resolutions], errors), errors
