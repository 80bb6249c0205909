"""Mode pipelines behind the CLI: run a config, emit CSV/JSON artifacts and a manifest."""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    comparison_check,
    convex_combination_check,
    extrapolation_check,
    fit_slope,
    measure_lipschitz,
)
from .config import ExperimentConfig, build_field, validate
from .domain_grid import Grid, GridFunction, build_grid, distance_to_boundary
from .metric_problem import (
    MetricSolution,
    check_concavity_in_mu,
    check_oscillation_bound,
    check_subadditivity,
    metric_grid,
    solve_metric,
)
from .report import Report, _plain, digest
from .scheme import (
    MonotonicityError,
    SchemeParams,
    certify_monotonicity,
    estimate_gradient_bound,
    make_discretization,
    make_params,
    required_theta,
)
from .solvers import solve_stationary, solve_time_dependent
from .state_constraints import EpsilonPath, barrier_sandwich_check, solve_state_constraint

WORKERS_ENV = "HJLAB_WORKERS"


def tool_version() -> str:
    from . import __version__

    return __version__


@dataclass
class RunManifest:
    config_digest: str
    tool_version: str
    wall_time: float
    files: list
    passed: bool
    reports: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _plain({"config_digest": self.config_digest, "tool_version": self.tool_version,
                       "wall_time": self.wall_time, "files": self.files, "pass": self.passed,
                       "reports": [{"check": r["check"], "pass": r["pass"]} for r in self.reports]})

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, directory) -> RunManifest:
        d = json.loads((Path(directory) / "manifest.json").read_text())
        return cls(d["config_digest"], d["tool_version"], d["wall_time"], d["files"], d["pass"], d["reports"])


# ------------------------------------------------------------ plot data


def _write_rows(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    return path


def emit_plot_data(result, kind: str, path) -> list[Path]:
    """Write plotting-friendly CSV for ``result``.

    ``kind``:
      ``"profile"``  1D GridFunction or MetricSolution -> columns ``x, value``;
      ``"field"``    2D GridFunction -> long format ``x, y, value``;
      ``"scaling"``  ``(parameters, K)`` pair -> ``log_parameter, log_K`` plus a
                     sidecar JSON with the fitted line;
      ``"epsilon_path"`` EpsilonPath -> ``epsilon, sup_inner, fitted_exponent``.
    """
    path = Path(path)
    if isinstance(result, MetricSolution):
        result = result.values
    if kind in ("profile", "field"):
        g = result.grid
        if kind == "profile" and g.dim != 1:
            raise ValueError("profile data needs a 1D function")
        if kind == "field" and g.dim != 2:
            raise ValueError("field data needs a 2D function")
        mem = g.member
        pts = g.coords[mem]
        vals = result.values[mem]
        header = ["x", "value"] if g.dim == 1 else ["x", "y", "value"]
        return [_write_rows(path, header, np.column_stack([pts, vals]))]
    if kind == "scaling":
        params, K = (np.asarray(a, dtype=float) for a in result)
        slope, icpt = fit_slope(params, K)
        out = _write_rows(path, ["log_parameter", "log_K"], np.column_stack([np.log(params), np.log(K)]))
        side = path.with_suffix(".json")
        side.write_text(json.dumps({"slope": slope, "intercept": icpt, "model": "log_K = intercept + slope * log_parameter"},
                                   indent=2, sort_keys=True) + "\n")
        return [out, side]
    if kind == "epsilon_path":
        if not isinstance(result, EpsilonPath):
            raise TypeError("epsilon_path data needs an EpsilonPath")
        path.parent.mkdir(parents=True, exist_ok=True)
        return [result.to_csv(path)]
    raise ValueError(f"unknown plot kind {kind!r}")


def _emit_solution(u: GridFunction, stem: str, out: Path) -> list[Path]:
    files = [u.to_csv(out / f"{stem}.csv")]
    if u.grid.dim in (1, 2):
        kind = "profile" if u.grid.dim == 1 else "field"
        files += emit_plot_data(u, kind, out / "plot" / f"{stem}_{kind}.csv")
    return files


# ------------------------------------------------------------ parameters


def requested_params(cfg: ExperimentConfig, disc) -> SchemeParams | None:
    """Explicit scheme parameters from ``[solver]`` (None when all are automatic).

    Raises MonotonicityError when an explicit ``theta`` or ``dt`` is not certified.
    """
    s = cfg.solver
    rule = s.get("rule", "hypothesis")
    if not any(k in s for k in ("P", "theta", "dt", "cfl")):
        return None
    P = np.broadcast_to(np.asarray(s["P"], dtype=float), disc.grid.shape).copy() if "P" in s \
        else estimate_gradient_bound(disc)
    if "theta" not in s and "dt" not in s:
        return make_params(disc, P=P, cfl=float(s.get("cfl", 0.9)), rule=rule)
    theta = float(s["theta"]) if "theta" in s else required_theta(disc, P, rule)
    dt = float(s["dt"]) if "dt" in s else float(s.get("cfl", 0.9)) / disc.diag_coefficient(theta)
    trial = SchemeParams(theta=theta, dt=dt, gradient_bound=P, theta_rule=rule)
    cert = certify_monotonicity(disc, trial)
    if not cert.ok:
        raise MonotonicityError("requested parameters are not monotone: " + "; ".join(cert.failures))
    return SchemeParams(theta=theta, dt=dt, gradient_bound=P, cfl_certified=True, theta_rule=rule)


def _grid(cfg: ExperimentConfig) -> Grid:
    return build_grid(cfg.problem_spec().domain, cfg.resolution)


def _initial(cfg: ExperimentConfig, section: dict, grid: Grid) -> GridFunction:
    fld = build_field(section.get("initial", 0.0), "initial")
    return GridFunction(grid, np.where(grid.member, fld(grid.coords), 0.0))


def _convergence_report(name: str, st, extra=None) -> Report:
    return Report(name, bool(st.converged), measured=st.final_residual_sup, expected="<= tol",
                  tolerance=st.tolerance, details={"iterations": st.iterations, "status": st.status,
                                                   **(extra or {})})


# ------------------------------------------------------------ pipelines


def _run_stationary(cfg, out):
    pb = cfg.problem_spec()
    grid = _grid(cfg)
    boundary = cfg.stationary.get("boundary", "active")
    disc = make_discretization(pb, grid, boundary=boundary)
    params = requested_params(cfg, disc)
    u0 = _initial(cfg, cfg.stationary, grid)
    u, st = solve_stationary(pb, params, u0, tol=cfg.tol, disc=disc, max_iter=cfg.max_iter,
                             rule=cfg.solver.get("rule", "hypothesis"))
    files = _emit_solution(u, "solution", out)
    stats = out / "stats.json"
    d = st.to_dict()
    d.pop("wall_time")
    stats.write_text(json.dumps(_plain(d), indent=2, sort_keys=True) + "\n")
    return files + [stats], [_convergence_report("stationary_convergence", st, st.params.describe())]


def _run_time(cfg, out):
    pb = cfg.problem_spec()
    grid = _grid(cfg)
    t = cfg.time
    mode = {"pinned": "pinned", "dirichlet": "pinned", "state_constraint": "active"}[t.get("boundary", "pinned")]
    disc = make_discretization(pb, grid, boundary=mode, delta=0.0)
    params = requested_params(cfg, disc)
    u0 = _initial(cfg, t, grid)
    traj = solve_time_dependent(pb, params, u0, float(t.get("T", 1.0)), int(t.get("snapshot_every", 0)),
                                boundary=t.get("boundary", "pinned"), disc=disc)
    files = traj.to_csv(out / "snapshots")
    meta = out / "trajectory.json"
    traj.to_json(meta)
    files.append(meta)
    files += _emit_solution(traj.final(), "final", out)
    finite = all(np.all(np.isfinite(s.values)) for _, s in traj.snapshots)
    rep = Report("time_march_finite", finite, measured=len(traj.snapshots), expected="finite snapshots",
                 inputs_digest=digest(cfg.to_dict()), details={"dt": traj.dt, "T": traj.T})
    return files, [rep]


def _run_state_constraint(cfg, out):
    pb = cfg.problem_spec()
    grid = _grid(cfg)
    sc = cfg.state_constraint
    disc = make_discretization(pb, grid, boundary="excluded")
    params = requested_params(cfg, disc)
    u, path = solve_state_constraint(pb, grid, params, sc.get("path"), cfg.tol,
                                     rule=cfg.solver.get("rule", "hypothesis"), early_stop=sc.get("early_stop", True))
    files = _emit_solution(u, "solution", out)
    files += emit_plot_data(path, "epsilon_path", out / "plot" / "epsilon_path.csv")
    reports = [Report("epsilon_path_monotone", path.monotone, measured=path.max_violation,
                      expected="<= 10 tol", tolerance=10 * path.tolerance,
                      details={"violations": path.violations(), "epsilons": path.epsilons})]
    if pb.m <= 2:
        reports.append(barrier_sandwich_check(
            u, pb.m, band=sc.get("band"), expected_exponent=sc.get("expected_exponent"),
            exponent_tol=sc.get("exponent_tol", 0.15),
            predicted_log_coefficient=sc.get("predicted_log_coefficient"),
            coefficient_tol=sc.get("coefficient_tol", 0.2)))
    return files, reports


def _run_metric(cfg, out):
    pb = cfg.problem_spec()
    mc = cfg.metric
    dim = pb.domain.dim
    center = tuple(np.atleast_1d(mc.get("center", [0.0] * dim)).astype(float))
    mus = [float(v) for v in np.atleast_1d(mc.get("mu", 1.0))]
    kw = {"resolution": cfg.resolution, "rule": cfg.solver.get("rule", "hypothesis"), "max_iter": cfg.max_iter}
    if "path" in mc:
        kw["path"] = mc["path"]
    files, reports = [], []
    sols = {}
    for k, mu in enumerate(mus):
        sol = solve_metric(pb, mu, center, **kw)
        sols[mu] = sol
        if not sol.feasible:
            reports.append(Report("metric_feasible", False, measured=mu, expected="feasible level",
                                  details={"mu": mu}))
            continue
        files += _emit_solution(sol.values, f"metric_mu{k}", out)
    triples = mc.get("triples")
    if triples:
        rep = check_subadditivity(pb, mus[0], [tuple(tuple(np.atleast_1d(p)) for p in t) for t in triples],
                                  cfg.resolution, rule=kw["rule"])
        reports.append(rep)
    if mc.get("concavity") and len(mus) >= 2:
        rep = check_concavity_in_mu(pb, mus[0], mus[-1], center, cfg.resolution)
        reports.append(rep)
    probes = mc.get("probes")
    if probes and sols[mus[0]].feasible:
        rep = check_oscillation_bound(pb, sols[mus[0]], [tuple(np.atleast_1d(p)) for p in probes])
        reports.append(rep)
    return files, reports


def _smooth_perturbation(rng: np.random.Generator, grid: Grid, amp: float) -> np.ndarray:
    """A random trigonometric field, smooth on the grid scale."""
    x = grid.coords
    lo, hi = grid.domain.bounds()
    out = np.zeros(grid.shape)
    for _ in range(3):
        k = rng.integers(1, 4, size=grid.dim)
        ph = rng.uniform(0, 2 * np.pi, size=grid.dim)
        term = np.prod(np.cos(np.pi * k * (x - lo) / (hi - lo) + ph), axis=-1)
        out += rng.normal() * term
    return amp * out


def _run_verify(cfg, out):
    pb = cfg.problem_spec()
    grid = _grid(cfg)
    v = cfg.verify
    disc = make_discretization(pb, grid, boundary="active")
    params = requested_params(cfg, disc)
    u, st = solve_stationary(pb, params, GridFunction(grid, np.zeros(grid.shape)), tol=cfg.tol, disc=disc,
                             max_iter=cfg.max_iter)
    params = st.params
    rng = np.random.default_rng(cfg.seed)
    checks = v.get("checks", ["convexity", "extrapolation", "comparison"])
    flux = v.get("flux", "lf")
    n = int(v.get("instances", 20))
    amp = 0.1 * (1.0 + float(np.max(np.abs(u.values))))
    reports = [_convergence_report("verify_base_solve", st)]
    rows = []
    for i in range(n):
        a = GridFunction(grid, u.values + _smooth_perturbation(rng, grid, amp))
        b = GridFunction(grid, u.values + _smooth_perturbation(rng, grid, amp))
        lam = float(v.get("lam", rng.uniform(0, 1)))
        if "convexity" in checks:
            r = convex_combination_check(a, b, lam, pb, params, disc=disc, flux=flux)
            rows.append(("convex_combination", i, lam, r.passed, r.measured))
        if "extrapolation" in checks:
            r = extrapolation_check(a, b, lam, pb, params, disc=disc, flux=flux)
            rows.append(("extrapolation", i, lam, r.passed, r.measured))
        if "comparison" in checks:
            shift = float(rng.uniform(0.01, 1.0))
            sub = GridFunction(grid, u.values - shift)
            sup = GridFunction(grid, u.values + shift)
            r = comparison_check(sub, sup, pb, params, tol=10 * st.tolerance, disc=disc)
            rows.append(("comparison", i, shift, r.passed, r.measured))
    table = out / "verify_instances.csv"
    with table.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "instance", "parameter", "pass", "measured"])
        for name, i, p, ok, meas in rows:
            w.writerow([name, i, repr(p), int(bool(ok)), repr(float(meas))])
    for name in sorted({r[0] for r in rows}):
        sel = [r for r in rows if r[0] == name]
        fails = sum(not r[3] for r in sel)
        reports.append(Report(name, fails == 0, measured=fails, expected=0, tolerance=0,
                              inputs_digest=digest({"config": cfg.to_dict()}),
                              details={"instances": len(sel), "flux": flux}))
    return [table], reports


def _sweep_one(args):
    cfg_dict, out = args
    cfg = validate(cfg_dict)
    return run(cfg, out)


def _measure_K(cfg: ExperimentConfig, out: Path) -> float:
    files = sorted(out.glob("solution.csv")) + sorted(out.glob("metric_mu0.csv"))
    grid = _grid(cfg) if cfg.mode != "metric" else None
    if grid is None:
        pb = cfg.problem_spec()
        grid = metric_grid(pb.domain, tuple(np.atleast_1d(cfg.metric.get("center", [0.0] * pb.domain.dim))),
                           cfg.resolution)
    u = GridFunction.from_csv(grid, files[0])
    d = distance_to_boundary(grid).values
    return measure_lipschitz(u, grid.member & (d >= grid.domain.eps0())).constant


def _run_sweep(cfg, out):
    sw = cfg.sweep
    base = cfg.to_dict()
    base["mode"] = sw.get("base_mode", "metric")
    base.pop("sweep")
    jobs = []
    values = list(sw["values"])
    for k, val in enumerate(values):
        sub = validate(base).with_override(sw["key"], val)
        jobs.append((sub.to_dict(), out / f"run_{k:03d}"))
    workers = max(1, int(os.environ.get(WORKERS_ENV, "1")))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            manifests = list(ex.map(_sweep_one, jobs))
    else:
        manifests = [_sweep_one(j) for j in jobs]
    files = []
    rows = []
    for (cd, sub_out), man, val in zip(jobs, manifests, values):
        files += [str(Path(sub_out.name) / f) for f in man.files] + [str(Path(sub_out.name) / "manifest.json")]
        rows.append((val, man.passed))
    summary = out / "sweep_summary.csv"
    with summary.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "pass"])
        for val, ok in rows:
            w.writerow([json.dumps(val), int(ok)])
    emitted = [summary]
    scalars = all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in values)
    if scalars and len(values) >= 2:
        Ks = [_measure_K(validate(cd), sub_out) for cd, sub_out in jobs]
        emitted += emit_plot_data((values, Ks), "scaling", out / "plot" / "scaling.csv")
    reports = [Report("sweep_runs", all(m.passed for m in manifests), measured=sum(m.passed for m in manifests),
                      expected=len(manifests), details={"key": sw["key"]})]
    return emitted, reports, files


# ------------------------------------------------------------ driver


def config_digest(cfg: ExperimentConfig) -> str:
    """Digest of the experiment definition; key order and output location do not enter."""
    d = cfg.to_dict()
    d.pop("output")
    return digest(d)


PIPELINES = {
    "stationary": _run_stationary,
    "time": _run_time,
    "state-constraint": _run_state_constraint,
    "metric": _run_metric,
    "verify": _run_verify,
}


def run(cfg: ExperimentConfig, output=None) -> RunManifest:
    """Execute the pipeline for ``cfg.mode`` and write artifacts plus ``manifest.json``.

    Report JSON goes to ``reports/<check>.json``. Operational errors propagate;
    failed assertions show up as ``passed=False`` in the manifest.
    """
    out = Path(cfg.output if output is None else output)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    extra_files: list = []
    if cfg.mode == "sweep":
        files, reports, extra_files = _run_sweep(cfg, out)
    else:
        files, reports = PIPELINES[cfg.mode](cfg, out)
    cfg_path = out / "config.json"
    cfg_path.write_text(json.dumps(_plain(cfg.to_dict()), indent=2, sort_keys=True) + "\n")
    files.append(cfg_path)
    names: dict = {}
    for rep in reports:
        k = names.get(rep.check, 0)
        names[rep.check] = k + 1
        path = out / "reports" / (f"{rep.check}.json" if k == 0 else f"{rep.check}_{k}.json")
        path.parent.mkdir(exist_ok=True)
        rep.to_json(path)
        files.append(path)
    rel = sorted({str(Path(f).relative_to(out)) for f in files} | set(extra_files))
    man = RunManifest(config_digest(cfg), tool_version(), time.perf_counter() - t0, rel,
                      all(bool(r.passed) for r in reports), [r.to_dict() for r in reports])
    man.write(out)
    return man
