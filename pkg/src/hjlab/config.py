"""Experiment configuration: strict TOML parsing into validated dataclasses."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import tomli

from .coefficients import (
    Constant,
    Cosine,
    DiffusionSpec,
    Drift,
    Field,
    HamiltonianSpec,
    ProblemSpec,
    Quadratic,
    Ramp,
)
from .domain_grid import Domain, GeometryError

MODES = ("stationary", "time", "state-constraint", "metric", "verify", "sweep")


class ConfigError(ValueError):
    """Invalid experiment configuration (unknown key, bad value, bad geometry)."""


FIELD_FORMS = {
    "constant": ("value",),
    "quadratic": ("c0", "c2", "center"),
    "cosine": ("c0", "amp", "k"),
    "ramp": ("c0", "slope", "cap", "center"),
}


def _check_keys(table: dict, allowed, where: str):
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) {extra} in [{where}]; allowed: {sorted(allowed)}")


def _num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number, got {v!r}")
    v = float(v)
    if not np.isfinite(v):
        raise ConfigError(f"{where} must be finite")
    return v


def build_field(spec, where: str) -> Field:
    """A coefficient field from ``{form = ..., <parameters>}`` or a bare number."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return Constant(float(spec))
    if not isinstance(spec, dict) or "form" not in spec:
        raise ConfigError(f"{where} must be a number or a table with a 'form' key")
    form = spec["form"]
    if form not in FIELD_FORMS:
        raise ConfigError(f"{where}.form must be one of {sorted(FIELD_FORMS)}, got {form!r}")
    _check_keys(spec, ("form",) + FIELD_FORMS[form], where)
    kw = {}
    for k, v in spec.items():
        if k == "form":
            continue
        if k == "center":
            kw[k] = tuple(_num(c, f"{where}.center") for c in np.atleast_1d(v))
        else:
            kw[k] = _num(v, f"{where}.{k}")
    try:
        return {"constant": Constant, "quadratic": Quadratic, "cosine": Cosine, "ramp": Ramp}[form](**kw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def build_domain(spec: dict) -> Domain:
    _check_keys(spec, ("kind", "lo", "hi", "center", "radius", "resolution"), "domain")
    kind = spec.get("kind", "interval")
    try:
        if kind == "interval":
            return Domain.interval(_num(spec["lo"], "domain.lo"), _num(spec["hi"], "domain.hi"))
        if kind == "box":
            return Domain.box(spec["lo"], spec["hi"])
        if kind == "ball":
            return Domain.ball(spec["center"], _num(spec["radius"], "domain.radius"))
    except KeyError as exc:
        raise ConfigError(f"domain of kind {kind!r} needs key {exc}") from None
    except GeometryError as exc:
        raise ConfigError(f"domain: {exc}") from None
    raise ConfigError(f"domain.kind must be interval, box or ball, got {kind!r}")


SECTION_KEYS = {
    "problem": ("m", "delta", "b", "f", "sigma", "drift"),
    "domain": ("kind", "lo", "hi", "center", "radius", "resolution"),
    "solver": ("tol", "max_iter", "P", "theta", "dt", "cfl", "rule"),
    "stationary": ("boundary", "initial"),
    "time": ("T", "snapshot_every", "boundary", "initial"),
    "state_constraint": ("path", "early_stop", "band", "expected_exponent", "exponent_tol",
                         "predicted_log_coefficient", "coefficient_tol"),
    "metric": ("mu", "center", "path", "triples", "concavity", "probes"),
    "verify": ("checks", "instances", "flux", "lam"),
    "sweep": ("key", "values", "base_mode"),
}
TOP_KEYS = ("mode", "seed", "output", "name") + tuple(SECTION_KEYS)


@dataclass
class ExperimentConfig:
    mode: str
    problem: dict
    domain: dict
    seed: int = 0
    output: str = "output"
    name: str = "experiment"
    solver: dict = field(default_factory=dict)
    stationary: dict = field(default_factory=dict)
    time: dict = field(default_factory=dict)
    state_constraint: dict = field(default_factory=dict)
    metric: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    @property
    def resolution(self) -> float:
        return float(self.domain["resolution"])

    @property
    def tol(self) -> float | None:
        return self.solver.get("tol")

    @property
    def max_iter(self) -> int:
        return int(self.solver.get("max_iter", 1_000_000))

    def to_dict(self) -> dict:
        return asdict(self)

    def problem_spec(self) -> ProblemSpec:
        p = self.problem
        drift = None
        if "drift" in p:
            d = p["drift"]
            drift = Drift(tuple(float(c) for c in d["direction"]), build_field(d.get("scale", 1.0), "problem.drift.scale"))
        ham = HamiltonianSpec(float(p["m"]), build_field(p.get("b", 1.0), "problem.b"), drift)
        sig = p.get("sigma", 0.0)
        if isinstance(sig, dict) and "matrix" in sig:
            diff = DiffusionSpec(matrix=tuple(tuple(float(c) for c in row) for row in sig["matrix"]))
        else:
            diff = DiffusionSpec(build_field(sig, "problem.sigma"))
        return ProblemSpec(ham, diff, build_field(p.get("f", 0.0), "problem.f"), float(p.get("delta", 0.0)),
                           build_domain(self.domain))

    def with_override(self, key: str, value) -> ExperimentConfig:
        """Copy with the dotted ``key`` (e.g. ``metric.mu``) replaced, revalidated."""
        d = copy.deepcopy(self.to_dict())
        node = d
        parts = key.split(".")
        for k in parts[:-1]:
            node = node.setdefault(k, {})
        node[parts[-1]] = value
        return validate(d)


def _validate_problem(p: dict):
    _check_keys(p, SECTION_KEYS["problem"], "problem")
    if "m" not in p:
        raise ConfigError("problem.m is required")
    m = _num(p["m"], "problem.m")
    if not m > 1:
        raise ConfigError(f"problem.m = {m} out of range: the growth exponent must satisfy m > 1")
    delta = _num(p.get("delta", 0.0), "problem.delta")
    if delta < 0:
        raise ConfigError("problem.delta must be nonnegative")
    for key in ("b", "f"):
        if key in p:
            build_field(p[key], f"problem.{key}")
    if "sigma" in p:
        sig = p["sigma"]
        if isinstance(sig, dict) and "matrix" in sig:
            _check_keys(sig, ("matrix",), "problem.sigma")
        else:
            build_field(sig, "problem.sigma")
    if "drift" in p:
        _check_keys(p["drift"], ("direction", "scale"), "problem.drift")
        if "direction" not in p["drift"]:
            raise ConfigError("problem.drift.direction is required")
        if "scale" in p["drift"]:
            build_field(p["drift"]["scale"], "problem.drift.scale")


def validate(raw: dict) -> ExperimentConfig:
    _check_keys(raw, TOP_KEYS, "top level")
    mode = raw.get("mode")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {list(MODES)}, got {mode!r}")
    for sec, keys in SECTION_KEYS.items():
        if sec in raw:
            if not isinstance(raw[sec], dict):
                raise ConfigError(f"[{sec}] must be a table")
            _check_keys(raw[sec], keys, sec)
    if "problem" not in raw or "domain" not in raw:
        raise ConfigError("[problem] and [domain] sections are required")
    _validate_problem(raw["problem"])
    build_domain(raw["domain"])
    res = _num(raw["domain"].get("resolution", 0), "domain.resolution")
    if res < 8:
        raise ConfigError("domain.resolution must be at least 8")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    solver = dict(raw.get("solver", {}))
    solver.setdefault("tol", 1e-8)
    solver.setdefault("max_iter", 1_000_000)
    if _num(solver["tol"], "solver.tol") <= 0:
        raise ConfigError("solver.tol must be positive")
    if int(solver["max_iter"]) < 1:
        raise ConfigError("solver.max_iter must be positive")
    if solver.get("rule", "hypothesis") not in ("hypothesis", "sharp"):
        raise ConfigError("solver.rule must be 'hypothesis' or 'sharp'")
    if "cfl" in solver and not 0 < _num(solver["cfl"], "solver.cfl") <= 1:
        raise ConfigError("solver.cfl must lie in (0, 1]")
    cfg = ExperimentConfig(
        mode=mode, problem=dict(raw["problem"]), domain=dict(raw["domain"]), seed=seed,
        output=str(raw.get("output", "output")), name=str(raw.get("name", "experiment")), solver=solver,
        **{k: dict(raw.get(k, {})) for k in ("stationary", "time", "state_constraint", "metric", "verify", "sweep")},
    )
    if mode == "metric":
        mus = np.atleast_1d(cfg.metric.get("mu", 1.0))
        if cfg.problem.get("delta", 0.0) != 0:
            raise ConfigError("metric mode needs problem.delta = 0")
        center = np.atleast_1d(cfg.metric.get("center", [0.0] * build_domain(cfg.domain).dim))
        try:
            Domain.annulus(build_domain(cfg.domain), center, 1.0)
        except GeometryError as exc:
            raise ConfigError(f"metric.center: {exc}") from None
        [_num(v, "metric.mu") for v in mus]
    if mode in ("stationary", "state-constraint", "verify") and not cfg.problem.get("delta", 0.0) > 0:
        raise ConfigError(f"{mode} mode needs problem.delta > 0")
    if mode == "time" and _num(cfg.time.get("T", 1.0), "time.T") <= 0:
        raise ConfigError("time.T must be positive")
    if mode == "sweep":
        if "key" not in cfg.sweep or "values" not in cfg.sweep:
            raise ConfigError("sweep mode needs sweep.key and sweep.values")
        if cfg.sweep.get("base_mode", "metric") not in MODES[:-1]:
            raise ConfigError("sweep.base_mode must be a non-sweep mode")
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate TOML experiment text; errors carry line or key context."""
    try:
        raw: dict[str, Any] = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    return validate(raw)
