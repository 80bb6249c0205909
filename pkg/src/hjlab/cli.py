"""Command-line driver: ``hjlab <subcommand> config.toml``.

Exit status: 0 when every enabled check passes, 2 when a check fails,
1 on operational errors (bad config, uncertified parameters, IO, instability).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, parse_config
from .runner import WORKERS_ENV, RunManifest, run

SUBCOMMANDS = {
    "solve-stationary": "stationary",
    "solve-time": "time",
    "state-constraint": "state-constraint",
    "metric": "metric",
    "verify": "verify",
    "sweep": "sweep",
}


def _scalar(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load(path: str, overrides: list[str], output: str | None) -> ExperimentConfig:
    cfg = parse_config(Path(path).read_text(encoding="utf-8"))
    for item in overrides:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        val = _scalar(val)
        if isinstance(val, (list, dict)):
            raise ConfigError(f"--set only overrides scalars ({key})")
        cfg = cfg.with_override(key, val)
    if output is not None:
        cfg = cfg.with_override("output", output)
    return cfg


def _report(directory: str) -> int:
    man = RunManifest.load(directory)
    root = Path(directory)
    missing = [f for f in man.files if not (root / f).exists()]
    for f in sorted((root / "reports").glob("*.json")) if (root / "reports").exists() else []:
        d = json.loads(f.read_text())
        status = "PASS" if d["pass"] else "FAIL"
        print(f"[{status}] {d['check']}: measured={d['measured']} expected={d['expected']} tol={d['tolerance']}")
    print(f"config {man.config_digest[:12]}  version {man.tool_version}  files {len(man.files)}  "
          f"overall {'PASS' if man.passed else 'FAIL'}")
    if missing:
        print(f"missing files: {missing}", file=sys.stderr)
        return 1
    return 0 if man.passed else 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjlab", description="Monotone finite-difference experiments for "
                                 "viscous Hamilton-Jacobi equations with superlinear growth.",
                                 epilog=f"Set {WORKERS_ENV} to the number of worker processes for sweeps.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, mode in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run a {mode} experiment")
        p.add_argument("config", help="TOML experiment file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scalar config entry (dotted key)")
        p.add_argument("--output", help="output directory (overrides the config)")
    p = sub.add_parser("report", help="summarise a finished run directory")
    p.add_argument("directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        try:
            return _report(args.directory)
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    try:
        cfg = _load(args.config, args.set, args.output)
        mode = SUBCOMMANDS[args.command]
        if cfg.mode != mode:
            raise ConfigError(f"config mode {cfg.mode!r} does not match subcommand {args.command!r}")
        man = run(cfg)
    except Exception as exc:  # operational failure: report and exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for r in man.reports:
        status = "PASS" if r["pass"] else "FAIL"
        print(f"[{status}] {r['check']}: measured={r['measured']} expected={r['expected']} tol={r['tolerance']}")
    print(f"wrote {len(man.files)} files to {cfg.output}")
    return 0 if man.passed else 2


if __name__ == "__main__":
    sys.exit(main())
