"""Check reports with a stable JSON form."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if hasattr(obj, "describe"):
        return _plain(obj.describe())
    return obj


def digest(obj) -> str:
    """SHA-256 of the canonical JSON form (key order independent)."""
    if isinstance(obj, np.ndarray):
        h = hashlib.sha256(np.ascontiguousarray(obj, dtype=float).tobytes())
        h.update(str(obj.shape).encode())
        return h.hexdigest()
    text = json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class Report:
    """Outcome of one check: ``measured`` against ``expected`` within ``tolerance``."""

    check: str
    passed: bool
    measured: object = None
    expected: object = None
    tolerance: object = None
    inputs_digest: str = ""
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return bool(self.passed)

    def to_dict(self) -> dict:
        return _plain({
            "check": self.check,
            "inputs_digest": self.inputs_digest,
            "pass": bool(self.passed),
            "measured": self.measured,
            "expected": self.expected,
            "tolerance": self.tolerance,
            "details": self.details,
        })

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.check}: measured={self.measured} expected={self.expected} tol={self.tolerance}"
