"""Check records, suite reports and their JSON/CSV serialisation."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__

__all__ = ["Check", "SuiteReport", "to_jsonable", "write_atomic"]


@dataclass
class Check:
    """One verified inequality: pass iff ``observed <= bound`` (slack = bound - observed)."""

    name: str
    passed: bool
    observed: float = math.nan
    bound: float = math.nan
    detail: str = ""

    @classmethod
    def le(cls, name: str, observed: float, bound: float, detail: str = "") -> "Check":
        return cls(name, bool(observed <= bound), float(observed), float(bound), detail)

    @property
    def slack(self) -> float:
        return self.bound - self.observed

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "status": self.status,
            "observed": self.observed,
            "bound": self.bound,
            "slack": self.slack,
        }
        if self.detail:
            d["detail"] = self.detail
        return to_jsonable(d)


@dataclass
class SuiteReport:
    suite: str
    checks: list[Check] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self, timestamp: bool = True) -> dict:
        prov = {"version": __version__, **self.provenance}
        d = {
            "suite": self.suite,
            "overall_pass": self.passed,
            "n_checks": len(self.checks),
            "n_failed": len(self.failures()),
            "checks": [c.to_dict() for c in self.checks],
            "results": to_jsonable(self.results),
            "provenance": to_jsonable(prov),
        }
        if timestamp:
            d["timestamp"] = datetime.now(timezone.utc).isoformat()
        return d

    def to_json(self, timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(timestamp), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["suite", "name", "status", "observed", "bound", "slack"])
        for c in self.checks:
            w.writerow([self.suite, c.name, c.status, repr(c.observed), repr(c.bound), repr(c.slack)])
        return buf.getvalue()


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file in the same directory and rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
