"""Analytic test functions, their step discretisations and closed-form oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .measure_core import StepFunction

__all__ = [
    "AnalyticFunctionSpec",
    "discretize",
    "exact_moment",
    "exact_distribution",
    "graded_edges",
    "parse_gen_spec",
    "analytic_corpus",
    "shared_partition_pairs",
    "sample_uniform",
]

KINDS = ("log_power", "power", "constant", "indicator", "random_step")
GRADING_RATIO = 0.9


@dataclass(frozen=True)
class AnalyticFunctionSpec:
    """Named test function on an interval, discretised into ``n`` cells.

    ``params`` by kind: log_power ``theta``; power ``alpha``; constant ``c``;
    indicator ``a``, ``b``; random_step ``seed``.
    """

    kind: str
    n: int
    params: dict = field(default_factory=dict)
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("resolution n must be an integer >= 2")
        lo, hi = self.domain
        if not hi - lo > 0:
            raise ValueError("domain length must be positive")
        need = {
            "log_power": ("theta",),
            "power": ("alpha",),
            "constant": ("c",),
            "indicator": ("a", "b"),
            "random_step": ("seed",),
        }[self.kind]
        missing = [k for k in need if k not in self.params]
        if missing:
            raise ValueError(f"{self.kind} needs parameter(s) {missing}")
        if self.kind == "log_power" and not 0 < self.params["theta"] <= 1:
            raise ValueError("log_power needs theta in (0, 1]")
        if self.kind == "indicator" and not self.params["a"] < self.params["b"]:
            raise ValueError("indicator needs a < b")

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    @property
    def singular(self) -> bool:
        return self.kind == "log_power" or (self.kind == "power" and self.params["alpha"] < 0)

    def label(self) -> str:
        ps = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}:{ps},n={self.n}"

    def refined(self, factor: int = 2) -> "AnalyticFunctionSpec":
        return AnalyticFunctionSpec(self.kind, self.n * factor, dict(self.params), self.domain)


def graded_edges(n: int, ratio: float = GRADING_RATIO, floor_power: float = 6.0) -> np.ndarray:
    """Cell edges on ``[0, 1]`` graded geometrically toward 0.

    Layout: one cell ``[0, x_min]``, then geometric cells (each ``ratio`` times
    the next one up) until their width matches a uniform spacing ``h``, then
    uniform cells of width ``h`` up to 1.  ``x_min`` is about ``h**floor_power``,
    so it shrinks as ``n`` grows.
    """
    if n < 2:
        raise ValueError("need at least 2 cells")
    grow = 1.0 / ratio
    h0 = 1.0 / n
    x_floor = max(h0 ** floor_power, 1e-280)
    crossover = h0 / (1.0 - ratio)
    n_geo = max(0, math.ceil(math.log(crossover / x_floor) / math.log(grow)))
    n_geo = min(n_geo, (n - 1) // 2)
    n_uni = n - 1 - n_geo
    h = 1.0 / (n_uni + ratio / (1.0 - ratio))
    x_g = 1.0 - n_uni * h
    uni = x_g + h * np.arange(n_uni + 1)
    uni[-1] = 1.0
    geo = x_g * ratio ** np.arange(n_geo, 0, -1)
    return np.concatenate(([0.0], geo, uni))


def _cell_edges(spec: AnalyticFunctionSpec, floor_power: float = 6.0) -> np.ndarray:
    lo, hi = spec.domain
    if spec.singular:
        unit = graded_edges(spec.n, floor_power=floor_power)
    elif spec.kind == "random_step":
        rng = np.random.default_rng(spec.params["seed"])
        w = rng.uniform(0.5, 1.5, size=spec.n)
        unit = np.concatenate(([0.0], np.cumsum(w) / w.sum()))
        unit[-1] = 1.0
    else:
        unit = np.linspace(0.0, 1.0, spec.n + 1)
    return lo + (hi - lo) * unit


def _evaluate(spec: AnalyticFunctionSpec, x: np.ndarray) -> np.ndarray:
    # x is in unit coordinates (0, 1)
    k, p = spec.kind, spec.params
    if k == "log_power":
        return (-np.log(x)) ** p["theta"]
    if k == "power":
        return x ** p["alpha"]
    if k == "constant":
        return np.full_like(x, float(p["c"]))
    raise AssertionError(k)


def discretize(spec: AnalyticFunctionSpec) -> StepFunction:
    """Step function: ``n`` cells, value = function at the cell midpoint.

    Singular kinds (log_power, negative powers) use cells graded toward the
    left endpoint; the function is evaluated in unit coordinates
    ``(x - lo) / (hi - lo)``.  If the first cell's midpoint value overflows,
    the first cell is widened (coarser floor) until it does not.
    """
    lo, hi = spec.domain
    if spec.kind == "indicator":
        edges = _cell_edges(spec)
        mids = 0.5 * (edges[:-1] + edges[1:])
        vals = ((mids >= spec.params["a"]) & (mids <= spec.params["b"])).astype(float)
        return StepFunction(vals, np.diff(edges), spec.length)
    if spec.kind == "random_step":
        edges = _cell_edges(spec)
        rng = np.random.default_rng(spec.params["seed"])
        rng.uniform(size=spec.n)  # consumed by the cell widths
        vals = rng.normal(size=spec.n) * rng.uniform(0.1, 3.0)
        return StepFunction(vals, np.diff(edges), spec.length)
    for floor_power in (6.0, 5.0, 4.0, 3.0, 2.0, 1.5, 1.0):
        edges = _cell_edges(spec, floor_power)
        unit = (edges - lo) / (hi - lo)
        with np.errstate(over="ignore", divide="ignore"):
            vals = _evaluate(spec, 0.5 * (unit[:-1] + unit[1:]))
        if np.all(np.isfinite(vals)):
            return StepFunction(vals, np.diff(edges), spec.length)
    raise ValueError(f"{spec.label()}: function overflows on every admissible grid")


def sample_uniform(spec: AnalyticFunctionSpec):
    """Values at the midpoints of ``n`` equal cells: returns ``(x, h, values)``.

    Used to put corpus functions on the uniform grids of the operator code.
    Singular kinds are sampled as is, so the first value is large but finite.
    """
    lo, hi = spec.domain
    h = spec.length / spec.n
    x = lo + h * (np.arange(spec.n) + 0.5)
    if spec.kind == "indicator":
        a, b = spec.params["a"], spec.params["b"]
        vals = ((x >= a) & (x <= b)).astype(float)
    elif spec.kind == "random_step":
        rng = np.random.default_rng(spec.params["seed"])
        vals = rng.normal(size=spec.n) * rng.uniform(0.1, 3.0)
    else:
        vals = _evaluate(spec, (x - lo) / (hi - lo))
    return x, h, vals


def exact_moment(spec: AnalyticFunctionSpec, m: float) -> float:
    """Integral mean of ``f**m`` for ``f = (-ln x)**theta``: ``Gamma(m*theta + 1)``."""
    if spec.kind != "log_power":
        raise ValueError("exact_moment is only defined for log_power")
    if not m > 0:
        raise ValueError("moment order must be positive")
    return float(np.exp(gammaln(m * spec.params["theta"] + 1.0)))


def exact_distribution(spec: AnalyticFunctionSpec, t):
    """Closed-form ``|{|f| > t}|`` for log_power, indicator and constant kinds."""
    t = np.asarray(t, dtype=float)
    L = spec.length
    if spec.kind == "log_power":
        th = spec.params["theta"]
        out = L * np.exp(-np.maximum(t, 0.0) ** (1.0 / th))
    elif spec.kind == "indicator":
        lo, hi = spec.domain
        a, b = max(spec.params["a"], lo), min(spec.params["b"], hi)
        out = np.where(t < 1.0, max(b - a, 0.0), 0.0)
    elif spec.kind == "constant":
        c = abs(spec.params["c"])
        out = np.where(t < c, L, 0.0)
    else:
        raise ValueError(f"no closed-form distribution for kind {spec.kind!r}")
    return out if out.ndim else float(out)


def _num(text: str):
    x = float(text)
    return int(x) if x.is_integer() and "." not in text and "e" not in text.lower() else x


def parse_gen_spec(text: str) -> AnalyticFunctionSpec:
    """Parse ``kind:key=value,...`` (e.g. ``log_power:theta=1,n=100000``).

    ``lo`` and ``hi`` set the domain; ``n`` the resolution (default 1000).
    """
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    params: dict = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"bad generator parameter {item!r} (expected key=value)")
        try:
            params[key.strip()] = _num(val.strip())
        except ValueError:
            raise ValueError(f"non-numeric generator parameter {item!r}") from None
    n = int(float(params.pop("n", 1000)))
    lo = float(params.pop("lo", 0.0))
    hi = float(params.pop("hi", 1.0))
    if kind == "random_step":
        params["seed"] = int(params.get("seed", 0))
    return AnalyticFunctionSpec(kind, n, params, (lo, hi))


def analytic_corpus(n: int = 20000, include_unbounded_powers: bool = True) -> list[AnalyticFunctionSpec]:
    """Fixed corpus of test functions at resolution ``n``."""
    specs = [
        AnalyticFunctionSpec("log_power", n, {"theta": 1.0}),
        AnalyticFunctionSpec("log_power", n, {"theta": 0.5}),
        AnalyticFunctionSpec("log_power", n, {"theta": 0.25}),
        AnalyticFunctionSpec("power", n, {"alpha": 0.5}),
        AnalyticFunctionSpec("power", n, {"alpha": 2.0}),
        AnalyticFunctionSpec("constant", n, {"c": 3.0}),
        AnalyticFunctionSpec("indicator", n, {"a": 0.0, "b": 0.3}),
        AnalyticFunctionSpec("random_step", n, {"seed": 1}),
        AnalyticFunctionSpec("random_step", n, {"seed": 2}),
    ]
    if include_unbounded_powers:
        specs += [
            AnalyticFunctionSpec("power", n, {"alpha": -0.25}),
            AnalyticFunctionSpec("power", n, {"alpha": -0.5}),
        ]
    return specs


def shared_partition_pairs(n_pairs: int, n_atoms: int = 64, seed: int = 0):
    """Yield ``(f, g)`` pairs of random step functions sharing one partition per pair."""
    rng = np.random.default_rng(seed)
    for _ in range(n_pairs):
        mu = rng.uniform(0.1, 1.0, size=n_atoms)
        scale_f, scale_g = rng.lognormal(0.0, 1.0, size=2)
        f = rng.standard_cauchy(size=n_atoms) * scale_f
        g = rng.normal(size=n_atoms) * scale_g
        # occasionally zero out blocks so supports differ
        if rng.random() < 0.3:
            f[rng.random(n_atoms) < 0.5] = 0.0
        yield StepFunction(f, mu), StepFunction(g, mu)
