"""Exact calculus of simple (step) functions on a finite measure space.

Every quantity here has a closed form on step functions: integral means,
the distribution function ``f_*(t) = |{|f| > t}|``, the decreasing
rearrangement ``f*`` and both sides of the layer-cake identity.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "StepFunction",
    "DistributionFunction",
    "Rearrangement",
    "CSVFormatError",
    "lp_mean",
    "lp_means",
    "distribution",
    "rearrangement",
    "layer_cake",
    "layer_cake_mean",
    "read_step_csv",
    "write_step_csv",
]

_MEASURE_RTOL = 1e-12


class CSVFormatError(ValueError):
    """Malformed input file; ``line`` is 1-based (header is line 1)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Finite simple function: atom ``i`` takes ``values[i]`` on a set of measure ``measures[i]``.

    Atoms are kept exactly as given (no merging of equal values), zero
    values included.
    """

    values: np.ndarray
    measures: np.ndarray
    total_measure: float

    def __init__(self, values, measures, total_measure: float | None = None):
        v = np.array(values, dtype=float).ravel()
        mu = np.array(measures, dtype=float).ravel()
        if v.size == 0:
            raise ValueError("a step function needs at least one atom")
        if v.shape != mu.shape:
            raise ValueError("values and measures must have the same length")
        if not np.all(np.isfinite(v)):
            raise ValueError("atom values must be finite")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise ValueError("atom measures must be finite and > 0")
        total = math.fsum(mu)
        if total_measure is None:
            total_measure = total
        total_measure = float(total_measure)
        if abs(total - total_measure) > _MEASURE_RTOL * total_measure:
            raise ValueError(
                f"atom measures sum to {total!r}, expected total_measure {total_measure!r}"
            )
        v.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "measures", mu)
        object.__setattr__(self, "total_measure", total_measure)

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[float, float]]) -> "StepFunction":
        atoms = list(atoms)
        return cls([a[0] for a in atoms], [a[1] for a in atoms])

    @property
    def n_atoms(self) -> int:
        return self.values.size

    @property
    def abs_values(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def scale(self, alpha: float) -> "StepFunction":
        return StepFunction(alpha * self.values, self.measures, self.total_measure)

    def __add__(self, other: "StepFunction") -> "StepFunction":
        # pointwise sum on a shared partition
        if not isinstance(other, StepFunction):
            return NotImplemented
        if other.n_atoms != self.n_atoms or not np.array_equal(self.measures, other.measures):
            raise ValueError("pointwise sum needs both functions on the same partition")
        return StepFunction(self.values + other.values, self.measures, self.total_measure)

    def __neg__(self) -> "StepFunction":
        return self.scale(-1.0)

    def merged(self) -> "StepFunction":
        """Copy with atoms of equal value merged (optional normalisation)."""
        uniq, inv = np.unique(self.values, return_inverse=True)
        mu = np.zeros(uniq.size)
        np.add.at(mu, inv, self.measures)
        return StepFunction(uniq, mu, self.total_measure)

    def __repr__(self) -> str:
        return f"StepFunction(n_atoms={self.n_atoms}, total_measure={self.total_measure:g})"


@dataclass(frozen=True, eq=False)
class DistributionFunction:
    """Right-continuous, nonincreasing ``t -> |{|f| > t}|`` of a step function.

    ``levels`` are the distinct ``|values|`` in increasing order and
    ``measures[k] = f_*(levels[k])``.  Below the smallest level the function
    equals ``total_measure``.
    """

    levels: np.ndarray
    measures: np.ndarray
    total_measure: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.levels, t, side="right") - 1
        out = np.where(idx < 0, self.total_measure, self.measures[np.maximum(idx, 0)])
        return out if out.ndim else float(out)

    def left_limits(self) -> np.ndarray:
        """``f_*(t-)`` at each level, i.e. ``|{|f| >= levels[k]}|``."""
        return np.concatenate(([self.total_measure], self.measures[:-1]))

    def same_as(self, other: "DistributionFunction") -> bool:
        return (
            np.array_equal(self.levels, other.levels)
            and np.array_equal(self.measures, other.measures)
            and self.total_measure == other.total_measure
        )


@dataclass(frozen=True, eq=False)
class Rearrangement:
    """Nonincreasing step function on ``[0, |Omega|)``: plateau ``k`` has
    length ``lengths[k]`` and value ``values[k]``."""

    lengths: np.ndarray
    values: np.ndarray

    @property
    def domain_length(self) -> float:
        return math.fsum(self.lengths)

    @property
    def breaks(self) -> np.ndarray:
        """Right endpoints of the plateaus."""
        return np.cumsum(self.lengths)

    def as_step_function(self) -> StepFunction:
        return StepFunction(self.values, self.lengths)

    def power_integral_from_zero(self, t, p: float) -> np.ndarray:
        """``int_0^t (f*)^p ds`` evaluated exactly, vectorised over ``t``."""
        t = np.asarray(t, dtype=float)
        ends = self.breaks
        starts = ends - self.lengths
        vp = self.values ** p
        cum = np.concatenate(([0.0], np.cumsum(vp * self.lengths)))
        k = np.searchsorted(ends, t, side="right")
        k = np.minimum(k, self.lengths.size - 1)
        full = cum[k]
        part = np.clip(t - starts[k], 0.0, self.lengths[k]) * vp[k]
        return full + part

    def power_integral_to_end(self, t, p: float) -> np.ndarray:
        """``int_t^{|Omega|} (f*)^p ds`` evaluated exactly."""
        t = np.asarray(t, dtype=float)
        vp = self.values ** p
        ends = self.breaks
        starts = ends - self.lengths
        tail = np.concatenate((np.cumsum((vp * self.lengths)[::-1])[::-1], [0.0]))
        k = np.searchsorted(ends, t, side="right")
        k = np.minimum(k, self.lengths.size - 1)
        part = np.clip(ends[k] - np.maximum(t, starts[k]), 0.0, self.lengths[k]) * vp[k]
        return np.where(t >= ends[-1], 0.0, tail[k + 1] + part)


def _sorted_by_abs_desc(f: StepFunction) -> np.ndarray:
    # stable, so ties keep input order and cumulative sums are reproducible
    return np.argsort(-np.abs(f.values), kind="stable")


def lp_means(f: StepFunction, ps) -> np.ndarray:
    """Vectorised ``lp_mean`` over an array of exponents ``ps >= 1``.

    Computed as ``max|v| * (sum (|v|/max|v|)^p mu / |Omega|)^(1/p)``, which is
    the log-sum-exp form of the mean and does not overflow for large ``p``.
    """
    ps = np.atleast_1d(np.asarray(ps, dtype=float))
    if np.any(~np.isfinite(ps)) or np.any(ps < 1):
        raise ValueError("exponents must be finite and >= 1")
    a = f.abs_values
    vmax = a.max()
    if vmax == 0:
        return np.zeros_like(ps)
    with np.errstate(divide="ignore"):
        logr = np.log(a / vmax)
    w = f.measures / f.total_measure
    terms = np.exp(np.multiply.outer(ps, logr)) * w
    s = terms.sum(axis=1)
    return vmax * s ** (1.0 / ps)


def lp_mean(f: StepFunction, p: float) -> float:
    """``(1/|Omega| int |f|^p)^(1/p)`` for ``p >= 1``."""
    return float(lp_means(f, [p])[0])


def distribution(f: StepFunction) -> DistributionFunction:
    order = _sorted_by_abs_desc(f)
    a = np.abs(f.values)[order]
    mu = f.measures[order]
    # measure of {|f| >= a[i]} accumulated in descending order
    cum = np.cumsum(mu)
    last_of_level = np.r_[a[1:] != a[:-1], True]
    lv = a[last_of_level][::-1]
    ge = cum[last_of_level][::-1]
    # f_*(level_k) = |{|f| > level_k}| = |{|f| >= level_{k+1}}|
    gt = np.r_[ge[1:], 0.0]
    return DistributionFunction(lv, gt, f.total_measure)


def rearrangement(f: StepFunction) -> Rearrangement:
    order = _sorted_by_abs_desc(f)
    return Rearrangement(f.measures[order].copy(), np.abs(f.values)[order])


def layer_cake(f: StepFunction, s: float) -> tuple[float, float]:
    """Both sides of ``int |f|^s = s int_0^inf t^(s-1) f_*(t) dt``.

    The right side integrates the distribution function piecewise in closed
    form: on ``[t_k, t_{k+1})`` it contributes ``(t_{k+1}^s - t_k^s) f_*(t_k)``.
    """
    if not s >= 1:
        raise ValueError("layer cake exponent must be >= 1")
    lhs = math.fsum(np.abs(f.values) ** s * f.measures)
    d = distribution(f)
    t = np.concatenate(([0.0], d.levels))
    t = np.unique(t)
    vals = d(t[:-1])
    rhs = math.fsum((t[1:] ** s - t[:-1] ** s) * vals)
    return lhs, rhs


def layer_cake_mean(f: StepFunction, s: float) -> tuple[float, float]:
    """``layer_cake`` divided by ``|Omega|`` (integral-mean form)."""
    lhs, rhs = layer_cake(f, s)
    return lhs / f.total_measure, rhs / f.total_measure


def read_step_csv(source) -> StepFunction:
    """Parse ``value,measure`` CSV (path or text stream) into a StepFunction."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="") as fh:
            return _parse_step_csv(fh)
    return _parse_step_csv(source)


def _parse_step_csv(fh) -> StepFunction:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["value", "measure"]:
        raise CSVFormatError("expected header 'value,measure'", 1)
    values, measures = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise CSVFormatError(f"expected 2 fields, got {len(row)}", lineno)
        try:
            v, m = float(row[0]), float(row[1])
        except ValueError:
            raise CSVFormatError(f"non-numeric field in {row!r}", lineno) from None
        if not math.isfinite(v):
            raise CSVFormatError("value must be finite", lineno)
        if not (math.isfinite(m) and m > 0):
            raise CSVFormatError(f"measure must be positive, got {row[1].strip()!r}", lineno)
        values.append(v)
        measures.append(m)
    if not values:
        raise CSVFormatError("no atoms found", None)
    return StepFunction(values, measures)


def write_step_csv(f: StepFunction, dest=None) -> str:
    """Write ``value,measure`` CSV; returns the text, also written to ``dest`` if given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["value", "measure"])
    for v, m in zip(f.values, f.measures):
        w.writerow([repr(float(v)), repr(float(m))])
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    return text
