"""Weights, Muckenhoupt/doubling constants, weighted grand norms and the
maximal and Calderon-Zygmund operators on uniform grids."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .measure_core import CSVFormatError
from .norms import DEFAULT_REL_TOL, NormReport, PGrid
from .reports import Check, SuiteReport

__all__ = [
    "GridFunction",
    "Weight",
    "KernelSpec",
    "ApReport",
    "read_grid_csv",
    "write_grid_csv",
    "dyadic_levels",
    "doubling_constant",
    "ap_constant",
    "weighted_lp_norm",
    "weighted_lp_norms",
    "weighted_grand_norm",
    "maximal_operator",
    "cz_apply",
    "operator_norm_estimate",
]

SPACING_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples on a uniform 1D or 2D grid; sample ``i`` sits at ``origin + i*h``
    and stands for a cell of volume ``h**dim``."""

    samples: np.ndarray
    h: float
    origin: tuple = (0.0,)

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim not in (1, 2):
            raise ValueError("grid functions are 1D or 2D")
        if min(s.shape) < 4:
            raise ValueError("need at least 4 points per axis")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        if not self.h > 0:
            raise ValueError("spacing h must be positive")
        origin = tuple(float(o) for o in np.atleast_1d(self.origin))
        if len(origin) == 1 and s.ndim == 2:
            origin = origin * 2
        if len(origin) != s.ndim:
            raise ValueError("origin must have one coordinate per axis")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "h", float(self.h))

    @property
    def dim(self) -> int:
        return self.samples.ndim

    @property
    def shape(self) -> tuple:
        return self.samples.shape

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    def axis(self, k: int = 0) -> np.ndarray:
        return self.origin[k] + self.h * np.arange(self.shape[k])

    def coords(self):
        if self.dim == 1:
            return self.axis(0)
        return np.meshgrid(self.axis(0), self.axis(1), indexing="ij")

    def with_samples(self, samples) -> "GridFunction":
        return GridFunction(samples, self.h, self.origin)

    def same_grid(self, other: "GridFunction") -> bool:
        return (
            self.shape == other.shape
            and abs(self.h - other.h) <= SPACING_ATOL
            and all(abs(a - b) <= SPACING_ATOL for a, b in zip(self.origin, other.origin))
        )

    @classmethod
    def from_function(cls, func, lo, hi, n: int, cell_centered: bool = False):
        """Sample ``func`` on ``n`` points of ``[lo, hi]`` (1D).

        With ``cell_centered`` the interval is cut into ``n`` cells sampled at
        their midpoints, so endpoints are never evaluated.
        """
        if cell_centered:
            h = (hi - lo) / n
            x = lo + h * (np.arange(n) + 0.5)
        else:
            h = (hi - lo) / (n - 1)
            x = lo + h * np.arange(n)
        return cls(func(x), h, (float(x[0]),))


class Weight(GridFunction):
    """Grid function with strictly positive samples."""

    def __post_init__(self):
        super().__post_init__()
        if not np.all(self.samples > 0):
            raise ValueError("weight samples must be strictly positive")

    @classmethod
    def uniform_like(cls, f: GridFunction) -> "Weight":
        return cls(np.ones(f.shape), f.h, f.origin)


def _as_weight(g: GridFunction) -> Weight:
    return g if isinstance(g, Weight) else Weight(g.samples, g.h, g.origin)


def _read_rows(fh, ncols):
    reader = csv.reader(fh)
    header = next(reader, None)
    expected = ["x", "value"] if ncols == 2 else ["x", "y", "value"]
    if header is None:
        raise CSVFormatError("empty file", 1)
    header = [c.strip() for c in header]
    if header != expected:
        raise CSVFormatError(f"expected header {','.join(expected)!r}", 1)
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != ncols:
            raise CSVFormatError(f"expected {ncols} fields, got {len(row)}", lineno)
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise CSVFormatError(f"non-numeric field in {row!r}", lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise CSVFormatError("non-finite field", lineno)
        rows.append((lineno, vals))
    return rows


def _check_spacing(axis_vals, lines, what):
    d = np.diff(axis_vals)
    h = d[0] if d.size else 0.0
    if not h > 0:
        raise CSVFormatError(f"{what} coordinates must be strictly increasing", lines[1] if len(lines) > 1 else None)
    bad = np.nonzero(np.abs(d - h) > SPACING_ATOL)[0]
    if bad.size:
        raise CSVFormatError(f"non-uniform {what} spacing", lines[bad[0] + 1])
    return float(h)


def read_grid_csv(source, dim: int | None = None, weight: bool = False) -> GridFunction:
    """Read ``x,value`` (1D) or ``x,y,value`` (2D, row-major, x outer) CSV.

    ``dim`` is inferred from the header when not given.  With ``weight`` the
    result is a :class:`Weight` and non-positive samples are reported by line.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="") as fh:
            return read_grid_csv(fh, dim, weight)
    text = source.read()
    first = text.splitlines()[0] if text else ""
    if dim is None:
        dim = 2 if [c.strip() for c in first.split(",")][:2] == ["x", "y"] else 1
    import io

    rows = _read_rows(io.StringIO(text), dim + 1)
    if len(rows) < 4:
        raise CSVFormatError("need at least 4 grid points per axis")
    lines = [r[0] for r in rows]
    data = np.array([r[1] for r in rows])
    if weight:
        nonpos = np.nonzero(data[:, -1] <= 0)[0]
        if nonpos.size:
            raise CSVFormatError("weight values must be positive", lines[nonpos[0]])
    if dim == 1:
        h = _check_spacing(data[:, 0], lines, "x")
        g = GridFunction(data[:, 1], h, (data[0, 0],))
    else:
        xs = np.unique(data[:, 0])
        ys = np.unique(data[:, 1])
        nx, ny = xs.size, ys.size
        if nx * ny != len(rows):
            raise CSVFormatError(f"expected {nx}x{ny}={nx * ny} rows for a full grid, got {len(rows)}")
        xg = data[:, 0].reshape(nx, ny)
        yg = data[:, 1].reshape(nx, ny)
        if not (np.all(xg == xs[:, None]) and np.all(yg == ys[None, :])):
            raise CSVFormatError("2D grid rows must be row-major (x outer, y inner)")
        hx = _check_spacing(xs, lines[::ny], "x")
        hy = _check_spacing(ys, lines[:ny], "y")
        if abs(hx - hy) > SPACING_ATOL:
            raise CSVFormatError("x and y spacings differ")
        g = GridFunction(data[:, 2].reshape(nx, ny), hx, (xs[0], ys[0]))
    return _as_weight(g) if weight else g


def write_grid_csv(g: GridFunction, dest=None) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if g.dim == 1:
        w.writerow(["x", "value"])
        for x, v in zip(g.axis(0), g.samples):
            w.writerow([repr(float(x)), repr(float(v))])
    else:
        w.writerow(["x", "y", "value"])
        ys = g.axis(1)
        for i, x in enumerate(g.axis(0)):
            for j, y in enumerate(ys):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(g.samples[i, j]))])
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    return text


@dataclass(frozen=True)
class KernelSpec:
    """Convolution kernel ``K``: ``hilbert`` is ``1/(pi x)``; ``custom_power`` is
    ``c * sign(x)**odd * |x|**-exponent``.  ``C_K`` is the constant of the size
    and smoothness bounds ``|K| <= C_K/|x|^n``, ``|K'| <= C_K/|x|^(n+1)``."""

    kind: str = "hilbert"
    C_K: float | None = None
    c: float = 1.0
    exponent: float = 1.0
    odd: bool = True

    def __post_init__(self):
        if self.kind not in ("hilbert", "custom_power"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.C_K is None:
            ck = 1.0 / math.pi if self.kind == "hilbert" else abs(self.c) * max(1.0, self.exponent)
            object.__setattr__(self, "C_K", ck)
        if not self.C_K > 0:
            raise ValueError("C_K must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "hilbert":
            return 1.0 / (math.pi * x)
        mag = self.c * np.abs(x) ** (-self.exponent)
        return np.sign(x) * mag if self.odd else mag

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "hilbert":
            return -1.0 / (math.pi * x * x)
        a = self.exponent
        d = -a * self.c * np.abs(x) ** (-a - 1.0)
        return d if self.odd else np.sign(x) * d

    def validate(self, dim: int = 1) -> None:
        """Sample the size/smoothness bounds; raise ``ValueError`` on failure."""
        if self.kind == "custom_power" and not self.odd and self.exponent >= dim:
            raise ValueError("even kernel with non-integrable singularity: principal value undefined")
        x = np.geomspace(1e-6, 1e6, 241)
        x = np.concatenate((-x[::-1], x))
        tol = 1 + 1e-12
        size = np.abs(self(x)) * np.abs(x) ** dim
        grad = np.abs(self.derivative(x)) * np.abs(x) ** (dim + 1)
        if np.any(size > self.C_K * tol) or np.any(grad > self.C_K * tol):
            raise ValueError(
                f"kernel violates |K| <= C_K/|x|^{dim} or |K'| <= C_K/|x|^{dim + 1} "
                f"(max {size.max():.3g}, {grad.max():.3g} vs C_K={self.C_K:.3g})"
            )


@dataclass
class ApReport:
    p: float
    constant: float
    diverging: bool
    levels: list
    per_level: list = field(default_factory=list)
    cube_cells: list = field(default_factory=list)
    per_resolution: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "constant": self.constant,
            "diverging": self.diverging,
            "levels": list(self.levels),
            "per_level": list(self.per_level),
            "cube_cells": list(self.cube_cells),
            "per_resolution": list(self.per_resolution),
        }


def dyadic_levels(shape, min_cells: int = 2) -> list[int]:
    """Levels ``l >= 0`` whose cubes have side ``min(shape) >> l >= min_cells`` cells."""
    n = min(shape)
    return [l for l in range(64) if (n >> l) >= min_cells]


def _blocks(a: np.ndarray, m: int) -> np.ndarray:
    """Non-overlapping aligned cubes of side ``m``, flattened to ``(n_cubes, m**dim)``."""
    if a.ndim == 1:
        k = a.size // m
        return a[: k * m].reshape(k, m)
    kx, ky = a.shape[0] // m, a.shape[1] // m
    b = a[: kx * m, : ky * m].reshape(kx, m, ky, m).transpose(0, 2, 1, 3)
    return b.reshape(kx * ky, m * m)


def _log_mean_exp(x: np.ndarray) -> np.ndarray:
    mx = x.max(axis=1)
    return mx + np.log(np.mean(np.exp(x - mx[:, None]), axis=1))


def _coarsen(a: np.ndarray, c: int) -> np.ndarray:
    """Average ``c``-cell (or ``c x c``) blocks: the weight seen at ``1/c`` resolution."""
    if c == 1:
        return a
    if a.ndim == 1:
        return a.reshape(-1, c).mean(axis=1)
    return a.reshape(a.shape[0] // c, c, a.shape[1] // c, c).mean(axis=(1, 3))


def _ap_max(a: np.ndarray, p: float, sides) -> tuple[float, list]:
    e = 1.0 - p / (p - 1.0)
    loga = np.log(a)
    per = []
    for m in sides:
        lb = _blocks(loga, m)
        log_a = _log_mean_exp(lb) + (p - 1.0) * _log_mean_exp(e * lb)
        with np.errstate(over="ignore"):
            per.append(float(np.exp(log_a.max())))
    return max(per), per


def ap_constant(w: GridFunction, p: float, levels=None, refinements: int = 3,
                divergence_factor: float = 2.0) -> ApReport:
    """Max over dyadic cubes of ``mean_Q(w) * mean_Q(w^(1-p'))^(p-1)``.

    The conjugate-power mean is taken in log form so extreme weights do not
    overflow.  To detect blow-up from a single sampled weight, the same cube
    family is scanned at ``refinements`` resolutions: the weight averaged over
    blocks of ``2**(refinements-1)``, ..., 2, 1 cells.  Averaging preserves
    ``mean_Q(w)`` and, by Jensen, can only lower the other factor, so the
    per-resolution maxima are nondecreasing.  ``diverging`` is set when the
    finest maximum is at least ``divergence_factor`` times the one two
    resolutions coarser.  ``constant`` is the finest-resolution maximum.
    """
    if not p > 1:
        raise ValueError("A_p needs p > 1")
    if refinements < 1:
        raise ValueError("refinements must be >= 1")
    w = _as_weight(w)
    c = 2 ** (refinements - 1)
    nc = min(w.shape) // c
    if nc < 1:
        raise ValueError("grid too small for the requested refinements")
    trimmed = w.samples[tuple(slice(0, (s // c) * c) for s in w.shape)]
    all_levels = [l for l in range(64) if (nc >> l) >= 1]
    levels = all_levels if levels is None else sorted(l for l in levels if l in all_levels)
    if not levels:
        raise ValueError("no dyadic level fits inside the grid")
    sides = [(nc >> l) * c for l in levels]  # in finest cells
    per_res = []
    per_level = []
    for k in range(refinements - 1, -1, -1):
        f = 2**k
        mx, per = _ap_max(_coarsen(trimmed, f), p, [m // f for m in sides])
        per_res.append(mx)
        per_level = per
    diverging = bool(len(per_res) >= 3 and per_res[-1] >= divergence_factor * per_res[-3])
    rep = ApReport(p, per_res[-1], diverging, levels, per_level, sides)
    rep.per_resolution = per_res
    return rep


def _box_sum(prefix: np.ndarray, lo, hi) -> float:
    if prefix.ndim == 1:
        return prefix[hi[0]] - prefix[lo[0]]
    return prefix[hi[0], hi[1]] - prefix[lo[0], hi[1]] - prefix[hi[0], lo[1]] + prefix[lo[0], lo[1]]


def doubling_constant(w: GridFunction, levels=None):
    """``max w(2Q)/w(Q)`` over dyadic cubes whose doubles fit in the grid.

    Returns ``(constant, witness)`` with the witnessing cube's index range.
    Integrals are midpoint sums; cubes whose double leaves the grid are skipped.
    """
    w = _as_weight(w)
    a = w.samples
    if a.ndim == 1:
        prefix = np.concatenate(([0.0], np.cumsum(a)))
    else:
        prefix = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
        prefix[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    n = min(a.shape)
    levels = dyadic_levels(a.shape) if levels is None else levels
    best, witness = -math.inf, None
    for lev in levels:
        m = n >> lev
        if m < 2 or m % 2:
            continue
        half = m // 2
        starts = [range(0, s - m + 1, m) for s in a.shape]
        grids = np.meshgrid(*[np.array(list(r)) for r in starts], indexing="ij")
        for lo in zip(*(g.ravel() for g in grids)):
            lo2 = tuple(x - half for x in lo)
            hi = tuple(x + m for x in lo)
            hi2 = tuple(x + half for x in hi)
            if min(lo2) < 0 or any(h > s for h, s in zip(hi2, a.shape)):
                continue
            r = _box_sum(prefix, lo2, hi2) / _box_sum(prefix, lo, hi)
            if r > best:
                best = float(r)
                witness = {"level": lev, "cube": [[int(x) for x in lo], [int(x) for x in hi]],
                           "double": [[int(x) for x in lo2], [int(x) for x in hi2]]}
    if witness is None:
        raise ValueError("no dyadic cube has its double inside the grid")
    return best, witness


def weighted_lp_norms(f: GridFunction, w: GridFunction, ps) -> np.ndarray:
    """``((1/w(Omega)) sum |f_i|^p w_i h^dim)^(1/p)`` for each ``p`` (overflow-safe)."""
    if not f.same_grid(w):
        raise ValueError("function and weight live on different grids")
    ps = np.atleast_1d(np.asarray(ps, dtype=float))
    a = np.abs(f.samples).ravel()
    vmax = a.max()
    if vmax == 0:
        return np.zeros_like(ps)
    ww = w.samples.ravel()
    ww = ww / ww.sum()
    with np.errstate(divide="ignore"):
        logr = np.log(a / vmax)
    s = (np.exp(np.multiply.outer(ps, logr)) * ww).sum(axis=1)
    return vmax * s ** (1.0 / ps)


def weighted_lp_norm(f: GridFunction, w: GridFunction, p: float) -> float:
    return float(weighted_lp_norms(f, w, [p])[0])


def weighted_grand_norm(
    f: GridFunction, w: GridFunction, theta: float, grid: PGrid | None = None, rel_tol: float = DEFAULT_REL_TOL
) -> NormReport:
    """``sup_p p^-theta * weighted_lp_norm(f, w, p)`` on ``grid``."""
    if not theta >= 0:
        raise ValueError("theta must be >= 0")
    grid = grid or PGrid()
    ps = grid.points()
    curve = ps ** (-theta) * weighted_lp_norms(f, w, ps)
    k = int(np.argmax(curve))
    value = float(curve[k])
    vmax = float(np.abs(f.samples).max())
    tail = grid.p_max ** (-theta) * vmax if theta > 0 else max(vmax - value, 0.0)
    return NormReport(value, float(ps[k]), tail, grid.describe(), tail <= rel_tol * value or value == 0, curve)


def maximal_operator(f: GridFunction, w: GridFunction | None = None, block: int = 512) -> GridFunction:
    """Weighted Hardy-Littlewood maximal function over all grid intervals.

    ``(M_w f)_i = max over intervals [a, b] containing i of
    sum_{a..b} |f_j| w_j / sum_{a..b} w_j``, exact over all O(n^2) intervals
    (processed in blocks of left endpoints).
    """
    if f.dim != 1:
        raise ValueError("maximal_operator is implemented for 1D grids")
    w = Weight.uniform_like(f) if w is None else _as_weight(w)
    if not f.same_grid(w):
        raise ValueError("function and weight live on different grids")
    af = np.abs(f.samples)
    ww = w.samples
    fw = af * ww
    n = af.size
    j = np.arange(n)
    out = af.copy()
    for a0 in range(0, n, block):
        a = np.arange(a0, min(a0 + block, n))
        valid = j[None, :] >= a[:, None]
        num = np.where(valid, fw[None, :], 0.0).cumsum(axis=1)
        den = np.where(valid, ww[None, :], 0.0).cumsum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = np.where(valid, num / den, -np.inf)
        # best right endpoint b >= i for each left endpoint a
        suffix = np.maximum.accumulate(avg[:, ::-1], axis=1)[:, ::-1]
        suffix = np.where(a[:, None] <= j[None, :], suffix, -np.inf)
        out = np.maximum(out, suffix.max(axis=0))
    return f.with_samples(out)


def cz_apply(f: GridFunction, kernel: KernelSpec | None = None) -> GridFunction:
    """Principal-value convolution ``(Tf)_i = sum_{j != i} K(x_i - x_j) f_j h``.

    Excluding the diagonal symmetrically realises the principal value for odd
    kernels.  Evaluated by FFT convolution.
    """
    if f.dim != 1:
        raise ValueError("cz_apply is implemented for 1D grids")
    kernel = kernel or KernelSpec()
    kernel.validate(1)
    n = f.shape[0]
    d = np.arange(-(n - 1), n) * f.h
    k = np.zeros(d.size)
    nz = d != 0
    k[nz] = kernel(d[nz])
    full = fftconvolve(f.samples, k, mode="full")
    return f.with_samples(full[n - 1 : 2 * n - 1] * f.h)


def operator_norm_estimate(op: str, w: GridFunction | None, theta: float, corpus, grid: PGrid | None = None,
                           kernel: KernelSpec | None = None, label: str = "") -> SuiteReport:
    """Empirical ratio ``||op f||_{theta,w} / ||f||_{theta,w}`` over a corpus.

    ``results`` holds the max ratio, the per-``p`` ratio curve (max over the
    corpus) and, for ``op="cz"``, the Holder check that the normalised weighted
    ``L^p`` means of ``Tf`` increase with ``p``.
    """
    if op not in ("maximal", "cz"):
        raise ValueError("op must be 'maximal' or 'cz'")
    corpus = list(corpus)
    if not corpus:
        raise ValueError("corpus is empty")
    grid = grid or PGrid()
    ps = grid.points()
    rep = SuiteReport(f"opnorm_{op}", provenance={"theta": theta, "grid": grid.describe(), "input": label})
    ratios, curves, skipped = [], [], 0
    holder_worst = 0.0
    for f in corpus:
        ww = Weight.uniform_like(f) if w is None else w
        nf = weighted_grand_norm(f, ww, theta, grid).value
        if nf == 0:
            skipped += 1
            continue
        g = maximal_operator(f, ww) if op == "maximal" else cz_apply(f, kernel)
        ng = weighted_grand_norm(g, ww, theta, grid).value
        ratios.append(ng / nf)
        cf = weighted_lp_norms(f, ww, ps)
        cg = weighted_lp_norms(g, ww, ps)
        curves.append(np.where(cf > 0, cg / np.where(cf > 0, cf, 1.0), 0.0))
        if op == "cz" and cg.max() > 0:
            drops = (cg[:-1] - cg[1:]) / cg.max()
            holder_worst = max(holder_worst, float(drops.max()))
    if not ratios:
        raise ValueError("every corpus entry has zero norm")
    max_ratio = max(ratios)
    rep.add(Check("ratio_finite", bool(math.isfinite(max_ratio)), max_ratio, math.inf))
    if op == "cz":
        rep.add(Check.le("holder_monotone_means", holder_worst, 1e-12,
                         "normalised weighted L^p means of Tf nondecreasing in p"))
    curve = np.max(np.array(curves), axis=0)
    rep.results.update(
        max_ratio=max_ratio,
        ratios=ratios,
        per_p_exponents=ps,
        per_p_ratio=curve,
        skipped_zero_norm=skipped,
    )
    if skipped:
        rep.results["notice"] = f"{skipped} zero-norm corpus entries skipped"
    return rep
