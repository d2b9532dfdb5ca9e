"""Weak monotonicity on 2D grids, a discrete p-Laplacian relaxation, and
grand Sobolev norms of grid functions."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .measure_core import CSVFormatError, StepFunction
from .norms import DEFAULT_REL_TOL, NormReport, PGrid, grand_theta_infty_norm
from .weighted_ops import GridFunction

__all__ = [
    "Ball",
    "BoundaryData",
    "MonotoneReport",
    "RelaxResult",
    "oscillation",
    "weak_monotone_check",
    "relax_p",
    "p_energy",
    "grand_sobolev_norm",
    "read_boundary_csv",
]

MONOTONE_RTOL = 1e-9


def _ring_offsets(r: int):
    k = np.arange(-r, r + 1)
    di, dj = np.meshgrid(k, k, indexing="ij")
    d = np.hypot(di, dj)
    ring = (d >= r - 1) & (d <= r)
    inner = d < r - 1
    return (di[ring], dj[ring]), (di[inner], dj[inner])


@dataclass(frozen=True)
class Ball:
    """Discrete ball: interior ``d < r-1``, boundary ring ``r-1 <= d <= r``
    (Euclidean distance in index units from ``center``)."""

    center: tuple
    radius: int
    boundary: tuple = field(repr=False, default=())
    interior: tuple = field(repr=False, default=())

    @classmethod
    def make(cls, center, radius: int, shape) -> "Ball":
        r = int(radius)
        if r < 1:
            raise ValueError("radius must be >= 1")
        ci, cj = int(center[0]), int(center[1])
        if ci - r < 0 or cj - r < 0 or ci + r >= shape[0] or cj + r >= shape[1]:
            raise ValueError(f"ball at {(ci, cj)} with radius {r} does not fit in grid {tuple(shape)}")
        (bi, bj), (ii, ij) = _ring_offsets(r)
        return cls((ci, cj), r, (bi + ci, bj + cj), (ii + ci, ij + cj))

    def mask(self, shape, which: str = "all") -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        if which in ("all", "boundary"):
            m[self.boundary] = True
        if which in ("all", "interior"):
            m[self.interior] = True
        return m


def _region_values(u: GridFunction, region) -> np.ndarray:
    a = u.samples
    if region is None:
        return a.ravel()
    if isinstance(region, Ball):
        return np.concatenate((a[region.boundary], a[region.interior]))
    if isinstance(region, np.ndarray) and region.dtype == bool:
        return a[region]
    return a[tuple(np.asarray(ix) for ix in region)]


def oscillation(u: GridFunction, region=None) -> float:
    """``max - min`` of ``u`` over ``region``: a Ball (boundary and interior),
    a boolean mask, an index tuple, or ``None`` for the whole grid."""
    v = _region_values(u, region)
    if v.size == 0:
        raise ValueError("oscillation over an empty region")
    return float(v.max() - v.min())


@dataclass
class MonotoneReport:
    passed: bool
    n_balls: int
    tol: float
    violation: dict | None = None

    def to_dict(self) -> dict:
        return {"passed": self.passed, "n_balls": self.n_balls, "tol": self.tol, "violation": self.violation}


def weak_monotone_check(u: GridFunction, radii=None, rtol: float = MONOTONE_RTOL) -> MonotoneReport:
    """Check ``min_ring u <= u <= max_ring u`` on the interior of every discrete
    ball that fits in the grid.

    The slack is ``rtol`` times the oscillation of ``u`` over the grid, so the
    verdict does not change under ``u -> a*u + b`` with ``a > 0``.  Reports the
    first violation in (radius, row, column) order.
    """
    if u.dim != 2:
        raise ValueError("weak_monotone_check needs a 2D grid")
    a = u.samples
    nx, ny = a.shape
    tol = rtol * float(a.max() - a.min())
    rmax = (min(nx, ny) - 1) // 2
    radii = range(2, rmax + 1) if radii is None else sorted(int(r) for r in radii)
    n_balls = 0
    for r in radii:
        if r < 2 or r > rmax:
            continue
        (bi, bj), (ii, ij) = _ring_offsets(r)
        cx = slice(r, nx - r)
        cy = slice(r, ny - r)
        shifted = lambda di, dj: a[r + di : nx - r + di, r + dj : ny - r + dj]
        lo = np.min([shifted(di, dj) for di, dj in zip(bi, bj)], axis=0)
        hi = np.max([shifted(di, dj) for di, dj in zip(bi, bj)], axis=0)
        n_balls += lo.size
        for di, dj in zip(ii, ij):
            v = shifted(di, dj)
            bad = (v < lo - tol) | (v > hi + tol)
            if bad.any():
                k = np.flatnonzero(bad)[0]
                ci, cj = np.unravel_index(k, bad.shape)
                ci, cj = int(ci) + cx.start, int(cj) + cy.start
                val = float(v.flat[k])
                return MonotoneReport(False, n_balls, tol, {
                    "center": [ci, cj],
                    "radius": int(r),
                    "point": [ci + int(di), cj + int(dj)],
                    "value": val,
                    "ring_min": float(lo.flat[k]),
                    "ring_max": float(hi.flat[k]),
                })
    return MonotoneReport(True, n_balls, tol, None)


@dataclass
class BoundaryData:
    """Fixed values at flat (row-major) indices of a ``shape`` grid.

    Every node on the grid's outer edge must be fixed so that each free node
    has all four neighbours.
    """

    shape: tuple
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        if len(self.shape) != 2 or min(self.shape) < 3:
            raise ValueError("boundary data needs a 2D grid with at least 3 points per axis")
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices and values must be matching 1D arrays")
        n = self.shape[0] * self.shape[1]
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n):
            raise ValueError("boundary index out of range")
        if np.unique(self.indices).size != self.indices.size:
            raise ValueError("duplicate boundary index")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("boundary values must be finite")
        fixed = np.zeros(n, dtype=bool)
        fixed[self.indices] = True
        edge = np.ones(self.shape, dtype=bool)
        edge[1:-1, 1:-1] = False
        if not np.all(fixed[edge.ravel()]):
            raise ValueError("every node on the outer edge of the grid must be fixed")

    @staticmethod
    def edge_indices(shape) -> np.ndarray:
        edge = np.ones(shape, dtype=bool)
        edge[1:-1, 1:-1] = False
        return np.flatnonzero(edge)

    @classmethod
    def random(cls, shape, seed: int = 0) -> "BoundaryData":
        idx = cls.edge_indices(shape)
        return cls(shape, idx, np.random.default_rng(seed).uniform(0.0, 1.0, idx.size))

    @classmethod
    def from_function(cls, shape, func, h: float = 1.0) -> "BoundaryData":
        idx = cls.edge_indices(shape)
        i, j = np.unravel_index(idx, shape)
        return cls(shape, idx, func(i * h, j * h))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "value"])
        for k, v in zip(self.indices, self.values):
            w.writerow([int(k), repr(float(v))])
        return buf.getvalue()


def read_boundary_csv(source, shape) -> BoundaryData:
    """Read ``index,value`` rows (flat row-major indices) for a grid of ``shape``."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="") as fh:
            return read_boundary_csv(fh, shape)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise CSVFormatError("empty file", 1)
    if [c.strip() for c in header] != ["index", "value"]:
        raise CSVFormatError("expected header 'index,value'", 1)
    idx, vals = [], []
    n = int(shape[0]) * int(shape[1])
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise CSVFormatError(f"expected 2 fields, got {len(row)}", lineno)
        try:
            k = int(row[0])
            v = float(row[1])
        except ValueError:
            raise CSVFormatError(f"bad row {row!r}", lineno) from None
        if not 0 <= k < n:
            raise CSVFormatError(f"index {k} outside grid of {n} nodes", lineno)
        if not math.isfinite(v):
            raise CSVFormatError("non-finite value", lineno)
        idx.append(k)
        vals.append(v)
    try:
        return BoundaryData(shape, np.array(idx, dtype=np.int64), np.array(vals))
    except ValueError as e:
        raise CSVFormatError(str(e)) from None


@njit(cache=True)
def _pow(x, p):
    # x >= 0; integer exponents avoid the general pow call
    if p == 2.0:
        return x * x
    if p == 3.0:
        return x * x * x
    if p == 1.0:
        return x
    return x**p


@njit(cache=True)
def _local_energy(t, nb, p):
    s = 0.0
    for k in range(nb.size):
        s += _pow(abs(t - nb[k]), p)
    return s


@njit(cache=True)
def _local_min(nb, p):
    """Minimiser of sum_k |t - nb[k]|^p (p > 1): the root of the increasing
    derivative, by Newton steps safeguarded with bisection on [min, max]."""
    lo = nb.min()
    hi = nb.max()
    if hi - lo == 0.0:
        return lo
    if p == 2.0:
        return nb.mean()
    t = nb.mean()
    for _ in range(200):
        g = 0.0
        dg = 0.0
        for k in range(nb.size):
            d = t - nb[k]
            ad = abs(d)
            if ad > 0.0:
                g += math.copysign(_pow(ad, p - 1.0), d)
                dg += (p - 1.0) * _pow(ad, p - 2.0)
        if g > 0.0:
            hi = t
        elif g < 0.0:
            lo = t
        else:
            return t
        tn = t - g / dg if dg > 0.0 and math.isfinite(dg) else 0.5 * (lo + hi)
        if not (lo < tn < hi):
            tn = 0.5 * (lo + hi)
        if abs(tn - t) <= 4e-16 * max(1.0, abs(t)) or hi - lo <= 4e-16 * max(1.0, abs(t)):
            return tn
        t = tn
    return t


@njit(cache=True)
def _sweep(u, free, p):
    nx, ny = u.shape
    nb = np.empty(4)
    biggest = 0.0
    for i in range(nx):
        for j in range(ny):
            if not free[i, j]:
                continue
            nb[0] = u[i - 1, j]
            nb[1] = u[i + 1, j]
            nb[2] = u[i, j - 1]
            nb[3] = u[i, j + 1]
            old = u[i, j]
            t = _local_min(nb, p)
            # only accept a step that does not raise the local energy
            if p == 2.0 or _local_energy(t, nb, p) <= _local_energy(old, nb, p):
                d = abs(t - old)
                if d > biggest:
                    biggest = d
                u[i, j] = t
    return biggest


@njit(cache=True)
def _energy(u, p):
    nx, ny = u.shape
    s = 0.0
    for i in range(nx):
        for j in range(ny):
            if i + 1 < nx:
                s += _pow(abs(u[i + 1, j] - u[i, j]), p)
            if j + 1 < ny:
                s += _pow(abs(u[i, j + 1] - u[i, j]), p)
    return s


def p_energy(u: GridFunction, p: float) -> float:
    """Sum of ``|u_i - u_j|^p`` over all nearest-neighbour edges."""
    return float(_energy(np.ascontiguousarray(u.samples), float(p)))


@dataclass
class RelaxResult:
    u: GridFunction
    converged: bool
    iterations: int
    max_update: float
    energies: np.ndarray

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "max_update": self.max_update,
            "energy_initial": float(self.energies[0]),
            "energy_final": float(self.energies[-1]),
        }


def relax_p(g: BoundaryData, p: float, tol: float = 1e-10, max_iters: int = 100_000,
            h: float = 1.0, track_energy: bool = True) -> RelaxResult:
    """Gauss-Seidel relaxation of the discrete p-Laplacian with fixed values ``g``.

    Each free node is replaced by the exact minimiser of the sum of
    ``|u_i - u_j|^p`` over its four neighbours, so the edge energy never
    increases.  Stops once a full sweep moves no node by ``tol`` or more;
    otherwise returns the last iterate with ``converged=False``.
    """
    if not 1 < p <= 8:
        raise ValueError("p must lie in (1, 8]")
    if not tol > 0 or max_iters < 1:
        raise ValueError("need tol > 0 and max_iters >= 1")
    n = g.shape[0] * g.shape[1]
    u = np.full(n, float(g.values.mean()))
    u[g.indices] = g.values
    free = np.ones(n, dtype=bool)
    free[g.indices] = False
    u = u.reshape(g.shape)
    free = free.reshape(g.shape)
    p = float(p)
    energies = [_energy(u, p)] if track_energy else []
    it, upd, converged = 0, math.inf, False
    if not free.any():
        converged, upd = True, 0.0
    while not converged and it < max_iters:
        upd = _sweep(u, free, p)
        it += 1
        if track_energy:
            energies.append(_energy(u, p))
        converged = upd < tol
    return RelaxResult(GridFunction(u, h, (0.0, 0.0)), bool(converged), it, float(upd), np.array(energies))


def grand_sobolev_norm(u: GridFunction, theta: float, grid: PGrid | None = None,
                       rel_tol: float = DEFAULT_REL_TOL) -> NormReport:
    """Grand norm of ``|grad u|``: central differences inside, one-sided at the
    edges, one equal-measure atom per grid node."""
    if u.dim != 2:
        raise ValueError("grand_sobolev_norm needs a 2D grid")
    gx, gy = np.gradient(u.samples, u.h)
    mag = np.hypot(gx, gy).ravel()
    f = StepFunction(mag, np.full(mag.size, u.h * u.h))
    return grand_theta_infty_norm(f, theta, grid, rel_tol)
