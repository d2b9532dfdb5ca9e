"""Grand, small, exponential-class and weak-type norms of step functions.

The supremum over exponents ``1 <= p < inf`` is taken on a geometric
:class:`PGrid`; for step functions the part beyond ``p_max`` is bounded by
``p_max**-theta * max|f|`` because every ``L^p`` mean is at most ``max|f|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .measure_core import StepFunction, distribution, lp_means, rearrangement

__all__ = [
    "PGrid",
    "NormReport",
    "DEFAULT_REL_TOL",
    "grand_theta_infty_norm",
    "grand_theta_curve",
    "grand_lp_norm",
    "default_eps_grid",
    "small_lp_norm",
    "grand_rearrangement_norm",
    "default_small_t_grid",
    "default_sup_t_grid",
    "exp_class_norm",
    "weak_lp_quasinorm",
    "weak_lp_quasinorms",
    "weak_theta_norm",
]

DEFAULT_REL_TOL = 1e-2
TAIL_POLICIES = ("analytic_bound", "report_only")


@dataclass(frozen=True)
class PGrid:
    """Geometric exponent grid ``1, r, r**2, ..., p_max`` (``p_max`` always included)."""

    p_max: float = 1e4
    ratio: float = 1.05
    tail_policy: str = "analytic_bound"
    p_min: float = 1.0

    def __post_init__(self):
        if self.p_min != 1.0:
            raise ValueError("p_min is fixed at 1")
        if not self.ratio > 1:
            raise ValueError("ratio must be > 1")
        if not self.p_max >= self.p_min:
            raise ValueError("p_max must be >= 1")
        if self.tail_policy not in TAIL_POLICIES:
            raise ValueError(f"tail_policy must be one of {TAIL_POLICIES}")
        if self.points().size < 8:
            raise ValueError("grid must contain at least 8 exponents; lower ratio or raise p_max")

    def points(self) -> np.ndarray:
        lr = math.log(self.ratio)
        k = np.arange(int(math.floor(math.log(self.p_max) / lr + 1e-12)) + 1)
        p = np.exp(k * lr)
        if p[-1] < self.p_max * (1 - 1e-12):
            p = np.append(p, self.p_max)
        else:
            p[-1] = self.p_max
        p[0] = 1.0
        return p

    @property
    def size(self) -> int:
        return self.points().size

    def refine(self) -> "PGrid":
        return PGrid(self.p_max, math.sqrt(self.ratio), self.tail_policy)

    def describe(self) -> dict:
        return {"p_min": self.p_min, "p_max": self.p_max, "ratio": self.ratio, "n": self.size}


@dataclass
class NormReport:
    """Grid supremum with its maximiser and a bound for the unsampled range."""

    value: float
    argmax_exponent: float
    tail_bound: float
    grid: dict
    converged: bool
    curve: np.ndarray | None = field(default=None, repr=False)
    note: str = ""

    def to_dict(self, with_curve: bool = False) -> dict:
        d = {
            "value": _finite_or_none(self.value),
            "argmax_exponent": _finite_or_none(self.argmax_exponent),
            "tail_bound": _finite_or_none(self.tail_bound),
            "grid": dict(self.grid),
            "converged": bool(self.converged),
        }
        if self.note:
            d["note"] = self.note
        if with_curve and self.curve is not None:
            d["curve"] = [_finite_or_none(x) for x in np.asarray(self.curve).ravel()]
        return d


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _check_theta(theta):
    if not theta >= 0:
        raise ValueError(f"theta must be >= 0, got {theta!r}")


def _report_from_curve(xs, curve, tail_bound, grid_desc, rel_tol, note=""):
    # np.argmax returns the first maximiser, i.e. ties go to the smaller exponent
    k = int(np.argmax(curve))
    value = float(curve[k])
    converged = tail_bound <= rel_tol * value
    return NormReport(value, float(xs[k]), float(tail_bound), grid_desc, bool(converged), curve, note)


def grand_theta_curve(f: StepFunction, theta: float, grid: PGrid) -> np.ndarray:
    """``p**-theta * lp_mean(f, p)`` at every grid exponent."""
    ps = grid.points()
    return ps ** (-theta) * lp_means(f, ps)


def grand_theta_infty_norm(
    f: StepFunction, theta: float, grid: PGrid | None = None, rel_tol: float = DEFAULT_REL_TOL
) -> NormReport:
    """``sup_{p>=1} p**-theta (mean |f|^p)^(1/p)`` on ``grid``.

    ``theta = 0`` is returned in closed form as ``max|f|`` (the space is
    ``L^inf``).
    """
    _check_theta(theta)
    grid = grid or PGrid()
    desc = grid.describe()
    if f.is_zero():
        return NormReport(0.0, 1.0, 0.0, desc, True)
    vmax = f.sup_abs
    if theta == 0:
        a = f.abs_values
        argmax = 1.0 if np.all(a == vmax) else math.inf
        return NormReport(vmax, argmax, 0.0, desc, True, note="theta=0: closed form max|f|")
    curve = grand_theta_curve(f, theta, grid)
    if grid.tail_policy == "report_only":
        return _report_from_curve(
            grid.points(), curve, math.inf, desc, rel_tol,
            note="report_only: tail beyond p_max not bounded",
        )
    tail = grid.p_max ** (-theta) * vmax
    return _report_from_curve(grid.points(), curve, tail, desc, rel_tol)


def default_eps_grid(p: float, eps_min: float = 1e-6, ratio: float = 1.05) -> np.ndarray:
    """Geometric grid on ``[eps_min, p - 1]`` (ascending, ends included)."""
    top = p - 1.0
    eps_min = min(eps_min, top)
    n = max(2, int(math.ceil(math.log(top / eps_min) / math.log(ratio))) + 1)
    e = np.geomspace(eps_min, top, n)
    e[-1] = top
    return e


def grand_lp_norm(
    f: StepFunction,
    theta: float,
    p: float,
    eps_grid=None,
    form: str = "outer",
    rel_tol: float = DEFAULT_REL_TOL,
) -> NormReport:
    """Grand ``L^p`` norm, ``sup_{0<eps<=p-1}`` over ``eps_grid``.

    ``form="outer"``: ``eps**(theta/p) * ||f||_{p-eps}`` (the theta-weighted
    form).  ``form="inner"``: ``(eps * mean|f|^(p-eps))**(1/(p-eps))``, the
    classical form; ``theta`` is ignored there.  ``argmax_exponent`` reports
    ``p - eps`` at the maximiser and ``tail_bound`` bounds the objective over
    ``(0, eps_min)``.
    """
    if not p > 1:
        raise ValueError("grand L^p norm needs p > 1")
    _check_theta(theta)
    if form not in ("outer", "inner"):
        raise ValueError("form must be 'outer' or 'inner'")
    eps = np.asarray(default_eps_grid(p) if eps_grid is None else eps_grid, dtype=float)
    if eps.size == 0 or np.any(eps <= 0) or np.any(eps > p - 1 + 1e-12):
        raise ValueError("eps grid must lie in (0, p-1]")
    eps = np.sort(np.minimum(eps, p - 1))
    desc = {"eps_min": float(eps[0]), "eps_max": float(eps[-1]), "n": int(eps.size), "p": p, "form": form}
    exps = p - eps
    if f.is_zero():
        return NormReport(0.0, float(exps[0]), 0.0, desc, True)
    means = lp_means(f, exps)
    if form == "outer":
        weights = eps ** (theta / p)
        tail = eps[0] ** (theta / p) * float(lp_means(f, [p])[0])
    else:
        weights = eps ** (1.0 / exps)
        # eps**(1/(p-eps)) <= eps_min**(1/p) on (0, eps_min) once eps_min < 1
        tail = min(eps[0], 1.0) ** (1.0 / p) * float(lp_means(f, [p])[0])
    curve = weights * means
    return _report_from_curve(exps, curve, tail, desc, rel_tol)


def _check_unit_measure(f: StepFunction):
    if abs(f.total_measure - 1.0) > 1e-12:
        raise ValueError("rearrangement norms need |Omega| = 1; renormalise the measure first")


def default_small_t_grid(p: float, n: int = 8001, depth: float = 40.0) -> np.ndarray:
    """Log-uniform ``t``-grid on ``[exp(-depth*p), 1]``."""
    return np.exp(np.linspace(-depth * p, 0.0, n))


def default_sup_t_grid(n: int = 4001) -> np.ndarray:
    """``t``-grid for the sup formula: log-uniform near 0 merged with uniform near 1."""
    return np.unique(np.concatenate((np.geomspace(1e-300, 1.0, n), np.linspace(0.0, 1.0, n)[1:-1])))


def small_lp_norm(f: StepFunction, p: float, t_grid=None) -> float:
    """``int_0^1 (1 - ln t)^(-1/p) (int_0^t f*^p)^(1/p) dt/t`` (small Lebesgue norm).

    Trapezoidal rule in ``u = ln t`` on the (geometric) ``t_grid``; the inner
    integral is exact on each plateau of the rearrangement.
    """
    if not p > 1:
        raise ValueError("small L^p norm needs p > 1")
    _check_unit_measure(f)
    if f.is_zero():
        return 0.0
    t = np.sort(np.asarray(default_small_t_grid(p) if t_grid is None else t_grid, dtype=float))
    if t[0] <= 0 or t[-1] > 1:
        raise ValueError("t grid must lie in (0, 1]")
    vmax = f.sup_abs
    r = rearrangement(f.scale(1.0 / vmax))
    inner = r.power_integral_from_zero(t, p)
    g = (1.0 - np.log(t)) ** (-1.0 / p) * inner ** (1.0 / p)
    return float(vmax * np.trapezoid(g, np.log(t)))


def grand_rearrangement_norm(f: StepFunction, p: float, t_grid=None) -> float:
    """``sup_{0<t<1} (1 - ln t)^(-1/p) (int_t^1 f*^p)^(1/p)`` over ``t_grid``."""
    if not p > 1:
        raise ValueError("grand rearrangement norm needs p > 1")
    _check_unit_measure(f)
    if f.is_zero():
        return 0.0
    t = np.asarray(default_sup_t_grid() if t_grid is None else t_grid, dtype=float)
    t = t[(t > 0) & (t < 1)]
    vmax = f.sup_abs
    r = rearrangement(f.scale(1.0 / vmax))
    tail = np.maximum(r.power_integral_to_end(t, p), 0.0)
    g = (1.0 - np.log(t)) ** (-1.0 / p) * tail ** (1.0 / p)
    return float(vmax * g.max())


def _log_exp_mean(f: StepFunction, lam: float) -> float:
    # log of mean(exp(|f|/lam))
    return float(logsumexp(f.abs_values / lam, b=f.measures) - math.log(f.total_measure))


def exp_class_norm(f: StepFunction, rtol: float = 1e-10) -> float:
    """``inf{lam > 0 : mean(exp(|f|/lam)) <= 2}`` by bisection.

    The mean is evaluated in log form; ``inf`` is returned if no
    ``lam <= 1e6 * max|f|`` satisfies the bound.
    """
    if f.is_zero():
        return 0.0
    vmax = f.sup_abs
    target = math.log(2.0)
    lam_max = 1e6 * vmax
    lo = vmax / 60.0
    hi = vmax / math.log(2.0) * (1.0 + f.total_measure)
    while _log_exp_mean(f, lo) <= target:
        lo /= 2.0
    while _log_exp_mean(f, hi) > target:
        hi *= 2.0
        if hi > lam_max:
            return math.inf
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _log_exp_mean(f, mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def weak_lp_quasinorms(f: StepFunction, ps) -> np.ndarray:
    """``M_p(f) = [sup_t t^p f_*(t) / |Omega|]^(1/p)`` for each ``p``.

    ``t^p f_*(t)`` increases on each constancy interval of ``f_*``, so the sup
    is the max over levels ``t_k`` of ``t_k^p * |{|f| >= t_k}|``.
    """
    ps = np.atleast_1d(np.asarray(ps, dtype=float))
    if np.any(ps < 1):
        raise ValueError("weak quasi-norm needs p >= 1")
    if f.is_zero():
        return np.zeros_like(ps)
    d = distribution(f)
    keep = d.levels > 0
    lv = d.levels[keep]
    ge = d.left_limits()[keep]
    vmax = lv[-1]
    with np.errstate(divide="ignore"):
        logr = np.log(lv / vmax)  # -inf for levels that underflow relative to vmax
    w = ge / d.total_measure
    inner = np.exp(np.multiply.outer(ps, logr)) * w
    return vmax * inner.max(axis=1) ** (1.0 / ps)


def weak_lp_quasinorm(f: StepFunction, p: float) -> float:
    return float(weak_lp_quasinorms(f, [p])[0])


def weak_theta_norm(
    f: StepFunction, theta: float, grid: PGrid | None = None, rel_tol: float = DEFAULT_REL_TOL
) -> NormReport:
    """``sup_p M_p(f) / p**theta`` on ``grid``."""
    _check_theta(theta)
    grid = grid or PGrid()
    desc = grid.describe()
    if f.is_zero():
        return NormReport(0.0, 1.0, 0.0, desc, True)
    ps = grid.points()
    curve = ps ** (-theta) * weak_lp_quasinorms(f, ps)
    if theta == 0:
        # M_p -> max|f| as p -> inf and M_p <= max|f|
        tail = f.sup_abs
        rep = _report_from_curve(ps, curve, tail, desc, rel_tol)
        if tail > rep.value:
            rep.value, rep.argmax_exponent = tail, math.inf
        rep.converged = True
        rep.note = "theta=0: sup attained in the limit p -> inf"
        return rep
    tail = grid.p_max ** (-theta) * f.sup_abs
    return _report_from_curve(ps, curve, tail, desc, rel_tol)
