"""Numerical verification suites for the norm inequalities and identities."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .generators import (
    AnalyticFunctionSpec,
    analytic_corpus,
    discretize,
    shared_partition_pairs,
)
from .measure_core import StepFunction, layer_cake, lp_means
from .norms import (
    PGrid,
    exp_class_norm,
    grand_theta_infty_norm,
    weak_lp_quasinorms,
    weak_theta_norm,
)
from .reports import Check, SuiteReport

__all__ = [
    "ROUNDING_RTOL",
    "step1_constant",
    "verify_weak_strong_equivalence",
    "verify_norm_axioms",
    "verify_inclusions",
    "inclusion_witness",
    "log_power_grand_oracle",
    "verify_exp_equivalence",
    "verify_layer_cake",
]

# allowance for floating-point rounding in inequalities that hold exactly in real arithmetic
ROUNDING_RTOL = 1e-12


def step1_constant(theta: float) -> float:
    """Constant ``C`` with ``||f||_{theta,inf)} <= max(||f||_2, C sup_s M_s/s^theta)``.

    For ``s >= 2`` the bound ``(s+1)^(1/s) ((s+1)/s)^theta <= sqrt(3) (3/2)^theta``
    holds, so ``C = sqrt(3) * 1.5**theta``; this is <= 4 iff theta <= 2.065.
    """
    return math.sqrt(3.0) * 1.5 ** theta


def verify_weak_strong_equivalence(
    f: StepFunction, theta: float, grid: PGrid | None = None, min_gap: float = 1.0, label: str = ""
) -> SuiteReport:
    """Check the two-sided comparison of the weak and strong grand norms.

    (a) ``mean(|f|^s)^(1/s) <= (p/(p-s))^(1/s) M_p(f)`` for grid pairs ``s <= p - min_gap``;
    (b) ``M_p(f) <= lp_mean(f, p)`` at every grid ``p``;
    (c) ``||f||_{theta,inf)} <= max(||f||_2, C_theta * sup M_s/s^theta)``.
    """
    grid = grid or PGrid()
    ps = grid.points()
    rep = SuiteReport("thm31", provenance={"theta": theta, "grid": grid.describe(), "input": label})
    strong = lp_means(f, ps)
    weak = weak_lp_quasinorms(f, ps)
    grand = grand_theta_infty_norm(f, theta, grid)
    weakn = weak_theta_norm(f, theta, grid)

    # (a)
    S, P = np.meshgrid(ps, ps, indexing="ij")
    mask = S <= P - min_gap
    if f.is_zero():
        worst_a = 0.0
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            rhs = (P / (P - S)) ** (1.0 / S) * weak[None, :]
            ratio = np.where(mask, strong[:, None] / rhs, 0.0)
        worst_a = float(np.nanmax(ratio)) if mask.any() else 0.0
    rep.add(Check.le("step1_bound(a)", worst_a, 1.0 + ROUNDING_RTOL,
                     f"max ratio over {int(mask.sum())} (s,p) pairs"))

    # (b)
    with np.errstate(divide="ignore", invalid="ignore"):
        rb = np.where(strong > 0, weak / strong, 0.0)
    worst_b = float(rb.max())
    rep.add(Check.le("weak_le_strong(b)", worst_b, 1.0 + ROUNDING_RTOL, "max M_p/lp_mean over grid"))

    # (c): the sup over s >= 2 uses M_{s+1} at the shifted exponents
    l2 = float(lp_means(f, [2.0])[0])
    hi = ps[ps >= 2]
    m_shift = weak_lp_quasinorms(f, hi + 1.0) if hi.size else np.zeros(0)
    per_p = hi ** (-theta) * (hi + 1.0) ** (1.0 / hi) * m_shift
    lhs_hi = hi ** (-theta) * lp_means(f, hi) if hi.size else np.zeros(0)
    with np.errstate(divide="ignore", invalid="ignore"):
        worst_c1 = float(np.max(np.where(per_p > 0, lhs_hi / per_p, 0.0))) if hi.size else 0.0
    rep.add(Check.le("step1_shifted_bound(c)", worst_c1, 1.0 + ROUNDING_RTOL,
                     "s^-theta ||f||_s <= s^-theta (s+1)^(1/s) M_{s+1}"))
    weak_sup = max(weakn.value, float(np.max(m_shift / (hi + 1.0) ** theta)) if hi.size else 0.0)
    c_theta = step1_constant(theta)
    chain = max(l2, c_theta * weak_sup)
    rep.add(Check.le("chain_bound(c)", grand.value, chain * (1 + ROUNDING_RTOL),
                     f"max(||f||_2, {c_theta:.4f} * weak norm)"))
    if c_theta <= 4.0:
        rep.add(Check.le("chain_bound_const4(c)", grand.value, max(l2, 4.0 * weak_sup) * (1 + ROUNDING_RTOL)))
    rep.add(Check.le("weak_le_grand", weakn.value, grand.value * (1 + ROUNDING_RTOL)))

    rep.results.update(
        grand=grand.value,
        weak=weakn.value,
        ratio_grand_over_weak=grand.value / weakn.value if weakn.value > 0 else None,
        worst_step1_ratio=worst_a,
        worst_weak_over_strong=worst_b,
        chain_constant=c_theta,
        grand_report=grand.to_dict(),
        weak_report=weakn.to_dict(),
    )
    return rep


def _grand_value(f, theta, grid):
    return grand_theta_infty_norm(f, theta, grid).value


def verify_norm_axioms(
    pairs=None,
    thetas=(0.0, 0.5, 1.0, 2.0),
    grid: PGrid | None = None,
    n_pairs: int = 1000,
    n_atoms: int = 64,
    seed: int = 0,
    triangle_rtol: float = 1e-10,
    homogeneity_rtol: float = 1e-12,
) -> SuiteReport:
    """Triangle inequality, absolute homogeneity and definiteness over random pairs.

    Pairs share a partition so ``f + g`` is exact; violations are counted per
    ``theta`` and axiom.
    """
    grid = grid or PGrid()
    if pairs is None:
        pairs = list(shared_partition_pairs(n_pairs, n_atoms, seed))
    else:
        pairs = list(pairs)
    rng = np.random.default_rng(seed + 1)
    alphas = rng.normal(size=len(pairs)) * rng.lognormal(0.0, 2.0, size=len(pairs))
    rep = SuiteReport(
        "axioms",
        provenance={"seed": seed, "n_pairs": len(pairs), "n_atoms": n_atoms,
                    "thetas": list(thetas), "grid": grid.describe()},
    )
    for theta in thetas:
        tri_worst = hom_worst = 0.0
        tri_viol = hom_viol = def_viol = 0
        for (f, g), a in zip(pairs, alphas):
            nf, ng = _grand_value(f, theta, grid), _grand_value(g, theta, grid)
            nfg = _grand_value(f + g, theta, grid)
            scale = nf + ng
            if scale > 0:
                excess = (nfg - scale) / scale
                tri_worst = max(tri_worst, excess)
                tri_viol += excess > triangle_rtol
            naf = _grand_value(f.scale(a), theta, grid)
            if nf > 0:
                dev = abs(naf - abs(a) * nf) / (abs(a) * nf)
                hom_worst = max(hom_worst, dev)
                hom_viol += dev > homogeneity_rtol
            zero = _grand_value(f + (-f), theta, grid)
            def_viol += (zero != 0.0) or ((nf == 0.0) != f.is_zero())
        rep.add(Check.le(f"triangle[theta={theta}]", tri_worst, triangle_rtol, f"{tri_viol} violations"))
        rep.add(Check.le(f"homogeneity[theta={theta}]", hom_worst, homogeneity_rtol, f"{hom_viol} violations"))
        rep.add(Check.le(f"definiteness[theta={theta}]", float(def_viol), 0.0, f"{def_viol} violations"))
        rep.results[f"theta={theta}"] = {
            "triangle_violations": tri_viol,
            "homogeneity_violations": hom_viol,
            "definiteness_violations": def_viol,
            "worst_triangle_excess": tri_worst,
            "worst_homogeneity_deviation": hom_worst,
        }
    return rep


def verify_inclusions(
    f: StepFunction, theta: float, theta2: float, q: float, grid: PGrid | None = None, label: str = ""
) -> SuiteReport:
    """Ordering ``||f||_{theta2} <= ||f||_{theta} <= ||f||_{0} = max|f|`` for ``theta < theta2``
    and the embedding bound ``||f||_q <= q^theta2 ||f||_{theta2,inf)}``."""
    if not theta < theta2:
        raise ValueError("need theta < theta2")
    if not q >= 1:
        raise ValueError("q must be >= 1")
    grid = grid or PGrid()
    rep = SuiteReport("inclusions", provenance={"theta": theta, "theta2": theta2, "q": q,
                                                "grid": grid.describe(), "input": label})
    n_lo = grand_theta_infty_norm(f, theta, grid).value
    n_hi = grand_theta_infty_norm(f, theta2, grid).value
    n_0 = grand_theta_infty_norm(f, 0.0, grid).value
    rep.add(Check.le(f"norm[{theta2}]<=norm[{theta}]", n_hi, n_lo))
    rep.add(Check.le(f"norm[{theta}]<=norm[0]", n_lo, n_0 * (1 + ROUNDING_RTOL)))
    rep.add(Check.le("norm[0]==max|f|", abs(n_0 - f.sup_abs), 0.0))
    # the grid is augmented with q so the sup includes the exponent being bounded
    ps = np.union1d(grid.points(), [q])
    sup_q = float(np.max(ps ** (-theta2) * lp_means(f, ps))) if not f.is_zero() else 0.0
    lq = float(lp_means(f, [q])[0])
    rep.add(Check.le(f"L^{q}_embedding", lq, q ** theta2 * sup_q * (1 + ROUNDING_RTOL)))
    rep.results.update({f"norm_theta={theta}": n_lo, f"norm_theta={theta2}": n_hi,
                        "norm_theta=0": n_0, f"lp_mean_q={q}": lq})
    return rep


def log_power_grand_oracle(theta: float, p_max: float = 1e4, n: int = 200001) -> tuple[float, float]:
    """``sup_p p^-theta Gamma(p*theta + 1)^(1/p)`` on a dense log grid; returns (value, argmax)."""
    p = np.geomspace(1.0, p_max, n)
    v = np.exp(gammaln(p * theta + 1.0) / p - theta * np.log(p))
    k = int(np.argmax(v))
    return float(v[k]), float(p[k])


def inclusion_witness(theta: float, ns=(1000, 10000, 100000), grid: PGrid | None = None,
                      oracle_rtol: float = 1e-3) -> SuiteReport:
    """``(-ln x)^theta`` on (0,1): grand norm stays below ``2**theta`` (and near the
    Gamma-function oracle) while ``max|f|`` grows without bound."""
    grid = grid or PGrid()
    spec0 = AnalyticFunctionSpec("log_power", int(ns[0]), {"theta": theta})
    rep = SuiteReport("inclusion_witness", provenance={"theta": theta, "ns": list(ns), "grid": grid.describe()})
    oracle, oracle_arg = log_power_grand_oracle(theta, grid.p_max)
    sups, norms_ = [], []
    for n in ns:
        f = discretize(AnalyticFunctionSpec("log_power", int(n), spec0.params))
        v = grand_theta_infty_norm(f, theta, grid).value
        norms_.append(v)
        sups.append(f.sup_abs)
        rep.add(Check.le(f"grand_norm_le_2^theta[n={n}]", v, 2.0 ** theta))
        rep.add(Check.le(f"grand_norm_near_oracle[n={n}]", abs(v - oracle), oracle_rtol * oracle))
    growth = min(b - a for a, b in zip(sups[:-1], sups[1:])) if len(sups) > 1 else math.nan
    rep.add(Check("sup_norm_increasing", bool(growth > 0), growth, 0.0, "min increase of max|f| per refinement"))
    rep.results.update(grand_norms=norms_, sup_norms=sups, oracle=oracle, oracle_argmax=oracle_arg)
    return rep


def verify_exp_equivalence(
    specs=None, grid: PGrid | None = None, stability_rtol: float = 0.05, n: int = 20000
) -> SuiteReport:
    """Ratio ``||f||_{1,inf)} / ||f||_EXP`` per function, at ``n`` and ``2n``.

    The two norms are equivalent without explicit constants, so the suite
    records the empirical bracket and checks each ratio is stable under
    refinement.  Functions outside EXP (negative powers) are not meaningful here.
    """
    grid = grid or PGrid()
    if specs is None:
        specs = analytic_corpus(n, include_unbounded_powers=False)
    rep = SuiteReport("exp_equivalence", provenance={"grid": grid.describe(), "stability_rtol": stability_rtol})
    ratios = {}
    for spec in specs:
        rs = []
        for s in (spec, spec.refined(2)):
            f = discretize(s)
            rs.append(grand_theta_infty_norm(f, 1.0, grid).value / exp_class_norm(f))
        drift = abs(rs[1] / rs[0] - 1.0)
        ratios[spec.label()] = {"ratio_n": rs[0], "ratio_2n": rs[1], "drift": drift}
        rep.add(Check.le(f"ratio_stable[{spec.label()}]", drift, stability_rtol))
    allr = [v["ratio_2n"] for v in ratios.values()]
    rep.results.update(ratios=ratios, bracket=[min(allr), max(allr)] if allr else None)
    return rep


def verify_layer_cake(n_functions: int = 100, s_values=(1.0, 1.5, 2.0, 3.0, 7.0),
                      seed: int = 0, rtol: float = 1e-10) -> SuiteReport:
    """Layer-cake identity on seeded random step functions."""
    rng = np.random.default_rng(seed)
    rep = SuiteReport("layer_cake", provenance={"seed": seed, "n_functions": n_functions,
                                                "s_values": list(s_values), "rtol": rtol})
    worst = {s: 0.0 for s in s_values}
    for k in range(n_functions):
        n = int(rng.integers(2, 400))
        spec = AnalyticFunctionSpec("random_step", n, {"seed": int(rng.integers(2**63 - 1))})
        f = discretize(spec)
        for s in s_values:
            lhs, rhs = layer_cake(f, s)
            worst[s] = max(worst[s], abs(lhs - rhs) / max(lhs, 1.0))
    for s in s_values:
        rep.add(Check.le(f"layer_cake[s={s}]", worst[s], rtol))
    rep.results["worst_relative_discrepancy"] = {str(s): w for s, w in worst.items()}
    return rep
