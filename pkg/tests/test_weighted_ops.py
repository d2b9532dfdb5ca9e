import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from grandlp.measure_core import CSVFormatError, StepFunction, lp_means
from grandlp.norms import PGrid, grand_theta_infty_norm
from grandlp.weighted_ops import (
    GridFunction,
    KernelSpec,
    Weight,
    ap_constant,
    cz_apply,
    doubling_constant,
    maximal_operator,
    operator_norm_estimate,
    read_grid_csv,
    weighted_grand_norm,
    weighted_lp_norm,
    weighted_lp_norms,
    write_grid_csv,
)

# Closed-form continuum values on the dyadic cube [0, r] touching the zero of |x|^a:
# doubling: ((1/2)^(1+a) + (3/2)^(1+a)) for 2Q = [-r/2, 3r/2];
# A_2 of |x|^(1/2): mean(x^(1/2)) * mean(x^(-1/2)) = (2/3) * 2.
DOUBLING_SQRT = 0.5**1.5 + 1.5**1.5
A2_SQRT = 4.0 / 3.0


def power_weight(alpha, n):
    return Weight.from_function(lambda x: np.abs(x) ** alpha, -1.0, 1.0, n, cell_centered=True)


def bump(x):
    out = np.zeros_like(x)
    m = np.abs(x) < 1
    out[m] = np.exp(-1.0 / (1.0 - x[m] ** 2))
    return out


def brute_maximal(f, w):
    n = f.size
    out = np.zeros(n)
    for a in range(n):
        for b in range(a, n):
            avg = np.sum(np.abs(f[a : b + 1]) * w[a : b + 1]) / np.sum(w[a : b + 1])
            out[a : b + 1] = np.maximum(out[a : b + 1], avg)
    return out


class TestGridFunction:
    def test_validation(self):
        with pytest.raises(ValueError):
            GridFunction(np.ones(3), 0.1)
        with pytest.raises(ValueError):
            GridFunction(np.ones(8), 0.0)
        with pytest.raises(ValueError):
            GridFunction(np.array([1, 2, np.nan, 4.0]), 0.1)
        with pytest.raises(ValueError):
            Weight(np.array([1.0, 0.0, 1.0, 1.0]), 0.1)

    def test_coords(self):
        g = GridFunction(np.zeros((4, 5)), 0.5, (1.0, -1.0))
        X, Y = g.coords()
        assert X[3, 0] == 2.5 and Y[0, 4] == 1.0 and g.dim == 2

    def test_csv_roundtrip_1d(self, tmp_path):
        g = GridFunction(np.arange(6.0) ** 2, 0.25, (-1.0,))
        path = tmp_path / "g.csv"
        write_grid_csv(g, path)
        h = read_grid_csv(path)
        assert h.same_grid(g) and np.array_equal(h.samples, g.samples)

    def test_csv_roundtrip_2d(self):
        g = GridFunction(np.arange(20.0).reshape(4, 5), 0.5, (0.0, 1.0))
        h = read_grid_csv(io.StringIO(write_grid_csv(g)))
        assert h.dim == 2 and h.same_grid(g) and np.array_equal(h.samples, g.samples)

    def test_csv_nonuniform(self):
        text = "x,value\n0,1\n0.1,1\n0.2,1\n0.35,1\n0.45,1\n"
        with pytest.raises(CSVFormatError) as e:
            read_grid_csv(io.StringIO(text))
        assert e.value.line == 5

    def test_csv_weight_positive(self):
        text = "x,value\n0,1\n1,1\n2,-1\n3,1\n"
        assert read_grid_csv(io.StringIO(text)).samples[2] == -1
        with pytest.raises(CSVFormatError) as e:
            read_grid_csv(io.StringIO(text), weight=True)
        assert e.value.line == 4

    def test_csv_bad_header(self):
        with pytest.raises(CSVFormatError):
            read_grid_csv(io.StringIO("a,b\n1,2\n"))


class TestDoubling:
    def test_uniform_exact(self):
        c, wit = doubling_constant(Weight(np.ones(256), 1 / 256))
        assert c == 2.0 and wit["double"][0][0] >= 0
        c2, _ = doubling_constant(Weight(np.ones((32, 32)), 1 / 32))
        assert c2 == 4.0

    def test_sqrt_weight_oracle(self):
        vals = [doubling_constant(power_weight(0.5, n))[0] for n in (256, 1024, 4096)]
        assert vals == pytest.approx([DOUBLING_SQRT] * 3, rel=1e-4)

    def test_non_doubling_grows(self):
        # exp(-1/x) on (0, 1) is flat to all orders at 0: w(2Q)/w(Q) ~ exp(c/|Q|)
        vals = [doubling_constant(Weight.from_function(lambda x: np.exp(-1 / x), 0, 1, n, True))[0]
                for n in (32, 64, 128)]
        assert vals[0] < vals[1] < vals[2] and vals[2] > 100 * vals[0]

    def test_no_admissible_cube(self):
        with pytest.raises(ValueError):
            doubling_constant(Weight(np.ones(4), 1.0), levels=[0])


class TestAp:
    @pytest.mark.parametrize("p", [1.1, 2.0, 5.0])
    def test_uniform(self, p):
        assert ap_constant(Weight(np.ones(512), 1.0), p).constant == 1.0
        assert ap_constant(Weight(np.ones((64, 64)), 1.0), p).constant == 1.0

    def test_sqrt_oracle_and_stable(self):
        rs = [ap_constant(power_weight(0.5, n), 2.0) for n in (1024, 4096)]
        assert all(not r.diverging for r in rs)
        assert rs[-1].constant == pytest.approx(A2_SQRT, rel=0.01)
        assert rs[1].constant / rs[0].constant - 1 < 0.02

    def test_steep_diverges(self):
        r = ap_constant(power_weight(1.5, 1024), 2.0)
        assert r.diverging and r.per_resolution[-1] >= 2 * r.per_resolution[-3]
        # p = 3 puts alpha = 3/2 inside (-1, p - 1)
        assert not ap_constant(power_weight(1.5, 1024), 3.0).diverging

    def test_log_domain(self):
        # w^(1-p') underflows for p close to 1; A_p is scale invariant
        v = np.random.default_rng(2).uniform(0.5, 2.0, 256)
        small = ap_constant(Weight(v, 1.0), 1.01).constant
        big = ap_constant(Weight(1e300 * v, 1.0), 1.01).constant
        assert math.isfinite(big) and big == pytest.approx(small, rel=1e-10)

    def test_rejects_p(self):
        with pytest.raises(ValueError):
            ap_constant(Weight(np.ones(16), 1.0), 1.0)

    @settings(max_examples=60, deadline=None)
    @given(arrays(float, 64, elements=st.floats(1e-3, 1e3)), st.floats(1.05, 6.0), st.floats(0.0, 3.0))
    def test_jensen_and_monotone_in_p(self, a, p, dp):
        w = Weight(a, 1.0)
        lo, hi = ap_constant(w, p), ap_constant(w, p + dp)
        assert lo.constant >= 1 - 1e-12
        assert hi.constant <= lo.constant * (1 + 1e-12)


class TestWeightedNorms:
    def test_constant(self):
        f = GridFunction(np.full(16, -2.0), 0.1)
        w = Weight(np.linspace(0.5, 3, 16), 0.1)
        assert np.allclose(weighted_lp_norms(f, w, [1, 2, 50]), 2.0, rtol=1e-15)
        r = weighted_grand_norm(f, w, 1.0)
        assert r.value == pytest.approx(2.0, rel=1e-15) and r.argmax_exponent == 1.0

    def test_half_indicator(self):
        f = GridFunction.from_function(lambda x: (x <= 0.5).astype(float), 0, 1, 100, cell_centered=True)
        assert weighted_lp_norm(f, Weight.uniform_like(f), 2) == pytest.approx(math.sqrt(0.5), rel=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(arrays(float, 32, elements=st.floats(-1e3, 1e3)))
    def test_uniform_weight_consistency(self, a):
        f = GridFunction(a, 0.25)
        sf = StepFunction(a, np.full(32, 0.25))
        ps = PGrid(p_max=100).points()
        assert np.allclose(weighted_lp_norms(f, Weight.uniform_like(f), ps), lp_means(sf, ps), rtol=1e-12, atol=0)
        g = PGrid(p_max=100)
        assert weighted_grand_norm(f, Weight.uniform_like(f), 1.0, g).value == pytest.approx(
            grand_theta_infty_norm(sf, 1.0, g).value, rel=1e-12, abs=0)

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            weighted_lp_norm(GridFunction(np.ones(8), 0.1), Weight(np.ones(8), 0.2), 2)


class TestMaximal:
    def test_constant(self):
        f = GridFunction(np.full(50, -3.0), 0.1)
        w = Weight(np.random.default_rng(0).uniform(0.1, 5, 50), 0.1)
        assert np.allclose(maximal_operator(f, w).samples, 3.0, rtol=1e-15)

    def test_brute_force(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=40)
        w = rng.uniform(0.1, 3, 40)
        got = maximal_operator(GridFunction(a, 0.1), Weight(w, 0.1), block=7).samples
        assert np.allclose(got, brute_maximal(a, w), rtol=1e-13)

    def test_half_indicator(self):
        f = GridFunction.from_function(lambda x: (x <= 0.5).astype(float), 0, 1, 400, cell_centered=True)
        Mf = maximal_operator(f).samples
        x = f.axis()
        assert np.all(Mf[x <= 0.5] == 1.0)
        assert np.allclose(Mf[x > 0.5], 1 / (2 * x[x > 0.5]), rtol=3e-3)
        assert np.allclose(Mf, brute_maximal(f.samples, np.ones(400)), rtol=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(arrays(float, 48, elements=st.floats(-100, 100)), arrays(float, 48, elements=st.floats(-100, 100)),
           arrays(float, 48, elements=st.floats(0.01, 10)))
    def test_sublinear_homogeneous(self, a, b, wv):
        w = Weight(wv, 0.1)
        Ma = maximal_operator(GridFunction(a, 0.1), w).samples
        Mb = maximal_operator(GridFunction(b, 0.1), w).samples
        Mab = maximal_operator(GridFunction(a + b, 0.1), w).samples
        scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
        # a few roundings separate the two sides; no slack beyond that
        assert np.all(Mab <= Ma + Mb + 1e-13 * scale)
        assert np.all(Ma >= np.abs(a))
        assert np.array_equal(maximal_operator(GridFunction(-4 * a, 0.1), w).samples, 4 * Ma)
        assert np.allclose(maximal_operator(GridFunction(0.3 * a, 0.1), w).samples, 0.3 * Ma, rtol=1e-14, atol=0)

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            maximal_operator(GridFunction(np.ones((4, 4)), 1.0))


class TestCZ:
    def test_kernel_validation(self):
        KernelSpec().validate()
        KernelSpec("custom_power", c=2.0, exponent=1.0).validate()
        with pytest.raises(ValueError, match="principal value"):
            KernelSpec("custom_power", exponent=1.0, odd=False).validate()
        with pytest.raises(ValueError):
            KernelSpec("custom_power", C_K=0.5, c=1.0, exponent=1.0).validate()
        with pytest.raises(ValueError):
            KernelSpec("custom_power", c=1.0, exponent=1.5).validate()
        with pytest.raises(ValueError):
            cz_apply(GridFunction(np.ones(8), 1.0), KernelSpec("custom_power", exponent=2.0, odd=False))

    def test_parity(self):
        x = np.linspace(-3, 3, 601)
        a = x * np.exp(-x * x)
        a = 0.5 * (a - a[::-1])  # exactly odd samples
        Tf = cz_apply(GridFunction(a, x[1] - x[0], (-3.0,))).samples
        assert np.allclose(Tf, Tf[::-1], rtol=0, atol=1e-13 * np.max(np.abs(Tf)))

    def test_hilbert_indicator(self):
        f = GridFunction.from_function(lambda x: (np.abs(x) <= 1).astype(float), -4, 4, 2049)
        x = f.axis()
        Tf = cz_apply(f).samples
        i = int(np.argmin(np.abs(x - 2.0)))
        assert Tf[i] == pytest.approx(math.log(3) / math.pi, rel=0.02)
        far = (np.abs(x) > 1.5) & (np.abs(x) < 3.5)
        exact = np.log(np.abs((x[far] + 1) / (x[far] - 1))) / math.pi
        assert np.allclose(Tf[far], exact, rtol=0.02)

    def test_isometry(self):
        f = GridFunction.from_function(lambda x: (x / 2) * bump(x / 2), -64, 64, 2**15 + 1)
        ratio = np.sum(cz_apply(f).samples ** 2) / np.sum(f.samples**2)
        assert ratio == pytest.approx(1.0, abs=0.01)

    @settings(max_examples=30, deadline=None)
    @given(arrays(float, 64, elements=st.floats(-10, 10)), arrays(float, 64, elements=st.floats(-10, 10)),
           st.floats(-5, 5), st.floats(-5, 5))
    def test_linear(self, a, b, al, be):
        T = lambda v: cz_apply(GridFunction(v, 0.1)).samples
        lhs = T(al * a + be * b)
        rhs = al * T(a) + be * T(b)
        scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)), 1e-300)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


def _bumps(n, seed=1):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(10):
        c, R, a = rng.uniform(-2, 2), rng.uniform(0.5, 2), rng.normal()
        out.append(GridFunction.from_function(lambda x: a * bump((x - c) / R), -8, 8, n))
    return out


class TestOperatorNorm:
    @pytest.mark.parametrize("theta", [0.0, 1.0, 2.5])
    def test_maximal_constant(self, theta):
        rep = operator_norm_estimate("maximal", None, theta, [GridFunction(np.ones(64), 0.1)])
        assert rep.results["max_ratio"] == pytest.approx(1.0, rel=1e-14)

    def test_maximal_random_stable(self):
        rng = np.random.default_rng(0)
        base = [rng.normal(size=64) * rng.uniform(0.1, 3) for _ in range(50)]
        r = [operator_norm_estimate("maximal", None, 1.0, [GridFunction(np.repeat(b, k), 1 / (64 * k)) for b in base])
             .results["max_ratio"] for k in (4, 8)]
        assert all(math.isfinite(x) for x in r) and abs(r[1] / r[0] - 1) < 0.05

    def test_cz_flat_curve(self):
        ps = PGrid().points()
        sel = (ps >= 2) & (ps <= 16)
        for theta in (0.0, 1.0, 2.0):
            rep = operator_norm_estimate("cz", None, theta, _bumps(2049))
            assert rep.passed
            curve = np.asarray(rep.results["per_p_ratio"])[sel]
            assert math.isfinite(rep.results["max_ratio"])
            assert curve.max() / curve.min() < 1.5

    def test_skips_zero(self):
        rep = operator_norm_estimate("maximal", None, 1.0, [GridFunction(np.zeros(8), 1.0), GridFunction(np.ones(8), 1.0)])
        assert rep.results["skipped_zero_norm"] == 1 and "notice" in rep.results
        with pytest.raises(ValueError):
            operator_norm_estimate("maximal", None, 1.0, [])
        with pytest.raises(ValueError):
            operator_norm_estimate("maximal", None, 1.0, [GridFunction(np.zeros(8), 1.0)])

    def test_weighted(self):
        f = _bumps(1025)[:3]
        w = Weight(1 + np.abs(f[0].axis()) ** 0.5, f[0].h, f[0].origin)
        rep = operator_norm_estimate("maximal", w, 1.0, f)
        assert rep.passed and rep.results["max_ratio"] >= 1.0
