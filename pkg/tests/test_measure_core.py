import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grandlp.generators import AnalyticFunctionSpec, discretize, exact_distribution
from grandlp.measure_core import (
    CSVFormatError,
    StepFunction,
    distribution,
    layer_cake,
    layer_cake_mean,
    lp_mean,
    lp_means,
    read_step_csv,
    rearrangement,
    write_step_csv,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def step_functions(draw, max_atoms=30):
    n = draw(st.integers(1, max_atoms))
    vals = draw(st.lists(finite, min_size=n, max_size=n))
    mus = draw(st.lists(st.floats(1e-3, 10.0), min_size=n, max_size=n))
    return StepFunction(vals, mus)


class TestStepFunction:
    def test_rejects_bad_atoms(self):
        with pytest.raises(ValueError):
            StepFunction([], [])
        with pytest.raises(ValueError):
            StepFunction([1.0], [0.0])
        with pytest.raises(ValueError):
            StepFunction([np.inf], [1.0])
        with pytest.raises(ValueError):
            StepFunction([1.0, 2.0], [1.0])

    def test_total_measure_consistency(self):
        StepFunction([1, 2], [0.5, 0.5], 1.0 + 1e-14)
        with pytest.raises(ValueError, match="sum"):
            StepFunction([1, 2], [0.5, 0.5], 1.01)

    def test_immutable(self):
        f = StepFunction([1.0, 2.0], [0.5, 0.5])
        with pytest.raises(ValueError):
            f.values[0] = 3.0

    def test_zero_atoms_retained(self):
        f = StepFunction([0.0, 2.0], [0.75, 0.25])
        assert f.n_atoms == 2 and f.total_measure == 1.0
        assert lp_mean(f, 1) == pytest.approx(0.5)

    def test_add_requires_shared_partition(self):
        f = StepFunction([1.0, 2.0], [0.5, 0.5])
        with pytest.raises(ValueError):
            f + StepFunction([1.0], [1.0])
        assert np.all((f + (-f)).values == 0)

    def test_merged(self):
        f = StepFunction([2.0, 1.0, 2.0], [0.1, 0.2, 0.3]).merged()
        assert list(f.values) == [1.0, 2.0]
        assert f.measures == pytest.approx([0.2, 0.4])


class TestLpMean:
    def test_constant(self):
        f = StepFunction([2.0] * 3, [0.2, 0.3, 0.5])
        assert np.allclose(lp_means(f, [1, 2, 7.5, 1e4]), 2.0, rtol=1e-15)

    def test_half_indicator(self):
        f = StepFunction([1.0, 0.0], [0.5, 0.5])
        assert lp_mean(f, 2) == pytest.approx(math.sqrt(0.5), rel=1e-15)

    def test_log_second_moment(self):
        # mean of (-ln x)^2 on (0,1) is 2! = 2
        f = discretize(AnalyticFunctionSpec("log_power", 100_000, {"theta": 1.0}))
        assert lp_mean(f, 2) == pytest.approx(math.sqrt(2), rel=1e-3)

    def test_no_overflow_large_p(self):
        f = StepFunction([1e300, -3e300, 1.0], [1, 1, 1])
        v = lp_mean(f, 1e4)
        assert math.isfinite(v) and v <= 3e300

    def test_limit_is_sup(self):
        f = StepFunction([0.5, -3.0, 2.0], [0.3, 0.1, 0.6])
        gaps = 3.0 - lp_means(f, [1e3, 1e4])
        assert 0 <= gaps[1] < gaps[0]

    @settings(max_examples=150, deadline=None)
    @given(step_functions())
    def test_monotone_in_p(self, f):
        m = lp_means(f, np.geomspace(1, 1e4, 60))
        assert np.all(np.diff(m) >= -1e-12 * np.maximum(m[1:], 1e-300))

    @settings(max_examples=100, deadline=None)
    @given(step_functions(), st.floats(-1e3, 1e3).filter(lambda a: a != 0))
    def test_homogeneous(self, f, a):
        ps = [1, 2, 3.5, 100]
        assert np.allclose(lp_means(f.scale(a), ps), abs(a) * lp_means(f, ps), rtol=1e-12, atol=0)


class TestDistribution:
    def test_indicator(self):
        f = StepFunction([1.0, 0.0], [0.3, 0.7])
        d = distribution(f)
        assert d(0.0) == pytest.approx(0.3) and d(0.999) == pytest.approx(0.3)
        assert d(1.0) == 0.0 and d(5.0) == 0.0

    def test_zero(self):
        d = distribution(StepFunction([0.0, 0.0], [0.5, 0.5]))
        assert np.all(d(np.array([0.0, 1.0, 10.0])) == 0.0)

    def test_breakpoints_are_distinct_abs_values(self):
        f = StepFunction([-2.0, 2.0, 1.0, 0.5], [0.1, 0.2, 0.3, 0.4])
        d = distribution(f)
        assert list(d.levels) == [0.5, 1.0, 2.0]
        assert np.all(np.diff(d.measures) <= 0)

    def test_log_power_vs_exact(self):
        spec = AnalyticFunctionSpec("log_power", 20_000, {"theta": 1.0})
        f = discretize(spec)
        d = distribution(f)
        t = np.linspace(0.0, 8.0, 2001)
        err = np.max(np.abs(d(t) - exact_distribution(spec, t)))
        # bounded by the width of the widest cell that straddles a level
        assert err <= np.max(f.measures)

    @settings(max_examples=100, deadline=None)
    @given(step_functions())
    def test_equimeasurable(self, f):
        assert distribution(rearrangement(f).as_step_function()).same_as(distribution(f))


class TestRearrangement:
    def test_sorting(self):
        r = rearrangement(StepFunction.from_atoms([(3, 0.2), (1, 0.5), (2, 0.3)]))
        assert list(r.values) == [3, 2, 1]
        assert r.lengths == pytest.approx([0.2, 0.3, 0.5])

    def test_constant(self):
        r = rearrangement(StepFunction([-4.0], [2.5]))
        assert list(r.values) == [4.0] and r.domain_length == 2.5

    @settings(max_examples=100, deadline=None)
    @given(step_functions(), st.sampled_from([1.0, 2.0, 3.3]))
    def test_power_integral(self, f, p):
        r = rearrangement(f)
        brute = math.fsum(np.abs(f.values) ** p * f.measures)
        got = float(r.power_integral_from_zero(np.array([r.domain_length]), p)[0])
        assert got == pytest.approx(brute, rel=1e-10, abs=1e-300)


class TestLayerCake:
    def test_indicator(self):
        f = StepFunction([1.0, 0.0], [0.3, 0.7])
        for s in (1, 2.5, 7):
            lhs, rhs = layer_cake(f, s)
            assert lhs == pytest.approx(0.3) and rhs == pytest.approx(0.3)

    def test_two_atoms(self):
        lhs, rhs = layer_cake(StepFunction([1.0, 2.0], [0.5, 0.5]), 2)
        assert lhs == pytest.approx(2.5, rel=1e-15) and rhs == pytest.approx(2.5, rel=1e-15)

    def test_mean_form(self):
        f = StepFunction([1.0, 2.0], [1.0, 1.0])
        assert layer_cake_mean(f, 2) == pytest.approx((2.5, 2.5))

    @settings(max_examples=150, deadline=None)
    @given(step_functions(), st.sampled_from([1.0, 1.5, 2.0, 3.0, 7.0]))
    def test_identity(self, f, s):
        lhs, rhs = layer_cake(f.scale(1.0 / max(f.sup_abs, 1e-300)), s)
        assert abs(lhs - rhs) <= 1e-10 * max(lhs, 1.0)


class TestCSV:
    def test_roundtrip(self, tmp_path):
        f = StepFunction([1.5, -2.0, 0.0], [0.25, 0.5, 0.25])
        path = tmp_path / "f.csv"
        write_step_csv(f, path)
        g = read_step_csv(path)
        assert np.array_equal(f.values, g.values) and np.array_equal(f.measures, g.measures)

    @pytest.mark.parametrize(
        "text,line",
        [
            ("value,measure\n1,0.5\n2,-1\n", 3),
            ("value,measure\n1,0.5\nx,1\n", 3),
            ("val,meas\n1,1\n", 1),
            ("value,measure\n1,0.5,3\n", 2),
        ],
    )
    def test_line_numbered_errors(self, text, line):
        with pytest.raises(CSVFormatError) as e:
            read_step_csv(io.StringIO(text))
        assert e.value.line == line
        assert f"line {line}" in str(e.value)
