import math

import numpy as np
import pytest

from grandlp.generators import (
    AnalyticFunctionSpec,
    analytic_corpus,
    discretize,
    exact_distribution,
    exact_moment,
    graded_edges,
    parse_gen_spec,
    sample_uniform,
    shared_partition_pairs,
)
from grandlp.measure_core import distribution, lp_means


def spec(kind, n=1000, **params):
    return AnalyticFunctionSpec(kind, n, params)


def test_constant_cells():
    f = discretize(spec("constant", 4, c=2.5))
    assert f.n_atoms == 4 and np.all(f.values == 2.5) and f.total_measure == 1.0


def test_indicator_mass():
    f = discretize(spec("indicator", 1000, a=0.0, b=0.3))
    assert math.fsum(f.measures[f.values == 1.0]) == pytest.approx(0.3, abs=1e-12)


def test_domain_length_kept():
    f = discretize(AnalyticFunctionSpec("power", 50, {"alpha": 2.0}, (1.0, 4.0)))
    assert f.total_measure == pytest.approx(3.0)


@pytest.mark.parametrize("bad", [
    dict(kind="nope", n=10, params={}),
    dict(kind="log_power", n=1, params={"theta": 1}),
    dict(kind="log_power", n=10, params={"theta": 1.5}),
    dict(kind="indicator", n=10, params={"a": 0.5, "b": 0.1}),
    dict(kind="power", n=10, params={}),
])
def test_invalid_specs(bad):
    with pytest.raises(ValueError):
        AnalyticFunctionSpec(**bad)


def test_graded_edges_shape():
    e = graded_edges(1000)
    assert e.size == 1001 and e[0] == 0 and e[-1] == 1
    w = np.diff(e)
    assert np.all(w > 0)
    assert w[1] < w[-1] / 100  # graded toward 0


def test_never_samples_zero():
    f = discretize(spec("power", 10_000, alpha=-0.5))
    assert np.all(np.isfinite(f.values))


def test_overflow_widens_first_cell():
    # x^-60 overflows at the finest floor; the retry widens the first cell
    f = discretize(spec("power", 2000, alpha=-60.0))
    assert np.all(np.isfinite(f.values))


class TestExactMoment:
    def test_factorials(self):
        s = spec("log_power", theta=1.0)
        assert exact_moment(s, 3) == pytest.approx(6.0, rel=1e-13)
        assert exact_moment(s, 1) == pytest.approx(1.0, rel=1e-13)

    def test_half(self):
        # Gamma(3) = 2, independent of the log-Gamma route
        assert exact_moment(spec("log_power", theta=0.5), 4) == pytest.approx(math.gamma(3), rel=1e-13)

    def test_kind_mismatch(self):
        with pytest.raises(ValueError):
            exact_moment(spec("constant", c=1.0), 2)

    def test_refinement_convergence(self):
        for theta in (1.0, 0.5):
            s = spec("log_power", theta=theta)
            ps = np.array([1.0, 2.0, 4.0, 8.0])
            exact = np.array([exact_moment(s, p) for p in ps])
            errs = []
            for n in (5_000, 10_000, 20_000, 40_000):
                m = lp_means(discretize(AnalyticFunctionSpec("log_power", n, s.params)), ps) ** ps
                errs.append(np.abs(m / exact - 1))
            errs = np.array(errs)
            assert np.all(np.diff(errs, axis=0) <= 0)


class TestExactDistribution:
    def test_log(self):
        assert exact_distribution(spec("log_power", theta=1.0), 1.0) == pytest.approx(math.exp(-1))

    def test_constant(self):
        assert exact_distribution(spec("constant", c=5.0), 7.0) == 0.0

    def test_indicator(self):
        assert exact_distribution(spec("indicator", a=0.0, b=0.3), 0.5) == pytest.approx(0.3)

    def test_unsupported(self):
        with pytest.raises(ValueError):
            exact_distribution(spec("power", alpha=1.0), 0.5)

    def test_sup_error_below_first_cell(self):
        s = spec("log_power", 20_000, theta=0.5)
        f = discretize(s)
        t = np.linspace(0, 4, 4001)
        err = np.max(np.abs(distribution(f)(t) - exact_distribution(s, t)))
        assert err <= np.max(f.measures)


def test_parse_gen_spec():
    s = parse_gen_spec("log_power:theta=1,n=100000")
    assert s.kind == "log_power" and s.n == 100000 and s.params == {"theta": 1}
    s = parse_gen_spec("indicator:a=-1,b=1,lo=-4,hi=4,n=64")
    assert s.domain == (-4.0, 4.0)
    assert parse_gen_spec("random_step:seed=3").params["seed"] == 3
    for bad in ("power:alpha", "power:alpha=x", "bogus:n=3"):
        with pytest.raises(ValueError):
            parse_gen_spec(bad)


def test_random_step_reproducible():
    a, b = discretize(spec("random_step", 64, seed=9)), discretize(spec("random_step", 64, seed=9))
    assert np.array_equal(a.values, b.values) and np.array_equal(a.measures, b.measures)
    c = discretize(spec("random_step", 64, seed=10))
    assert not np.array_equal(a.values, c.values)


def test_corpus_and_pairs():
    specs = analytic_corpus(100)
    assert len(specs) == 11 and len(analytic_corpus(100, include_unbounded_powers=False)) == 9
    pairs = list(shared_partition_pairs(5, 16, seed=1))
    assert all(np.array_equal(f.measures, g.measures) for f, g in pairs)


def test_sample_uniform():
    x, h, v = sample_uniform(spec("power", 4, alpha=1.0))
    assert h == 0.25 and np.allclose(x, [0.125, 0.375, 0.625, 0.875]) and np.allclose(v, x)
