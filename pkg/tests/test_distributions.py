import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from occucast.distributions import (
    BernoulliForecast, CountMixtureForecast, EmpiricalForecast, NegBinForecast, StudentTForecast,
)

shapes = st.floats(0.05, 500.0)
rates = st.floats(0.01, 50.0)


@given(shapes, rates)
def test_negbin_table_normalized_and_matches_scipy(alpha, beta):
    nb = NegBinForecast(alpha, beta)
    assert abs(nb.table.sum() - 1.0) < 1e-9
    ref = stats.nbinom(alpha, beta / (1 + beta))
    k = np.arange(0, 30)
    assert np.allclose(nb.pmf(k), ref.pmf(k), rtol=1e-8, atol=1e-300)


@given(shapes, rates, st.lists(st.floats(0, 1), min_size=2, max_size=10))
def test_quantile_monotone(alpha, beta, us):
    us = np.sort(us)
    q = NegBinForecast(alpha, beta).quantile(us)
    assert np.all(np.diff(q) >= 0)


def test_discrete_quantile_is_smallest_reaching_level():
    nb = NegBinForecast(3.0, 0.5)
    for u in (0.05, 0.5, 0.9, 0.99):
        k = int(nb.quantile(u))
        assert nb.cdf(k) >= u
        assert k == 0 or nb.cdf(k - 1) < u


def test_mid_pit():
    nb = NegBinForecast(2.0, 1.0)
    assert nb.pit(3) == pytest.approx(nb.cdf(2) + 0.5 * nb.pmf(3))
    assert nb.pit(-1) == 0.0


def test_off_support_logpdf():
    nb = NegBinForecast(2.0, 1.0)
    assert nb.logpdf(-1) == -np.inf and nb.logpdf(1.5) == -np.inf
    assert nb.pmf(2.5) == 0.0


def test_bernoulli_forecast():
    b = BernoulliForecast(3.0, 1.0)
    assert b.prob == 0.75 and b.table.tolist() == pytest.approx([0.25, 0.75])
    assert b.median == 1.0


@pytest.mark.parametrize("prob", [0.0, 0.3, 1.0])
def test_mixture_pmf_sums_to_one(prob):
    mix = CountMixtureForecast(prob, NegBinForecast(4.0, 0.8))
    assert abs(mix.table.sum() - 1.0) < 1e-9
    assert mix.pmf(0) == pytest.approx(1 - prob)
    j = np.arange(1, 40)
    assert np.allclose(mix.pmf(j), prob * NegBinForecast(4.0, 0.8).pmf(j - 1))
    assert mix.mean == pytest.approx(prob * (1 + 5.0))


def test_student_t_matches_scipy():
    t = StudentTForecast(10.0, 2.0, 5.0)
    ref = stats.t(5.0, loc=10.0, scale=2.0)
    assert t.cdf(12.3) == pytest.approx(ref.cdf(12.3))
    assert t.logpdf(7.0) == pytest.approx(ref.logpdf(7.0))
    assert t.quantile(0.95) == pytest.approx(ref.ppf(0.95))
    assert t.median == 10.0


def test_empirical_forecast_quantiles_are_atoms():
    e = EmpiricalForecast([0, 0, 1, 2, 2, 2, 5, 9])
    assert e.discrete and e.n == 8
    assert e.quantile(0.25) == 0.0 and e.quantile(0.5) == 2.0 and e.quantile(1.0) == 9.0
    assert e.cdf(2) == 0.75 and e.pmf(2) == 0.375
    assert e.pit(2) == pytest.approx(0.375 + 0.1875)
    assert e.logpdf(3) == -np.inf
    with pytest.raises(ValueError):
        EmpiricalForecast([])


def test_interval_nesting():
    nb = NegBinForecast(5.0, 0.3)
    lo80, hi80 = nb.interval(0.8)
    lo95, hi95 = nb.interval(0.95)
    assert lo95 <= lo80 <= hi80 <= hi95
