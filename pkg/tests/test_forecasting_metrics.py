import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from occucast.dglm import ComponentSpec, DiscountSpec, PoissonDGLM, build_fg
from occucast.distributions import EmpiricalForecast, NegBinForecast
from occucast.errors import InputError
from occucast.forecasting import HorizonTrace, run_series, summarize
from occucast.metrics import (
    anomaly_score, coverage, evaluate, interval_coverage, point_metrics, seasonal_naive, zape,
)


@pytest.mark.parametrize("y,f,want", [(0, 1, 0.5), (0, 0, 0.0), (4, 5, 0.25)])
def test_zape_examples(y, f, want):
    assert zape(y, f) == pytest.approx(want)


def test_zape_rejects_negative():
    with pytest.raises(InputError):
        zape(-1, 2)


def test_point_metrics_examples():
    assert point_metrics([3, 0, 7], [3, 0, 7]) == (0.0, 0.0, 0.0)
    assert point_metrics([2], [0]) == (2.0, 2.0, 100.0)
    with pytest.raises(InputError):
        point_metrics([1, 2], [1])


@given(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 60)), min_size=1, max_size=40))
def test_point_metrics_against_loop(pairs):
    y = [a for a, _ in pairs]
    f = [b for _, b in pairs]
    n = len(pairs)
    rmse = math.sqrt(sum((a - b) ** 2 for a, b in pairs) / n)
    mae = sum(abs(a - b) for a, b in pairs) / n
    z = 100.0 * sum(zape(a, b) for a, b in pairs) / n
    got = point_metrics(y, f)
    assert got == (pytest.approx(rmse), pytest.approx(mae), pytest.approx(z))


def test_coverage_point_mass_and_shifted():
    y = [3, 5, 0, 8]
    exact = [EmpiricalForecast([v]) for v in y]
    assert coverage(y, exact) == {0.8: 1.0, 0.9: 1.0, 0.95: 1.0}
    far = [EmpiricalForecast([v + 100]) for v in y]
    assert set(coverage(y, far).values()) == {0.0}
    assert interval_coverage(y, [0, 0, 0, 0], [3, 3, 3, 3]) == 0.5


def test_seasonal_naive():
    y = np.tile(np.arange(96), 4)
    f = seasonal_naive(y, 96)
    assert np.isnan(f[:96]).all()
    assert point_metrics(y[96:], f[96:])[1] == 0.0
    walk = seasonal_naive([1, 4, 2, 9], 1)
    assert walk[1:].tolist() == [1, 4, 2]
    with pytest.raises(InputError):
        seasonal_naive([1, 2, 3], 3)


def test_anomaly_score_tails():
    nb = NegBinForecast(400.0, 40.0)
    q, ll = anomaly_score(int(nb.median), nb)
    assert abs(q - 0.5) < 0.07
    q_hi, ll_hi = anomaly_score(60, nb)
    assert q_hi > 0.999999 and ll_hi < ll - 20
    assert anomaly_score(-3, nb) == (0.0, -math.inf)


def test_evaluate_report():
    y = [1, 2, 3]
    rep = evaluate(y, [EmpiricalForecast([v]) for v in y], levels=(0.9,))
    assert (rep.rmse, rep.mae, rep.zape, rep.n_steps) == (0.0, 0.0, 0.0, 3)
    assert rep.to_dict()["coverage"] == {"0.9": 1.0}


def test_rotation_power_matches_angle():
    spec = ComponentSpec(period=96, harmonics=1)
    _, G = build_fg(spec)
    block = np.linalg.matrix_power(G[1:3, 1:3], 4)
    w = 4 * 2 * math.pi / 96
    assert np.allclose(block, [[math.cos(w), math.sin(w)], [-math.sin(w), math.cos(w)]], atol=1e-12)


def test_run_series_aligns_horizons():
    rng = np.random.default_rng(0)
    y = rng.poisson(5, 300)
    run = run_series(PoissonDGLM(discounts=DiscountSpec(trend=0.97)), y, horizons=(1, 4),
                     levels=(0.9,), emit_after=100)
    one, four = run.traces[1], run.traces[4]
    assert one.target == list(range(101, 301))
    assert four.target == list(range(101, 301))
    assert all(t - o == 4 for o, t in zip(four.origin, four.target))
    assert all(lo[0] <= med <= hi[0] for lo, med, hi in zip(one.lower, one.median, one.upper))
    back = HorizonTrace.from_dict(one.to_dict())
    assert back.median == one.median and back.pit == one.pit


def test_run_series_k1_equals_in_loop_forecast():
    y = np.random.default_rng(1).poisson(9, 120)
    model = PoissonDGLM()
    ref = PoissonDGLM()
    run = run_series(model, y, horizons=(1,), levels=(0.8,))
    meds = [summarize(ref.update(int(v)), (0.8,))[0] for v in y]
    assert run.traces[1].median == meds


def test_summarize_shapes():
    med, mean, lo, hi = summarize(NegBinForecast(10.0, 1.0), (0.8, 0.95))
    assert len(lo) == len(hi) == 2 and lo[1] <= lo[0] <= med <= hi[0] <= hi[1]
    assert mean == 10.0
