import math

import numpy as np
import pytest
from scipy import special, stats

from occucast.conjugate import poisson_match_prior
from occucast.dglm import (
    BernoulliDGLM, ComponentSpec, DiscountSpec, NormalDLM, PoissonDGLM, StateMoments,
    apply_random_effects, build_fg, discount_matrix, evolve, normal_dlm_step, poisson_step,
    predictor_prior,
)
from occucast.distributions import NegBinForecast
from occucast.errors import ConfigError, DegeneratePriorError, InputError, NumericalStateError


def test_default_design_matches_two_harmonic_layout():
    F, G = build_fg(ComponentSpec(trend_order=1, period=96, harmonics=2))
    assert F.tolist() == [1, 1, 0, 1, 0]
    w = 2 * math.pi / 96
    for i, j in ((1, 1), (3, 2)):
        c, s = math.cos(j * w), math.sin(j * w)
        assert np.allclose(G[i:i + 2, i:i + 2], [[c, s], [-s, c]], atol=1e-15)
    assert G[0, 0] == 1.0 and np.count_nonzero(G) == 9


def test_level_only_model():
    F, G = build_fg(ComponentSpec(period=None, harmonics=0))
    assert F.tolist() == [1.0] and G.tolist() == [[1.0]]


def test_linear_trend_block():
    _, G = build_fg(ComponentSpec(trend_order=2, harmonics=0, period=None))
    assert G.tolist() == [[1.0, 1.0], [0.0, 1.0]]


@pytest.mark.parametrize("harmonics,period", [(48, 96), (2, 4), (1, None)])
def test_over_specified_seasonality_rejected(harmonics, period):
    with pytest.raises(ConfigError):
        ComponentSpec(period=period, harmonics=harmonics)


def test_quarter_period_rotation_is_minus_identity():
    spec = ComponentSpec(period=4, harmonics=1)
    _, G = build_fg(spec)
    block = G[spec.blocks()["seasonal"], spec.blocks()["seasonal"]]
    assert np.allclose(np.linalg.matrix_power(block, 2), -np.eye(2), atol=1e-15)


@pytest.mark.parametrize("bad", [0.0, 1.2, -0.5])
def test_discounts_must_be_in_unit_interval(bad):
    with pytest.raises(ConfigError):
        DiscountSpec(trend=bad)


def test_evolve_without_discount_is_plain_propagation():
    spec = ComponentSpec()
    _, G = build_fg(spec)
    rng = np.random.default_rng(0)
    A = rng.normal(size=(5, 5))
    C = A @ A.T
    D = discount_matrix(spec, DiscountSpec(trend=1.0, seasonal=1.0))
    out = evolve(StateMoments(np.ones(5), C), G, D)
    assert np.allclose(out.cov, G @ C @ G.T, rtol=0, atol=1e-12)
    assert np.allclose(out.mean, G @ np.ones(5))


def test_single_block_discount_identity():
    spec = ComponentSpec(period=None, harmonics=0)
    D = discount_matrix(spec, DiscountSpec(trend=0.9))
    out = evolve(StateMoments(np.zeros(1), np.eye(1)), np.eye(1), D)
    assert out.cov[0, 0] == pytest.approx(1 / 0.9)


def test_blockwise_discount_matches_explicit_w():
    spec = ComponentSpec()
    _, G = build_fg(spec)
    disc = DiscountSpec(trend=0.96, seasonal=0.994)
    assert np.allclose(np.diag(evolve(StateMoments(np.zeros(5), np.eye(5)), np.eye(5),
                                      discount_matrix(spec, disc)).cov),
                       [1 / 0.96] + [1 / 0.994] * 4)
    rng = np.random.default_rng(1)
    A = rng.normal(size=(5, 5))
    C = A @ A.T
    P = G @ C @ G.T
    W = np.zeros_like(P)
    for name, sl in spec.blocks().items():
        d = getattr(disc, name)
        W[sl, sl] = (1 - d) / d * P[sl, sl]
    got = evolve(StateMoments(np.zeros(5), C), G, discount_matrix(spec, disc)).cov
    assert np.allclose(got, P + W, atol=1e-12)


def test_non_psd_state_reports_eigenvalue():
    C = np.diag([1.0, -0.5])
    with pytest.raises(NumericalStateError) as info:
        evolve(StateMoments(np.zeros(2), C), np.eye(2), np.ones((2, 2)))
    assert info.value.eigenvalue == pytest.approx(-0.5)


def test_predictor_prior_examples():
    assert predictor_prior(np.array([1.0]), np.array([2.0]), np.array([[3.0]])) == (2.0, 3.0)
    assert predictor_prior(np.array([1.0, 1.0]), np.array([1.0, -1.0]), np.eye(2)) == (0.0, 2.0)
    with pytest.raises(DegeneratePriorError):
        predictor_prior(np.array([1.0, 0.0]), np.zeros(2), np.diag([0.0, 1.0]))


def test_initial_prior_on_default_design():
    spec = ComponentSpec()
    model = PoissonDGLM(spec, DiscountSpec(trend=0.97))
    prior = model.prior()
    F, _ = build_fg(spec)
    f, q = predictor_prior(F, prior.mean, prior.cov)
    assert f == 0.0
    assert q == pytest.approx(1 / 0.97 + 2 / 0.994)


def test_random_effects_arithmetic():
    assert apply_random_effects(2.5, 1.0) == 2.5
    assert apply_random_effects(0.9, 0.9) == pytest.approx(1.0)


def test_negbin_moments():
    nb = NegBinForecast(2.0, 1.0)
    assert nb.mean == 2.0
    assert abs(nb.table.sum() - 1.0) < 1e-12
    assert np.allclose(nb.pmf(np.arange(20)), stats.nbinom(2.0, 0.5).pmf(np.arange(20)))


def test_poisson_step_against_hand_computation():
    spec = ComponentSpec()
    F, G = build_fg(spec)
    disc = DiscountSpec(trend=0.97)
    D = discount_matrix(spec, disc)
    m = np.array([1.5, 0.2, -0.1, 0.05, 0.0])
    C = 0.1 * np.eye(5)
    state, fc, params = poisson_step(StateMoments(m, C), F, G, D, 7)
    a, R = G @ m, (G @ C @ G.T) * D
    f, q = F @ a, F @ R @ F
    al, be = params.alpha, params.beta
    assert special.digamma(al) - math.log(be) == pytest.approx(f, abs=1e-10)
    assert special.polygamma(1, al) == pytest.approx(q, abs=1e-10)
    assert fc.mean == pytest.approx(al / be)
    g = special.digamma(al + 7) - math.log(be + 1)
    p = special.polygamma(1, al + 7)
    RF = R @ F
    assert np.allclose(state.mean, a + RF * (g - f) / q, atol=1e-12)
    assert np.allclose(state.cov, R - np.outer(RF, RF) * (1 - p / q) / q, atol=1e-12)


def test_poisson_step_missing_keeps_prior():
    spec = ComponentSpec()
    F, G = build_fg(spec)
    D = discount_matrix(spec, DiscountSpec())
    state = StateMoments(np.full(5, 0.3), np.eye(5))
    out, _, _ = poisson_step(state, F, G, D, None)
    prior = evolve(state, G, D)
    assert np.array_equal(out.mean, prior.mean) and np.array_equal(out.cov, prior.cov)


def test_missing_observation_is_neutral_for_models():
    for cls in (PoissonDGLM, BernoulliDGLM, NormalDLM):
        model = cls()
        prior = model.prior()
        model.update(float("nan"))
        assert np.allclose(model.m, prior.mean) and np.allclose(model.C, prior.cov)
        assert model.t == 1


def test_invalid_observations_rejected():
    with pytest.raises(InputError):
        PoissonDGLM().update(-1)
    with pytest.raises(InputError):
        PoissonDGLM().update(2.5)
    with pytest.raises(InputError):
        BernoulliDGLM().update(2)
    with pytest.raises(InputError):
        NormalDLM().update(float("inf"))


def test_no_information_observation_leaves_state_nearly_unmoved():
    # y equal to the prior mean nudges m only by the digamma/log offset
    model = PoissonDGLM(ComponentSpec(period=None, harmonics=0), m=[math.log(20.0)], C=[[1e-4]])
    before = model.m.copy()
    fc = model.forecast()
    model.update(round(fc.mean))
    assert abs(model.m[0] - before[0]) < 1e-3


def test_posterior_contracts_under_repeated_data():
    model = PoissonDGLM(ComponentSpec(period=None, harmonics=0))
    variances = []
    for _ in range(50):
        model.update(10)
        variances.append(model.forecast().variance)
    assert model.C[0, 0] < 0.05
    assert all(b < a for a, b in zip(variances[10:], variances[11:]))
    assert math.exp(model.m[0]) == pytest.approx(10, rel=0.1)


def test_bernoulli_success_raises_forecast_probability():
    model = BernoulliDGLM()
    p0 = model.forecast().prob
    model.update(1)
    assert model.forecast().prob > p0


def test_normal_step_with_zero_residual():
    spec = ComponentSpec(period=None, harmonics=0)
    F, G = build_fg(spec)
    D = discount_matrix(spec, DiscountSpec())
    state, fc, (n, s) = normal_dlm_step(StateMoments(np.array([4.0]), np.eye(1)), F, G, D, (3.0, 2.0), 4.0)
    assert state.mean[0] == 4.0
    assert s <= 2.0 and n == 4.0
    assert fc.df == 3.0 and fc.scale == pytest.approx(math.sqrt(1.0 + 2.0))


def test_normal_variance_discount_extends_degrees_of_freedom():
    model = NormalDLM(discounts=DiscountSpec(aux=1.0))
    for y in (3.0, 4.0, 5.0):
        model.update(y)
    assert model.n == 4.0
    model = NormalDLM(discounts=DiscountSpec(aux=0.5))
    for y in (3.0, 4.0, 5.0):
        model.update(y)
    assert model.n == pytest.approx(0.5 * (0.5 * (0.5 + 1) + 1) + 1)


def _fitted(aux):
    model = PoissonDGLM(discounts=DiscountSpec(aux=aux))
    rng = np.random.default_rng(3)
    for y in rng.poisson(150, 200):
        model.update(int(y))
    return model.forecast()


def test_smaller_random_effect_discount_widens_intervals():
    fcs = [_fitted(a) for a in (1.0, 0.8, 0.5, 0.2)]
    widths = [hi - lo for lo, hi in (fc.interval(0.9) for fc in fcs)]
    assert all(b >= a for a, b in zip(widths, widths[1:])) and widths[-1] > widths[0]
    assert all(b.variance > a.variance for a, b in zip(fcs, fcs[1:]))


def test_random_effect_inflates_predictor_variance():
    base = PoissonDGLM(discounts=DiscountSpec(aux=1.0)).conjugate_params()
    inflated = PoissonDGLM(discounts=DiscountSpec(aux=0.8)).conjugate_params()
    q = special.polygamma(1, base.alpha)
    assert special.polygamma(1, inflated.alpha) == pytest.approx(q / 0.8, rel=1e-9)
    assert inflated == poisson_match_prior(0.0, q / 0.8)


@pytest.mark.parametrize("cls", [PoissonDGLM, BernoulliDGLM, NormalDLM])
def test_state_round_trip_and_determinism(cls):
    rng = np.random.default_rng(4)
    data = rng.integers(0, 2, 120) if cls is BernoulliDGLM else rng.poisson(6, 120)
    a, b = cls(discounts=DiscountSpec(trend=0.97)), cls(discounts=DiscountSpec(trend=0.97))
    for y in data[:60]:
        a.update(int(y))
        b.update(int(y))
    c = cls.from_dict(a.to_dict())
    for y in data[60:]:
        fa, fc = a.update(int(y)), c.update(int(y))
        assert fa.params() == fc.params()
    for y in data[60:]:
        b.update(int(y))
    assert np.array_equal(a.m, b.m) and np.array_equal(a.C, b.C)


def test_from_dict_rejects_wrong_family_or_version():
    d = PoissonDGLM().to_dict()
    with pytest.raises(InputError):
        BernoulliDGLM.from_dict(d)
    with pytest.raises(InputError):
        PoissonDGLM.from_dict({**d, "version": 99})


def test_regressors_need_values():
    model = PoissonDGLM(ComponentSpec(regressors=("temp",)))
    with pytest.raises(InputError):
        model.forecast()
    assert model.forecast(x=[0.5]).mean > 0
