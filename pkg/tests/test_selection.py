import warnings

import numpy as np
import pytest
from scipy import stats

from occucast.config import PipelineConfig
from occucast.dglm import (ComponentSpec, DiscountSpec, NormalDLM, PoissonDGLM, StateMoments,
                           build_fg, discount_matrix, poisson_step)
from occucast.errors import ConfigError, InputError
from occucast.geo_binning import build_panel
from occucast.mixtures import DCMM, DLMM
from occucast.selection import (
    classify, initialize_cell, select_family, trend_discount_scores, tune_trend_discount,
)
from occucast.synth import TrajectoryConfig, generate_trajectories


@pytest.mark.parametrize("mean,sparsity,family", [
    (60, 0.10, "DLM"), (10, 0.50, "DCMM"), (60, 0.20, "DLMM"), (10, 0.05, "PoissonDGLM"),
    (50, 0.15, "DCMM"), (50.0001, 0.1499, "DLM"),
])
def test_four_way_rule(mean, sparsity, family):
    assert classify(mean, sparsity) == family


def test_select_family_statistics():
    d = select_family([0, 0, 4, 6])
    assert (d.family, d.train_mean, d.train_sparsity) == ("DCMM", 2.5, 0.5)
    with pytest.raises(InputError):
        select_family([])
    with pytest.raises(InputError):
        select_family([1, -1])


def test_constant_series_prefers_no_trend_discount():
    y = np.full(288, 5)
    spec, disc = ComponentSpec(), DiscountSpec()
    scores = trend_discount_scores(y, "PoissonDGLM", spec, disc, burn_in=96)
    assert scores[1.0] <= min(scores.values())
    assert tune_trend_discount(y, "PoissonDGLM", spec, disc, burn_in=96) == 1.0


def test_tie_break_picks_largest():
    y = np.full(288, 5)
    spec, disc = ComponentSpec(), DiscountSpec()
    assert tune_trend_discount(y, "PoissonDGLM", spec, disc, grid=(0.99, 0.995), burn_in=96) == 0.995


def test_single_element_grid():
    y = np.random.default_rng(0).poisson(4, 288)
    assert tune_trend_discount(y, "PoissonDGLM", ComponentSpec(), DiscountSpec(), grid=(0.93,)) == 0.93


def _independent_scores(y, grid, window):
    spec = ComponentSpec()
    F, G = build_fg(spec)
    out = {}
    for delta in grid:
        disc = DiscountSpec(trend=delta)
        D = discount_matrix(spec, disc)
        state = StateMoments(np.zeros(spec.dim), np.eye(spec.dim))
        errs = []
        for t in range(window):
            state, _, prior = poisson_step(state, F, G, D, int(y[t]), rho=disc.aux)
            med = stats.nbinom.ppf(0.5, prior.alpha, prior.beta / (1 + prior.beta))
            errs.append(abs(y[t] - med))
        out[delta] = float(np.mean(errs))
    return out


def test_level_shift_matches_independent_scoring():
    rng = np.random.default_rng(1)
    y = np.concatenate([rng.poisson(4, 144), rng.poisson(20, 144)])
    grid = (0.9, 0.96, 0.97, 1.0)
    ours = trend_discount_scores(y, "PoissonDGLM", ComponentSpec(), DiscountSpec(), grid=grid)
    ref = _independent_scores(y, grid, 288)
    assert ours == pytest.approx(ref, abs=1e-12)
    best = min(ref, key=lambda d: (ref[d], -d))
    assert tune_trend_discount(y, "PoissonDGLM", ComponentSpec(), DiscountSpec(), grid=grid) == best
    assert best < 1.0


def test_short_window_warns_and_long_window_rejected():
    y = np.random.default_rng(2).poisson(4, 300)
    with pytest.warns(UserWarning, match="seasonal period"):
        trend_discount_scores(y, "PoissonDGLM", ComponentSpec(), DiscountSpec(), window=48)
    with pytest.raises(InputError):
        trend_discount_scores(y, "PoissonDGLM", ComponentSpec(), DiscountSpec(), window=400)


def test_tuning_is_deterministic():
    y = np.random.default_rng(3).poisson(6, 288)
    runs = {tune_trend_discount(y, "DCMM", ComponentSpec(), DiscountSpec()) for _ in range(2)}
    assert len(runs) == 1


@pytest.mark.parametrize("counts,cls", [
    (np.full(288, 80), NormalDLM), (np.full(288, 8), PoissonDGLM),
    (np.tile([0, 0, 9, 9], 72), DCMM), (np.tile([0, 90, 90, 90], 72), DLMM),
])
def test_initialize_cell_builds_the_selected_family(counts, cls):
    model = initialize_cell(counts)
    assert isinstance(model, cls)
    assert model.dim == 5 and model.spec.period == 96 and model.t == 0


def test_initialize_cell_needs_a_full_window():
    with pytest.raises(InputError, match="288"):
        initialize_cell(np.ones(100, dtype=int))


def test_config_validation():
    assert PipelineConfig().seasonal_period == 96
    with pytest.raises(ConfigError):
        PipelineConfig(harmonics=48)
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"nonsense": 1})
    with pytest.raises(ConfigError):
        PipelineConfig(bin_width=7)
    cfg = PipelineConfig(horizons=[1, 4])
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg


def test_fine_cells_are_mostly_sparse():
    obs = list(generate_trajectories(60, 3, TrajectoryConfig(jitter_m=15.0, seed=1)))
    panel = build_panel(obs, 17, 900)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        families = [select_family(panel.counts(c)[:288]).family for c in panel.cells]
    assert families.count("DCMM") / len(families) > 0.9
