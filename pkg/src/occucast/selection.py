"""Per-cell model family selection and trend-discount tuning."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .config import PipelineConfig
from .dglm import ComponentSpec, DiscountSpec, NormalDLM, PoissonDGLM
from .errors import InputError
from .mixtures import DCMM, DLMM

FAMILIES = ("DLM", "PoissonDGLM", "DLMM", "DCMM")


@dataclass(frozen=True)
class FamilyDecision:
    family: str
    train_mean: float
    train_sparsity: float

    def to_dict(self):
        return asdict(self)


def classify(train_mean: float, train_sparsity: float,
             mean_threshold: float = 50.0, sparsity_threshold: float = 0.15) -> str:
    """Mean above the threshold picks a Normal-based family; sparsity at or above it a mixture."""
    high = train_mean > mean_threshold
    sparse = train_sparsity >= sparsity_threshold
    if high:
        return "DLMM" if sparse else "DLM"
    return "DCMM" if sparse else "PoissonDGLM"


def select_family(counts, mean_threshold: float = 50.0,
                  sparsity_threshold: float = 0.15) -> FamilyDecision:
    y = np.asarray(counts)
    if y.size == 0:
        raise InputError("cannot select a family from an empty training vector", field="counts")
    if (y < 0).any():
        raise InputError("training counts must be non-negative", field="counts")
    mean = float(y.mean())
    sparsity = float(np.count_nonzero(y == 0) / y.size)
    return FamilyDecision(classify(mean, sparsity, mean_threshold, sparsity_threshold), mean, sparsity)


def make_model(family: str, spec: ComponentSpec, discounts: DiscountSpec,
               seed: int = 0, n_samples: int = 5000):
    """Fresh model at m0 = 0, C0 = I (and n0 = s0 = 1 for Normal parts)."""
    if family == "DLM":
        return NormalDLM(spec, discounts)
    if family == "PoissonDGLM":
        return PoissonDGLM(spec, discounts)
    if family == "DCMM":
        return DCMM(spec, discounts)
    if family == "DLMM":
        return DLMM(spec, discounts, seed=seed, n_samples=n_samples)
    raise InputError(f"unknown model family {family!r}", field="family")


def trend_discount_scores(counts, family: str, spec: ComponentSpec, discounts: DiscountSpec,
                          grid=(0.96, 0.97, 1.0), window: int = 288, burn_in: int = 0,
                          seed: int = 0, n_samples: int = 5000) -> dict[float, float]:
    """One-step forecast-median MAE over the first ``window`` steps, per trend discount."""
    y = np.asarray(counts)
    if window > y.size:
        raise InputError(f"tuning window {window} exceeds series length {y.size}", field="window")
    if spec.period and window < spec.period:
        warnings.warn(f"tuning window {window} is shorter than one seasonal period ({spec.period})",
                      stacklevel=2)
    if burn_in >= window:
        raise InputError("tuning burn-in must be shorter than the window", field="burn_in")
    scores = {}
    for delta in grid:
        model = make_model(family, spec, discounts.replace(trend=delta), seed, n_samples)
        err = 0.0
        for t in range(window):
            med = model.update(int(y[t])).median
            if t >= burn_in:
                err += abs(y[t] - med)
        scores[float(delta)] = err / (window - burn_in)
    return scores


def tune_trend_discount(counts, family: str, spec: ComponentSpec, discounts: DiscountSpec,
                        grid=(0.96, 0.97, 1.0), window: int = 288, burn_in: int = 0,
                        seed: int = 0, n_samples: int = 5000) -> float:
    """Grid value with the lowest MAE; ties go to the largest discount."""
    scores = trend_discount_scores(counts, family, spec, discounts, grid, window, burn_in,
                                   seed, n_samples)
    best, best_score = None, math.inf
    for delta in sorted(scores, reverse=True):
        score = scores[delta]
        if score < best_score - 1e-12 * max(1.0, abs(best_score) if math.isfinite(best_score) else 1.0):
            best, best_score = delta, score
    return best


def initialize_cell(counts, config: PipelineConfig | None = None, seed: int = 0,
                    decision: FamilyDecision | None = None):
    """Select the family, tune the trend discount and return an unfitted model."""
    config = config or PipelineConfig()
    y = np.asarray(counts)
    if y.size < config.init_window:
        raise InputError(f"series has {y.size} bins; initialization needs at least "
                         f"{config.init_window}", field="counts")
    train = y[:config.init_window]
    if decision is None:
        decision = select_family(train, config.mean_threshold, config.sparsity_threshold)
    spec = config.component_spec()
    base = config.discount_spec()
    delta = tune_trend_discount(train, decision.family, spec, base, config.trend_grid,
                                config.init_window, config.tuning_burn_in, seed, config.dlmm_samples)
    return make_model(decision.family, spec, base.replace(trend=delta), seed, config.dlmm_samples)
