"""Dynamic generalized linear models with component discounting.

State evolution is ``a = G m`` and ``R = G C G'`` with each diagonal
component block divided by its discount factor (cross-component blocks are
left undiscounted). Poisson and Bernoulli observations are handled by
conjugate moment matching on the linear predictor followed by a linear-Bayes
state update; the Normal DLM uses the discounted-variance conjugate recursion.

The functional steps (``poisson_step`` and friends) and the model classes
share the same helpers, so a model's ``update`` is exactly one functional step.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .conjugate import (BetaParams, GammaParams, bernoulli_match_prior, digamma,
                        poisson_match_prior, trigamma)
from .distributions import BernoulliForecast, NegBinForecast, StudentTForecast
from .errors import ConfigError, DegeneratePriorError, InputError, NumericalStateError

PSD_TOL = 1e-9
STATE_VERSION = 1


@dataclass(frozen=True)
class ComponentSpec:
    trend_order: int = 1
    period: int | None = 96
    harmonics: int = 2
    regressors: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if self.trend_order not in (1, 2):
            raise ConfigError(f"trend_order must be 1 or 2, got {self.trend_order}")
        if self.harmonics < 0:
            raise ConfigError("harmonics must be non-negative")
        if self.harmonics and not self.period:
            raise ConfigError("seasonal harmonics need a period")
        if self.harmonics and self.harmonics >= self.period / 2:
            raise ConfigError(f"over-specified seasonality: {self.harmonics} harmonics "
                              f"for period {self.period} (need harmonics < period/2)")

    @property
    def n_seasonal(self) -> int:
        return 2 * self.harmonics

    @property
    def dim(self) -> int:
        return self.trend_order + self.n_seasonal + len(self.regressors)

    def blocks(self) -> dict[str, slice]:
        out, i = {"trend": slice(0, self.trend_order)}, self.trend_order
        if self.harmonics:
            out["seasonal"] = slice(i, i + self.n_seasonal)
            i += self.n_seasonal
        if self.regressors:
            out["regressors"] = slice(i, i + len(self.regressors))
        return out

    def to_dict(self):
        d = asdict(self)
        d["regressors"] = list(self.regressors)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class DiscountSpec:
    trend: float = 1.0
    seasonal: float = 0.994
    regressors: float = 0.998
    aux: float = 0.9

    def __post_init__(self):
        for name in ("trend", "seasonal", "regressors", "aux"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"discount factor {name}={value} must lie in (0, 1]")

    def replace(self, **kw) -> "DiscountSpec":
        return DiscountSpec(**{**asdict(self), **kw})

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class StateMoments:
    mean: np.ndarray
    cov: np.ndarray


class LinearPredictorMoments(NamedTuple):
    f: float
    q: float
    g: float
    p: float


@dataclass(frozen=True)
class NormalParams:
    """Student-t forecast location/scale plus the variance learning state (n, s)."""

    loc: float
    scale: float
    n: float
    s: float

    def to_dict(self):
        return asdict(self)


@lru_cache(maxsize=None)
def _fg(spec: ComponentSpec) -> tuple[np.ndarray, np.ndarray]:
    dim = spec.dim
    F = np.zeros(dim)
    G = np.zeros((dim, dim))
    F[0] = 1.0
    G[0, 0] = 1.0
    if spec.trend_order == 2:
        G[0, 1] = G[1, 1] = 1.0
    i = spec.trend_order
    for j in range(1, spec.harmonics + 1):
        w = 2.0 * math.pi * j / spec.period
        c, s = math.cos(w), math.sin(w)
        F[i] = 1.0
        G[i:i + 2, i:i + 2] = [[c, s], [-s, c]]
        i += 2
    for _ in spec.regressors:
        G[i, i] = 1.0
        i += 1
    F.setflags(write=False)
    G.setflags(write=False)
    return F, G


def build_fg(spec: ComponentSpec) -> tuple[np.ndarray, np.ndarray]:
    """Observation vector and block-diagonal evolution matrix for ``spec``.

    Regressor slots of ``F`` are zero placeholders; supply values per step.
    """
    F, G = _fg(spec)
    return F.copy(), G.copy()


@lru_cache(maxsize=4096)
def _gpow(spec: ComponentSpec, k: int) -> np.ndarray:
    out = np.linalg.matrix_power(_fg(spec)[1], k)
    out.setflags(write=False)
    return out


def discount_matrix(spec: ComponentSpec, discounts: DiscountSpec) -> np.ndarray:
    """Elementwise multiplier turning ``G C G'`` into ``R``.

    Entry (i, j) is ``1/delta`` when i and j fall in the same component block
    and 1 otherwise, i.e. ``W`` is block diagonal with
    ``W_b = (1 - delta_b)/delta_b * P_b``.
    """
    D = np.ones((spec.dim, spec.dim))
    for name, sl in spec.blocks().items():
        D[sl, sl] = 1.0 / getattr(discounts, name)
    D.setflags(write=False)
    return D


def check_psd(C: np.ndarray, tol: float = PSD_TOL) -> None:
    sym = 0.5 * (C + C.T)
    scale = max(1.0, float(np.abs(sym).max())) if sym.size else 1.0
    try:
        # success certifies min eigenvalue > -tol * scale
        np.linalg.cholesky(sym + (tol * scale) * np.eye(len(sym)))
        return
    except np.linalg.LinAlgError:
        pass
    eig = np.linalg.eigvalsh(sym)
    if not np.all(np.isfinite(eig)):
        raise NumericalStateError("state covariance has non-finite entries", eigenvalue=float("nan"))
    if eig[0] < -tol * max(1.0, abs(eig[-1])):
        raise NumericalStateError(f"state covariance is not PSD (min eigenvalue {eig[0]:.3e})",
                                  eigenvalue=float(eig[0]))


def evolve(state: StateMoments, G: np.ndarray, D: np.ndarray) -> StateMoments:
    """Posterior (m, C) at t-1 to prior (a, R) at t."""
    check_psd(state.cov)
    a = G @ state.mean
    R = (G @ state.cov @ G.T) * D
    return StateMoments(a, R)


def predictor_prior(F: np.ndarray, a: np.ndarray, R: np.ndarray) -> tuple[float, float]:
    f = float(F @ a)
    q = float(F @ R @ F)
    if not q > 0.0:
        raise DegeneratePriorError(f"predictor prior variance q={q} is not positive")
    return f, q


def apply_random_effects(q: float, delta: float) -> float:
    return q / delta


def linear_bayes_update(a, R, F, f, q, g, p) -> tuple[np.ndarray, np.ndarray]:
    RF = R @ F
    m = a + RF * ((g - f) / q)
    C = R - np.outer(RF, RF) * ((1.0 - p / q) / q)
    return m, 0.5 * (C + C.T)


def _is_missing(y) -> bool:
    return y is None or (isinstance(y, float) and math.isnan(y))


def _check_count(y, what="count"):
    if y < 0:
        raise InputError(f"{what} must be non-negative, got {y}", field="y")
    if y != math.floor(y):
        raise InputError(f"{what} must be an integer, got {y}", field="y")


# -- family helpers: (a, R) -> forecast; (a, R, forecast, y) -> posterior -----------

def _poisson_prior(a, R, F, rho):
    f, q = predictor_prior(F, a, R)
    q = apply_random_effects(q, rho)
    params = poisson_match_prior(f, q)
    return f, q, params, NegBinForecast(params.alpha, params.beta)


def _poisson_posterior(a, R, F, f, q, params: GammaParams, y):
    ay = params.alpha + y
    g = float(digamma(ay) - math.log(params.beta + 1.0))
    p = float(trigamma(ay))
    m, C = linear_bayes_update(a, R, F, f, q, g, p)
    return m, C, GammaParams(ay, params.beta + 1.0)


def _bernoulli_prior(a, R, F, rho):
    f, q = predictor_prior(F, a, R)
    q = apply_random_effects(q, rho)
    params = bernoulli_match_prior(f, q)
    return f, q, params, BernoulliForecast(params.alpha, params.beta)


def _bernoulli_posterior(a, R, F, f, q, params: BetaParams, z):
    a1, b1 = params.alpha + z, params.beta + 1 - z
    g = float(digamma(a1) - digamma(b1))
    p = float(trigamma(a1) + trigamma(b1))
    m, C = linear_bayes_update(a, R, F, f, q, g, p)
    return m, C, BetaParams(a1, b1)


def _normal_prior(a, R, F, n, s):
    f, q = predictor_prior(F, a, R)
    Q = q + s
    return f, q, NormalParams(f, math.sqrt(Q), n, s), StudentTForecast(f, math.sqrt(Q), n)


def _normal_posterior(a, R, F, f, q, n, s, delta_var, y):
    Q = q + s
    e = y - f
    A = (R @ F) / Q
    m = a + A * e
    n_new = delta_var * n + 1.0
    s_new = (delta_var * n * s + s * e * e / Q) / n_new
    C = (s_new / s) * (R - np.outer(A, A) * Q)
    return m, 0.5 * (C + C.T), n_new, s_new


# -- functional steps ------------------------------------------------------------------

def poisson_step(state: StateMoments, F, G, D, y, rho: float = 1.0):
    """One Poisson DGLM step: returns (posterior state, NB forecast of y, prior Gamma)."""
    if not _is_missing(y):
        _check_count(y)
    prior = evolve(state, G, D)
    f, q, params, fc = _poisson_prior(prior.mean, prior.cov, F, rho)
    if _is_missing(y):
        return prior, fc, params
    m, C, _ = _poisson_posterior(prior.mean, prior.cov, F, f, q, params, y)
    return StateMoments(m, C), fc, params


def bernoulli_step(state: StateMoments, F, G, D, z, rho: float = 1.0):
    """One Bernoulli DGLM step (logit link): returns (state, Beta-Bernoulli forecast, prior Beta)."""
    if not _is_missing(z) and z not in (0, 1):
        raise InputError(f"binary observation must be 0 or 1, got {z}", field="z")
    prior = evolve(state, G, D)
    f, q, params, fc = _bernoulli_prior(prior.mean, prior.cov, F, rho)
    if _is_missing(z):
        return prior, fc, params
    m, C, _ = _bernoulli_posterior(prior.mean, prior.cov, F, f, q, params, int(z))
    return StateMoments(m, C), fc, params


def normal_dlm_step(state: StateMoments, F, G, D, obs_var: tuple[float, float], y,
                    delta_var: float = 1.0):
    """One Normal DLM step: returns (state, Student-t forecast, new (n, s))."""
    n, s = obs_var
    if not (n > 0 and s > 0):
        raise InputError(f"variance state must be positive, got n={n}, s={s}")
    if not _is_missing(y) and not math.isfinite(y):
        raise InputError(f"observation must be finite, got {y}", field="y")
    prior = evolve(state, G, D)
    f, q, _, fc = _normal_prior(prior.mean, prior.cov, F, n, s)
    if _is_missing(y):
        return prior, fc, (n, s)
    m, C, n_new, s_new = _normal_posterior(prior.mean, prior.cov, F, f, q, n, s, delta_var, y)
    return StateMoments(m, C), fc, (n_new, s_new)


# -- models ----------------------------------------------------------------------------

class DGLM:
    """Sequential single-series model. Not thread-safe; move between threads freely."""

    family = "abstract"

    def __init__(self, spec: ComponentSpec | None = None, discounts: DiscountSpec | None = None,
                 m=None, C=None, t: int = 0):
        self.spec = spec or ComponentSpec()
        self.discounts = discounts or DiscountSpec()
        self._F, self.G = _fg(self.spec)
        self.D = discount_matrix(self.spec, self.discounts)
        dim = self.spec.dim
        self.m = np.zeros(dim) if m is None else np.array(m, dtype=float).reshape(dim)
        self.C = np.eye(dim) if C is None else np.array(C, dtype=float).reshape(dim, dim)
        self.t = int(t)
        self._cache = None

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def state(self) -> StateMoments:
        return StateMoments(self.m.copy(), self.C.copy())

    def design(self, x=None) -> np.ndarray:
        n_reg = len(self.spec.regressors)
        if not n_reg:
            return self._F
        if x is None:
            raise InputError(f"model needs values for regressors {self.spec.regressors}")
        F = self._F.copy()
        F[-n_reg:] = np.asarray(x, dtype=float).reshape(n_reg)
        return F

    def prior(self) -> StateMoments:
        """One-step prior (a, R) for time t+1."""
        return evolve(StateMoments(self.m, self.C), self.G, self.D)

    def project(self, k: int, include_W: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Marginal state moments k steps past the current posterior.

        ``a = G^k m``; ``R = G^k C (G^k)'`` unless ``include_W``, in which case
        the discount inflation is applied after every one of the k steps.
        """
        if k < 1:
            raise ValueError("horizon k must be >= 1")
        if include_W:
            a, R = self.m, self.C
            check_psd(R)
            for _ in range(k):
                a = self.G @ a
                R = (self.G @ R @ self.G.T) * self.D
            return a, R
        Gk = _gpow(self.spec, k)
        return Gk @ self.m, Gk @ self.C @ Gk.T

    def _one_step(self, x=None):
        key = (self.t, None if x is None else tuple(np.ravel(x)))
        if self._cache is None or self._cache[0] != key:
            prior = self.prior()
            F = self.design(x)
            self._cache = (key, prior.mean, prior.cov, F, *self._forecast_from(prior.mean, prior.cov, F))
        return self._cache[1:]

    def forecast(self, k: int = 1, include_W: bool = False, x=None):
        """Predictive distribution of the observation k steps ahead.

        k = 1 always includes the evolution discount, matching ``update``.
        """
        if k == 1:
            return self._one_step(x)[-1]
        a, R = self.project(k, include_W)
        return self._forecast_from(a, R, self.design(x))[-1]

    def update(self, y, x=None):
        """Absorb the next observation (None/NaN = missing); return its 1-step forecast."""
        self._validate(y)
        a, R, F, *prior = self._one_step(x)
        if _is_missing(y):
            self.m, self.C = a, R
        else:
            self._posterior(a, R, F, prior, y)
        self.t += 1
        self._cache = None
        return prior[-1]

    def _validate(self, y):
        if not _is_missing(y):
            _check_count(y)

    def _forecast_from(self, a, R, F):
        raise NotImplementedError

    def _posterior(self, a, R, F, prior, y):
        raise NotImplementedError

    def conjugate_params(self, x=None):
        return self._one_step(x)[-2]

    def _extra(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {"version": STATE_VERSION, "family": self.family, "spec": self.spec.to_dict(),
                "discounts": self.discounts.to_dict(), "t": self.t, "m": self.m.tolist(),
                "C": self.C.ravel().tolist(), **self._extra()}

    @classmethod
    def _kwargs_from(cls, d) -> dict:
        return {}

    @classmethod
    def from_dict(cls, d: dict) -> "DGLM":
        if d.get("version") != STATE_VERSION:
            raise InputError(f"unsupported model state version {d.get('version')}")
        if d.get("family") != cls.family:
            raise InputError(f"state is for family {d.get('family')!r}, not {cls.family!r}")
        return cls(ComponentSpec.from_dict(d["spec"]), DiscountSpec.from_dict(d["discounts"]),
                   m=d["m"], C=d["C"], t=d["t"], **cls._kwargs_from(d))


class PoissonDGLM(DGLM):
    """Log-link Poisson DGLM; forecasts are negative binomial.

    ``discounts.aux`` inflates the predictor variance (random effects).
    """

    family = "poisson"

    def _forecast_from(self, a, R, F):
        f, q, params, fc = _poisson_prior(a, R, F, self.discounts.aux)
        return f, q, params, fc

    def _posterior(self, a, R, F, prior, y):
        f, q, params, _ = prior
        self.m, self.C, _ = _poisson_posterior(a, R, F, f, q, params, y)


class BernoulliDGLM(DGLM):
    family = "bernoulli"

    def _validate(self, y):
        if not _is_missing(y) and y not in (0, 1):
            raise InputError(f"binary observation must be 0 or 1, got {y}", field="z")

    def _forecast_from(self, a, R, F):
        return _bernoulli_prior(a, R, F, self.discounts.aux)

    def _posterior(self, a, R, F, prior, z):
        f, q, params, _ = prior
        self.m, self.C, _ = _bernoulli_posterior(a, R, F, f, q, params, int(z))


class NormalDLM(DGLM):
    """Normal DLM with unknown observation variance; ``discounts.aux`` discounts it."""

    family = "normal"

    def __init__(self, spec=None, discounts=None, m=None, C=None, t=0, n: float = 1.0, s: float = 1.0):
        super().__init__(spec, discounts, m, C, t)
        if not (n > 0 and s > 0):
            raise InputError(f"variance state must be positive, got n={n}, s={s}")
        self.n = float(n)
        self.s = float(s)

    def _validate(self, y):
        if not _is_missing(y) and not math.isfinite(y):
            raise InputError(f"observation must be finite, got {y}", field="y")

    def _forecast_from(self, a, R, F):
        return _normal_prior(a, R, F, self.n, self.s)

    def _posterior(self, a, R, F, prior, y):
        f, q, _, _ = prior
        self.m, self.C, self.n, self.s = _normal_posterior(a, R, F, f, q, self.n, self.s,
                                                           self.discounts.aux, float(y))

    def _extra(self):
        return {"n": self.n, "s": self.s}

    @classmethod
    def _kwargs_from(cls, d):
        return {"n": d["n"], "s": d["s"]}
