"""Moment matching between a linear predictor prior and conjugate priors.

A Poisson DGLM with log link needs Gamma(alpha, beta) with
``E[log eta] = digamma(alpha) - log(beta) = f`` and
``V[log eta] = trigamma(alpha) = q``. A Bernoulli DGLM with logit link needs
Beta(alpha, beta) with ``digamma(alpha) - digamma(beta) = f`` and
``trigamma(alpha) + trigamma(beta) = q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import DegeneratePriorError, NumericalError, SolverError

Q_MIN = 1e-12
MAX_ITER = 100
POISSON_TOL = 1e-10
BERNOULLI_TOL = 1e-8


def digamma(x):
    return special.digamma(x)


def trigamma(x):
    return special.zeta(2.0, x)


def tetragamma(x):
    return -2.0 * special.zeta(3.0, x)


@dataclass(frozen=True, slots=True)
class GammaParams:
    alpha: float
    beta: float

    @property
    def mean(self) -> float:
        return self.alpha / self.beta

    def log_moments(self) -> tuple[float, float]:
        """Mean and variance of ``log eta``."""
        return float(digamma(self.alpha) - math.log(self.beta)), float(trigamma(self.alpha))

    def to_dict(self):
        return {"alpha": float(self.alpha), "beta": float(self.beta)}


@dataclass(frozen=True, slots=True)
class BetaParams:
    alpha: float
    beta: float

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def logit_moments(self) -> tuple[float, float]:
        """Mean and variance of ``logit(pi)``."""
        return (float(digamma(self.alpha) - digamma(self.beta)),
                float(trigamma(self.alpha) + trigamma(self.beta)))

    def to_dict(self):
        return {"alpha": float(self.alpha), "beta": float(self.beta)}


def _check_q(q):
    if not (q == q and q > Q_MIN):
        raise DegeneratePriorError(f"predictor variance q={q!r} is too small to match")
    if math.isinf(q):
        raise DegeneratePriorError("predictor variance is infinite")


def solve_trigamma(q: float, tol: float = POISSON_TOL, max_iter: int = MAX_ITER) -> float:
    """Return alpha > 0 with ``trigamma(alpha) = q``.

    Newton-Raphson from ``max(1/q, 0.1)``. Because trigamma is convex and
    decreasing, iterates started to the left of the root increase
    monotonically; if one ever leaves (0, inf) the solve falls back to Brent
    on the bracket implied by ``1/x + 1/(2x^2) < trigamma(x) < 1/x + 1/x^2``.
    """
    _check_q(q)
    # iterate well past the contract tolerance; Newton is quadratic near the root
    target = 1e-3 * tol * min(1.0, q)
    alpha = max(1.0 / q, 0.1)
    for _ in range(max_iter):
        resid = trigamma(alpha) - q
        if abs(resid) < target:
            return float(alpha)
        nxt = alpha - resid / tetragamma(alpha)
        if not (nxt > 0.0 and math.isfinite(nxt)):
            return _bracketed_trigamma(q)
        if nxt == alpha:
            break
        alpha = nxt
    resid = trigamma(alpha) - q
    if abs(resid) < tol:
        return float(alpha)
    raise SolverError(f"trigamma inversion did not converge for q={q} (residual {resid:.3e})",
                      last_iterate=float(alpha))


def _bracketed_trigamma(q):
    lo = (1.0 + math.sqrt(1.0 + 2.0 * q)) / (2.0 * q)
    hi = (1.0 + math.sqrt(1.0 + 4.0 * q)) / (2.0 * q)
    return float(optimize.brentq(lambda x: trigamma(x) - q, lo, hi, xtol=1e-300, rtol=1e-15,
                                 maxiter=500))


def poisson_match_prior(f: float, q: float, tol: float = POISSON_TOL,
                        max_iter: int = MAX_ITER) -> GammaParams:
    alpha = solve_trigamma(q, tol, max_iter)
    log_beta = digamma(alpha) - f
    if log_beta > 700.0 or log_beta < -700.0:
        raise NumericalError(f"Gamma rate overflows for f={f}, q={q}")
    return GammaParams(alpha, math.exp(log_beta))


def bernoulli_match_prior(f: float, q: float, tol: float = BERNOULLI_TOL,
                          max_iter: int = MAX_ITER) -> BetaParams:
    """Solve the two logit-moment equations by damped Newton on (log alpha, log beta).

    The variance equation is solved in log form, ``log(trigamma(a) + trigamma(b)) = log q``,
    which keeps both residuals on a comparable scale for very large ``q``. The
    starting point uses ``digamma(x) ~ log x`` and ``trigamma(x) ~ 1/x``.
    Convergence is absolute in both equations for ``q <= 1`` and relative in the
    variance equation beyond that.
    """
    _check_q(q)
    if not math.isfinite(f):
        raise NumericalError(f"non-finite predictor mean f={f}")
    fc = min(max(f, -700.0), 700.0)
    lq = math.log(q)
    uv = np.array([math.log1p(math.exp(fc)) - lq, math.log1p(math.exp(-fc)) - lq])
    scale = max(1.0, q)
    r1_tol = 1e-3 * tol
    r2_tol = 1e-3 * tol * min(1.0, q) / q

    def evaluate(uv):
        with np.errstate(all="ignore"):
            ab = np.exp(uv)
            dg, tg = digamma(ab), trigamma(ab)
            s = tg[0] + tg[1]
            return ab, tg, s, dg[0] - dg[1] - f, math.log(s) - lq if s > 0 else math.inf

    ab, tg, s, r1, r2 = evaluate(uv)
    for _ in range(max_iter):
        if abs(r1) < r1_tol and abs(r2) < r2_tol:
            break
        a, b = ab
        with np.errstate(all="ignore"):
            j11, j12 = a * tg[0], -b * tg[1]
            j21, j22 = ab * tetragamma(ab) / s
            det = j11 * j22 - j12 * j21
            step = np.array([-(r1 * j22 - j12 * r2) / det, -(j11 * r2 - j21 * r1) / det])
        if not np.isfinite(step).all():
            break
        big = abs(step).max()
        if big > 2.0:
            step *= 2.0 / big
        merit = r1 * r1 + r2 * r2
        lam = 1.0
        while True:
            nxt = uv + lam * step
            cand = evaluate(nxt)
            if cand[3] ** 2 + cand[4] ** 2 <= merit or lam < 1e-6:
                break
            lam *= 0.5
        if np.array_equal(nxt, uv) or cand[3] ** 2 + cand[4] ** 2 > merit:
            break
        uv, (ab, tg, s, r1, r2) = nxt, cand
    resid2 = s - q
    if abs(r1) < tol and abs(resid2) < tol * scale:
        return BetaParams(float(ab[0]), float(ab[1]))
    try:
        a, b = _bracketed_beta(f, q)
    except (ValueError, OverflowError, FloatingPointError):
        a, b = ab
    r1 = digamma(a) - digamma(b) - f
    resid2 = trigamma(a) + trigamma(b) - q
    if abs(r1) < tol and abs(resid2) < tol * scale:
        return BetaParams(float(a), float(b))
    ab = (a, b)
    raise SolverError(f"Beta matching did not converge for f={f}, q={q} "
                      f"(residuals {r1:.3e}, {resid2:.3e})", last_iterate=(float(ab[0]), float(ab[1])))


def inverse_digamma(y: float, iters: int = 8) -> float:
    """x > 0 with digamma(x) = y, by Newton from the usual asymptotic start."""
    x = math.exp(y) + 0.5 if y >= -2.22 else -1.0 / (y + 0.5772156649015329)
    for _ in range(iters):
        x_new = x - (float(digamma(x)) - y) / float(trigamma(x))
        if x_new <= 0.0:
            x_new = x / 2.0
        if x_new == x:
            break
        x = x_new
    return x


def _bracketed_beta(f, q):
    # beta follows from the mean equation for each alpha and the variance
    # residual is decreasing in alpha, so a root in log(alpha) is bracketed
    def beta_of(u):
        return inverse_digamma(float(digamma(math.exp(u))) - f)

    def resid(u):
        a = math.exp(u)
        return math.log(float(trigamma(a)) + float(trigamma(beta_of(u)))) - math.log(q)

    lo, hi = -40.0, 40.0
    while resid(lo) < 0 and lo > -600:
        lo *= 2
    while resid(hi) > 0 and hi < 600:
        hi *= 2
    u = optimize.brentq(resid, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(u), beta_of(u)
