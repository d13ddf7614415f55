"""GROW e-variable for the Pareto shape with unknown scale.

For ``X_1..X_n`` i.i.d. Pareto(m, alpha) the pair ``(min X, T)`` with
``T = sum log(X_i / min X)`` is sufficient, and ``T ~ Gamma(n - 1, rate=alpha)``
whatever ``m`` is. The likelihood ratio of ``T`` between two shapes,

    E* = (alpha1 / alpha0)^(n - 1) * exp(-(alpha1 - alpha0) * T),

is an e-variable for ``alpha = alpha0`` that ignores the nuisance entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from ._validation import check_count, check_positive
from .evar import MCReport, _Moments, _report, _block_sizes, block_rng


class GrowConditionViolated(ValueError):
    """``n * alpha1 <= 1``: the prior-family bound needs a finite Pareto mean."""


@dataclass(frozen=True)
class ParetoSpec:
    m: float
    alpha: float
    n: int

    def __post_init__(self):
        check_positive(self.m, "m")
        check_positive(self.alpha, "alpha")
        check_count(self.n, "n", minimum=2)


@dataclass(frozen=True)
class ParetoSuffStat:
    x_min: float
    T: float


def standard_exponents(rng: np.random.Generator, alpha: float, shape) -> np.ndarray:
    """``log(X / m)`` for Pareto draws, i.e. Exponential(rate=alpha) variates.

    ``U`` is taken in ``(0, 1]`` so that ``U = 1`` maps to ``X = m``.
    """
    u = 1.0 - rng.random(shape)
    return -np.log(u) / alpha


def pareto_sample(spec: ParetoSpec, seed: int) -> np.ndarray:
    """``n`` draws ``m * U^(-1/alpha)``; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    u = 1.0 - rng.random(spec.n)
    return spec.m * u ** (-1.0 / spec.alpha)


def suff_stat(x) -> ParetoSuffStat:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise ValueError("need a nonempty vector of observations")
    if np.any(~(x > 0)) or np.any(~np.isfinite(x)):
        raise ValueError("Pareto observations must be positive and finite")
    x_min = float(x.min())
    T = math.fsum(np.log(x / x_min).tolist())
    return ParetoSuffStat(x_min, max(T, 0.0))


def suff_stat_rows(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``(x_min, T)`` for each row of ``X``."""
    X = np.asarray(X, dtype=float)
    x_min = X.min(axis=1)
    T = np.log(X / x_min[:, None]).sum(axis=1)
    return x_min, np.maximum(T, 0.0)


def log_grow_evariable(T, alpha0: float, alpha1: float, n: int):
    return (n - 1) * math.log(alpha1 / alpha0) - (alpha1 - alpha0) * np.asarray(T, dtype=float)


def grow_evariable(stat: ParetoSuffStat, alpha0: float, alpha1: float, n: int) -> float:
    check_positive(alpha0, "alpha0")
    check_positive(alpha1, "alpha1")
    n = check_count(n, "n")
    return float(np.exp(log_grow_evariable(stat.T, alpha0, alpha1, n)))


def gamma_kl(k: float, alpha1: float, alpha0: float) -> float:
    """``KL(Gamma(k, rate=alpha1) || Gamma(k, rate=alpha0))``."""
    if not k >= 1:
        raise ValueError("shape must be at least 1")
    check_positive(alpha1, "alpha1")
    check_positive(alpha0, "alpha0")
    return k * math.log(alpha1 / alpha0) + k * (alpha0 - alpha1) / alpha1


def gamma_kl_quadrature(k: float, alpha1: float, alpha0: float) -> float:
    """Same divergence by direct numerical integration of the two densities."""
    p = stats.gamma(k, scale=1.0 / alpha1)
    q = stats.gamma(k, scale=1.0 / alpha0)

    def integrand(t):
        lp = p.logpdf(t)
        return math.exp(lp) * (lp - q.logpdf(t))

    upper = p.ppf(1 - 1e-16) * 4
    mode = max((k - 1) / alpha1, 0.0)
    pts = [mode] if 0 < mode < upper else None
    val, _ = integrate.quad(integrand, 0.0, upper, points=pts, epsabs=1e-14, epsrel=1e-13, limit=400)
    return val


def wu_bound(u: float, n: int, alpha0: float, alpha1: float) -> float:
    """Upper bound on the Bayes-marginal KL for minimum laws under a
    ``Gamma(u, u)`` prior on the scale; tends to 0 as ``u`` decreases."""
    u = check_positive(u, "u")
    n = check_count(n, "n")
    a0, a1 = check_positive(alpha0, "alpha0"), check_positive(alpha1, "alpha1")
    if not n * a1 > 1:
        raise GrowConditionViolated(f"n * alpha1 = {n * a1} must exceed 1")
    na0, na1 = n * a0, n * a1
    return math.log1p(u * (na1 - na0) / (na0 * (na1 + u))) + u * na1 / (na1 - 1)


def _grow_blocks(alpha_sample, alpha0, alpha1, n, n_draws, seed, fn):
    sizes = _block_sizes(n_draws)
    out = []
    for b, size in enumerate(sizes):
        e = standard_exponents(block_rng(seed, b), alpha_sample, (size, n))
        T = np.maximum((e - e.min(axis=1, keepdims=True)).sum(axis=1), 0.0)
        out.append(_Moments.of(fn(T)))
    return _report(out)


def grow_value_check(
    alpha0: float, alpha1: float, m: float, n: int, n_draws: int, seed: int
) -> MCReport:
    """Monte Carlo ``E[log E*]`` under Pareto(m, alpha1)^n.

    The estimate uses ``T`` from the scale-free exponents ``log(X_i / m)``;
    ``T`` is exactly invariant to ``m`` under this sampler, so paired seeds give
    bit-identical estimates for every ``m``.
    """
    check_positive(m, "m")
    n = check_count(n, "n", minimum=2)
    if not n * alpha1 > 1:
        raise GrowConditionViolated(f"n * alpha1 = {n * alpha1} must exceed 1")
    n_draws = check_count(n_draws, "n_draws", minimum=10_000)
    if alpha0 == alpha1:
        return _grow_blocks(alpha1, alpha0, alpha1, n, n_draws, seed, lambda T: np.zeros_like(T))
    return _grow_blocks(
        alpha1, alpha0, alpha1, n, n_draws, seed, lambda T: log_grow_evariable(T, alpha0, alpha1, n)
    )


def grow_null_check(alpha0: float, alpha1: float, m: float, n: int, n_draws: int, seed: int) -> MCReport:
    """Monte Carlo ``E[E*]`` under the null Pareto(m, alpha0)^n, using real draws."""
    n = check_count(n, "n", minimum=2)
    sizes = _block_sizes(check_count(n_draws, "n_draws", minimum=2))
    out = []
    for b, size in enumerate(sizes):
        e = standard_exponents(block_rng(seed, b), alpha0, (size, n))
        _, T = suff_stat_rows(m * np.exp(e))
        out.append(_Moments.of(np.exp(log_grow_evariable(T, alpha0, alpha1, n))))
    return _report(out)


@dataclass(frozen=True)
class LawCheckRow:
    name: str
    estimate: float
    expected: float
    std_error: float

    @property
    def passed(self) -> bool:
        return abs(self.estimate - self.expected) <= 3.0 * self.std_error


def suff_law_check(spec: ParetoSpec, n_draws: int, seed: int) -> list[LawCheckRow]:
    """Moment checks of ``min X ~ Pareto(m, n alpha)`` and ``T ~ Gamma(n-1, alpha)``."""
    n_draws = check_count(n_draws, "n_draws", minimum=1000)
    rng = np.random.default_rng(seed)
    e = standard_exponents(rng, spec.alpha, (n_draws, spec.n))
    X = spec.m * np.exp(e)
    x_min, T = suff_stat_rows(X)
    log_excess = np.log(x_min / spec.m)
    n, a = spec.n, spec.alpha
    rows = []

    def se(v):
        return float(np.std(v, ddof=1) / math.sqrt(len(v)))

    rows.append(LawCheckRow("mean log(x_min/m)", float(log_excess.mean()), 1 / (n * a), se(log_excess)))
    rows.append(LawCheckRow("mean T", float(T.mean()), (n - 1) / a, se(T)))
    # variance estimate: SE from the fourth central moment
    dev2 = (T - T.mean()) ** 2
    rows.append(LawCheckRow("var T", float(dev2.sum() / (n_draws - 1)), (n - 1) / a**2, se(dev2)))
    zx = (x_min - x_min.mean()) / x_min.std()
    zt = (T - T.mean()) / T.std()
    prod = zx * zt
    rows.append(LawCheckRow("corr(x_min, T)", float(prod.mean()), 0.0, se(prod)))
    return rows


class ParetoGROW(TransformerMixin, BaseEstimator):
    """GROW e-variable for ``alpha = alpha0`` against ``alpha = alpha1``.

    Each row of ``X`` is one sample of ``n >= 2`` Pareto observations.
    The estimator is stateless; ``fit`` only validates the parameters.
    """

    def __init__(self, alpha0=1.0, alpha1=2.0):
        self.alpha0 = alpha0
        self.alpha1 = alpha1

    def fit(self, X=None, y=None):
        check_positive(self.alpha0, "alpha0")
        check_positive(self.alpha1, "alpha1")
        if X is not None:
            self.n_features_in_ = check_array(X).shape[1]
        return self

    def score_samples(self, X):
        X = check_array(X)
        if X.shape[1] < 2:
            raise ValueError("need at least two observations per row")
        if np.any(X <= 0):
            raise ValueError("Pareto observations must be positive")
        _, T = suff_stat_rows(X)
        return log_grow_evariable(T, self.alpha0, self.alpha1, X.shape[1])

    def transform(self, X):
        return np.exp(self.score_samples(X))

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags
