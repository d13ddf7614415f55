"""Closed forms for the two canonical illustrations.

Bernoulli: the naive e-variable ``exp(lam * X_1 - psi(lam))`` that only looks
at the first observation, and its conditional expectation given the number
of successes, ``G(k) = exp(-psi) * (1 + (e^lam - 1) * k / n)``.

Cauchy against Normal: with ``S = |X|`` sufficient for the pair
``{N(0, 1), Cauchy(0, 1)}``, the statistic ``E = exp(X - 1/2)`` is mapped to
``G = (exp(X - 1/2) + exp(-X - 1/2)) / 2`` and ``E / G = 2 / (1 + exp(-2X))``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate

from ._validation import check_count, check_positive, check_probability
from .evar import EVariableFn
from .extreal import ext_sub, gen_expectation
from .utility import ConcaveUtility

MAX_ENUMERATION = 20
LOG2 = math.log(2.0)


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class BernNaiveSpec:
    p0: float
    lam: float
    n: int

    def __post_init__(self):
        check_probability(self.p0, "p0")
        check_positive(self.lam, "lam")
        check_count(self.n, "n")

    @classmethod
    def from_exp(cls, p0: float, lambda_exp: float, n: int) -> "BernNaiveSpec":
        """Build from ``e^lam`` rather than ``lam``."""
        if not lambda_exp > 1:
            raise ValueError("e^lam must exceed 1")
        return cls(p0, math.log(lambda_exp), n)

    @property
    def psi(self) -> float:
        return math.log1p(self.p0 * math.expm1(self.lam))


def bern_naive_e(spec: BernNaiveSpec, x1):
    x1 = np.asarray(x1)
    if np.any((x1 != 0) & (x1 != 1)):
        raise ValueError("x1 must be a bit")
    out = np.exp(spec.lam * x1 - spec.psi)
    return float(out) if out.ndim == 0 else out


def bern_rb_g(spec: BernNaiveSpec, k):
    k = np.asarray(k)
    if np.any(k < 0) or np.any(k > spec.n):
        raise ValueError(f"k must lie in [0, {spec.n}]")
    out = math.exp(-spec.psi) * (1.0 + math.expm1(spec.lam) * k / spec.n)
    return float(out) if np.ndim(out) == 0 else out


def bern_evariables(spec: BernNaiveSpec) -> tuple[EVariableFn, EVariableFn]:
    """Naive and Rao-Blackwellized e-variables acting on rows of ``n`` bits."""
    E = EVariableFn(
        lambda x: bern_naive_e(spec, np.asarray(x)[:, 0]),
        "bern_naive",
        lambda x: spec.lam * np.asarray(x)[:, 0] - spec.psi,
    )
    G = EVariableFn(lambda x: bern_rb_g(spec, np.asarray(x).sum(axis=1)), "bern_rb")
    return E, G


def _outcomes(n: int) -> np.ndarray:
    if n > MAX_ENUMERATION:
        raise EnumerationTooLarge(f"n = {n} exceeds the enumeration cap {MAX_ENUMERATION}")
    return ((np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.int8)


def _grouped(values: np.ndarray, weights: np.ndarray) -> tuple[list, list]:
    uniq, inv = np.unique(values, return_inverse=True)
    w = np.zeros(len(uniq))
    np.add.at(w, inv, weights)
    return uniq.tolist(), w.tolist()


def bern_exact_improvement(
    spec: BernNaiveSpec, p: float, f: ConcaveUtility
) -> tuple[float, bool]:
    """``E_p[f(G)] - E_p[f(E)]`` by enumerating all ``2**n`` outcomes."""
    p = check_probability(p, "p")
    bits = _outcomes(spec.n)
    k = bits.sum(axis=1)
    w = np.exp(k * math.log(p) + (spec.n - k) * math.log1p(-p))
    w = w / math.fsum(w.tolist())
    fe = np.atleast_1d(f.eval(bern_naive_e(spec, bits[:, 0])))
    fg = np.atleast_1d(f.eval(bern_rb_g(spec, k)))
    ue = gen_expectation(*_grouped(fe, w))
    ug = gen_expectation(*_grouped(fg, w))
    gap = ext_sub(ug.value, ue.value)
    return gap, bool(gap > 0)


def bern_null_means_exact(p0, lambda_exp, n: int) -> tuple[Fraction, Fraction]:
    """``E_p0[E]`` and ``E_p0[G]`` in exact rational arithmetic.

    With ``e^lam`` and ``p0`` rational, ``exp(-psi) = 1 / (p0 e^lam + 1 - p0)``
    is rational, so both means can be computed without rounding.
    """
    p0, a = Fraction(p0), Fraction(lambda_exp)
    norm = 1 / (p0 * a + 1 - p0)
    mean_e = Fraction(0)
    mean_g = Fraction(0)
    for bits in itertools.product((0, 1), repeat=check_count(n, "n")):
        k = sum(bits)
        w = p0**k * (1 - p0) ** (n - k)
        mean_e += w * (a if bits[0] else 1) * norm
        mean_g += w * (1 + (a - 1) * Fraction(k, n)) * norm
    return mean_e, mean_g


# -- Cauchy versus Normal -----------------------------------------------------


def log_cauchy_e(x):
    return np.asarray(x, dtype=float) - 0.5


def log_cauchy_g(x):
    x = np.asarray(x, dtype=float)
    return -0.5 + np.logaddexp(x, -x) - LOG2


def log_cauchy_ratio(x):
    return LOG2 - np.logaddexp(0.0, -2.0 * np.asarray(x, dtype=float))


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def cauchy_e(x):
    with np.errstate(over="ignore"):
        return _scalar(np.exp(log_cauchy_e(x)))


def cauchy_g(x):
    with np.errstate(over="ignore"):
        return _scalar(np.exp(log_cauchy_g(x)))


def cauchy_ratio(x):
    return _scalar(np.exp(log_cauchy_ratio(x)))


CAUCHY_E = EVariableFn(cauchy_e, "cauchy_e", log_cauchy_e)
CAUCHY_G = EVariableFn(cauchy_g, "cauchy_g", log_cauchy_g)


def _cauchy_density(x):
    return 1.0 / (math.pi * (1.0 + x * x))


def _log_ratio_integrand(x):
    return float(log_cauchy_ratio(x)) * _cauchy_density(x)


def cauchy_truncated_logratio(T: float) -> float:
    """``int_{-T}^{T} log(E/G)(x) dx / (pi (1 + x^2))`` by adaptive quadrature.

    The range is split at powers of ten so each piece is well resolved.
    """
    T = check_positive(T, "T")
    edges = [0.0] + [10.0**j for j in range(-2, 20) if 10.0**j < T] + [T]
    total = []
    for a, b in zip(edges, edges[1:]):
        for lo, hi in ((a, b), (-b, -a)):
            val, _ = integrate.quad(_log_ratio_integrand, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
            total.append(val)
    return math.fsum(total)


def cauchy_truncated_log_g(T: float) -> float:
    """``int_{-T}^{T} log(G)(x)`` against the Cauchy density."""
    T = check_positive(T, "T")
    edges = [0.0] + [10.0**j for j in range(-2, 20) if 10.0**j < T] + [T]

    def integrand(x):
        return float(log_cauchy_g(x)) * _cauchy_density(x)

    parts = [
        integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        for a, b in zip(edges, edges[1:])
    ]
    return 2.0 * math.fsum(parts)


def cauchy_g_null_mean() -> float:
    """``E[G]`` under ``N(0, 1)``; equals 1 because ``G`` is an e-variable."""

    def integrand(x):
        return math.exp(float(log_cauchy_g(x)) - 0.5 * x * x) / math.sqrt(2 * math.pi)

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)
    return val


def cauchy_ratio_mean(log_density) -> float:
    """``E[E/G]`` by quadrature against a given log-density."""

    def integrand(x):
        return math.exp(float(log_cauchy_ratio(x)) + float(log_density(x)))

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
    return val

