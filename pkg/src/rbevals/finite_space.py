"""Exact Rao-Blackwellization on finite probability spaces.

A :class:`FiniteSpace` carries one probability table per parameter value.
Statistics and random variables are tables over the atoms. Everything here
is computed exactly (up to float rounding) by enumeration, which makes this
module the reference against which the closed forms elsewhere are checked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Hashable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import PROB_TOL, BadDistribution, check_nonnegative_values
from .extreal import (
    INF,
    GenExpectation,
    ext_div,
    ext_sub,
    format_ext,
    gen_expectation,
    parse_ext,
)
from .utility import ConcaveUtility, LogUtility

SUFFICIENCY_TOL = 1e-9


class BadMixture(ValueError):
    """Mixture weights are negative, unknown, or sum to more than one."""


class InsufficientStatistic(ValueError):
    """Strict mode found conditional laws that depend on the parameter."""


@dataclass(frozen=True)
class FiniteSpace:
    atoms: tuple
    measures: Mapping[Hashable, np.ndarray]
    theta_null: tuple
    theta_alt: tuple

    def __init__(self, atoms, measures, theta_null, theta_alt):
        atoms = tuple(atoms)
        tables = {}
        for theta, probs in measures.items():
            p = np.asarray(probs, dtype=float)
            if p.shape != (len(atoms),):
                raise BadDistribution(f"measure {theta!r} has the wrong length")
            if np.any(~np.isfinite(p)) or np.any(p < 0):
                raise BadDistribution(f"measure {theta!r} has negative entries")
            total = math.fsum(p.tolist())
            if abs(total - 1.0) > PROB_TOL:
                raise BadDistribution(f"measure {theta!r} sums to {total!r}")
            p.setflags(write=False)
            tables[theta] = p
        theta_null, theta_alt = tuple(theta_null), tuple(theta_alt)
        if not theta_null or not theta_alt:
            raise ValueError("theta_null and theta_alt must be nonempty")
        unknown = (set(theta_null) | set(theta_alt)) - set(tables)
        if unknown:
            raise ValueError(f"unknown parameter labels {sorted(map(str, unknown))}")
        if set(theta_null) | set(theta_alt) != set(tables):
            raise ValueError("theta_null and theta_alt must cover every parameter")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "measures", tables)
        object.__setattr__(self, "theta_null", theta_null)
        object.__setattr__(self, "theta_alt", theta_alt)

    @property
    def thetas(self) -> tuple:
        return tuple(self.measures)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def prob(self, theta) -> np.ndarray:
        return self.measures[theta]

    def to_json(self) -> str:
        doc = {
            "atoms": [_jsonable(a) for a in self.atoms],
            "measures": {
                str(t): [repr(float(v)) for v in p] for t, p in self.measures.items()
            },
            "theta_null": [str(t) for t in self.theta_null],
            "theta_alt": [str(t) for t in self.theta_alt],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FiniteSpace":
        doc = json.loads(text)
        measures = {t: [float(v) for v in p] for t, p in doc["measures"].items()}
        return cls(
            [_hashable(a) for a in doc["atoms"]],
            measures,
            doc["theta_null"],
            doc["theta_alt"],
        )


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def _hashable(x):
    if isinstance(x, list):
        return tuple(_hashable(v) for v in x)
    return x


def table_to_json(values: Sequence[float]) -> list[str]:
    """RV table as decimal strings (``inf``/``-inf`` for infinities)."""
    return [format_ext(v) for v in values]


def table_from_json(items: Sequence[str]) -> np.ndarray:
    return np.array([parse_ext(v) for v in items], dtype=float)


def statistic_to_json(S: Sequence[Hashable]) -> list:
    return [_jsonable(s) for s in S]


def statistic_from_json(items: Sequence[Any]) -> list:
    return [_hashable(s) for s in items]


def levels(S: Sequence[Hashable]) -> dict[Hashable, np.ndarray]:
    """Map each statistic value to the atom indices where it occurs."""
    groups: dict[Hashable, list[int]] = {}
    for i, s in enumerate(S):
        groups.setdefault(s, []).append(i)
    return {s: np.array(ix, dtype=int) for s, ix in groups.items()}


def _check_statistic(space: FiniteSpace, S) -> list:
    S = list(S)
    if len(S) != space.n_atoms:
        raise ValueError("statistic table must be defined on every atom")
    return S


def _check_rv(space: FiniteSpace, X) -> np.ndarray:
    X = check_nonnegative_values(X, "random variable")
    if X.shape != (space.n_atoms,):
        raise ValueError("random variable table must be defined on every atom")
    return X


def expectation(space: FiniteSpace, theta, X) -> float:
    """Expectation of a nonnegative table under ``theta`` (``0 * inf = 0``)."""
    X = _check_rv(space, X)
    p = space.prob(theta)
    live = p > 0
    if np.any(np.isinf(X[live])):
        return INF
    return math.fsum((X[live] * p[live]).tolist())


def _level_mean(X: np.ndarray, p: np.ndarray) -> float:
    live = p > 0
    if np.any(np.isinf(X[live])):
        return INF
    # constant on the level: return it exactly rather than through a ratio
    if np.all(X[live] == X[live][0]):
        return float(X[live][0])
    return math.fsum((X[live] * p[live]).tolist()) / math.fsum(p[live].tolist())


def sufficiency_check(
    space: FiniteSpace, S, thetas=None, tol: float = SUFFICIENCY_TOL
) -> bool:
    """True iff the conditional law of the atoms given ``S`` is parameter-free."""
    S = _check_statistic(space, S)
    thetas = space.thetas if thetas is None else tuple(thetas)
    for idx in levels(S).values():
        reference = None
        for theta in thetas:
            p = space.prob(theta)[idx]
            mass = math.fsum(p.tolist())
            if mass <= 0:
                continue
            cond = p / mass
            if reference is None:
                reference = cond
            elif np.max(np.abs(cond - reference)) > tol:
                return False
    return True


def rao_blackwellize(
    space: FiniteSpace, E, S, theta_ref=None, strict: bool = False, thetas=None
) -> np.ndarray:
    """Conditional expectation of ``E`` given ``S``, as a table over atoms.

    Computed under ``theta_ref`` (default: the first parameter in
    ``thetas``). Levels with zero mass under ``theta_ref`` are filled from
    the first parameter giving them positive mass, and with 0 if none does.
    ``thetas`` restricts the parameter set the statistic must be sufficient
    for, as needed for per-hypothesis conditioning of compound e-variables.
    """
    E = _check_rv(space, E)
    S = _check_statistic(space, S)
    thetas = space.thetas if thetas is None else tuple(thetas)
    if theta_ref is None:
        theta_ref = thetas[0]
    if strict and not sufficiency_check(space, S, thetas=thetas):
        raise InsufficientStatistic("statistic is not sufficient for the model")
    order = (theta_ref,) + tuple(t for t in thetas if t != theta_ref)
    G = np.zeros(space.n_atoms)
    for idx in levels(S).values():
        value = 0.0
        for theta in order:
            p = space.prob(theta)[idx]
            if np.any(p > 0):
                value = _level_mean(E[idx], p)
                break
        G[idx] = value
    return G


def check_e_variable(space: FiniteSpace, E, tol: float = PROB_TOL) -> tuple[bool, float]:
    """``(sup over the null of E_theta[E] <= 1 + tol, that supremum)``."""
    worst = max(expectation(space, theta, E) for theta in space.theta_null)
    return bool(worst <= 1.0 + tol), worst


def expected_utility(
    space: FiniteSpace, theta, X, f: ConcaveUtility
) -> GenExpectation:
    X = _check_rv(space, X)
    return gen_expectation(np.atleast_1d(f.eval(X)).tolist(), space.prob(theta).tolist())


@dataclass(frozen=True)
class JensenLevel:
    """Per-level comparison of ``E[f(X) | S=s]`` and ``f(E[X | S=s])``.

    ``gap`` is ``rhs - lhs``; it is 0 when both sides are the same infinity
    and ``None`` when the conditional expectation of ``f(X)`` is undefined.
    """

    mass: float
    lhs: float | None
    rhs: float
    gap: float | None

    @property
    def defined(self) -> bool:
        return self.gap is not None


def _tangent_gap(f: ConcaveUtility, x: np.ndarray, w: np.ndarray, rhs: float, lhs: float) -> float:
    """``f(m) - sum w f(x)`` as ``sum w D(x) - g sum w (x - m)``, with
    ``D(x) = f(m) + g (x - m) - f(x) >= 0`` for a supergradient ``g`` at ``m``.

    Large ``|f(x)|`` then only enters through nonnegative terms, instead of
    cancelling against ``f(m)``.
    """
    live = w > 0
    x, w = x[live], w[live]
    m = math.fsum((w * x).tolist())
    g = f.supergradient(m) if 0 < m < INF else None
    if g is None:
        return ext_sub(rhs, lhs)
    fm = float(f.eval(m))
    D = np.maximum(fm + g * (x - m) - np.atleast_1d(f.eval(x)), 0.0)
    return math.fsum((w * D).tolist()) - g * math.fsum((w * (x - m)).tolist())


def jensen_gap(
    space: FiniteSpace, theta, X, S, f: ConcaveUtility
) -> dict[Hashable, JensenLevel]:
    X = _check_rv(space, X)
    S = _check_statistic(space, S)
    p_all = space.prob(theta)
    out = {}
    for s, idx in levels(S).items():
        p = p_all[idx]
        mass = math.fsum(p.tolist())
        if mass <= 0:
            continue
        cond = p / mass
        # renormalize so the weights sum to one at double precision
        cond = cond / math.fsum(cond.tolist())
        rhs = float(f.eval(_level_mean(X[idx], p)))
        lhs_exp = gen_expectation(np.atleast_1d(f.eval(X[idx])).tolist(), cond.tolist())
        if not lhs_exp.defined:
            out[s] = JensenLevel(mass, None, rhs, None)
            continue
        lhs = lhs_exp.value
        if lhs == rhs:
            gap = 0.0
        elif math.isinf(rhs) or math.isinf(lhs):
            gap = INF if (rhs == INF or lhs == -INF) else -INF
        else:
            gap = _tangent_gap(f, X[idx], cond, rhs, lhs)
        out[s] = JensenLevel(mass, lhs, rhs, gap)
    return out


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """``sum p log(p / q)`` over atoms with ``p > 0``; ``inf`` if ``q`` misses one."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    live = p > 0
    if np.any(q[live] <= 0):
        return INF
    return math.fsum((p[live] * (np.log(p[live]) - np.log(q[live]))).tolist())


def kl_witness_check(
    space: FiniteSpace, theta_alt, mixture_weights: Mapping[Hashable, float]
) -> tuple[bool, float]:
    """KL divergence from ``P_theta_alt`` to a (sub-)mixture of null measures.

    A finite value certifies that ``E_theta_alt[log E]`` is defined for every
    e-variable ``E`` on this space.
    """
    if not mixture_weights:
        raise BadMixture("mixture needs at least one component")
    total = 0.0
    q = np.zeros(space.n_atoms)
    for theta, w in mixture_weights.items():
        if theta not in space.theta_null:
            raise BadMixture(f"{theta!r} is not a null parameter")
        w = float(w)
        if not (w >= 0 and math.isfinite(w)):
            raise BadMixture("mixture weights must be nonnegative")
        total += w
        q = q + w * space.prob(theta)
    if total > 1.0 + PROB_TOL:
        raise BadMixture(f"mixture weights sum to {total}, more than 1")
    kl = kl_divergence(space.prob(theta_alt), q)
    return bool(math.isfinite(kl)), kl


def ratio_expectations(space: FiniteSpace, theta, E, G) -> tuple[float, GenExpectation]:
    """``E_theta[E/G]`` and ``E_theta[log(E/G)]`` with ``0/0 = 0``, ``inf/inf = 1``."""
    E = _check_rv(space, E)
    G = _check_rv(space, G)
    ratio = np.array([ext_div(a, b) for a, b in zip(E, G)])
    return expectation(space, theta, ratio), expected_utility(space, theta, ratio, LogUtility())


# -- constructors -----------------------------------------------------------


def product_bernoulli_space(n: int, ps: Sequence[float], n_null: int = 1) -> FiniteSpace:
    """All ``2**n`` bit vectors under i.i.d. Bernoulli(p) for each ``p`` in ``ps``.

    Atoms are tuples of bits in lexicographic order; the first ``n_null``
    parameters form the null. Labels are ``"p=<value>"``.
    """
    bits = ((np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(int)
    k = bits.sum(axis=1)
    measures = {}
    for p in ps:
        measures[f"p={p!r}"] = np.exp(k * np.log(p) + (n - k) * np.log1p(-p))
    # exp/log rounding leaves a ~1e-16 drift; fold it back in exactly
    for label, probs in measures.items():
        measures[label] = probs / math.fsum(probs.tolist())
    labels = list(measures)
    rest = labels[n_null:] or labels[:1]
    return FiniteSpace([tuple(b) for b in bits.tolist()], measures, labels[:n_null], rest)


def random_sufficient_space(
    rng: np.random.Generator, max_atoms: int = 64, max_measures: int = 4
) -> tuple[FiniteSpace, list[int]]:
    """Random finite model with a statistic that is sufficient by construction.

    Atoms are grouped into levels; one conditional law per level is drawn
    once and shared by every parameter, while the level masses vary with the
    parameter (some may be zero).
    """
    n_atoms = int(rng.integers(2, max_atoms + 1))
    n_measures = int(rng.integers(2, max_measures + 1))
    n_levels = int(rng.integers(1, n_atoms + 1))
    S = np.concatenate([np.arange(n_levels), rng.integers(0, n_levels, n_atoms - n_levels)])
    rng.shuffle(S)
    cond = np.zeros(n_atoms)
    for s in range(n_levels):
        idx = np.flatnonzero(S == s)
        cond[idx] = rng.dirichlet(np.ones(len(idx)))
    measures = {}
    for j in range(n_measures):
        level_mass = rng.dirichlet(np.ones(n_levels))
        if n_levels > 1 and rng.random() < 0.3:
            level_mass[rng.integers(n_levels)] = 0.0
            level_mass /= level_mass.sum()
        p = level_mass[S] * cond
        measures[f"t{j}"] = p / math.fsum(p.tolist())
    labels = list(measures)
    n_null = int(rng.integers(1, n_measures))
    space = FiniteSpace(
        [f"w{i}" for i in range(n_atoms)], measures, labels[:n_null], labels[n_null:]
    )
    return space, S.tolist()


def random_nonnegative_table(
    rng: np.random.Generator,
    n_atoms: int,
    p_zero: float = 0.1,
    p_inf: float = 0.05,
    scale: float = 10.0,
) -> np.ndarray:
    X = rng.exponential(scale / 3.0, size=n_atoms)
    u = rng.random(n_atoms)
    X[u < p_zero] = 0.0
    X[(u >= p_zero) & (u < p_zero + p_inf)] = INF
    return X


class FiniteRaoBlackwellizer(TransformerMixin, BaseEstimator):
    """Transformer mapping random-variable tables on a finite space to their
    conditional expectations given a sufficient statistic.

    Each row passed to :meth:`transform` is one table over the atoms.
    """

    def __init__(self, space=None, statistic=None, theta_ref=None, strict=True):
        self.space = space
        self.statistic = statistic
        self.theta_ref = theta_ref
        self.strict = strict

    def fit(self, X=None, y=None):
        if self.space is None or self.statistic is None:
            raise ValueError("space and statistic are required")
        S = _check_statistic(self.space, self.statistic)
        self.sufficient_ = sufficiency_check(self.space, S)
        if self.strict and not self.sufficient_:
            raise InsufficientStatistic("statistic is not sufficient for the model")
        self.levels_ = list(levels(S))
        self.n_features_in_ = self.space.n_atoms
        return self

    def transform(self, X):
        check_is_fitted(self, "levels_")
        X = check_array(X, ensure_all_finite=False, ensure_2d=False)
        rows = np.atleast_2d(X)
        out = np.vstack(
            [
                rao_blackwellize(self.space, row, self.statistic, self.theta_ref)
                for row in rows
            ]
        )
        return out if X.ndim == 2 else out[0]
