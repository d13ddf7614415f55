"""E-processes under a coarser sufficient filtration, plus multiple-testing glue.

The running example is a Bernoulli betting process

    E_t = prod_{i <= t} exp(lam_i X_i - psi(lam_i)),

observed through the burn-in filtration generated by the partial sums
``S_M, S_{M+1}, ..., S_t``. Given ``S_M = k`` the first ``M`` bits are a
uniformly random arrangement of ``k`` ones, so the conditional expectation of
the burn-in factor is ``e_k(e^lam_1, ..., e^lam_M) / C(M, k)`` times
``exp(-sum psi)``, where ``e_k`` is the elementary symmetric polynomial.
After time ``M`` every bit is a difference of consecutive sums and the
factors pass through unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import PROB_TOL, check_count, check_positive, check_probability
from .evar import (
    BernoulliProductModel,
    EVariableFn,
    MCReport,
    ParametricModel,
    _Moments,
    _block_sizes,
    _report,
    block_rng,
)
from .extreal import INF
from .finite_space import FiniteSpace, expectation, rao_blackwellize

MAX_EXACT_HORIZON = 20


@dataclass(frozen=True)
class BettingProcessSpec:
    p0: float
    bets: tuple
    horizon: int | None = None

    def __post_init__(self):
        check_probability(self.p0, "p0")
        bets = tuple(float(b) for b in self.bets)
        for b in bets:
            check_positive(b, "bet")
        horizon = len(bets) if self.horizon is None else check_count(self.horizon, "horizon", 0)
        if horizon != len(bets):
            raise ValueError(f"need one bet per step: {len(bets)} bets, horizon {horizon}")
        object.__setattr__(self, "bets", bets)
        object.__setattr__(self, "horizon", horizon)

    @property
    def lam(self) -> np.ndarray:
        return np.array(self.bets, dtype=float)

    @property
    def psi(self) -> np.ndarray:
        return np.log1p(self.p0 * np.expm1(self.lam))


@dataclass(frozen=True)
class BurnInSpec:
    M: int

    def __post_init__(self):
        check_count(self.M, "M")

    def check(self, spec: BettingProcessSpec):
        if self.M > spec.horizon:
            raise ValueError(f"burn-in M = {self.M} exceeds horizon {spec.horizon}")


def geometric_bets(base: float, count: int, first: float = 1.0) -> tuple:
    """``first * base**-(i-1)`` for ``i = 1..count``; distinct when ``base != 1``."""
    base = check_positive(base, "base")
    return tuple(first * base ** (-i) for i in range(check_count(count, "count", 0)))


def _bits(outcomes, horizon) -> np.ndarray:
    X = np.asarray(outcomes)
    X2 = np.atleast_2d(X)
    if X2.shape[1] != horizon:
        raise ValueError(f"outcomes must have length {horizon}")
    if np.any((X2 != 0) & (X2 != 1)):
        raise ValueError("outcomes must be bits")
    return X2.astype(float)


def log_wealth_paths(spec: BettingProcessSpec, outcomes) -> np.ndarray:
    """``log E_t`` for ``t = 0..horizon``, one row per outcome sequence."""
    X = _bits(outcomes, spec.horizon)
    inc = X * spec.lam - spec.psi
    return np.concatenate([np.zeros((X.shape[0], 1)), np.cumsum(inc, axis=1)], axis=1)


def wealth_path(spec: BettingProcessSpec, outcomes) -> np.ndarray:
    out = np.exp(log_wealth_paths(spec, outcomes))
    return out[0] if np.ndim(outcomes) == 1 else out


def log_elementary_symmetric(log_a: Sequence[float]) -> np.ndarray:
    """``log e_k(a_1..a_M)`` for ``k = 0..M`` via the recurrence
    ``e_k <- e_k + a_i e_{k-1}``, carried out with log-sum-exp."""
    log_a = np.asarray(log_a, dtype=float)
    L = np.full(len(log_a) + 1, -np.inf)
    L[0] = 0.0
    for i, la in enumerate(log_a, start=1):
        prev = L[: i].copy()
        L[1 : i + 1] = np.logaddexp(L[1 : i + 1], la + prev)
    return L


def burnin_log_factor(spec: BettingProcessSpec, burn: BurnInSpec) -> np.ndarray:
    """``log E[E_M | S_M = k]`` for ``k = 0..M``."""
    burn.check(spec)
    M = burn.M
    k = np.arange(M + 1)
    log_binom = gammaln(M + 1) - gammaln(k + 1) - gammaln(M - k + 1)
    return -spec.psi[:M].sum() + log_elementary_symmetric(spec.lam[:M]) - log_binom


def log_burnin_rb_paths(spec: BettingProcessSpec, burn: BurnInSpec, outcomes) -> np.ndarray:
    """``log G_t`` for ``t = M..horizon``, one row per outcome sequence."""
    X = _bits(outcomes, spec.horizon)
    M = burn.M
    base = burnin_log_factor(spec, burn)[X[:, :M].sum(axis=1).astype(int)]
    inc = X[:, M:] * spec.lam[M:] - spec.psi[M:]
    return np.concatenate([base[:, None], base[:, None] + np.cumsum(inc, axis=1)], axis=1)


def burnin_rb_path(spec: BettingProcessSpec, burn: BurnInSpec, outcomes) -> np.ndarray:
    out = np.exp(log_burnin_rb_paths(spec, burn, outcomes))
    return out[0] if np.ndim(outcomes) == 1 else out


def sufficient_view(outcomes, M: int) -> np.ndarray:
    """Partial sums ``S_M..S_t``: everything an adapted rule may inspect."""
    X = np.atleast_2d(np.asarray(outcomes))
    return np.cumsum(X, axis=1)[:, M - 1 :]


# -- stopping rules --------------------------------------------------------------


class StoppingRule:
    """Maps paths (rows, indexed from time ``start``) to stopping times.

    Implementations only use ``values[:, :j+1]`` to decide whether to stop
    at column ``j``; paths end at the horizon, where every rule stops.
    """

    def stop_times(self, values: np.ndarray, start: int = 0) -> np.ndarray:
        raise NotImplementedError

    def label(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class FixedTime(StoppingRule):
    t: int

    def stop_times(self, values, start=0):
        values = np.atleast_2d(values)
        end = start + values.shape[1] - 1
        return np.full(values.shape[0], min(max(self.t, start), end), dtype=int)

    def label(self):
        return f"fixed:{self.t}"


@dataclass(frozen=True)
class ThresholdCross(StoppingRule):
    level: float

    def stop_times(self, values, start=0):
        values = np.atleast_2d(values)
        hit = values >= self.level
        first = np.argmax(hit, axis=1)
        none = ~hit.any(axis=1)
        first[none] = values.shape[1] - 1
        return start + first

    def label(self):
        return f"threshold:{self.level!r}"


@dataclass(frozen=True)
class FirstOf(StoppingRule):
    rules: tuple = field(default_factory=tuple)

    def __init__(self, *rules):
        if len(rules) == 1 and isinstance(rules[0], (list, tuple)):
            rules = tuple(rules[0])
        if not rules:
            raise ValueError("FirstOf needs at least one rule")
        object.__setattr__(self, "rules", tuple(rules))

    def stop_times(self, values, start=0):
        return np.min([r.stop_times(values, start) for r in self.rules], axis=0)

    def label(self):
        return "|".join(r.label() for r in self.rules)


def parse_rule(token: str) -> StoppingRule:
    """``fixed:T``, ``threshold:L``, or ``|``-joined alternatives (first of)."""
    parts = token.split("|")
    if len(parts) > 1:
        return FirstOf(*[parse_rule(p) for p in parts])
    kind, _, arg = token.partition(":")
    if kind == "fixed":
        return FixedTime(int(arg))
    if kind == "threshold":
        return ThresholdCross(float(arg))
    raise ValueError(f"unknown stopping rule {token!r}")


def run_stopped(path, rule: StoppingRule, start: int = 0) -> tuple[int, float]:
    """Stop a single path; returns ``(tau, path value at tau)``."""
    path = np.asarray(path, dtype=float)
    tau = int(rule.stop_times(path[None, :], start)[0])
    return tau, float(path[tau - start])


# -- audits ----------------------------------------------------------------------


def _stopped_logs(spec, burn, rule, X):
    """Stop on the G path (a function of the sufficient view); return
    ``(log G_tau, log E_tau)``."""
    M = burn.M
    log_g = log_burnin_rb_paths(spec, burn, X)
    log_e = log_wealth_paths(spec, X)
    tau = rule.stop_times(np.exp(log_g), start=M)
    rows = np.arange(X.shape[0])
    return log_g[rows, tau - M], log_e[rows, tau]


@dataclass(frozen=True)
class AuditRow:
    rule: str
    null_mean_g: MCReport
    alt_log_gap: MCReport
    alt_ratio: MCReport

    @property
    def null_ok(self) -> bool:
        return self.null_mean_g.mean <= 1.0 + 3.0 * self.null_mean_g.std_error

    @property
    def gap_ok(self) -> bool:
        return self.alt_log_gap.mean >= -3.0 * self.alt_log_gap.std_error

    @property
    def ratio_ok(self) -> bool:
        return self.alt_ratio.mean <= 1.0 + 3.0 * self.alt_ratio.std_error

    @property
    def passed(self) -> bool:
        return self.null_ok and self.gap_ok and self.ratio_ok


def _path_blocks(p, horizon, n_paths, seed):
    model = BernoulliProductModel(p, horizon)
    for b, size in enumerate(_block_sizes(check_count(n_paths, "n_paths", 2))):
        yield model.draw(block_rng(seed, b), size)


def optional_stopping_audit(
    spec: BettingProcessSpec,
    burn: BurnInSpec,
    rules: Sequence[StoppingRule],
    p: float,
    n_paths: int,
    seed: int,
) -> list[AuditRow]:
    """Monte Carlo audit of the stopped Rao-Blackwellized process.

    Under ``p0``: mean of ``G_tau``. Under ``p`` (paired paths): mean of
    ``log G_tau - log E_tau`` and of ``E_tau / G_tau``.
    """
    burn.check(spec)
    null_seed, alt_seed = seed, seed + 1
    rows = []
    for rule in rules:
        null_blocks = []
        for X in _path_blocks(spec.p0, spec.horizon, n_paths, null_seed):
            lg, _ = _stopped_logs(spec, burn, rule, X)
            null_blocks.append(_Moments.of(np.exp(lg)))
        gap_blocks, ratio_blocks = [], []
        for X in _path_blocks(p, spec.horizon, n_paths, alt_seed):
            lg, le = _stopped_logs(spec, burn, rule, X)
            gap_blocks.append(_Moments.of(lg - le))
            ratio_blocks.append(_Moments.of(np.exp(le - lg)))
        rows.append(
            AuditRow(rule.label(), _report(null_blocks), _report(gap_blocks), _report(ratio_blocks))
        )
    return rows


def _all_paths(horizon: int) -> np.ndarray:
    if horizon > MAX_EXACT_HORIZON:
        raise ValueError(f"horizon {horizon} is too long to enumerate")
    return ((np.arange(2**horizon)[:, None] >> np.arange(horizon - 1, -1, -1)) & 1).astype(float)


def _path_weights(X, p):
    k = X.sum(axis=1)
    n = X.shape[1]
    w = np.exp(k * math.log(p) + (n - k) * math.log1p(-p))
    return w / math.fsum(w.tolist())


@dataclass(frozen=True)
class ExactAuditRow:
    rule: str
    null_mean_g: float
    null_mean_e: float
    alt_log_gap: float
    alt_ratio: float


def exact_stopping_audit(
    spec: BettingProcessSpec, burn: BurnInSpec, rules: Sequence[StoppingRule], p: float
) -> list[ExactAuditRow]:
    """The quantities of :func:`optional_stopping_audit`, by enumerating paths."""
    burn.check(spec)
    X = _all_paths(spec.horizon)
    w0, w1 = _path_weights(X, spec.p0), _path_weights(X, p)
    out = []
    for rule in rules:
        lg, le = _stopped_logs(spec, burn, rule, X)
        out.append(
            ExactAuditRow(
                rule.label(),
                math.fsum((w0 * np.exp(lg)).tolist()),
                math.fsum((w0 * np.exp(le)).tolist()),
                math.fsum((w1 * (lg - le)).tolist()),
                math.fsum((w1 * np.exp(le - lg)).tolist()),
            )
        )
    return out


def bernoulli_path_space(horizon: int, ps: Sequence[float], n_null: int = 1) -> FiniteSpace:
    from .finite_space import product_bernoulli_space

    return product_bernoulli_space(horizon, ps, n_null)


def brute_force_burnin_rb(
    spec: BettingProcessSpec, burn: BurnInSpec, ps: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    """Rao-Blackwellize every ``E_t`` on the ``2**horizon`` path space.

    Returns ``(paths, log G)`` with ``log G`` of shape
    ``(2**horizon, horizon - M + 1)``. At time ``t`` the conditioning
    statistic is ``(S_M..S_t)`` joined with the bits after ``t``; those bits
    are independent of ``E_t`` and make the statistic sufficient for the
    whole path law, which is checked strictly.
    """
    burn.check(spec)
    space = bernoulli_path_space(spec.horizon, ps)
    X = np.array(space.atoms, dtype=float)
    log_e = log_wealth_paths(spec, X)
    view = sufficient_view(X, burn.M).astype(int)
    cols = []
    for j, t in enumerate(range(burn.M, spec.horizon + 1)):
        S = [tuple(v[: j + 1]) + tuple(x[t:]) for v, x in zip(view.tolist(), X.astype(int).tolist())]
        G = rao_blackwellize(space, np.exp(log_e[:, t]), S, strict=True)
        cols.append(np.log(G))
    return X, np.stack(cols, axis=1)


class BurnInRaoBlackwell(TransformerMixin, BaseEstimator):
    """Bernoulli betting process conditioned on the burn-in filtration.

    ``transform`` maps rows of ``horizon`` bits to the paths ``G_M..G_horizon``.
    """

    def __init__(self, p0=0.5, bets=(), burn_in=1):
        self.p0 = p0
        self.bets = bets
        self.burn_in = burn_in

    def fit(self, X=None, y=None):
        self.spec_ = BettingProcessSpec(self.p0, tuple(self.bets))
        self.burn_ = BurnInSpec(self.burn_in)
        self.burn_.check(self.spec_)
        self.log_factor_ = burnin_log_factor(self.spec_, self.burn_)
        self.n_features_in_ = self.spec_.horizon
        return self

    def score_samples(self, X):
        check_is_fitted(self, "spec_")
        X = check_array(X, dtype=float)
        return log_burnin_rb_paths(self.spec_, self.burn_, X)

    def transform(self, X):
        return np.exp(self.score_samples(X))


# -- compound e-variables and e-BH ---------------------------------------------


@dataclass(frozen=True)
class CompoundSpec:
    """``K`` tables on one finite space and, per parameter, the indices of the
    hypotheses that are null there."""

    components: tuple
    null_membership: Mapping

    def __init__(self, components, null_membership):
        comps = tuple(np.asarray(c, dtype=float) for c in components)
        if not comps:
            raise ValueError("need K >= 1 components")
        member = {t: frozenset(ks) for t, ks in null_membership.items()}
        for ks in member.values():
            if any(not 0 <= k < len(comps) for k in ks):
                raise ValueError("membership index out of range")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "null_membership", member)

    @property
    def K(self) -> int:
        return len(self.components)


def compound_check(
    space: FiniteSpace, spec: CompoundSpec, theta, tol: float = PROB_TOL
) -> tuple[float, bool]:
    """Sum of ``E_theta[E_k]`` over the hypotheses null at ``theta``; ok iff ``<= K``."""
    members = spec.null_membership.get(theta, frozenset())
    if not members:
        raise ValueError(f"{theta!r} is not null for any hypothesis")
    total = math.fsum(expectation(space, theta, spec.components[k]) for k in sorted(members))
    return total, bool(total <= spec.K + tol)


def compound_rao_blackwellize(
    space: FiniteSpace, spec: CompoundSpec, statistics: Sequence, strict: bool = True
) -> CompoundSpec:
    """Condition each component on its own statistic.

    Component ``j`` uses the parameters null for hypothesis ``j`` together
    with the alternative parameters, for which ``statistics[j]`` must be
    sufficient.
    """
    if len(statistics) != spec.K:
        raise ValueError("need one statistic per component")
    new = []
    for j, (E, S) in enumerate(zip(spec.components, statistics)):
        thetas = [t for t in space.thetas if j in spec.null_membership.get(t, ())]
        thetas += [t for t in space.theta_alt if t not in thetas]
        new.append(rao_blackwellize(space, E, S, strict=strict, thetas=thetas))
    return CompoundSpec(new, spec.null_membership)


def compound_check_mc(
    model: ParametricModel, evariables: Sequence[EVariableFn], members: Sequence[int], K: int, n: int, seed: int
) -> tuple[MCReport, bool]:
    """Sampled version: ``E[sum_{k in members} E_k] <= K`` within 3 standard errors."""
    from .evar import mc_mean

    chosen = [evariables[k] for k in members]
    total = EVariableFn(lambda x: np.sum([E(x) for E in chosen], axis=0), "compound_sum")
    rep = mc_mean(model, total, n, seed)
    return rep, bool(rep.mean is not None and rep.mean <= K + 3.0 * rep.std_error)


def ebh(e_values: Sequence[float], alpha: float) -> list[int]:
    """e-BH: reject the ``k*`` largest e-values, where ``k*`` is the largest ``k``
    whose ``k``-th largest e-value is at least ``K / (alpha k)``.

    Ties are broken by index. Returns 0-based indices in increasing order.
    """
    alpha = check_probability(alpha, "alpha")
    e = np.asarray(e_values, dtype=float)
    if np.any(np.isnan(e)) or np.any(e < 0):
        raise ValueError("e-values must be nonnegative")
    K = len(e)
    if K == 0:
        return []
    order = sorted(range(K), key=lambda i: (-e[i], i))
    k_star = 0
    for k in range(1, K + 1):
        if e[order[k - 1]] >= K / (alpha * k):
            k_star = k
    return sorted(order[:k_star])


# -- asymptotic e-variables ----------------------------------------------------


@dataclass(frozen=True)
class AsymptoticRow:
    n: int
    model: str
    mean_e: float
    mean_g: float
    pair_se: float

    @property
    def passed(self) -> bool:
        return self.mean_g <= self.mean_e + 3.0 * self.pair_se + PROB_TOL


def asymptotic_wrapper(
    sequence_constructor: Callable[[int], tuple[EVariableFn, EVariableFn]],
    n_grid: Sequence[int],
    null_models: Sequence[Callable[[int], ParametricModel]],
    n_draws: int,
    seed: int,
) -> tuple[list[AsymptoticRow], list[float]]:
    """Per-``n`` null means of ``E_n`` and ``G_n`` on paired draws.

    Returns the rows and the trend ``sup over models of mean(G_n)`` along
    the grid. The limsup itself is not decidable from finitely many ``n``
    and is left to the reader of the trend.
    """
    n_grid = list(n_grid)
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be increasing")
    rows, trend = [], []
    for i, n in enumerate(n_grid):
        E, G = sequence_constructor(n)
        sup_g = -INF
        for j, make in enumerate(null_models):
            model = make(n)
            x = model.sample(n_draws, seed + 1000 * i + j)
            e, g = E(x), G(x)
            d = g - e
            se = float(np.std(d, ddof=1) / math.sqrt(len(d)))
            row = AsymptoticRow(n, repr(model), float(np.mean(e)), float(np.mean(g)), se)
            rows.append(row)
            sup_g = max(sup_g, row.mean_g)
        trend.append(sup_g)
    return rows, trend


def asymptotic_wrapper_exact(
    table_constructor: Callable[[int], tuple[FiniteSpace, np.ndarray, list]],
    n_grid: Sequence[int],
) -> list[AsymptoticRow]:
    """Finite-space version: exact null means of ``E_n`` and its conditional
    expectation ``G_n`` for every null parameter."""
    rows = []
    for n in n_grid:
        space, E, S = table_constructor(n)
        G = rao_blackwellize(space, E, S, strict=True)
        for theta in space.theta_null:
            rows.append(
                AsymptoticRow(n, str(theta), expectation(space, theta, E), expectation(space, theta, G), 0.0)
            )
    return rows
