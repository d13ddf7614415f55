"""Check batteries behind the command-line subcommands.

Each battery returns rows in a fixed declaration order. A row passes iff its
estimate satisfies the recorded relation against ``target`` with ``slack``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import bernoulli_cauchy as bc
from . import pareto_grow as pg
from . import regression_gro as rg
from . import sequential as sq
from .evar import CauchyModel, NormalModel, derive_seed, mc_mean, ratio_check
from .extreal import format_ext, parse_ext
from .finite_space import (
    expectation,
    jensen_gap,
    product_bernoulli_space,
    random_nonnegative_table,
    random_sufficient_space,
    rao_blackwellize,
)
from .utility import builtin_utilities

RELATIONS = ("<=", ">=", "<", ">", "~=", "any")


@dataclass(frozen=True)
class Row:
    name: str
    estimate: float | None
    std_error: float
    relation: str
    target: float
    slack: float
    detail: str = ""

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")

    @property
    def passed(self) -> bool:
        e, t, s = self.estimate, self.target, self.slack
        if self.relation == "any":
            return True
        if e is None or math.isnan(e):
            return False
        if self.relation == "<=":
            return e <= t + s
        if self.relation == ">=":
            return e >= t - s
        if self.relation == "<":
            return e < t + s
        if self.relation == ">":
            return e > t - s
        return abs(e - t) <= s

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": _num(self.estimate),
            "std_error": _num(self.std_error),
            "passed": self.passed,
            "tolerance": {"relation": self.relation, "target": _num(self.target), "slack": _num(self.slack)},
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Row":
        tol = d["tolerance"]
        return cls(
            d["name"],
            _unnum(d["estimate"]),
            _unnum(d["std_error"]),
            tol["relation"],
            _unnum(tol["target"]),
            _unnum(tol["slack"]),
            d.get("detail", ""),
        )


def _num(x):
    if x is None:
        return None
    x = float(x)
    return format_ext(x) if math.isinf(x) else x


def _unnum(x):
    return parse_ext(x) if isinstance(x, str) else (None if x is None else float(x))


def _mc_row(name, rep, relation, target, n_se=3.0):
    return Row(name, rep.mean, rep.std_error, relation, target, n_se * rep.std_error,
               "nonconvergence" if rep.nonconvergence else "")


# -- subcommand batteries ------------------------------------------------------


def bernoulli_rows(p0: float, lambda_exp: float, n: int, ps: Sequence[float]) -> list[Row]:
    spec = bc.BernNaiveSpec.from_exp(p0, lambda_exp, n)
    rows = []
    mean_e, mean_g = bc.bern_null_means_exact(Fraction(p0), Fraction(lambda_exp), n)
    rows.append(Row("null mean E (exact)", float(mean_e), 0.0, "~=", 1.0, 0.0))
    rows.append(Row("null mean G (exact)", float(mean_g), 0.0, "~=", 1.0, 0.0))
    if n <= 14:
        space = product_bernoulli_space(n, list(dict.fromkeys([p0, *ps])))
        bits = np.array(space.atoms)
        E = bc.bern_naive_e(spec, bits[:, 0])
        G = rao_blackwellize(space, E, bits.sum(axis=1).tolist(), strict=True)
        err = float(np.max(np.abs(G - bc.bern_rb_g(spec, bits.sum(axis=1)))))
        rows.append(Row("closed form vs finite-space RB", err, 0.0, "<=", 0.0, 1e-12))
    utilities = builtin_utilities()
    for p in ps:
        for f in utilities:
            gap, _ = bc.bern_exact_improvement(spec, p, f)
            relation, slack = (">", 0.0) if f.strictly_concave else (">=", 1e-9)
            rows.append(Row(f"utility gap {f.name} p={p!r}", gap, 0.0, relation, 0.0, slack))
    return rows


def cauchy_rows(draws: int, seed: int, n_jobs: int = 1) -> list[Row]:
    rows = []
    E, G = bc.CAUCHY_E, bc.CAUCHY_G
    for label, model in (("normal", NormalModel()), ("cauchy", CauchyModel())):
        rep, log_rep = ratio_check(model, E, G, draws, derive_seed(seed, f"cauchy/{label}"), n_jobs)
        rows.append(_mc_row(f"mean E/G under {label}", rep, "<=", 1.0))
        rows.append(_mc_row(f"mean log(E/G) under {label}", log_rep, "<=", 0.0))
    g_null = mc_mean(NormalModel(), G, draws, derive_seed(seed, "cauchy/g-null"), n_jobs)
    rows.append(_mc_row("mean G under normal", g_null, "<=", 1.0))
    rows.append(Row("quadrature E[G] under normal", bc.cauchy_g_null_mean(), 0.0, "~=", 1.0, 1e-8))
    rows.append(Row("quadrature truncated log(E/G), T=1e4", bc.cauchy_truncated_logratio(1e4), 0.0, "<", -4.0, 0.0))
    return rows


def regression_rows(design_text: str, draws: int, seed: int, grid: Sequence[float]) -> list[Row]:
    design, hyp = rg.load_problem(design_text)
    theta_bar = rg.kl_projection(design, hyp)
    value = rg.gro_value(design, hyp)
    rows = [Row("GRO value", value, 0.0, "any", value, 0.0,
                "theta_bar=" + ",".join(repr(float(t)) for t in theta_bar))]
    Y = rg.response_sampler(design, hyp.theta_star, draws, derive_seed(seed, "regression/alt"))
    lh = rg.log_gro_evariable_from_mle(design, hyp.theta_star, theta_bar, rg.mle(design, Y))
    se = float(np.std(lh, ddof=1) / math.sqrt(len(lh)))
    rows.append(Row("mean log H under alternative", float(np.mean(lh)), se, "~=", value, 3 * se))
    for j, c in enumerate(grid):
        theta0 = theta_bar.copy()
        theta0[design.d :] += c
        Y = rg.response_sampler(design, theta0, draws, derive_seed(seed, "regression/null", j))
        h = np.exp(rg.log_gro_evariable_from_mle(design, hyp.theta_star, theta_bar, rg.mle(design, Y)))
        se = float(np.std(h, ddof=1) / math.sqrt(len(h)))
        rows.append(Row(f"mean H under null, nuisance shift {c!r}", float(np.mean(h)), se, "<=", 1.0, 3 * se))
    return rows


def pareto_rows(alpha0, alpha1, m, n, draws, seed, u: float = 1e-8) -> list[Row]:
    kl = pg.gamma_kl(n - 1, alpha1, alpha0)
    rows = [Row("gamma KL vs quadrature", kl, 0.0, "~=", pg.gamma_kl_quadrature(n - 1, alpha1, alpha0), 1e-8)]
    rep = pg.grow_value_check(alpha0, alpha1, m, n, draws, derive_seed(seed, "pareto/value"))
    rows.append(_mc_row("GROW value E[log E*]", rep, "~=", kl))
    null = pg.grow_null_check(alpha0, alpha1, m, n, draws, derive_seed(seed, "pareto/null"))
    rows.append(_mc_row("null mean E*", null, "<=", 1.0))
    if n * alpha1 > 1:
        rows.append(Row(f"Bayes-marginal bound at u={u!r}", pg.wu_bound(u, n, alpha0, alpha1), 0.0, "<", 1e-6, 0.0))
    return rows


def eprocess_rows(p0, p, bets, burnin, rules, paths, seed) -> list[Row]:
    spec = sq.BettingProcessSpec(p0, tuple(bets))
    burn = sq.BurnInSpec(burnin)
    burn.check(spec)
    rows = []
    if spec.horizon <= 12:
        X, brute = sq.brute_force_burnin_rb(spec, burn, [p0, p])
        err = float(np.max(np.abs(brute - sq.log_burnin_rb_paths(spec, burn, X))))
        rows.append(Row("closed form vs brute-force RB (log)", err, 0.0, "<=", 0.0, 1e-10))
    audit = sq.optional_stopping_audit(spec, burn, rules, p, paths, derive_seed(seed, "eprocess/audit"))
    for r in audit:
        rows.append(_mc_row(f"{r.rule}: null mean G_tau", r.null_mean_g, "<=", 1.0))
        rows.append(_mc_row(f"{r.rule}: mean log(G_tau/E_tau) at p={p!r}", r.alt_log_gap, ">=", 0.0))
        rows.append(_mc_row(f"{r.rule}: mean E_tau/G_tau at p={p!r}", r.alt_ratio, "<=", 1.0))
    if spec.horizon <= 12:
        for r in sq.exact_stopping_audit(spec, burn, rules, p):
            rows.append(Row(f"{r.rule}: exact null mean G_tau", r.null_mean_g, 0.0, "<=", 1.0, 1e-12))
            rows.append(Row(f"{r.rule}: exact mean log(G_tau/E_tau)", r.alt_log_gap, 0.0, ">=", 0.0, 1e-12))
    return rows


def jensen_rows(spaces: int, seed: int) -> list[Row]:
    rng = np.random.default_rng(derive_seed(seed, "jensen"))
    utilities = builtin_utilities()
    worst = {f.name: math.inf for f in utilities}
    undefined = {f.name: 0 for f in utilities}
    n_levels = 0
    for _ in range(spaces):
        space, S = random_sufficient_space(rng)
        X = random_nonnegative_table(rng, space.n_atoms)
        for theta in space.thetas:
            for f in utilities:
                for lvl in jensen_gap(space, theta, X, S, f).values():
                    n_levels += 1
                    if lvl.defined:
                        worst[f.name] = min(worst[f.name], lvl.gap)
                    else:
                        undefined[f.name] += 1
    rows = []
    for f in utilities:
        rows.append(Row(f"min defined Jensen gap {f.name}", worst[f.name], 0.0, ">=", 0.0, 1e-9))
        rows.append(Row(f"undefined levels {f.name}", float(undefined[f.name]), 0.0, "any", 0.0, 0.0))
    return rows





def random_compound(rng: np.random.Generator):
    """Random finite space with ``K`` components, each an e-variable for the
    parameters whose membership contains it, and a sufficient statistic."""
    space, S = random_sufficient_space(rng)
    K = int(rng.integers(1, 5))
    membership = {}
    for theta in space.theta_null:
        ks = [k for k in range(K) if rng.random() < 0.6]
        membership[theta] = ks or [int(rng.integers(K))]
    comps = []
    for k in range(K):
        E = rng.exponential(1.0, space.n_atoms)
        nulls = [t for t, ks in membership.items() if k in ks]
        if nulls:
            E = E / max(expectation(space, t, E) for t in nulls)
        comps.append(E)
    return space, S, sq.CompoundSpec(comps, membership)


def compound_rows(spaces: int, seed: int) -> list[Row]:
    rng = np.random.default_rng(derive_seed(seed, "compound"))
    worst_excess, worst_change = -math.inf, 0.0
    for _ in range(spaces):
        space, S, spec = random_compound(rng)
        rb = sq.compound_rao_blackwellize(space, spec, [S] * spec.K)
        for theta in spec.null_membership:
            before, _ = sq.compound_check(space, spec, theta)
            after, _ = sq.compound_check(space, rb, theta)
            worst_excess = max(worst_excess, after - spec.K)
            worst_change = max(worst_change, abs(after - before))
    return [
        Row("max compound sum minus K after RB", worst_excess, 0.0, "<=", 0.0, 1e-12),
        Row("max change of compound sum under RB", worst_change, 0.0, "<=", 0.0, 1e-12),
    ]


def ebh_rows(e_values: Sequence[float], alpha: float) -> list[Row]:
    rejected = sq.ebh(e_values, alpha)
    K = len(e_values)
    rows = [Row("rejections", float(len(rejected)), 0.0, "any", 0.0, 0.0,
                " ".join(str(i) for i in rejected))]
    if rejected:
        k = len(rejected)
        kth = min(e_values[i] for i in rejected)
        rows.append(Row(f"e-value of rank k={k} vs K/(alpha k)", kth, 0.0, ">=", K / (alpha * k), 0.0))
    return rows
