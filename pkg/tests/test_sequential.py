import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbevals.evar import NormalModel, constant_evariable
from rbevals.finite_space import (
    FiniteSpace,
    expectation,
    product_bernoulli_space,
    random_sufficient_space,
    rao_blackwellize,
)
from rbevals.sequential import (
    AsymptoticRow,
    BettingProcessSpec,
    BurnInRaoBlackwell,
    BurnInSpec,
    CompoundSpec,
    FirstOf,
    FixedTime,
    ThresholdCross,
    asymptotic_wrapper,
    asymptotic_wrapper_exact,
    brute_force_burnin_rb,
    burnin_log_factor,
    burnin_rb_path,
    compound_check,
    compound_check_mc,
    compound_rao_blackwellize,
    ebh,
    exact_stopping_audit,
    geometric_bets,
    log_burnin_rb_paths,
    log_elementary_symmetric,
    optional_stopping_audit,
    parse_rule,
    run_stopped,
    sufficient_view,
    wealth_path,
)

LOG2, LOG3 = math.log(2), math.log(3)


def psi(p0, lam):
    return math.log(p0 * math.exp(lam) + 1 - p0)


def test_wealth_examples():
    spec = BettingProcessSpec(0.5, (LOG2,) * 3)
    assert wealth_path(spec, [0, 0, 0]) == pytest.approx([math.exp(-t * psi(0.5, LOG2)) for t in range(4)])
    assert wealth_path(BettingProcessSpec(0.5, ()), []).tolist() == [1.0]
    two = BettingProcessSpec(0.5, (LOG2, LOG2))
    assert wealth_path(two, [1, 0])[-1] == pytest.approx(8 / 9, rel=1e-15)


def test_spec_validation():
    with pytest.raises(ValueError):
        BettingProcessSpec(0.5, (1.0, -1.0))
    with pytest.raises(ValueError):
        BettingProcessSpec(0.5, (1.0,), horizon=2)
    with pytest.raises(ValueError):
        BurnInSpec(0)
    with pytest.raises(ValueError):
        burnin_rb_path(BettingProcessSpec(0.5, (1.0,)), BurnInSpec(2), [1])
    with pytest.raises(ValueError):
        wealth_path(BettingProcessSpec(0.5, (1.0,)), [2])


def test_burnin_examples():
    spec = BettingProcessSpec(0.5, geometric_bets(1.2, 6))
    x = np.array([1, 0, 1, 1, 0, 1])
    assert np.allclose(burnin_rb_path(spec, BurnInSpec(1), x), wealth_path(spec, x)[1:], rtol=1e-14)
    flat = BettingProcessSpec(0.5, (0.7,) * 3 + (0.3, 0.2))
    assert np.allclose(burnin_rb_path(flat, BurnInSpec(3), x[:5]), wealth_path(flat, x[:5])[3:], rtol=1e-14)
    two = BettingProcessSpec(0.5, (LOG2, LOG3))
    want = math.exp(-psi(0.5, LOG2) - psi(0.5, LOG3)) * (2 + 3) / 2
    assert burnin_rb_path(two, BurnInSpec(2), [1, 0])[0] == pytest.approx(want, rel=1e-14)
    assert burnin_rb_path(two, BurnInSpec(2), [0, 1])[0] == pytest.approx(want, rel=1e-14)


def test_elementary_symmetric_against_subsets():
    a = [0.5, 2.0, 3.0, 1.5, 0.25]
    L = log_elementary_symmetric(np.log(a))
    for k in range(len(a) + 1):
        want = sum(math.prod(c) for c in itertools.combinations(a, k))
        assert math.exp(L[k]) == pytest.approx(want, rel=1e-13)


def test_elementary_symmetric_large_m_no_overflow():
    L = log_elementary_symmetric(np.full(64, 50.0))
    assert np.all(np.isfinite(L))
    assert L[32] == pytest.approx(32 * 50 + math.log(math.comb(64, 32)), rel=1e-13)
    spec = BettingProcessSpec(0.5, geometric_bets(1.01, 64, first=20.0))
    assert np.all(np.isfinite(burnin_log_factor(spec, BurnInSpec(64))))


@pytest.mark.parametrize("M", [1, 2, 4, 7])
def test_burnin_matches_brute_force(M):
    spec = BettingProcessSpec(0.5, geometric_bets(1.2, 8))
    X, brute = brute_force_burnin_rb(spec, BurnInSpec(M), [0.5, 0.8, 0.3])
    assert np.max(np.abs(brute - log_burnin_rb_paths(spec, BurnInSpec(M), X))) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.05, 3.0), min_size=1, max_size=12), st.data())
def test_g_positive_where_e_positive(bets, data):
    spec = BettingProcessSpec(0.3, tuple(bets))
    M = data.draw(st.integers(1, len(bets)))
    x = data.draw(st.lists(st.integers(0, 1), min_size=len(bets), max_size=len(bets)))
    assert np.all(burnin_rb_path(spec, BurnInSpec(M), x) > 0)


def test_sufficient_view():
    v = sufficient_view([[1, 0, 1, 1]], 2)
    assert v.tolist() == [[1, 2, 3]]


def test_stopping_rule_examples():
    path = np.linspace(1, 3, 8)
    assert run_stopped(path, FixedTime(3))[0] == 3
    assert run_stopped(path, ThresholdCross(0.5)) == (0, 1.0)
    assert run_stopped(path, FirstOf(FixedTime(5), ThresholdCross(10)))[0] == 5
    assert run_stopped(path, ThresholdCross(10))[0] == 7
    assert run_stopped(path, FixedTime(2), start=4)[0] == 4


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 20), min_size=2, max_size=15), st.floats(0, 20), st.integers(0, 15))
def test_rules_depend_only_on_prefix(path, level, t):
    path = np.array(path)
    for rule in (FixedTime(t), ThresholdCross(level), FirstOf(FixedTime(t), ThresholdCross(level))):
        tau, _ = run_stopped(path, rule)
        altered = path.copy()
        altered[tau + 1 :] = 0.0 if level > 0 else 99.0
        if tau < len(path) - 1:
            assert run_stopped(altered, rule)[0] == tau


def test_parse_rule():
    assert parse_rule("fixed:4") == FixedTime(4)
    assert parse_rule("threshold:5") == ThresholdCross(5.0)
    assert parse_rule("fixed:5|threshold:10") == FirstOf(FixedTime(5), ThresholdCross(10.0))
    assert parse_rule(parse_rule("fixed:5|threshold:2.5").label()).label() == "fixed:5|threshold:2.5"
    with pytest.raises(ValueError):
        parse_rule("sometime:3")


SPEC10 = BettingProcessSpec(0.5, geometric_bets(1.2, 10))
BURN4 = BurnInSpec(4)
RULES = [FixedTime(4), FixedTime(10), ThresholdCross(5.0), FirstOf(FixedTime(7), ThresholdCross(2.0))]


def test_exact_audit():
    rows = exact_stopping_audit(SPEC10, BURN4, RULES, 0.8)
    for r in rows:
        assert r.null_mean_g == pytest.approx(1.0, abs=1e-12)
        assert r.null_mean_e == pytest.approx(1.0, abs=1e-12)
        assert r.alt_log_gap > 0
        assert r.alt_ratio <= 1 + 1e-12


def test_fixed_time_m_null_mean_is_one_over_burnin_outcomes():
    # mean of G_M over the 2^M burn-in outcomes, by hand
    lam = np.array(SPEC10.bets[:4])
    total = 0.0
    for bits in itertools.product((0, 1), repeat=4):
        k = sum(bits)
        total += 0.5**4 * math.exp(burnin_log_factor(SPEC10, BURN4)[k])
    assert total == pytest.approx(1.0, abs=1e-14)


def test_mc_audit():
    for r in optional_stopping_audit(SPEC10, BURN4, RULES, 0.8, 100_000, 3):
        assert r.null_ok and r.gap_ok and r.ratio_ok
        assert r.alt_log_gap.mean > 3 * r.alt_log_gap.std_error


def test_constant_bets_gap_exactly_zero():
    flat = BettingProcessSpec(0.5, (0.4,) * 6)
    for r in exact_stopping_audit(flat, BurnInSpec(3), [FixedTime(6)], 0.8):
        assert abs(r.alt_log_gap) <= 1e-15
    rows = optional_stopping_audit(flat, BurnInSpec(3), [FixedTime(6)], 0.8, 20_000, 1)
    assert abs(rows[0].alt_log_gap.mean) <= 1e-15


def test_estimator():
    est = BurnInRaoBlackwell(p0=0.5, bets=geometric_bets(1.2, 10), burn_in=4).fit()
    X = np.random.default_rng(0).integers(0, 2, (20, 10))
    assert est.transform(X).shape == (20, 7)
    assert np.allclose(est.score_samples(X), log_burnin_rb_paths(SPEC10, BURN4, X))


# -- compound and e-BH ----------------------------------------------------------


def two_point():
    return FiniteSpace(["a", "b"], {"t0": [0.5, 0.5], "t1": [0.2, 0.8]}, ["t0"], ["t1"])


def test_compound_examples():
    space = two_point()
    spec = CompoundSpec([np.ones(2)] * 3, {"t0": [0, 2]})
    assert compound_check(space, spec, "t0") == (2.0, True)
    slack = CompoundSpec([np.full(2, 2.0), np.zeros(2)], {"t0": [0, 1]})
    assert compound_check(space, slack, "t0") == (2.0, True)
    over = CompoundSpec([np.full(2, 3.0), np.zeros(2)], {"t0": [0, 1]})
    assert compound_check(space, over, "t0") == (3.0, False)
    with pytest.raises(ValueError):
        compound_check(space, spec, "t1")
    with pytest.raises(ValueError):
        CompoundSpec([], {})


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_compound_preserved_by_rb(seed):
    from rbevals.checks import random_compound

    space, S, spec = random_compound(np.random.default_rng(seed))
    rb = compound_rao_blackwellize(space, spec, [S] * spec.K)
    for theta in spec.null_membership:
        before, ok_before = compound_check(space, spec, theta)
        after, ok_after = compound_check(space, rb, theta)
        assert ok_before and ok_after
        assert abs(after - before) <= 1e-12


def test_compound_rb_with_per_hypothesis_statistic():
    # S is sufficient for {t0, alt} but not once t1 is included
    space = FiniteSpace(
        ["a", "b", "c"],
        {"t0": [0.2, 0.2, 0.6], "t1": [0.5, 0.1, 0.4], "alt": [0.1, 0.1, 0.8]},
        ["t0", "t1"],
        ["alt"],
    )
    S = ["x", "x", "y"]
    comps = [np.array([2.0, 0.0, 1.0]), np.array([1.0, 1.0, 1.0])]
    spec = CompoundSpec(comps, {"t0": [0], "t1": [1]})
    rb = compound_rao_blackwellize(space, spec, [S, [0, 1, 2]])
    assert rb.components[0].tolist() == [1.0, 1.0, 1.0]
    for theta in ("t0", "t1"):
        assert compound_check(space, rb, theta)[0] == pytest.approx(compound_check(space, spec, theta)[0], abs=1e-12)
    with pytest.raises(Exception):
        rao_blackwellize(space, comps[0], S, strict=True)


def test_compound_mc():
    Es = [constant_evariable(1.0), constant_evariable(2.0), constant_evariable(0.0)]
    rep, ok = compound_check_mc(NormalModel(), Es, [1, 2], 3, 1000, 0)
    assert rep.mean == 2.0 and ok


def test_ebh_examples():
    assert ebh([0.0, 0.0, 0.0], 0.05) == []
    assert ebh([25.0], 0.05) == [0]
    assert ebh([41.0, 39.0], 0.05) == [0, 1]
    assert ebh([19.0], 0.05) == []
    with pytest.raises(ValueError):
        ebh([1.0], 1.5)
    with pytest.raises(ValueError):
        ebh([-1.0], 0.5)


def ebh_oracle(e, alpha):
    K = len(e)
    best = set()
    for k in range(1, K + 1):
        top = sorted(range(K), key=lambda i: (-e[i], i))[:k]
        if min(e[i] for i in top) >= K / (alpha * k):
            best = set(top)
    return sorted(best)


def test_ebh_monotone_and_oracle_on_random_inputs():
    rng = np.random.default_rng(12)
    for _ in range(1000):
        K = int(rng.integers(1, 12))
        e = rng.exponential(20.0, K) * (rng.random(K) < 0.7)
        alpha = float(rng.uniform(0.01, 0.5))
        R = ebh(e, alpha)
        assert R == ebh_oracle(e.tolist(), alpha)
        bumped = e.copy()
        bumped[int(rng.integers(K))] += float(rng.exponential(30.0))
        assert set(R) <= set(ebh(bumped, alpha))


# -- asymptotic wrapper -----------------------------------------------------------


def test_asymptotic_wrapper_mc():
    def make(n):
        return constant_evariable(1.0), constant_evariable(1.0)

    rows, trend = asymptotic_wrapper(make, [1, 2, 4], [lambda n: NormalModel()], 1000, 0)
    assert all(r.passed for r in rows) and trend == [1.0, 1.0, 1.0]
    with pytest.raises(ValueError):
        asymptotic_wrapper(make, [2, 1], [lambda n: NormalModel()], 10, 0)


def test_asymptotic_wrapper_exact_tower():
    def make(n):
        space = product_bernoulli_space(n, [0.5, 0.4, 0.8], n_null=2)
        bits = np.array(space.atoms)
        E = np.where(bits[:, 0] == 1, 1.2, 0.8) * (1 + 1 / n)
        return space, E, bits.sum(axis=1).tolist()

    rows = asymptotic_wrapper_exact(make, [2, 4, 8])
    for r in rows:
        assert r.mean_g == pytest.approx(r.mean_e, abs=1e-12)
        assert isinstance(r, AsymptoticRow) and r.passed
