import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbevals.pareto_grow import (
    GrowConditionViolated,
    ParetoGROW,
    ParetoSpec,
    ParetoSuffStat,
    gamma_kl,
    gamma_kl_quadrature,
    grow_evariable,
    grow_null_check,
    grow_value_check,
    pareto_sample,
    standard_exponents,
    suff_law_check,
    suff_stat,
    suff_stat_rows,
    wu_bound,
)


def test_sampler_support_and_boundary():
    x = pareto_sample(ParetoSpec(3.0, 2.0, 1000), 1)
    assert np.all(x >= 3.0)

    class Ones:
        def random(self, shape):
            return np.zeros(shape)

    assert standard_exponents(Ones(), 2.0, 3).tolist() == [0.0, 0.0, 0.0]


def test_log_excess_is_exponential():
    e = standard_exponents(np.random.default_rng(2), 2.5, 10**6)
    assert abs(e.mean() - 1 / 2.5) <= 3 * e.std(ddof=1) / 1000


def test_suff_stat_examples():
    assert suff_stat([2.0, 2.0, 2.0]) == ParetoSuffStat(2.0, 0.0)
    s = suff_stat([1.0, math.e])
    assert s.x_min == 1.0 and s.T == pytest.approx(1.0, abs=1e-15)
    assert suff_stat([3.0, 1.0, 2.0]) == suff_stat([2.0, 3.0, 1.0])
    with pytest.raises(ValueError):
        suff_stat([1.0, 0.0])


def test_grow_examples():
    assert grow_evariable(ParetoSuffStat(1.0, 3.0), 1.5, 1.5, 5) == 1.0
    assert grow_evariable(ParetoSuffStat(1.0, 0.0), 1.0, 2.0, 1) == 1.0
    assert grow_evariable(ParetoSuffStat(1.0, 1.0), 1.0, 2.0, 5) == pytest.approx(16 / math.e, rel=1e-14)
    assert grow_evariable(ParetoSuffStat(1.0, 1.0), 1.0, 2.0, 5) == pytest.approx(5.886, abs=1e-3)


def test_gamma_kl_examples():
    assert gamma_kl(4, 2.0, 2.0) == 0.0
    assert gamma_kl(4, 2.0, 1.0) == pytest.approx(4 * math.log(2) - 2, abs=1e-15)
    assert abs(gamma_kl(4, 2.0, 1.0) - gamma_kl_quadrature(4, 2.0, 1.0)) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.floats(0.1, 10), st.floats(0.1, 10))
def test_gamma_kl_nonnegative_and_matches_quadrature(k, a1, a0):
    v = gamma_kl(k, a1, a0)
    assert v >= -1e-15
    assert v == pytest.approx(gamma_kl_quadrature(k, a1, a0), abs=1e-8, rel=1e-8)


def test_wu_bound_examples():
    assert wu_bound(1e-8, 5, 1.0, 2.0) < 1e-6
    assert wu_bound(1.0, 5, 1.0, 2.0) == pytest.approx(math.log(12 / 11) + 10 / 9, rel=1e-14)
    assert wu_bound(1.0, 5, 1.0, 2.0) == pytest.approx(1.198, abs=1e-3)
    assert wu_bound(0.3, 4, 1.5, 1.5) == pytest.approx(0.3 * 6 / 5, rel=1e-15)
    with pytest.raises(GrowConditionViolated):
        wu_bound(1.0, 2, 1.0, 0.4)


def test_wu_bound_decreasing():
    vals = [wu_bound(u, 5, 1.0, 2.0) for u in (1, 0.1, 0.01, 0.001)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 0


def test_grow_value_matches_kl_and_is_m_invariant():
    reps = [grow_value_check(1.0, 2.0, m, 5, 100_000, 7) for m in (0.5, 1.0, 10.0)]
    kl = gamma_kl(4, 2.0, 1.0)
    for r in reps:
        assert abs(r.mean - kl) <= 3 * r.std_error
    assert reps[0].to_dict() == reps[1].to_dict() == reps[2].to_dict()
    for u in (1.0, 0.1, 0.01, 0.001):
        assert reps[0].mean <= kl + wu_bound(u, 5, 1.0, 2.0) + 3 * reps[0].std_error


def test_grow_value_degenerate_and_preconditions():
    r = grow_value_check(1.5, 1.5, 1.0, 4, 10_000, 0)
    assert r.mean == 0.0 and r.std_error == 0.0
    with pytest.raises(GrowConditionViolated):
        grow_value_check(1.0, 0.2, 1.0, 3, 10_000, 0)
    with pytest.raises(ValueError):
        grow_value_check(1.0, 2.0, 1.0, 5, 100, 0)


def test_scale_free_t_agrees_with_real_draws():
    e = standard_exponents(np.random.default_rng(4), 2.0, (1000, 5))
    t_free = (e - e.min(axis=1, keepdims=True)).sum(axis=1)
    for m in (0.5, 10.0):
        _, T = suff_stat_rows(m * np.exp(e))
        assert np.allclose(T, t_free, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("m", [0.5, 1.0, 10.0])
def test_null_calibration(m):
    r = grow_null_check(1.0, 2.0, m, 5, 100_000, 3)
    assert abs(r.mean - 1.0) <= 3 * r.std_error


def test_law_checks():
    for spec in (ParetoSpec(1.0, 1.0, 5), ParetoSpec(1.0, 2.0, 3), ParetoSpec(10.0, 1.0, 5)):
        rows = suff_law_check(spec, 100_000, 11)
        assert all(r.passed for r in rows), rows
    rows = suff_law_check(ParetoSpec(1.0, 1.0, 5), 100_000, 11)
    assert rows[1].expected == 4.0
    assert suff_law_check(ParetoSpec(1.0, 2.0, 3), 100_000, 11)[0].expected == pytest.approx(1 / 6)
    t1 = suff_law_check(ParetoSpec(1.0, 1.0, 5), 10_000, 5)[1].estimate
    t10 = suff_law_check(ParetoSpec(10.0, 1.0, 5), 10_000, 5)[1].estimate
    assert t1 == pytest.approx(t10, rel=1e-12)
    with pytest.raises(ValueError):
        suff_law_check(ParetoSpec(1.0, 1.0, 5), 10, 0)


def test_estimator_and_permutation_invariance():
    X = np.random.default_rng(0).pareto(2.0, (50, 5)) + 1.0
    est = ParetoGROW(alpha0=1.0, alpha1=2.0).fit(X)
    a = est.transform(X)
    b = est.transform(X[:, ::-1])
    assert np.allclose(a, b, rtol=1e-13)
    assert est.get_params() == {"alpha0": 1.0, "alpha1": 2.0}
    with pytest.raises(ValueError):
        est.transform(-X)
