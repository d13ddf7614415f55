import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rbevals.bernoulli_cauchy import (
    BernNaiveSpec,
    EnumerationTooLarge,
    bern_exact_improvement,
    bern_naive_e,
    bern_null_means_exact,
    bern_rb_g,
    cauchy_e,
    cauchy_g,
    cauchy_g_null_mean,
    cauchy_ratio,
    cauchy_ratio_mean,
    cauchy_truncated_log_g,
    cauchy_truncated_logratio,
)
from rbevals.finite_space import product_bernoulli_space, rao_blackwellize
from rbevals.utility import builtin_utilities, linear_utility, log_utility, power_utility

SPEC2 = BernNaiveSpec.from_exp(0.5, 2, 2)


def test_naive_e_examples():
    assert bern_naive_e(SPEC2, 1) == pytest.approx(4 / 3, rel=1e-15)
    assert bern_naive_e(SPEC2, 0) == pytest.approx(2 / 3, rel=1e-15)
    tiny = BernNaiveSpec(0.5, 1e-12, 3)
    assert bern_naive_e(tiny, 0) == pytest.approx(1.0, abs=1e-11)
    assert bern_naive_e(tiny, 1) == pytest.approx(1.0, abs=1e-11)
    with pytest.raises(ValueError):
        bern_naive_e(SPEC2, 2)


def test_rb_g_examples():
    assert bern_rb_g(SPEC2, 1) == pytest.approx(1.0, rel=1e-15)
    assert bern_rb_g(SPEC2, 2) == pytest.approx(4 / 3, rel=1e-15)
    assert bern_rb_g(SPEC2, 0) == pytest.approx(math.exp(-SPEC2.psi), rel=1e-15)
    with pytest.raises(ValueError):
        bern_rb_g(SPEC2, 3)


def test_spec_validation():
    with pytest.raises(ValueError):
        BernNaiveSpec(1.0, 1.0, 2)
    with pytest.raises(ValueError):
        BernNaiveSpec(0.5, -1.0, 2)
    with pytest.raises(ValueError):
        BernNaiveSpec(0.5, 1.0, 0)


def test_exact_improvement_examples():
    gap, strict = bern_exact_improvement(SPEC2, 0.5, log_utility())
    assert strict and gap > 0
    gap, strict = bern_exact_improvement(SPEC2, 0.5, linear_utility())
    assert gap == pytest.approx(0.0, abs=1e-15)
    gap, strict = bern_exact_improvement(BernNaiveSpec.from_exp(0.5, 2, 3), 0.99, log_utility())
    assert strict
    with pytest.raises(EnumerationTooLarge):
        bern_exact_improvement(BernNaiveSpec.from_exp(0.5, 2, 21), 0.5, log_utility())


def test_exact_improvement_matches_hand_enumeration():
    spec = BernNaiveSpec.from_exp(0.5, 2, 3)
    p = 0.7
    want = 0.0
    for bits in itertools.product((0, 1), repeat=3):
        k = sum(bits)
        w = p**k * (1 - p) ** (3 - k)
        e = (2.0 if bits[0] else 1.0) / 1.5
        g = (1 + k / 3) / 1.5
        want += w * (math.log(g) - math.log(e))
    gap, _ = bern_exact_improvement(spec, p, log_utility())
    assert gap == pytest.approx(want, abs=1e-14)


@pytest.mark.parametrize("n", range(1, 9))
def test_null_means_exactly_one(n):
    assert bern_null_means_exact(Fraction(1, 2), 2, n) == (1, 1)
    assert bern_null_means_exact(Fraction(1, 3), Fraction(5, 2), n) == (1, 1)


@pytest.mark.parametrize("n", range(2, 13))
def test_closed_form_matches_finite_space(n):
    spec = BernNaiveSpec.from_exp(0.5, 2, n)
    space = product_bernoulli_space(n, [0.5, 0.2, 0.9])
    bits = np.array(space.atoms)
    G = rao_blackwellize(space, bern_naive_e(spec, bits[:, 0]), bits.sum(axis=1).tolist(), strict=True)
    assert np.max(np.abs(G - bern_rb_g(spec, bits.sum(axis=1)))) <= 1e-12


def test_rb_is_not_the_likelihood_ratio():
    # the likelihood ratio against p=q depends on k through (q/p0)^k, which is not affine in k
    n, p0, q = 4, 0.5, 0.7
    k = np.arange(n + 1)
    lr = (q / p0) ** k * ((1 - q) / (1 - p0)) ** (n - k)
    for lam_exp in (1.1, 2.0, 5.0, 50.0):
        g = bern_rb_g(BernNaiveSpec.from_exp(p0, lam_exp, n), k)
        assert not np.allclose(g, lr, rtol=1e-6)


@pytest.mark.parametrize("f", builtin_utilities(), ids=lambda f: f.name)
@pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_strict_improvement(f, p):
    gap, strict = bern_exact_improvement(BernNaiveSpec.from_exp(0.5, 2, 4), p, f)
    assert strict and gap > 0


def test_cauchy_closed_forms():
    assert cauchy_ratio(0.0) == 1.0
    assert cauchy_g(0.0) == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert cauchy_g(0.0) == pytest.approx(0.606531, abs=1e-6)
    grid = np.linspace(-50, 50, 2001)
    assert np.all(cauchy_ratio(grid) <= 2.0)
    assert cauchy_e(1000.0) == math.inf and cauchy_ratio(1000.0) == 2.0


@given(st.floats(-300, 300))
def test_ratio_matches_quotient(x):
    assert cauchy_ratio(x) == pytest.approx(cauchy_e(x) / cauchy_g(x), rel=1e-12)


@given(st.floats(-300, 300))
def test_g_is_sign_symmetrization(x):
    assert cauchy_g(x) == pytest.approx(0.5 * (cauchy_e(x) + cauchy_e(-x)), rel=1e-12)


def test_truncated_logratio_examples():
    a, b, c = (cauchy_truncated_logratio(t) for t in (1.0, 100.0, 1e4))
    assert b < a
    assert c < -4
    assert float(np.log(cauchy_ratio(0.0))) == 0.0


def test_truncated_logratio_envelope():
    # the mass on x <= -T is at most 1/(pi T), and there log(E/G) <= log 2 + 2x
    for T in (10.0, 100.0, 1000.0):
        val = cauchy_truncated_logratio(T)
        assert val < math.log(2) and val < cauchy_truncated_logratio(T / 10)


def test_quadrature_checks():
    assert cauchy_g_null_mean() == pytest.approx(1.0, abs=1e-8)
    normal = lambda x: -0.5 * x * x - 0.5 * math.log(2 * math.pi)
    cauchy = lambda x: -math.log(math.pi * (1 + x * x))
    assert cauchy_ratio_mean(normal) == pytest.approx(1.0, abs=1e-8)
    assert cauchy_ratio_mean(cauchy) <= 1.0
    assert cauchy_truncated_log_g(1e9) > 10
