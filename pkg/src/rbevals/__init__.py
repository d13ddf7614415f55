"""Rao-Blackwellized e-variables: finite-space machinery, closed-form
examples, optimal e-variables, and e-processes under sufficient filtrations."""

from .bernoulli_cauchy import (
    BernNaiveSpec,
    EnumerationTooLarge,
    bern_exact_improvement,
    bern_naive_e,
    bern_rb_g,
    cauchy_e,
    cauchy_g,
    cauchy_ratio,
    cauchy_truncated_logratio,
)
from .evar import (
    CauchyModel,
    EVariableFn,
    MCReport,
    NormalModel,
    mc_expected_utility,
    mc_mean,
    paired_utility_comparison,
    permutation_rb,
    ratio_check,
)
from .extreal import INF, GenExpectation, IndeterminateSum, ext_add, ext_div, ext_mul, gen_expectation
from .finite_space import (
    FiniteRaoBlackwellizer,
    FiniteSpace,
    InsufficientStatistic,
    expectation,
    expected_utility,
    jensen_gap,
    rao_blackwellize,
    sufficiency_check,
)
from .pareto_grow import ParetoGROW, gamma_kl, grow_evariable, wu_bound
from .regression_gro import FixedDesign, RegressionGRO, RegressionHypotheses, gro_value, kl_projection
from .sequential import (
    BettingProcessSpec,
    BurnInRaoBlackwell,
    BurnInSpec,
    CompoundSpec,
    FirstOf,
    FixedTime,
    ThresholdCross,
    burnin_rb_path,
    compound_check,
    ebh,
    optional_stopping_audit,
    run_stopped,
    wealth_path,
)
from .utility import ConcaveUtility, log_utility, power_utility

__all__ = [name for name in dir() if not name.startswith("_")]
