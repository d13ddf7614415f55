"""Extended-real arithmetic and generalized expectations.

Values on the extended real line are plain Python floats, with ``math.inf``
and ``-math.inf`` as the two infinite states. NaN is never a valid value:
operations that would produce one (``inf - inf``) raise
:class:`IndeterminateSum` instead.

A generalized expectation ``E[X] = E[X+] - E[X-]`` is defined whenever at
least one of the two parts is finite, and may then equal ``+inf`` or
``-inf``. Atoms with zero probability contribute nothing, even when the
value there is infinite (``0 * inf = 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from ._validation import PROB_TOL, BadDistribution

ExtReal = float

INF = math.inf
NEG_INF = -math.inf


class IndeterminateSum(ArithmeticError):
    """Raised for ``inf + (-inf)``."""


def _check_ext(x: float, name: str = "value") -> float:
    x = float(x)
    if math.isnan(x):
        raise ValueError(f"{name} is NaN, which is not an extended real")
    return x


def ext_add(a: ExtReal, b: ExtReal) -> ExtReal:
    a, b = _check_ext(a, "a"), _check_ext(b, "b")
    if math.isinf(a) and math.isinf(b) and a != b:
        raise IndeterminateSum(f"{a} + {b}")
    return a + b


def ext_sub(a: ExtReal, b: ExtReal) -> ExtReal:
    return ext_add(a, -_check_ext(b, "b"))


def ext_mul(a: ExtReal, b: ExtReal) -> ExtReal:
    """Product with the measure-theoretic convention ``0 * (+-inf) = 0``."""
    a, b = _check_ext(a, "a"), _check_ext(b, "b")
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


def ext_div(a: ExtReal, b: ExtReal) -> ExtReal:
    """Ratio of nonnegative extended reals with ``0/0 = 0`` and ``inf/inf = 1``."""
    a, b = _check_ext(a, "a"), _check_ext(b, "b")
    if a < 0 or b < 0:
        raise ValueError(f"ext_div needs nonnegative arguments; got {a}, {b}")
    if a == 0.0:
        return 0.0
    if math.isinf(a) and math.isinf(b):
        return 1.0
    if b == 0.0:
        return INF
    if math.isinf(b):
        return 0.0
    return a / b


@dataclass(frozen=True)
class GenExpectation:
    """Result of a generalized expectation.

    ``value`` is ``pos_part - neg_part`` when defined and ``None`` otherwise.
    """

    pos_part: ExtReal
    neg_part: ExtReal

    @property
    def defined(self) -> bool:
        return min(self.pos_part, self.neg_part) < INF

    @property
    def value(self) -> ExtReal | None:
        if not self.defined:
            return None
        return ext_sub(self.pos_part, self.neg_part)

    def __repr__(self) -> str:
        if self.defined:
            return f"Defined({self.value!r})"
        return "Undefined"


def _weighted_part(values: Sequence[float], weights: Sequence[float]) -> float:
    terms = []
    for v, w in zip(values, weights):
        if w == 0.0 or v == 0.0:
            continue
        if math.isinf(v):
            return INF
        terms.append(v * w)
    return math.fsum(terms)


def gen_expectation(
    values: Iterable[ExtReal], weights: Iterable[float], tol: float = PROB_TOL
) -> GenExpectation:
    """Generalized expectation of a discrete extended-real random variable."""
    values = [_check_ext(v) for v in values]
    weights = [float(w) for w in weights]
    if len(values) != len(weights):
        raise ValueError("values and weights must have equal length")
    if any(w < 0 or not math.isfinite(w) for w in weights):
        raise BadDistribution("weights must be finite and nonnegative")
    total = math.fsum(weights)
    if abs(total - 1.0) > tol:
        raise BadDistribution(f"weights sum to {total!r}, not 1")
    pos = _weighted_part([max(v, 0.0) for v in values], weights)
    neg = _weighted_part([max(-v, 0.0) for v in values], weights)
    return GenExpectation(pos, neg)


def ext_le(a: ExtReal, b: ExtReal, tol: float = 0.0) -> bool:
    """``a <= b + tol`` with infinities compared exactly."""
    a, b = _check_ext(a, "a"), _check_ext(b, "b")
    if a == b:
        return True
    if math.isinf(a) or math.isinf(b):
        return a < b
    return a <= b + tol


def format_ext(x: ExtReal | None) -> str | None:
    """Serialize an extended real; ``repr`` of a float round-trips bit-exactly."""
    if x is None:
        return None
    x = float(x)
    if x == INF:
        return "inf"
    if x == NEG_INF:
        return "-inf"
    return repr(x)


def parse_ext(s: str | float | None) -> ExtReal | None:
    if s is None:
        return None
    return _check_ext(float(s))
