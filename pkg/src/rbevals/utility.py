"""Concave utilities on (0, inf), extended to [0, inf] by one-sided limits."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ._validation import check_count


class ConcaveUtility:
    """Base class. Subclasses implement :meth:`_eval_interior` and the limits."""

    name = "utility"

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(np.isnan(arr)) or np.any(arr < 0):
            raise ValueError("utilities are defined on [0, inf]")
        out = np.empty_like(arr)
        zero = arr == 0
        inf = np.isinf(arr)
        mid = ~(zero | inf)
        out[zero] = self.at_zero
        out[inf] = self.at_infinity
        out[mid] = self._eval_interior(arr[mid])
        if out.ndim == 0:
            return float(out)
        return out

    def eval_log(self, log_x):
        """Evaluate at ``exp(log_x)`` without forming ``exp`` where avoidable."""
        with np.errstate(over="ignore"):
            return self.eval(np.exp(np.asarray(log_x, dtype=float)))

    @property
    def at_zero(self) -> float:
        raise NotImplementedError

    @property
    def at_infinity(self) -> float:
        raise NotImplementedError

    @property
    def bounded_above(self) -> bool:
        return False

    @property
    def strictly_concave(self) -> bool:
        return False

    def _eval_interior(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def supergradient(self, m: float) -> float | None:
        """A slope ``g`` with ``f(x) <= f(m) + g (x - m)`` for all ``x``; ``None``
        if unavailable. ``m`` is finite and positive."""
        return None

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class LogUtility(ConcaveUtility):
    name = "log"
    at_zero = -math.inf
    at_infinity = math.inf
    strictly_concave = True

    def _eval_interior(self, x):
        return np.log(x)

    def supergradient(self, m):
        return 1.0 / m

    def eval_log(self, log_x):
        out = np.array(log_x, dtype=float)
        return float(out) if out.ndim == 0 else out


class PowerUtility(ConcaveUtility):
    """``x**(1 - gamma) / (1 - gamma)`` for ``gamma > 1``; bounded above by 0."""

    at_zero = -math.inf
    at_infinity = 0.0
    bounded_above = True
    strictly_concave = True

    def __init__(self, gamma: float):
        gamma = float(gamma)
        if not gamma > 1:
            raise ValueError(f"power utility needs gamma > 1; got {gamma}")
        self.gamma = gamma
        self.name = f"power({gamma:g})"

    def _eval_interior(self, x):
        e = 1.0 - self.gamma
        with np.errstate(over="ignore"):
            return np.power(x, e) / e

    def supergradient(self, m):
        return m ** (-self.gamma)

    def eval_log(self, log_x):
        e = 1.0 - self.gamma
        with np.errstate(over="ignore"):
            out = np.exp(e * np.asarray(log_x, dtype=float)) / e
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        return f"PowerUtility(gamma={self.gamma!r})"


class PiecewiseLinearUtility(ConcaveUtility):
    """Continuous piecewise-linear function on [0, inf).

    ``breakpoints`` is a list of ``(x, slope)`` pairs with the first ``x``
    equal to 0; ``slope`` applies from ``x`` up to the next breakpoint.
    ``intercept`` is the value at 0. Concavity (nonincreasing slopes) is
    enforced unless ``strict=False``.
    """

    strictly_concave = False

    def __init__(
        self,
        breakpoints: Sequence[tuple[float, float]],
        intercept: float = 0.0,
        strict: bool = True,
    ):
        pts = [(float(x), float(s)) for x, s in breakpoints]
        if not pts or pts[0][0] != 0.0:
            raise ValueError("first breakpoint must sit at x = 0")
        knots = np.array([x for x, _ in pts])
        slopes = np.array([s for _, s in pts])
        if np.any(np.diff(knots) <= 0) or not np.all(np.isfinite(knots)):
            raise ValueError("breakpoints must be finite and strictly increasing")
        self.is_concave = bool(np.all(np.diff(slopes) <= 0))
        if strict and not self.is_concave:
            raise ValueError("slopes must be nonincreasing for a concave utility")
        self.breakpoints = pts
        self.intercept = float(intercept)
        self._knots = knots
        self._slopes = slopes
        self._knot_values = self.intercept + np.concatenate(
            [[0.0], np.cumsum(slopes[:-1] * np.diff(knots))]
        )
        self.name = f"piecewise({len(pts)})"

    @property
    def at_zero(self):
        return self.intercept

    @property
    def at_infinity(self):
        last = self._slopes[-1]
        if last > 0:
            return math.inf
        if last < 0:
            return -math.inf
        return float(self._knot_values[-1])

    @property
    def bounded_above(self):
        return self._slopes[-1] <= 0

    def _eval_interior(self, x):
        idx = np.searchsorted(self._knots, x, side="right") - 1
        return self._knot_values[idx] + self._slopes[idx] * (x - self._knots[idx])

    def supergradient(self, m):
        if not self.is_concave:
            return None
        return float(self._slopes[np.searchsorted(self._knots, m, side="right") - 1])

    def __repr__(self):
        return (
            f"PiecewiseLinearUtility(breakpoints={self.breakpoints!r}, "
            f"intercept={self.intercept!r})"
        )


def log_utility() -> LogUtility:
    return LogUtility()


def power_utility(gamma: float) -> PowerUtility:
    return PowerUtility(gamma)


def linear_utility(slope: float = 1.0) -> PiecewiseLinearUtility:
    """Affine utility ``slope * x``: concave but not strictly."""
    return PiecewiseLinearUtility([(0.0, slope)])


def random_piecewise_linear(
    rng: np.random.Generator, n_kinks: int = 4, scale: float = 10.0
) -> PiecewiseLinearUtility:
    """Random concave piecewise-linear utility with kinks in ``(0, scale)``."""
    n_kinks = check_count(n_kinks, "n_kinks", minimum=1)
    knots = np.sort(rng.uniform(0.0, scale, size=n_kinks))
    first = rng.uniform(0.5, 3.0)
    drops = rng.exponential(1.0, size=n_kinks)
    slopes = first - np.concatenate([[0.0], np.cumsum(drops)])
    pts = [(0.0, float(slopes[0]))] + [
        (float(k), float(s)) for k, s in zip(knots, slopes[1:])
    ]
    return PiecewiseLinearUtility(pts, intercept=float(rng.normal()))


def builtin_utilities() -> list[ConcaveUtility]:
    return [log_utility(), power_utility(2.0), power_utility(3.0)]


def concavity_probe(
    f: ConcaveUtility, trials: int = 1000, seed: int = 0, tol: float = 1e-9
) -> bool:
    """Midpoint-concavity test on random pairs in (0, 1e6).

    Half of the pairs are drawn log-uniformly so that the region near 0 is
    exercised. The tolerance is relative to the magnitude of the chord.
    """
    trials = check_count(trials, "trials")
    rng = np.random.default_rng(seed)
    n_log = trials // 2
    log_pts = 10.0 ** rng.uniform(-6, 6, size=(n_log, 2))
    lin_pts = rng.uniform(0.0, 1e6, size=(trials - n_log, 2))
    pts = np.vstack([log_pts, lin_pts])
    pts = np.where(pts == 0.0, 1e-300, pts)
    x, y = pts[:, 0], pts[:, 1]
    mid = f.eval(0.5 * x + 0.5 * y)
    chord = 0.5 * f.eval(x) + 0.5 * f.eval(y)
    slack = tol * np.maximum(1.0, np.abs(chord))
    return bool(np.all(mid >= chord - slack))
