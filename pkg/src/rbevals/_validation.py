"""Input validation helpers shared by the estimators and functional API."""

import math

import numpy as np

PROB_TOL = 1e-12


class BadDistribution(ValueError):
    """A probability table is negative or does not sum to one."""


def check_probability(p, name="p", open_interval=True):
    p = float(p)
    if open_interval:
        if not 0.0 < p < 1.0:
            raise ValueError(f"{name} must lie in (0, 1); got {p}")
    elif not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1]; got {p}")
    return p


def check_positive(x, name="x"):
    x = float(x)
    if not (x > 0.0 and math.isfinite(x)):
        raise ValueError(f"{name} must be a positive finite real; got {x}")
    return x


def check_count(n, name="n", minimum=1):
    if isinstance(n, bool) or int(n) != n:
        raise ValueError(f"{name} must be an integer; got {n!r}")
    n = int(n)
    if n < minimum:
        raise ValueError(f"{name} must be >= {minimum}; got {n}")
    return n


def check_weights(weights, name="weights", tol=PROB_TOL):
    """Return ``weights`` as a float array after checking it is a distribution."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise BadDistribution(f"{name} must be one-dimensional")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise BadDistribution(f"{name} must be finite and nonnegative")
    total = math.fsum(w.tolist())
    if abs(total - 1.0) > tol:
        raise BadDistribution(f"{name} sums to {total!r}, not 1 (tol {tol})")
    return w


def check_nonnegative_values(values, name="values"):
    """Nonnegative extended reals; ``+inf`` allowed, NaN and negatives rejected."""
    v = np.asarray(values, dtype=float)
    if np.any(np.isnan(v)):
        raise ValueError(f"{name} contains NaN")
    if np.any(v < 0):
        raise ValueError(f"{name} must be nonnegative")
    return v
