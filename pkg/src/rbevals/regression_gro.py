"""Growth-rate optimal e-variable for fixed-design Gaussian regression.

The model is ``Y ~ N(X theta, sigma2 I)`` with known ``sigma2``. The null
fixes the first ``d`` coefficients at zero and leaves the rest free; the
alternative is a single point ``theta_star``. The least-squares estimate is
sufficient, and the optimal e-variable is a likelihood ratio of two Gaussian
laws of the estimate with a shared covariance ``sigma2 (X'X)^-1``: one
centred at ``theta_star`` and one at its KL projection onto the null.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_count, check_positive

RANK_RTOL = 1e-10


class SingularDesign(np.linalg.LinAlgError):
    pass


class SingularNuisanceBlock(np.linalg.LinAlgError):
    pass


def _rank_ok(M: np.ndarray) -> bool:
    if M.shape[1] == 0:
        return True
    s = linalg.svdvals(M)
    return bool(s[-1] > RANK_RTOL * s[0]) if s[0] > 0 else False


@dataclass(frozen=True)
class FixedDesign:
    """Design matrix with a cached QR factorization (``X = Q R``)."""

    X: np.ndarray
    sigma2: float
    d: int
    _q: np.ndarray = field(init=False, repr=False, compare=False)
    _r: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a matrix")
        n, k = X.shape
        if n < k:
            raise SingularDesign(f"need n >= k, got {n} x {k}")
        check_positive(self.sigma2, "sigma2")
        d = check_count(self.d, "d")
        if d > k:
            raise ValueError(f"d = {d} exceeds k = {k}")
        if not _rank_ok(X):
            raise SingularDesign("design matrix is not of full column rank")
        q, r = linalg.qr(X, mode="economic")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "_q", q)
        object.__setattr__(self, "_r", r)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def gram(self) -> np.ndarray:
        return self.X.T @ self.X

    def mahalanobis(self, v: np.ndarray) -> np.ndarray:
        """``v' X'X v / sigma2`` for each row of ``v``, computed as ``|R v|^2``."""
        rv = np.atleast_2d(v) @ self._r.T
        return np.sum(rv * rv, axis=1) / self.sigma2


@dataclass(frozen=True)
class RegressionHypotheses:
    theta_star: np.ndarray

    def __post_init__(self):
        t = np.array(self.theta_star, dtype=float).ravel()
        t.setflags(write=False)
        object.__setattr__(self, "theta_star", t)

    def check(self, design: FixedDesign, allow_degenerate: bool = False):
        if self.theta_star.shape != (design.k,):
            raise ValueError(f"theta_star must have length {design.k}")
        if not allow_degenerate and not np.any(self.theta_star[: design.d] != 0):
            raise ValueError("the tested block of theta_star must not be all zero")


def mle(design: FixedDesign, y) -> np.ndarray:
    """Least-squares estimate; rows of a 2-D ``y`` are separate responses."""
    y = np.asarray(y, dtype=float)
    Y = np.atleast_2d(y)
    if Y.shape[1] != design.n:
        raise ValueError(f"responses must have length {design.n}")
    theta = linalg.solve_triangular(design._r, design._q.T @ Y.T).T
    return theta[0] if y.ndim == 1 else theta


def kl_projection(design: FixedDesign, hyp: RegressionHypotheses, allow_degenerate=False) -> np.ndarray:
    """Null element closest to ``theta_star`` in the ``X'X / sigma2`` metric.

    The free block solves the least-squares problem ``X_b t ~ X theta_star``,
    which is the normal equation ``A_bb (t - theta_b*) = A_ba theta_a*``.
    """
    hyp.check(design, allow_degenerate)
    d = design.d
    theta_bar = np.zeros(design.k)
    if d == design.k:
        return theta_bar
    Xb = design.X[:, d:]
    if not _rank_ok(Xb):
        raise SingularNuisanceBlock("nuisance block of the design is singular")
    target = design.X @ hyp.theta_star
    sol, *_ = linalg.lstsq(Xb, target)
    theta_bar[d:] = sol
    return theta_bar


def log_gro_evariable_from_mle(
    design: FixedDesign, theta_star: np.ndarray, theta_bar: np.ndarray, theta_hat
) -> np.ndarray:
    """``log H`` as a difference of quadratic forms; normalizers cancel."""
    th = np.atleast_2d(theta_hat)
    out = 0.5 * design.mahalanobis(th - theta_bar) - 0.5 * design.mahalanobis(th - theta_star)
    return out if np.ndim(theta_hat) == 2 else float(out[0])


def gro_evariable(design: FixedDesign, hyp: RegressionHypotheses, y, log: bool = False):
    theta_bar = kl_projection(design, hyp)
    lh = log_gro_evariable_from_mle(design, hyp.theta_star, theta_bar, mle(design, y))
    return lh if log else np.exp(lh)


def gro_value(design: FixedDesign, hyp: RegressionHypotheses) -> float:
    """Expected log of the GRO e-variable under ``theta_star`` (a Gaussian KL)."""
    theta_bar = kl_projection(design, hyp, allow_degenerate=True)
    return float(0.5 * design.mahalanobis(hyp.theta_star - theta_bar)[0])


def quadratic_objective(design: FixedDesign, theta_star, theta) -> float:
    return float(design.mahalanobis(np.asarray(theta_star) - np.asarray(theta))[0])


def response_sampler(design: FixedDesign, theta, n_draws: int, seed: int) -> np.ndarray:
    """``n_draws`` response vectors from ``N(X theta, sigma2 I)``."""
    rng = np.random.default_rng(seed)
    mean = design.X @ np.asarray(theta, dtype=float)
    noise = rng.standard_normal((check_count(n_draws, "n_draws"), design.n))
    return mean + np.sqrt(design.sigma2) * noise


def load_problem(text: str) -> tuple[FixedDesign, RegressionHypotheses]:
    """Parse ``{"X": [[...]], "sigma2": s, "d": d, "theta_star": [...]}``."""
    doc = json.loads(text)
    design = FixedDesign(np.array(doc["X"], dtype=float), float(doc["sigma2"]), int(doc["d"]))
    hyp = RegressionHypotheses(np.array(doc["theta_star"], dtype=float))
    hyp.check(design)
    return design, hyp


class RegressionGRO(BaseEstimator):
    """GRO e-variable for ``theta_a = 0`` in ``Y ~ N(X theta, sigma2 I)``.

    ``fit`` takes the design matrix. ``transform`` maps each row of ``Y``
    (one response vector per row) to its e-value; ``score_samples`` returns
    log e-values. Rows of ``Y`` have one entry per design row, so this is
    not a feature transformer and ``fit_transform`` is not offered.

    Parameters
    ----------
    theta_star : array-like of shape (k,)
        Point alternative; its first ``d`` entries must not all vanish.
    sigma2 : float
        Known noise variance.
    d : int
        Number of leading coefficients fixed at zero under the null.
    """

    def __init__(self, theta_star=None, sigma2=1.0, d=1):
        self.theta_star = theta_star
        self.sigma2 = sigma2
        self.d = d

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=1)
        self.design_ = FixedDesign(X, self.sigma2, self.d)
        self.hypotheses_ = RegressionHypotheses(
            self.theta_star if self.theta_star is not None else np.ones(X.shape[1])
        )
        self.theta_bar_ = kl_projection(self.design_, self.hypotheses_)
        self.gro_value_ = gro_value(self.design_, self.hypotheses_)
        return self

    def score_samples(self, Y):
        check_is_fitted(self, "design_")
        Y = check_array(Y)
        theta_hat = mle(self.design_, Y)
        return log_gro_evariable_from_mle(
            self.design_, self.hypotheses_.theta_star, self.theta_bar_, theta_hat
        )

    def transform(self, Y):
        return np.exp(self.score_samples(Y))
