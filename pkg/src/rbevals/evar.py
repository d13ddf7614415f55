"""Monte Carlo evaluation of e-variables on parametric models.

Sampling is organized in fixed-size blocks. Block ``b`` of a run with seed
``s`` always draws from ``SeedSequence(s, spawn_key=(b,))``, and per-block
summaries are merged in block order, so a report does not depend on how
many workers computed it.
"""

from __future__ import annotations

import itertools
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from ._validation import check_count, check_positive, check_probability
from .extreal import INF, NEG_INF, format_ext, parse_ext
from .utility import ConcaveUtility, LogUtility

BLOCK_SIZE = 1 << 14
DISAGREEMENT_SE = 5.0
DOMINANT_SHARE = 0.05
MAX_EXACT_PERMUTATION = 8


class TooManyPermutations(ValueError):
    pass


def derive_seed(seed: int, label: str, shard: int = 0) -> int:
    """Stable child seed for a named consumer of a top-level seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(label.encode()), int(shard)])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(block),)))


def _block_sizes(n: int) -> list[int]:
    full, rest = divmod(n, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


# -- models -----------------------------------------------------------------


class ParametricModel:
    """A sampler for one distribution ``P_theta``.

    Subclasses implement ``draw(rng, size)``; outcomes are stacked along the
    first axis. ``log_density`` is optional.
    """

    family = "model"

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, seed: int) -> np.ndarray:
        n = check_count(n, "n")
        parts = [self.draw(block_rng(seed, b), m) for b, m in enumerate(_block_sizes(n))]
        return np.concatenate(parts, axis=0)

    log_density: Callable | None = None

    @property
    def params(self) -> dict:
        return {}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"


class NormalModel(ParametricModel):
    family = "normal"

    def __init__(self, loc: float = 0.0, scale: float = 1.0):
        self.loc = float(loc)
        self.scale = check_positive(scale, "scale")

    @property
    def params(self):
        return {"loc": self.loc, "scale": self.scale}

    def draw(self, rng, size):
        return self.loc + self.scale * rng.standard_normal(size)

    def log_density(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        return -0.5 * z**2 - math.log(self.scale) - 0.5 * math.log(2 * math.pi)


class CauchyModel(ParametricModel):
    family = "cauchy"

    def __init__(self, loc: float = 0.0, scale: float = 1.0):
        self.loc = float(loc)
        self.scale = check_positive(scale, "scale")

    @property
    def params(self):
        return {"loc": self.loc, "scale": self.scale}

    def draw(self, rng, size):
        return self.loc + self.scale * rng.standard_cauchy(size)

    def log_density(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        return -np.log1p(z**2) - math.log(math.pi * self.scale)


class BernoulliProductModel(ParametricModel):
    """``n_obs`` i.i.d. Bernoulli(p) bits per outcome."""

    family = "bernoulli"

    def __init__(self, p: float, n_obs: int):
        self.p = check_probability(p, "p", open_interval=False)
        self.n_obs = check_count(n_obs, "n_obs")

    @property
    def params(self):
        return {"p": self.p, "n_obs": self.n_obs}

    def draw(self, rng, size):
        return (rng.random((size, self.n_obs)) < self.p).astype(np.int8)

    def log_density(self, x):
        x = np.asarray(x)
        k = x.sum(axis=-1)
        with np.errstate(divide="ignore"):
            return k * np.log(self.p) + (self.n_obs - k) * np.log1p(-self.p)


class ParetoIIDModel(ParametricModel):
    """``n_obs`` i.i.d. Pareto(m, alpha) draws per outcome, by inverse CDF."""

    family = "pareto"

    def __init__(self, m: float, alpha: float, n_obs: int):
        self.m = check_positive(m, "m")
        self.alpha = check_positive(alpha, "alpha")
        self.n_obs = check_count(n_obs, "n_obs")

    @property
    def params(self):
        return {"m": self.m, "alpha": self.alpha, "n_obs": self.n_obs}

    def draw(self, rng, size):
        u = 1.0 - rng.random((size, self.n_obs))
        return self.m * u ** (-1.0 / self.alpha)

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            lp = math.log(self.alpha) + self.alpha * math.log(self.m) - (self.alpha + 1) * np.log(x)
        lp = np.where(x >= self.m, lp, NEG_INF)
        return lp.sum(axis=-1)


# -- e-variables --------------------------------------------------------------


@dataclass(frozen=True)
class EVariableFn:
    """A nonnegative statistic of one outcome, vectorized over the first axis.

    ``log_evaluate``, when given, is used wherever a ratio or a log utility
    is needed, which avoids overflow to ``inf`` for large values.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    label: str = "E"
    log_evaluate: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, x):
        return np.asarray(self.evaluate(x), dtype=float)

    def log(self, x):
        if self.log_evaluate is not None:
            return np.asarray(self.log_evaluate(x), dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(self(x))


def constant_evariable(c: float, label: str | None = None) -> EVariableFn:
    c = float(c)
    log_c = math.log(c) if c > 0 else NEG_INF
    return EVariableFn(
        lambda x: np.full(len(x), c),
        label or f"const({c:g})",
        lambda x: np.full(len(x), log_c),
    )


# -- streaming summaries ------------------------------------------------------


@dataclass
class _Moments:
    n: int = 0
    n_finite: int = 0
    mean: float = 0.0
    m2: float = 0.0
    plus_inf: int = 0
    minus_inf: int = 0
    lo: float = INF
    hi: float = NEG_INF

    @classmethod
    def of(cls, x: np.ndarray) -> "_Moments":
        x = np.asarray(x, dtype=float).ravel()
        if np.any(np.isnan(x)):
            raise ValueError("draw produced NaN; extended reals exclude it")
        fin = x[np.isfinite(x)]
        out = cls(
            n=len(x),
            n_finite=len(fin),
            plus_inf=int(np.sum(x == INF)),
            minus_inf=int(np.sum(x == NEG_INF)),
        )
        if len(fin):
            out.mean = float(np.sum(fin) / len(fin))
            with np.errstate(over="ignore"):
                out.m2 = float(np.sum((fin - out.mean) ** 2))
            out.lo, out.hi = float(fin.min()), float(fin.max())
        return out

    def merge(self, other: "_Moments") -> "_Moments":
        n_f = self.n_finite + other.n_finite
        if n_f == 0:
            mean, m2 = 0.0, 0.0
        elif other.n_finite == 0:
            mean, m2 = self.mean, self.m2
        elif self.n_finite == 0:
            mean, m2 = other.mean, other.m2
        else:
            delta = other.mean - self.mean
            mean = self.mean + delta * (other.n_finite / n_f)
            m2 = self.m2 + other.m2 + delta * delta * self.n_finite * other.n_finite / n_f
        return _Moments(
            n=self.n + other.n,
            n_finite=n_f,
            mean=mean,
            m2=m2,
            plus_inf=self.plus_inf + other.plus_inf,
            minus_inf=self.minus_inf + other.minus_inf,
            lo=min(self.lo, other.lo),
            hi=max(self.hi, other.hi),
        )

    @property
    def std_error(self) -> float:
        if self.n_finite < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.n_finite - 1)) / math.sqrt(self.n_finite)


@dataclass(frozen=True)
class MCReport:
    """Monte Carlo estimate of an extended-real expectation.

    ``mean`` is ``None`` exactly when ``undefined`` is set (draws hit both
    infinities). ``std_error`` is computed over the finite draws.
    ``nonconvergence`` is an advisory heavy-tail flag, never a proof.
    """

    mean: float | None
    std_error: float
    n: int
    minus_inf_count: int = 0
    plus_inf_count: int = 0
    undefined: bool = False
    nonconvergence: bool = False
    checkpoints: tuple = field(default=(), compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean"] = format_ext(self.mean)
        d["checkpoints"] = [[n, format_ext(m), se] for n, m, se in self.checkpoints]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MCReport":
        d = dict(d)
        d["mean"] = parse_ext(d["mean"])
        d["checkpoints"] = tuple(
            (int(n), parse_ext(m), float(se)) for n, m, se in d.get("checkpoints", [])
        )
        return cls(**d)


def _ext_mean(m: _Moments) -> tuple[float | None, bool]:
    if m.plus_inf and m.minus_inf:
        return None, True
    if m.plus_inf:
        return INF, False
    if m.minus_inf:
        return NEG_INF, False
    return m.mean, False


def _report(blocks: list[_Moments]) -> MCReport:
    total = _Moments()
    checkpoints = []
    next_cp = 1
    for i, b in enumerate(blocks, start=1):
        total = total.merge(b)
        if i == next_cp or i == len(blocks):
            mean, _ = _ext_mean(total)
            checkpoints.append((total.n, mean, total.std_error))
            next_cp *= 2
    mean, undefined = _ext_mean(total)
    flag = False
    finite_cps = [c for c in checkpoints if c[1] is not None and math.isfinite(c[1])]
    for (_, m_a, se_a), (_, m_b, _) in zip(finite_cps, finite_cps[1:]):
        if abs(m_b - m_a) > DISAGREEMENT_SE * se_a:
            flag = True
    if math.isinf(total.m2):
        flag = True
    elif total.n_finite >= 1000 and total.m2 > 0:
        spread = max((total.hi - total.mean) ** 2, (total.lo - total.mean) ** 2)
        if spread / total.m2 > DOMINANT_SHARE:
            flag = True
    return MCReport(
        mean=mean,
        std_error=total.std_error,
        n=total.n,
        minus_inf_count=total.minus_inf,
        plus_inf_count=total.plus_inf,
        undefined=undefined,
        nonconvergence=flag,
        checkpoints=tuple(checkpoints),
    )


def _run_blocks(model, n, seed, stat_fns, n_jobs=1):
    """Evaluate each ``stat_fn(draws)`` block by block; returns one report per fn."""
    n = check_count(n, "n", minimum=2)
    sizes = _block_sizes(n)

    def work(b):
        x = model.draw(block_rng(seed, b), sizes[b])
        return [_Moments.of(fn(x)) for fn in stat_fns]

    if n_jobs == 1:
        per_block = [work(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            per_block = list(pool.map(work, range(len(sizes))))
    return [_report([blk[j] for blk in per_block]) for j in range(len(stat_fns))]


def mc_mean(model: ParametricModel, E: EVariableFn, n: int, seed: int, n_jobs: int = 1) -> MCReport:
    return _run_blocks(model, n, seed, [E], n_jobs)[0]


def _utility_of(E: EVariableFn, f: ConcaveUtility, x):
    if E.log_evaluate is not None:
        return f.eval_log(E.log(x))
    return f.eval(E(x))


def mc_expected_utility(
    model: ParametricModel, E: EVariableFn, f: ConcaveUtility, n: int, seed: int, n_jobs: int = 1
) -> MCReport:
    return _run_blocks(model, n, seed, [lambda x: _utility_of(E, f, x)], n_jobs)[0]


def log_ratio(E: EVariableFn, G: EVariableFn, x) -> np.ndarray:
    """Per-draw ``log(E/G)`` under the ``0/0 = 0`` and ``inf/inf = 1`` conventions."""
    le, lg = E.log(x), G.log(x)
    out = np.empty_like(le)
    both_zero = (le == NEG_INF) & (lg == NEG_INF)
    both_inf = (le == INF) & (lg == INF)
    rest = ~(both_zero | both_inf)
    out[both_zero] = NEG_INF
    out[both_inf] = 0.0
    out[rest] = le[rest] - lg[rest]
    return out


def ratio_check(
    model: ParametricModel, E: EVariableFn, G: EVariableFn, n: int, seed: int, n_jobs: int = 1
) -> tuple[MCReport, MCReport]:
    """Paired reports for ``E/G`` and ``log(E/G)``."""

    def ratio(x):
        with np.errstate(over="ignore"):
            return np.exp(log_ratio(E, G, x))

    return tuple(
        _run_blocks(model, n, seed, [ratio, lambda x: log_ratio(E, G, x)], n_jobs)
    )


def utility_gap(f: ConcaveUtility, E: EVariableFn, G: EVariableFn, x) -> np.ndarray:
    """Per-draw ``f(G) - f(E)``, 0 where both sides are the same infinity."""
    fg = np.asarray(_utility_of(G, f, x), dtype=float)
    fe = np.asarray(_utility_of(E, f, x), dtype=float)
    same = fg == fe
    out = np.zeros_like(fg)
    out[~same] = fg[~same] - fe[~same]
    return out


def paired_utility_comparison(
    model: ParametricModel,
    E: EVariableFn,
    G: EVariableFn,
    f: ConcaveUtility,
    n: int,
    seed: int,
    n_jobs: int = 1,
) -> MCReport:
    """Mean and standard error of ``f(G) - f(E)`` over shared draws."""
    return _run_blocks(model, n, seed, [lambda x: utility_gap(f, E, G, x)], n_jobs)[0]


# -- permutations -----------------------------------------------------------


def permutation_rb(
    E: EVariableFn, x, mode: str = "exact", k: int | None = None, seed: int | None = None
) -> tuple[float, bool]:
    """Average of ``E`` over permutations of the tuple ``x``.

    ``exact`` enumerates all ``n!`` orderings (``n <= 8``). ``sampled`` averages
    over ``k`` orderings drawn uniformly with replacement; the result is
    flagged as inexact.
    """
    x = np.asarray(x)
    n = x.shape[0]
    if mode == "exact":
        if n > MAX_EXACT_PERMUTATION:
            raise TooManyPermutations(f"n = {n} > {MAX_EXACT_PERMUTATION} in exact mode")
        perms = np.array(list(itertools.permutations(range(n))), dtype=int)
        exact = True
    elif mode == "sampled":
        k = check_count(k, "k")
        rng = np.random.default_rng(seed)
        perms = np.array([rng.permutation(n) for _ in range(k)], dtype=int)
        exact = False
    else:
        raise ValueError(f"unknown mode {mode!r}")
    values = E(x[perms])
    if np.any(values == INF):
        return INF, exact
    return math.fsum(values.tolist()) / len(values), exact


def permutation_rb_evariable(E: EVariableFn, label: str | None = None) -> EVariableFn:
    """Exact permutation Rao-Blackwellization of ``E`` as a new e-variable."""

    def evaluate(xs):
        return np.array([permutation_rb(E, row)[0] for row in np.asarray(xs)])

    return EVariableFn(evaluate, label or f"perm_rb({E.label})")

