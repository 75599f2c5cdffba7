"""Joint-tail estimation for bivariate randomly weighted sums.

The object of study is the pair of sums (sum_i Theta_i X_i,
sum_j Delta_j Y_j) with bounded non-negative random weights that are
independent of the primaries. Under the dependence restrictions encoded
in ``BivariateSumSpec`` (same-index pairs coupled by a copula,
cross-index independence), the joint tail is asymptotically the sum of
the n*m product-pair tails: one big jump per line of business. The
estimators here give the Monte Carlo side, the term-by-term sum, and
the regular-variation closed form of that statement.
"""

from __future__ import annotations

import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .dependence import Copula, sai_constant
from .distributions import UNIFORM_CLAMP, TailLaw
from .engine import DEFAULT_CHUNK_SIZE, Estimate, RunPlan, run_mc
from .errors import ConfigurationError


class Weight(ABC):
    """A bounded, non-negative random weight with exact moments."""

    @property
    @abstractmethod
    def upper_bound(self) -> float:
        ...

    @abstractmethod
    def moment(self, order: float) -> float:
        """E[W^order], exact."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        ...

    def prob_zero(self) -> float:
        return 0.0


@dataclass(frozen=True)
class PointMass(Weight):
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise ConfigurationError("point mass must be a non-negative real")
        if self.value == 0:
            raise ConfigurationError("weight degenerate at zero is not allowed")

    @property
    def upper_bound(self) -> float:
        return self.value

    def moment(self, order: float) -> float:
        return float(self.value**order)

    def sample(self, rng, size):
        return np.full(size, self.value)


@dataclass(frozen=True)
class UniformWeight(Weight):
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 <= self.lo < self.hi and np.isfinite(self.hi)):
            raise ConfigurationError("uniform weight needs 0 <= lo < hi < inf")

    @property
    def upper_bound(self) -> float:
        return self.hi

    def moment(self, order: float) -> float:
        o = order + 1.0
        return float((self.hi**o - self.lo**o) / (o * (self.hi - self.lo)))

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)


@dataclass(frozen=True)
class BetaWeight(Weight):
    """scale * Beta(a, b)."""

    a: float
    b: float
    scale: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.scale <= 0:
            raise ConfigurationError("beta weight needs a, b, scale > 0")

    @property
    def upper_bound(self) -> float:
        return self.scale

    def moment(self, order: float) -> float:
        log_m = (
            gammaln(self.a + order)
            + gammaln(self.a + self.b)
            - gammaln(self.a)
            - gammaln(self.a + self.b + order)
        )
        return float(self.scale**order * np.exp(log_m))

    def sample(self, rng, size):
        return self.scale * rng.beta(self.a, self.b, size)


@dataclass(frozen=True)
class BivariateSumSpec:
    """The interdependent system behind the two randomly weighted sums.

    Same-index primary pairs (X_i, Y_i) are coupled through
    ``pair_copulas[i]``; all cross-index primaries are independent by
    construction, and weights are independent of the primaries. An
    optional ``weight_coupling(rng, size) -> (theta, delta)`` sampler
    makes the weights arbitrarily dependent among themselves.
    """

    x_laws: tuple[TailLaw, ...]
    y_laws: tuple[TailLaw, ...]
    pair_copulas: tuple[Copula, ...]
    theta_weights: tuple[Weight, ...]
    delta_weights: tuple[Weight, ...]
    weight_coupling: Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "x_laws", tuple(self.x_laws))
        object.__setattr__(self, "y_laws", tuple(self.y_laws))
        object.__setattr__(self, "pair_copulas", tuple(self.pair_copulas))
        object.__setattr__(self, "theta_weights", tuple(self.theta_weights))
        object.__setattr__(self, "delta_weights", tuple(self.delta_weights))
        if not self.x_laws or not self.y_laws:
            raise ConfigurationError("need at least one law per sequence")
        if len(self.pair_copulas) != min(self.n, self.m):
            raise ConfigurationError("need one pair copula per same-index pair")
        if len(self.theta_weights) != self.n or len(self.delta_weights) != self.m:
            raise ConfigurationError("weight counts must match law counts")
        for w in (*self.theta_weights, *self.delta_weights):
            if w.prob_zero() > 0.9:
                warnings.warn("weight has mass > 0.9 at zero; estimates will be dominated by it")

    @property
    def n(self) -> int:
        return len(self.x_laws)

    @property
    def m(self) -> int:
        return len(self.y_laws)

    def sample_weights(self, rng: np.random.Generator, size: int):
        if self.weight_coupling is not None:
            theta, delta = self.weight_coupling(rng, size)
            theta = np.asarray(theta, dtype=float).reshape(size, self.n)
            delta = np.asarray(delta, dtype=float).reshape(size, self.m)
            return theta, delta
        theta = np.column_stack([w.sample(rng, size) for w in self.theta_weights])
        delta = np.column_stack([w.sample(rng, size) for w in self.delta_weights])
        return theta, delta

    def sample_components(self, rng: np.random.Generator, size: int):
        """Draw (X, Y, Theta, Delta) blocks of shapes (size, n), (size, m)."""
        k = min(self.n, self.m)
        x = np.empty((size, self.n))
        y = np.empty((size, self.m))
        for i in range(k):
            u = np.clip(rng.random(size), UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
            w = np.clip(rng.random(size), UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
            v = np.clip(self.pair_copulas[i].sample_v_given_u(u, w), UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
            x[:, i] = self.x_laws[i].quantile(u)
            y[:, i] = self.y_laws[i].quantile(v)
        for i in range(k, self.n):
            x[:, i] = self.x_laws[i].sample(rng, size)
        for j in range(k, self.m):
            y[:, j] = self.y_laws[j].sample(rng, size)
        theta, delta = self.sample_weights(rng, size)
        return x, y, theta, delta


@dataclass(frozen=True)
class JointTailEstimate:
    """Monte Carlo estimate of a joint tail probability."""

    value: float
    ci_halfwidth: float
    n_samples: int
    threshold_pair: tuple[float, float]
    hit_count: int | None = None
    exact: bool = False

    @property
    def ci_valid(self) -> bool:
        """Normal-approximation CI is trusted from 100 hits up."""
        return self.exact or (self.hit_count is not None and self.hit_count >= 100)

    @property
    def rule_of_three(self) -> bool:
        return self.hit_count == 0


def _wrap_estimate(est: Estimate, x: float, y: float, exact: bool = False) -> JointTailEstimate:
    return JointTailEstimate(
        value=est.mean,
        ci_halfwidth=est.ci95_halfwidth,
        n_samples=est.n,
        threshold_pair=(float(x), float(y)),
        hit_count=est.hit_count,
        exact=exact,
    )


def _check_thresholds(x, y):
    if not (x > 0 and y > 0):
        raise ValueError("thresholds must be positive")


def mc_joint_tail(
    spec: BivariateSumSpec,
    x: float,
    y: float,
    n_samples: int,
    seed: int,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
    positive_part: bool = False,
) -> JointTailEstimate:
    """P(sum Theta_i X_i > x, sum Delta_j Y_j > y) by plain Monte Carlo.

    With ``positive_part=True`` the sums run over the positive parts of
    the primaries, the upper envelope in the max/sum sandwich.
    """
    _check_thresholds(x, y)

    def estimand(rng, size):
        xs, ys, th, de = spec.sample_components(rng, size)
        if positive_part:
            xs = np.maximum(xs, 0.0)
            ys = np.maximum(ys, 0.0)
        sx = (th * xs).sum(axis=1)
        sy = (de * ys).sum(axis=1)
        return (sx > x) & (sy > y)

    plan = RunPlan(master_seed=seed, n_samples=n_samples, chunk_size=chunk_size, n_workers=workers)
    return _wrap_estimate(run_mc(plan, estimand), x, y)


def max_joint_tail(
    spec: BivariateSumSpec,
    x: float,
    y: float,
    n_samples: int,
    seed: int,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> JointTailEstimate:
    """Joint tail of the running maxima of the two partial-sum paths."""
    _check_thresholds(x, y)

    def estimand(rng, size):
        xs, ys, th, de = spec.sample_components(rng, size)
        mx = np.cumsum(th * xs, axis=1).max(axis=1)
        my = np.cumsum(de * ys, axis=1).max(axis=1)
        return (mx > x) & (my > y)

    plan = RunPlan(master_seed=seed, n_samples=n_samples, chunk_size=chunk_size, n_workers=workers)
    return _wrap_estimate(run_mc(plan, estimand), x, y)


def _rhs_integrand(spec: BivariateSumSpec, x: float, y: float, theta: np.ndarray, delta: np.ndarray):
    """sum_ij P(Theta_i X_i > x, Delta_j Y_j > y | weights), closed form."""
    k = min(spec.n, spec.m)
    with np.errstate(divide="ignore"):
        fx = np.column_stack(
            [np.asarray(law.tail(x / theta[:, i])) for i, law in enumerate(spec.x_laws)]
        )
        gy = np.column_stack(
            [np.asarray(law.tail(y / delta[:, j])) for j, law in enumerate(spec.y_laws)]
        )
    total = fx.sum(axis=1) * gy.sum(axis=1)
    for i in range(k):
        total -= fx[:, i] * gy[:, i]
        total += np.asarray(spec.pair_copulas[i].survival(fx[:, i], gy[:, i]))
    return total


def single_jump_rhs(
    spec: BivariateSumSpec,
    x: float,
    y: float,
    n_samples: int,
    seed: int,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> JointTailEstimate:
    """The n*m-term sum of product-pair joint tails.

    Conditional on the weights each term is a closed-form survival
    value, so only the weight laws are sampled. When every weight is a
    point mass (and no coupling is present) the sum is computed exactly
    with no sampling at all.
    """
    _check_thresholds(x, y)

    all_point = spec.weight_coupling is None and all(
        isinstance(w, PointMass) for w in (*spec.theta_weights, *spec.delta_weights)
    )
    if all_point:
        theta = np.array([[w.value for w in spec.theta_weights]])
        delta = np.array([[w.value for w in spec.delta_weights]])
        value = float(_rhs_integrand(spec, x, y, theta, delta)[0])
        return JointTailEstimate(
            value=value,
            ci_halfwidth=0.0,
            n_samples=0,
            threshold_pair=(float(x), float(y)),
            hit_count=None,
            exact=True,
        )

    def estimand(rng, size):
        theta, delta = spec.sample_weights(rng, size)
        return _rhs_integrand(spec, x, y, theta, delta)

    plan = RunPlan(master_seed=seed, n_samples=n_samples, chunk_size=chunk_size, n_workers=workers)
    return _wrap_estimate(run_mc(plan, estimand), x, y)


def _pair_sai_constant(spec: BivariateSumSpec, i: int) -> float:
    cop = spec.pair_copulas[i]
    if cop.sai_constant is not None:
        return float(cop.sai_constant)
    return sai_constant(cop)


def rv_closed_form_detail(
    spec: BivariateSumSpec,
    x: float,
    y: float,
    *,
    moment_samples: int = 10**7,
    moment_seed: int = 0,
):
    """Closed-form single-big-jump value plus the weight-moment table.

    Returns (value, rows) with one row per (i, j) term:
    (i, j, moment, moment_ci, sai_constant_or_1). Moments are exact
    products of marginal moments when the weights are independent;
    under a joint coupling they are Monte Carlo averages with a CI.
    """
    _check_thresholds(x, y)
    alphas = [law.rv_index for law in spec.x_laws]
    alphas_y = [law.rv_index for law in spec.y_laws]
    if any(a is None for a in alphas) or any(a is None for a in alphas_y):
        raise ConfigurationError("rv_closed_form needs a regular-variation index on every law")

    if spec.weight_coupling is None:
        theta_m = [w.moment(a) for w, a in zip(spec.theta_weights, alphas)]
        delta_m = [w.moment(a) for w, a in zip(spec.delta_weights, alphas_y)]

        def cross_moment(i, j):
            return theta_m[i] * delta_m[j], 0.0

    else:
        from .engine import derive_stream

        rng = derive_stream(moment_seed, 0)
        theta, delta = spec.sample_weights(rng, moment_samples)
        powered_t = np.power(theta, np.asarray(alphas)[None, :])
        powered_d = np.power(delta, np.asarray(alphas_y)[None, :])

        def cross_moment(i, j):
            prod = powered_t[:, i] * powered_d[:, j]
            mean = float(prod.mean())
            ci = 1.96 * float(prod.std(ddof=1)) / np.sqrt(moment_samples)
            return mean, ci

    fx = [float(law.tail(x)) for law in spec.x_laws]
    gy = [float(law.tail(y)) for law in spec.y_laws]
    k = min(spec.n, spec.m)

    value = 0.0
    rows = []
    for i in range(spec.n):
        for j in range(spec.m):
            moment, ci = cross_moment(i, j)
            c = _pair_sai_constant(spec, i) if (i == j and i < k) else 1.0
            term = c * moment * fx[i] * gy[j]
            value += term
            rows.append((i, j, moment, ci, c))
    return value, rows


def rv_closed_form(spec: BivariateSumSpec, x: float, y: float, **kwargs) -> float:
    """Closed-form asymptotic joint tail for regularly varying laws.

    sum over cross-index pairs of E[Theta_i^a_i Delta_j^a'_j] Fbar_i(x)
    Gbar_j(y), plus the same-index terms carrying each pair's joint-tail
    constant.
    """
    value, _ = rv_closed_form_detail(spec, x, y, **kwargs)
    return value


@dataclass(frozen=True)
class DiscreteRuinResult:
    estimate: JointTailEstimate
    asymptotic: float | None


def discrete_ruin_psi(
    spec: BivariateSumSpec,
    x: float,
    y: float,
    n_periods: int,
    n_samples: int,
    seed: int,
    **kwargs,
) -> DiscreteRuinResult:
    """Probability that both discrete-time surplus lines ever go negative.

    The surplus of line one after period i is x - sum_{k<=i} Theta_k X_k
    (and symmetrically for line two), so ruin of both lines within
    ``n_periods`` is exactly the joint tail of the running maxima of the
    partial sums. When every law carries a regular-variation index the
    single-big-jump closed form is returned alongside.
    """
    if n_periods != spec.n or n_periods != spec.m:
        raise ConfigurationError("discrete ruin needs n_periods == n == m")
    estimate = max_joint_tail(spec, x, y, n_samples, seed, **kwargs)
    try:
        asymptotic = rv_closed_form(spec, x, y)
    except ConfigurationError:
        asymptotic = None
    return DiscreteRuinResult(estimate=estimate, asymptotic=asymptotic)


def breiman_product_tail(weight: Weight, law: TailLaw, x: float) -> float:
    """Product-tail value E[W^alpha] * P(X > x) for regularly varying X.

    Exact for a pure Pareto law once x is past xmin times the weight's
    upper bound; asymptotic otherwise.
    """
    if law.rv_index is None:
        raise ConfigurationError("breiman_product_tail needs a regular-variation index")
    return float(weight.moment(law.rv_index) * law.tail(x))
