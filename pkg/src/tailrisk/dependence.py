"""Bivariate copulas and tail-dependence diagnostics.

The four supported families (independence, Farlie-Gumbel-Morgenstern,
Ali-Mikhail-Haq, Frank) all admit a joint-tail constant
C = lim Chat(u, v) / (u v) as u, v -> 0, which is what couples a claim
pair's joint tail to the product of its marginal tails. Survival
copulas are evaluated through family-specific algebraic forms rather
than u + v - 1 + C(1-u, 1-v), which cancels catastrophically near the
corner.

Pair sampling uses conditional inversion: closed form for FGM and AMH,
bisection for Frank.
"""

from __future__ import annotations

import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .distributions import UNIFORM_CLAMP, TailLaw
from .engine import RunPlan, Z95, run_counts
from .errors import ConfigurationError, EstimationError

DEFAULT_SAI_GRID = tuple(10.0**-k for k in range(2, 8))


class Copula(ABC):
    """Bivariate copula with survival evaluation and conditional inversion."""

    #: joint-tail constant, if known or previously estimated
    sai_constant: float | None

    @abstractmethod
    def cdf(self, u, v):
        """C(u, v)."""

    @abstractmethod
    def survival(self, u, v):
        """Chat(u, v) = P(U > 1-u, V > 1-v), numerically stable form."""

    @abstractmethod
    def conditional(self, u, v):
        """Conditional CDF of V given U = u, i.e. dC/du."""

    @abstractmethod
    def sample_v_given_u(self, u, w):
        """Invert the conditional CDF at probability w."""

    def with_sai_constant(self, value: float | None = None, u_grid=DEFAULT_SAI_GRID):
        """Copy of this copula carrying a joint-tail constant.

        When ``value`` is omitted the constant is estimated numerically
        from the survival-ratio limit.
        """
        if value is None:
            value = sai_constant(self, u_grid)
        return replace(self, sai_constant=float(value))


@dataclass(frozen=True)
class IndependenceCopula(Copula):
    sai_constant: float | None = None

    def cdf(self, u, v):
        return np.asarray(u, dtype=float) * np.asarray(v, dtype=float)

    def survival(self, u, v):
        return np.asarray(u, dtype=float) * np.asarray(v, dtype=float)

    def conditional(self, u, v):
        return np.broadcast_to(np.asarray(v, dtype=float), np.broadcast_shapes(np.shape(u), np.shape(v))).copy()

    def sample_v_given_u(self, u, w):
        return np.asarray(w, dtype=float)


@dataclass(frozen=True)
class FGMCopula(Copula):
    """C(u, v) = u v (1 + theta (1-u)(1-v)), theta in [-1, 1]."""

    theta: float = 0.0
    sai_constant: float | None = None

    def __post_init__(self):
        if not -1.0 <= self.theta <= 1.0:
            raise ConfigurationError("FGM theta must lie in [-1, 1]")

    def cdf(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return u * v * (1.0 + self.theta * (1.0 - u) * (1.0 - v))

    def survival(self, u, v):
        # The FGM survival copula is FGM with the same parameter.
        return self.cdf(u, v)

    def conditional(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return v * (1.0 + self.theta * (1.0 - 2.0 * u) * (1.0 - v))

    def sample_v_given_u(self, u, w):
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        a = self.theta * (1.0 - 2.0 * u)
        b = 1.0 + a
        # Root of a v^2 - b v + w = 0 inside [0, 1], rationalized so the
        # a -> 0 limit reduces to v = w without cancellation.
        disc = np.maximum(b * b - 4.0 * a * w, 0.0)
        v = 2.0 * w / (b + np.sqrt(disc))
        return np.clip(v, 0.0, 1.0)


@dataclass(frozen=True)
class AMHCopula(Copula):
    """C(u, v) = u v / (1 - theta (1-u)(1-v)), theta in [-1, 1)."""

    theta: float = 0.0
    sai_constant: float | None = None

    def __post_init__(self):
        if not -1.0 <= self.theta < 1.0:
            raise ConfigurationError("AMH theta must lie in [-1, 1)")

    def cdf(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return u * v / (1.0 - self.theta * (1.0 - u) * (1.0 - v))

    def survival(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return u * v * (1.0 + self.theta * (1.0 - u - v)) / (1.0 - self.theta * u * v)

    def conditional(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        g = 1.0 - self.theta * (1.0 - u) * (1.0 - v)
        return v * (1.0 - self.theta * (1.0 - v)) / (g * g)

    def sample_v_given_u(self, u, w):
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        if abs(self.theta) < 1e-12:
            return w.copy() if w.ndim else float(w)
        c = self.theta * (1.0 - u)
        # Conditional CDF = w reduces to the quadratic
        # (theta - w c^2) v^2 + ((1-theta) - 2 w c (1-c)) v - w (1-c)^2 = 0.
        qa = self.theta - w * c * c
        qb = (1.0 - self.theta) - 2.0 * w * c * (1.0 - c)
        qc = -w * (1.0 - c) ** 2
        disc = np.sqrt(np.maximum(qb * qb - 4.0 * qa * qc, 0.0))
        q = -0.5 * (qb + np.sign(qb) * disc)
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = np.where(qa != 0.0, q / np.where(qa != 0.0, qa, 1.0), np.inf)
            r2 = np.where(q != 0.0, qc / np.where(q != 0.0, q, 1.0), np.inf)
        # Pick the root that actually solves the conditional equation.
        cand1 = np.clip(r1, 0.0, 1.0)
        cand2 = np.clip(r2, 0.0, 1.0)
        err1 = np.abs(self.conditional(u, cand1) - w)
        err2 = np.abs(self.conditional(u, cand2) - w)
        return np.where(err1 <= err2, cand1, cand2)


@dataclass(frozen=True)
class FrankCopula(Copula):
    """C(u, v) = -log(1 + (e^{-theta u}-1)(e^{-theta v}-1)/(e^{-theta}-1)) / theta."""

    theta: float = 1.0
    sai_constant: float | None = None
    _bisect_tol: float = 1e-12

    def __post_init__(self):
        if self.theta == 0.0 or not np.isfinite(self.theta):
            raise ConfigurationError("Frank theta must be a nonzero finite real")

    def cdf(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        th = self.theta
        d = np.expm1(-th)
        return -np.log1p(np.expm1(-th * u) * np.expm1(-th * v) / d) / th

    def survival(self, u, v):
        # Frank is radially symmetric, so its survival copula is itself.
        return self.cdf(u, v)

    def conditional(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        th = self.theta
        num = np.exp(-th * u) * np.expm1(-th * v)
        den = np.expm1(-th) + np.expm1(-th * u) * np.expm1(-th * v)
        return num / den

    def sample_v_given_u(self, u, w):
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        shape = np.broadcast_shapes(u.shape, w.shape)
        u = np.broadcast_to(u, shape)
        w = np.broadcast_to(w, shape)
        lo = np.zeros(shape)
        hi = np.ones(shape)
        # Bisection on the monotone conditional CDF; 50 halvings reach
        # well below the 1e-12 tolerance on [0, 1].
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            below = self.conditional(u, mid) < w
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= self._bisect_tol):
                break
        return 0.5 * (lo + hi)


def survival_copula(cop: Copula, u, v):
    """P(U > 1-u, V > 1-v) for the copula's uniform pair."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u < 0) | (u > 1)) or np.any((v < 0) | (v > 1)):
        raise ValueError("survival copula arguments must lie in [0, 1]")
    return cop.survival(u, v)


def sai_constant(cop: Copula, u_grid=DEFAULT_SAI_GRID) -> float:
    """Joint-tail constant lim Chat(u, u) / u^2 by extrapolation.

    The diagonal ratio behaves like C + a u + O(u^2) for the supported
    families, so a linear Richardson step on the last two grid points
    removes the leading error. A diverging tail of successive
    differences raises an estimation error carrying the partial table.
    """
    u = np.asarray(sorted(u_grid, reverse=True), dtype=float)
    if u.size < 4:
        raise ConfigurationError("sai constant grid needs at least 4 points")
    if np.any(u <= 0) or np.any(u >= 1):
        raise ConfigurationError("sai constant grid must lie in (0, 1)")
    ratios = np.asarray(cop.survival(u, u)) / (u * u)
    diffs = np.abs(np.diff(ratios))
    # Convergence sanity: once the ratios settle, differences must not
    # blow back up above both the noise floor and the earlier trend.
    if diffs[-1] > 10.0 * max(diffs[0], 1e-9) and diffs[-1] > 1e-6:
        raise EstimationError(
            "sai constant sequence diverges along the grid",
            partial=list(zip(u.tolist(), ratios.tolist())),
        )
    u1, u2 = u[-2], u[-1]
    r1, r2 = ratios[-2], ratios[-1]
    return float((r2 * u1 - r1 * u2) / (u1 - u2))


def sample_pair(
    cop: Copula,
    law_x: TailLaw,
    law_y: TailLaw,
    rng: np.random.Generator,
    size: int | None = None,
):
    """Draw (X, Y) with the given marginals and copula.

    U drives X; V is drawn from the conditional copula given U and
    drives Y. Uniforms are clamped away from {0, 1}.
    """
    u = np.clip(rng.random(size), UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
    w = np.clip(rng.random(size), UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
    v = np.clip(cop.sample_v_given_u(u, w), UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
    return law_x.quantile(u), law_y.quantile(v)


@dataclass(frozen=True)
class SystemSampler:
    """Joint sampler over two primary sequences with known marginals.

    ``sampler(rng, size)`` returns (X, Y) arrays of shapes (size, n) and
    (size, m). Used to feed the GTAI diagnostic with couplings beyond
    what a weighted-sum spec can represent (e.g. comonotone components).
    """

    sampler: Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]
    x_laws: tuple[TailLaw, ...]
    y_laws: tuple[TailLaw, ...]


@dataclass(frozen=True)
class GtaiCell:
    """One conditional-probability trajectory of the diagnostic.

    ``side`` is "x" when the extra extreme variable is an X component
    (conditioning on X_k, Y_j) and "y" symmetrically. Rows are
    (level, extra_threshold, cond_threshold_1, cond_threshold_2,
    estimate, ci_halfwidth, cond_hits, conclusive).
    """

    side: str
    extra: int
    cond_primary: int
    cond_other: int
    rows: tuple[tuple[float, float, float, float, float, float, int, bool], ...]

    def final_conclusive(self):
        for row in reversed(self.rows):
            if row[7]:
                return row
        return None


@dataclass(frozen=True)
class GtaiReport:
    cells: tuple[GtaiCell, ...]
    max_conditional: float
    tolerance: float
    passed: bool
    n_samples: int


def _pair_survival_prob(system, k: int, j: int, xk: float, yj: float) -> float:
    """Exact P(X_k > xk, Y_j > yj) for a weighted-sum system's primaries."""
    fk = float(system.x_laws[k].tail(xk))
    gj = float(system.y_laws[j].tail(yj))
    if k == j and k < len(system.pair_copulas):
        return float(system.pair_copulas[k].survival(fk, gj))
    return fk * gj


def gtai_diagnostic(
    system,
    levels: Sequence[float],
    n_samples: int,
    seed: int,
    tolerance: float = 0.02,
    weighted: bool = False,
    min_hits: int = 30,
    min_expected_hits: int = 200,
    chunk_size: int | None = None,
    workers: int = 1,
) -> GtaiReport:
    """Empirical check of generalized tail asymptotic independence.

    For every triple (one candidate extreme variable, two conditioning
    variables, one from each sequence) and every threshold level, the
    conditional probability of the extra extreme given the two
    conditioning exceedances is estimated with a binomial CI. The
    report passes when every conclusive trajectory is non-increasing
    within CI slack and its deepest conclusive point falls below the
    tolerance; starved cells (under ``min_hits`` conditioning hits) are
    marked inconclusive instead of failing.

    ``levels`` are marginal tail levels, decreasing (deeper thresholds
    later); thresholds are the corresponding marginal quantiles of the
    unweighted laws. With ``weighted=True`` the diagnostic runs on the
    products of primaries with their random weights (same thresholds),
    which is how the product-invariance property is exercised.

    ``system`` is a BivariateSumSpec or a SystemSampler.
    """
    levels = [float(l) for l in levels]
    if len(levels) < 2 or any(not 0 < l < 1 for l in levels):
        raise ConfigurationError("levels must be at least two tail levels in (0, 1)")
    if any(b >= a for a, b in zip(levels, levels[1:])):
        raise ConfigurationError("levels must be strictly decreasing (thresholds increasing)")

    from .weighted_sums import BivariateSumSpec  # local import to avoid a cycle

    if isinstance(system, SystemSampler):
        if weighted:
            raise ConfigurationError("weighted mode requires a weighted-sum system")
        x_laws, y_laws = system.x_laws, system.y_laws

        def draw(rng, size):
            return system.sampler(rng, size)

    elif isinstance(system, BivariateSumSpec):
        x_laws, y_laws = system.x_laws, system.y_laws

        def draw(rng, size):
            x, y, th, de = system.sample_components(rng, size)
            if weighted:
                return x * th, y * de
            return x, y

    else:
        raise ConfigurationError("system must be a BivariateSumSpec or SystemSampler")

    n = len(x_laws)
    m = len(y_laws)
    x_thresholds = np.array([[law.quantile(1.0 - l) for l in levels] for law in x_laws])
    y_thresholds = np.array([[law.quantile(1.0 - l) for l in levels] for law in y_laws])

    # Starvation pre-check on the shallowest level, exact for
    # weighted-sum systems (survival copula closed form).
    if isinstance(system, BivariateSumSpec):
        worst = min(
            _pair_survival_prob(system, k, j, x_thresholds[k, 0], y_thresholds[j, 0])
            for k in range(n)
            for j in range(m)
        )
        if n_samples * worst < min_expected_hits:
            raise ConfigurationError(
                f"expected conditioning hits {n_samples * worst:.1f} at the shallowest "
                f"level fall below {min_expected_hits}; raise n_samples"
            )

    cells_index = [("x", i, k, j) for i in range(n) for k in range(n) if k != i for j in range(m)]
    cells_index += [("y", j, k, i) for j in range(m) for k in range(m) if k != j for i in range(n)]
    n_cells = len(cells_index)
    n_levels = len(levels)

    def counter(rng, size):
        x, y = draw(rng, size)
        counts = np.zeros((n_cells, n_levels, 2), dtype=np.int64)
        x_exceed = np.stack([x[:, idx, None] > x_thresholds[idx][None, :] for idx in range(n)], axis=1)
        y_exceed = np.stack([y[:, idx, None] > y_thresholds[idx][None, :] for idx in range(m)], axis=1)
        x_abs_exceed = np.stack(
            [np.abs(x[:, idx, None]) > x_thresholds[idx][None, :] for idx in range(n)], axis=1
        )
        y_abs_exceed = np.stack(
            [np.abs(y[:, idx, None]) > y_thresholds[idx][None, :] for idx in range(m)], axis=1
        )
        for c, (side, extra, k, other) in enumerate(cells_index):
            if side == "x":
                cond = x_exceed[:, k, :] & y_exceed[:, other, :]
                joint = cond & x_abs_exceed[:, extra, :]
            else:
                cond = y_exceed[:, k, :] & x_exceed[:, other, :]
                joint = cond & y_abs_exceed[:, extra, :]
            counts[c, :, 0] = cond.sum(axis=0)
            counts[c, :, 1] = joint.sum(axis=0)
        return counts

    plan = RunPlan(
        master_seed=seed,
        n_samples=n_samples,
        chunk_size=chunk_size or RunPlan.__dataclass_fields__["chunk_size"].default,
        n_workers=workers,
    )
    counts = run_counts(plan, counter)

    cells = []
    finals = []
    all_pass = True
    for c, (side, extra, k, other) in enumerate(cells_index):
        rows = []
        for li, level in enumerate(levels):
            cond_hits = int(counts[c, li, 0])
            joint_hits = int(counts[c, li, 1])
            conclusive = cond_hits >= min_hits
            if cond_hits > 0:
                est = joint_hits / cond_hits
                ci = Z95 * np.sqrt(max(est * (1.0 - est), 0.0) / cond_hits)
            else:
                est, ci = 0.0, 1.0
            if side == "x":
                thr_extra = float(x_thresholds[extra, li])
                thr1, thr2 = float(x_thresholds[k, li]), float(y_thresholds[other, li])
            else:
                thr_extra = float(y_thresholds[extra, li])
                thr1, thr2 = float(y_thresholds[k, li]), float(x_thresholds[other, li])
            rows.append((level, thr_extra, thr1, thr2, est, float(ci), cond_hits, conclusive))
        cell = GtaiCell(side=side, extra=extra, cond_primary=k, cond_other=other, rows=tuple(rows))
        cells.append(cell)

        conclusive_rows = [r for r in rows if r[7]]
        if not conclusive_rows:
            continue
        final = conclusive_rows[-1]
        finals.append(final[4])
        decreasing = all(
            b[4] <= a[4] + (a[5] + b[5])
            for a, b in zip(conclusive_rows, conclusive_rows[1:])
        )
        if not decreasing or final[4] >= tolerance:
            all_pass = False

    max_conditional = max(finals) if finals else float("nan")
    return GtaiReport(
        cells=tuple(cells),
        max_conditional=float(max_conditional),
        tolerance=tolerance,
        passed=bool(all_pass and finals),
        n_samples=n_samples,
    )


@dataclass(frozen=True)
class WuodReport:
    """Orthant-ratio table for the widely-upper-orthant bound check.

    Rows are (subset, level, joint_hits, ratio, bound, passed).
    """

    rows: tuple[tuple[tuple[int, ...], float, int, float, float, bool], ...]
    passed: bool


def wuod_bound_check(samples: np.ndarray, g_u, levels=(0.1, 0.02), max_order: int = 4) -> WuodReport:
    """Check P(all Z_i > z_i) <= g_u(n) * prod P(Z_i > z_i) on a grid.

    ``samples`` is an (N, d) array of joint draws; thresholds are the
    empirical marginal quantiles at each tail level. ``g_u`` maps the
    subset size to its allowed factor (callable, sequence indexed from
    1, or dict). A cell passes when the lower CI bound of the empirical
    ratio does not exceed the allowed factor.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ConfigurationError("samples must be an (N, d) array")
    n_obs, dim = samples.shape

    def bound(order: int) -> float:
        if callable(g_u):
            return float(g_u(order))
        if isinstance(g_u, dict):
            return float(g_u[order])
        return float(g_u[order - 1])

    from itertools import combinations

    rows = []
    all_pass = True
    for level in levels:
        thresholds = np.quantile(samples, 1.0 - level, axis=0)
        exceed = samples > thresholds[None, :]
        marginal = exceed.mean(axis=0)
        for order in range(1, min(max_order, dim) + 1):
            for subset in combinations(range(dim), order):
                joint = np.all(exceed[:, subset], axis=1)
                joint_hits = int(np.count_nonzero(joint))
                product = float(np.prod(marginal[list(subset)]))
                ratio = (joint_hits / n_obs) / product if product > 0 else np.inf
                rel_ci = Z95 / np.sqrt(joint_hits) if joint_hits > 0 else 0.0
                ok = ratio * max(1.0 - rel_ci, 0.0) <= bound(order)
                rows.append((subset, float(level), joint_hits, float(ratio), bound(order), bool(ok)))
                all_pass = all_pass and ok
    return WuodReport(rows=tuple(rows), passed=bool(all_pass))
