"""Reproducible parallel Monte Carlo substrate.

Streams are derived from a 64-bit master seed and a chunk index through
counter-based Philox keys, so a run is fully determined by
``(master_seed, chunk_size, n_samples)`` and the worker count never
changes the result. Chunk estimates are merged with a symmetric pooled
mean/variance formula, folded in chunk order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, EstimationError

DEFAULT_CHUNK_SIZE = 1 << 16

Z95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class RunPlan:
    """Execution plan for one Monte Carlo estimate.

    ``chunk_size`` is part of the reproducibility contract: results are
    bit-identical for a fixed (master_seed, chunk_size) regardless of
    ``n_workers``.
    """

    master_seed: int
    n_samples: int
    chunk_size: int = DEFAULT_CHUNK_SIZE
    n_workers: int = 1

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ConfigurationError("master_seed must fit in 64 bits")
        if self.n_samples <= 0:
            raise ConfigurationError("n_samples must be positive")
        if self.chunk_size <= 0:
            raise ConfigurationError("chunk_size must be positive")
        if self.n_workers < 1:
            raise ConfigurationError("n_workers must be >= 1")

    def chunks(self):
        """Yield (chunk_index, size) pairs covering n_samples."""
        n_full, rest = divmod(self.n_samples, self.chunk_size)
        for i in range(n_full):
            yield i, self.chunk_size
        if rest:
            yield n_full, rest


@dataclass(frozen=True)
class Estimate:
    """Pooled sample mean with second-moment bookkeeping.

    ``m2`` is the sum of squared deviations from the mean, so the merge
    of two estimates is exact and associative.
    """

    mean: float
    m2: float
    n: int
    hit_count: int | None = None

    @property
    def variance(self) -> float:
        """Sample variance of the individual draws (ddof=1)."""
        if self.n < 2:
            return 0.0
        return self.m2 / (self.n - 1)

    @property
    def rule_of_three(self) -> bool:
        """True when an indicator estimand saw zero hits."""
        return self.hit_count == 0

    @property
    def ci95_halfwidth(self) -> float:
        """95% CI half-width; rule-of-three upper bound 3/n at zero hits."""
        if self.n == 0:
            return math.inf
        if self.rule_of_three:
            return 3.0 / self.n
        return Z95 * math.sqrt(self.variance / self.n)


def empty_estimate() -> Estimate:
    return Estimate(mean=0.0, m2=0.0, n=0, hit_count=None)


def merge(a: Estimate, b: Estimate) -> Estimate:
    """Exact pooled combination of two estimates from disjoint streams.

    The formula is written symmetrically (commutative sums and products
    only) so merge(a, b) and merge(b, a) agree to the last bit.
    """
    if a.n == 0:
        return b
    if b.n == 0:
        return a
    n = a.n + b.n
    mean = (a.n * a.mean + b.n * b.mean) / n
    delta = b.mean - a.mean
    m2 = a.m2 + b.m2 + (a.n / n * b.n) * (delta * delta)
    if a.hit_count is None or b.hit_count is None:
        hits = None
    else:
        hits = a.hit_count + b.hit_count
    return Estimate(mean=mean, m2=m2, n=n, hit_count=hits)


def derive_stream(master_seed: int, chunk_index: int) -> np.random.Generator:
    """Deterministic, statistically independent stream for a chunk.

    Uses the 128-bit Philox key (master_seed, chunk_index); distinct
    indices give independent counter-based streams.
    """
    if not 0 <= master_seed < 2**64:
        raise ConfigurationError("master_seed must fit in 64 bits")
    if not 0 <= chunk_index < 2**32:
        raise ConfigurationError("chunk_index must fit in 32 bits")
    key = np.array([master_seed, chunk_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _chunk_estimate(values: np.ndarray) -> Estimate:
    values = np.asarray(values)
    if values.ndim != 1:
        raise ValueError("estimand must return a 1-d array")
    hits = None
    if values.dtype == np.bool_:
        hits = int(np.count_nonzero(values))
        values = values.astype(np.float64)
    else:
        values = values.astype(np.float64, copy=False)
    mean = float(values.mean())
    m2 = float(np.square(values - mean).sum())
    return Estimate(mean=mean, m2=m2, n=values.size, hit_count=hits)


def run_mc(plan: RunPlan, estimand: Callable[[np.random.Generator, int], np.ndarray]) -> Estimate:
    """Run a chunked Monte Carlo estimate under the plan.

    ``estimand(rng, size)`` must return a 1-d array of length ``size``
    (bool arrays are treated as indicators and tracked as hits) and must
    depend only on its stream argument.
    """

    def one_chunk(item):
        index, size = item
        rng = derive_stream(plan.master_seed, index)
        values = estimand(rng, size)
        if len(values) != size:
            raise EstimationError(f"estimand returned {len(values)} values for chunk of {size}")
        return _chunk_estimate(values)

    chunk_list = list(plan.chunks())
    if plan.n_workers == 1:
        partials = [one_chunk(item) for item in chunk_list]
    else:
        with ThreadPoolExecutor(max_workers=plan.n_workers) as pool:
            futures = [pool.submit(one_chunk, item) for item in chunk_list]
            partials = []
            for (index, _), fut in zip(chunk_list, futures):
                try:
                    partials.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - propagate with context
                    raise EstimationError(f"worker failed on chunk {index}: {exc}") from exc

    total = empty_estimate()
    for part in partials:
        total = merge(total, part)
    return total


def run_counts(plan: RunPlan, counter: Callable[[np.random.Generator, int], np.ndarray]) -> np.ndarray:
    """Sum integer count arrays over chunks.

    ``counter(rng, size)`` returns an integer array of a fixed shape
    (counts accumulated over the chunk's samples). Integer addition is
    exactly associative, so sharding cannot change the result.
    """

    def one_chunk(item):
        index, size = item
        rng = derive_stream(plan.master_seed, index)
        return np.asarray(counter(rng, size), dtype=np.int64)

    chunk_list = list(plan.chunks())
    if plan.n_workers == 1:
        partials = [one_chunk(item) for item in chunk_list]
    else:
        with ThreadPoolExecutor(max_workers=plan.n_workers) as pool:
            futures = [pool.submit(one_chunk, item) for item in chunk_list]
            partials = []
            for (index, _), fut in zip(chunk_list, futures):
                try:
                    partials.append(fut.result())
                except Exception as exc:  # noqa: BLE001
                    raise EstimationError(f"worker failed on chunk {index}: {exc}") from exc

    total = partials[0]
    for part in partials[1:]:
        total = total + part
    return total
