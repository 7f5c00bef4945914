"""Monte Carlo estimators for value-of-information quantities.

The target is the gap EVPI - EVPPI = E[max_d f_d(X,Y)] - E[max_d E[f_d|X]].
Its level-l approximation replaces the exact conditional expectation by an
average over 2^l inner draws:

    P_l = mean_i max_d f_d(X, Y_i)  -  max_d mean_i f_d(X, Y_i),

with P_0 = 0 by construction. The multilevel correction at level l >= 1 is
the antithetic difference

    Z_l = 1/2 (max_d fbar_a_d + max_d fbar_b_d) - max_d fbar_d,

where fbar_a / fbar_b average the first / second half of the 2^l inner draws
(in stream order) and fbar averages all of them. Per decision the half
averages recombine exactly to the full average, so Z_l vanishes identically
whenever the three argmax decisions agree; the sum of E[Z_l] over l >= 1
telescopes to the target.

The kernels keep two bitwise invariants, not just approximate ones:

* P_l >= 0 and p_fine >= 0 for every draw. The pathwise best payoff is
  appended as an extra column before the inner-axis reduction, so every
  column is summed by the identical reduction tree and floating-point
  monotonicity carries the ordering through to the averages.
* Z_l == 0.0 whenever the three argmax decisions agree, because the half
  averages are formed from half sums and recombined by exact power-of-two
  scalings.

Batch routines split work into fixed-size blocks, one substream per block,
and merge per-block results in block order: output is bit-identical for any
worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .models import DecisionModel
from .moments import CompensatedSum, MomentAccumulator
from .streams import RandomStream

# Block sizing: roughly this many payoff values per block keeps peak memory
# modest while amortizing vectorization overhead. Block boundaries depend only
# on the model's dimensions and the level, never on worker count.
_BLOCK_VALUE_BUDGET = 1 << 20
_MAX_BLOCK_OUTER = 1 << 18


@dataclass(frozen=True)
class LevelSample:
    """One draw of the level-l correction: the antithetic difference ``z``,
    the fine-level gap estimate ``p_fine`` from the same draws, and the cost
    in inner samples."""

    z: float
    p_fine: float
    cost: float


@dataclass(frozen=True)
class Estimate:
    """A plain Monte Carlo estimate with its standard error and sampling cost."""

    value: float
    std_error: float
    n: int
    cost: float


def argmax_decision(values: Sequence[float]) -> int:
    """1-based index of the largest entry; ties go to the smallest index."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("argmax_decision expects a non-empty 1-d sequence")
    if np.isnan(v).any():
        raise ValueError("argmax_decision got NaN payoff values")
    return int(np.argmax(v)) + 1


def antithetic_terms(f: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-decision half and full averages of a fine-level payoff block.

    ``f`` has shape (n, m, D) with m even. Returns ``(mean_a, mean_b,
    mean_full)``, each (n, D), where mean_full is derived from the same half
    sums, so 1/2 (mean_a + mean_b) equals mean_full to the last bit when m is
    a power of two.
    """
    m = f.shape[1]
    if m < 2 or m % 2:
        raise ValueError("antithetic halves need an even number of inner samples")
    half = m // 2
    sum_a = f[:, :half, :].sum(axis=1)
    sum_b = f[:, half:, :].sum(axis=1)
    return sum_a / half, sum_b / half, (sum_a + sum_b) / m


def _payoffs_with_best(
    model: DecisionModel, level: int, n: int, stream: RandomStream
) -> np.ndarray:
    """Payoff block of shape (n, 2^level, D+1); the last column holds the
    pathwise best payoff so one reduction call covers every column."""
    m = 1 << level
    x = model.sample_outer(stream, n)
    y = model.sample_inner(x, stream, m)
    f = model.payoffs(x, y)
    return np.concatenate([f, f.max(axis=2, keepdims=True)], axis=2)


def _level_block(model: DecisionModel, level: int, n: int, stream: RandomStream):
    """One block of level-l draws: returns (z, p_fine) arrays of length n."""
    m = 1 << level
    half = m // 2
    g = _payoffs_with_best(model, level, n, stream)
    ga = g[:, :half, :].sum(axis=1)
    gb = g[:, half:, :].sum(axis=1)
    sums = ga + gb
    full_best = sums[:, :-1].max(axis=1) / m
    z = 0.5 * (ga[:, :-1].max(axis=1) / half + gb[:, :-1].max(axis=1) / half) - full_best
    p = sums[:, -1] / m - full_best
    return z, p


def _p_block(model: DecisionModel, level: int, n: int, stream: RandomStream) -> np.ndarray:
    """One block of level-l gap draws P_l; level 0 gives exact zeros."""
    m = 1 << level
    sums = _payoffs_with_best(model, level, n, stream).sum(axis=1)
    return sums[:, -1] / m - sums[:, :-1].max(axis=1) / m


def _block_plan(model: DecisionModel, level: int, n: int, first_block: int):
    """Split n draws into (block_index, size) chunks of deterministic size."""
    m = 1 << level
    width = m * (model.decision_count + 1 + max(model.inner_dim, 1))
    return _plan_sizes(width, n, first_block)


def _plan_sizes(width: int, n: int, first_block: int):
    size = max(1, min(_BLOCK_VALUE_BUDGET // width, _MAX_BLOCK_OUTER))
    plan = []
    idx = first_block
    left = int(n)
    while left > 0:
        take = min(size, left)
        plan.append((idx, take))
        idx += 1
        left -= take
    return plan


def _run_blocks(worker: Callable, plan, threads: int, consume: Callable) -> None:
    """Run block workers, feeding results to ``consume`` in block order."""
    if threads <= 1 or len(plan) <= 1:
        for item in plan:
            consume(worker(item))
        return
    # Waves bound how many finished blocks wait in memory at once.
    wave = threads * 2
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for i in range(0, len(plan), wave):
            for result in pool.map(worker, plan[i : i + wave]):
                consume(result)


def accumulate_level(
    model: DecisionModel,
    level: int,
    n: int,
    stream: RandomStream,
    acc_z: MomentAccumulator,
    acc_p: MomentAccumulator,
    threads: int = 1,
    first_block: int = 0,
) -> int:
    """Fold n fresh level-l draws into the accumulators; returns the next
    free block index. Substreams are ``stream.split(block_index)``, so a
    later top-up that continues from the returned index extends the same
    deterministic sequence."""
    if level < 1:
        raise ValueError("the level correction is defined for levels >= 1")
    if n <= 0:
        return first_block
    plan = _block_plan(model, level, n, first_block)

    def worker(item):
        idx, size = item
        return _level_block(model, level, size, stream.split(idx))

    def consume(result):
        z, p = result
        acc_z.add_block(z)
        acc_p.add_block(p)

    _run_blocks(worker, plan, threads, consume)
    return plan[-1][0] + 1


def accumulate_p_level(
    model: DecisionModel,
    level: int,
    n: int,
    stream: RandomStream,
    acc_p: MomentAccumulator,
    threads: int = 1,
    first_block: int = 0,
) -> int:
    """Fold n fresh draws of P_l into ``acc_p`` (level 0 allowed)."""
    if level < 0:
        raise ValueError("level must be non-negative")
    if n <= 0:
        return first_block
    plan = _block_plan(model, level, n, first_block)

    def worker(item):
        idx, size = item
        return _p_block(model, level, size, stream.split(idx))

    _run_blocks(worker, plan, threads, acc_p.add_block)
    return plan[-1][0] + 1


def sample_level_batch(
    model: DecisionModel,
    level: int,
    n: int,
    stream: RandomStream,
    threads: int = 1,
    first_block: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw (z, p_fine) arrays for n level-l draws; same substream layout as
    :func:`accumulate_level`."""
    if level < 1:
        raise ValueError("the level correction is defined for levels >= 1")
    if n <= 0:
        return np.empty(0), np.empty(0)
    plan = _block_plan(model, level, n, first_block)
    zs: list[np.ndarray] = []
    ps: list[np.ndarray] = []

    def worker(item):
        idx, size = item
        return _level_block(model, level, size, stream.split(idx))

    def consume(result):
        zs.append(result[0])
        ps.append(result[1])

    _run_blocks(worker, plan, threads, consume)
    return np.concatenate(zs), np.concatenate(ps)


def p_level(model: DecisionModel, level: int, stream: RandomStream) -> float:
    """One draw of P_l from the given stream (level 0 gives exactly 0)."""
    if level < 0:
        raise ValueError("level must be non-negative")
    return float(_p_block(model, level, 1, stream)[0])


def z_level(model: DecisionModel, level: int, stream: RandomStream) -> LevelSample:
    """One draw of the level-l correction from the given stream."""
    if level < 1:
        raise ValueError("the level correction is defined for levels >= 1")
    z, p = _level_block(model, level, 1, stream)
    return LevelSample(z=float(z[0]), p_fine=float(p[0]), cost=float(1 << level))


def evpi_mc(model: DecisionModel, n: int, stream: RandomStream, threads: int = 1) -> Estimate:
    """Plain-MC EVPI: mean of the pathwise best payoff minus the best decision
    in expectation, from n joint draws.

    The reported standard error covers the first term only; the second term
    averages before taking the max and is far more accurate, so its noise is
    ignored.
    """
    if n <= 0:
        raise ValueError("sample count must be positive")
    width = model.decision_count + 1 + max(model.inner_dim, 1)
    plan = _plan_sizes(width, n, 0)

    acc_best = MomentAccumulator()
    mean_sums = [CompensatedSum() for _ in range(model.decision_count)]

    def worker(item):
        idx, size = item
        g = _payoffs_with_best(model, 0, size, stream.split(idx))[:, 0, :]
        return g[:, -1], g[:, :-1].sum(axis=0)

    def consume(result):
        best, sums = result
        acc_best.add_block(best)
        for d in range(model.decision_count):
            mean_sums[d].add(float(sums[d]))

    _run_blocks(worker, plan, threads, consume)
    best_of_means = max(s.value / n for s in mean_sums)
    value = acc_best.mean - best_of_means
    std_error = math.sqrt(acc_best.variance() / n) if n > 1 else math.nan
    return Estimate(value=value, std_error=std_error, n=int(n), cost=float(n))


def nested_mc(
    model: DecisionModel,
    n_outer: int,
    n_inner: int,
    stream: RandomStream,
    threads: int = 1,
) -> Estimate:
    """Nested-MC estimate of EVPI - EVPPI: for each of n_outer draws of X,
    average the inner gap over n_inner conditional draws.

    Each bracket is nonnegative to the last bit and n_inner = 1 gives exactly
    zero; the upward bias decays as n_inner grows.
    """
    if n_outer <= 0 or n_inner <= 0:
        raise ValueError("sample counts must be positive")
    m = int(n_inner)
    width = m * (model.decision_count + 1 + max(model.inner_dim, 1))
    plan = _plan_sizes(width, n_outer, 0)

    acc = MomentAccumulator()

    def worker(item):
        idx, size = item
        sub = stream.split(idx)
        x = model.sample_outer(sub, size)
        y = model.sample_inner(x, sub, m)
        f = model.payoffs(x, y)
        g = np.concatenate([f, f.max(axis=2, keepdims=True)], axis=2)
        sums = g.sum(axis=1)
        return sums[:, -1] / m - sums[:, :-1].max(axis=1) / m

    _run_blocks(worker, plan, threads, acc.add_block)
    std_error = math.sqrt(acc.variance() / n_outer) if n_outer > 1 else math.nan
    return Estimate(
        value=acc.mean, std_error=std_error, n=int(n_outer), cost=float(n_outer) * float(m)
    )
