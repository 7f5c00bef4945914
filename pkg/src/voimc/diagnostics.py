"""Level-resolved statistics, convergence-rate fits, and cost comparisons.

Everything here answers one of three questions about the multilevel
estimator on a given model: how fast do the level corrections decay
(level_sweep, fit_rates), what does the adaptive driver actually pay at a
target accuracy (cost_comparison), and how does that compare with plain
nested sampling (the modeled standard-MC cost). The value-of-information
summary for a model and partition lives here too (evppi_report).

Sweeps fan blocks out across workers per level and merge moment
accumulators in block order, so every statistic is independent of the
worker count.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, InsufficientDataError
from .estimators import Estimate, accumulate_level, accumulate_p_level, evpi_mc
from .models import BkocModel, DecisionModel
from .moments import MomentAccumulator
from .streams import RandomStream

# Warm-up size for driver runs launched by the comparison helpers. The
# default driver warm-up is sized for one accurate run; a cost comparison
# spans coarse targets where that much warm-up would dominate the measured
# cost and flatten nothing, so these runs use a lighter one.
_COMPARISON_WARMUP = 300


@dataclass(frozen=True)
class LevelStats:
    """Per-level summary of the correction Z_l and the gap P_l.

    ``kurtosis_z`` is the moment ratio m4/m2^2 (biased central moments); it
    is NaN when the sample variance vanishes. ``cost_per_sample`` is the
    number of inner samples one draw consumes, 2^level.
    """

    level: int
    n: int
    mean_z: float
    var_z: float
    kurtosis_z: float
    mean_p: float
    var_p: float
    cost_per_sample: int


@dataclass(frozen=True)
class RateEstimates:
    """Fitted decay rates: |E[Z_l]| ~ 2^(-alpha l), Var[Z_l] ~ 2^(-beta l).

    ``gamma`` is the cost growth rate; it is exactly 1 for this estimator
    family because one level-l draw always costs 2^l inner samples.
    """

    alpha: float
    beta: float
    gamma: float
    r_squared_alpha: float
    r_squared_beta: float


def stats_from_accumulators(
    level: int, acc_z: MomentAccumulator, acc_p: MomentAccumulator
) -> LevelStats:
    """Materialize a LevelStats row from running moments of Z and P draws."""
    if acc_z.n != acc_p.n:
        raise ValueError("Z and P accumulators hold different draw counts")
    return LevelStats(
        level=int(level),
        n=int(acc_z.n),
        mean_z=float(acc_z.mean),
        var_z=float(acc_z.variance()),
        kurtosis_z=float(acc_z.kurtosis()),
        mean_p=float(acc_p.mean),
        var_p=float(acc_p.variance()),
        cost_per_sample=1 << int(level),
    )


def level_stats(
    z_values: Sequence[float], p_values: Sequence[float], level: int
) -> LevelStats:
    """Summarize raw draws of (Z_l, P_l) into a LevelStats row.

    Needs at least two draws for the variance; the kurtosis is NaN whenever
    the variance vanishes.
    """
    z = np.asarray(z_values, dtype=np.float64).ravel()
    p = np.asarray(p_values, dtype=np.float64).ravel()
    if z.size != p.size:
        raise ValueError("need one P draw per Z draw")
    if z.size < 2:
        raise ValueError("level statistics need at least two draws")
    acc_z = MomentAccumulator()
    acc_p = MomentAccumulator()
    acc_z.add_block(z)
    acc_p.add_block(p)
    return stats_from_accumulators(level, acc_z, acc_p)


def _log2_line(points: list[tuple[int, float]]) -> tuple[float, float]:
    """Least-squares slope and r^2 of log2(value) against level."""
    x = np.array([float(level) for level, _ in points])
    y = np.array([math.log2(value) for _, value in points])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_res = float(residual @ residual)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


def fit_rates(stats: Sequence[LevelStats], min_level: int = 2) -> RateEstimates:
    """Fit decay rates by unweighted least squares on the log2 statistics.

    Levels below ``min_level`` are ignored (the coarsest level often sits off
    the asymptotic line); levels whose mean or variance is exactly zero carry
    no log information and are skipped for that fit. Each fit needs at least
    three surviving levels.
    """
    mean_points = [
        (s.level, abs(s.mean_z))
        for s in stats
        if s.level >= min_level and math.isfinite(s.mean_z) and s.mean_z != 0.0
    ]
    var_points = [
        (s.level, s.var_z)
        for s in stats
        if s.level >= min_level and math.isfinite(s.var_z) and s.var_z > 0.0
    ]
    if len(mean_points) < 3 or len(var_points) < 3:
        raise InsufficientDataError(
            f"rate fits need at least 3 usable levels at or above level {min_level}"
        )
    mean_slope, r2_alpha = _log2_line(mean_points)
    var_slope, r2_beta = _log2_line(var_points)
    return RateEstimates(
        alpha=-mean_slope,
        beta=-var_slope,
        gamma=1.0,
        r_squared_alpha=r2_alpha,
        r_squared_beta=r2_beta,
    )


def level_sweep(
    model: DecisionModel,
    max_level: int,
    n_per_level: int,
    stream: RandomStream,
    threads: int = 1,
) -> list[LevelStats]:
    """Draw n_per_level independent samples at each level, 0 through
    max_level, and return one LevelStats row per level.

    The level-0 row is drawn like any other so its exact zeros are observed
    rather than assumed; its Z statistics are zero by definition.
    """
    if max_level < 1:
        raise ValueError("max_level must be at least 1")
    if n_per_level < 1_000:
        raise ValueError("level sweeps need at least 1000 draws per level")
    acc_p0 = MomentAccumulator()
    accumulate_p_level(model, 0, n_per_level, stream.split(0), acc_p0, threads=threads)
    rows = [
        LevelStats(
            level=0,
            n=int(acc_p0.n),
            mean_z=0.0,
            var_z=0.0,
            kurtosis_z=math.nan,
            mean_p=float(acc_p0.mean),
            var_p=float(acc_p0.variance()),
            cost_per_sample=1,
        )
    ]
    for level in range(1, int(max_level) + 1):
        acc_z = MomentAccumulator()
        acc_p = MomentAccumulator()
        accumulate_level(
            model, level, n_per_level, stream.split(level), acc_z, acc_p, threads=threads
        )
        rows.append(stats_from_accumulators(level, acc_z, acc_p))
    return rows


@dataclass(frozen=True)
class ComparisonRow:
    """One accuracy target: the multilevel cost against the modeled
    standard-MC cost, both in inner samples."""

    epsilon: float
    mlmc_cost: float
    std_cost_model: float
    ratio: float


def _standard_cost_model(stats: Sequence[LevelStats], alpha: float, epsilon: float) -> float:
    """Modeled cost of plain nested MC at RMS accuracy epsilon.

    The fixed level L is the smallest one whose extrapolated bias clears
    eps/sqrt(2); the sample count is the usual 2 Var[P] eps^-2. Var[P] is
    taken from the finest measured level, where P_l has essentially
    converged to P.
    """
    from .mlmc import bias_remainder

    target = epsilon / math.sqrt(2.0)
    coefficient = bias_remainder(stats, alpha, 0)
    if coefficient <= 0.0:
        level = 1
    else:
        level = max(1, math.ceil(math.log2(coefficient / target) / alpha))
    finest = max(stats, key=lambda s: s.level)
    n_std = math.ceil(2.0 * finest.var_p / (epsilon * epsilon))
    return float(n_std) * 2.0**level


def cost_comparison(
    model: DecisionModel,
    epsilons: Sequence[float],
    stream: RandomStream,
    threads: int = 1,
) -> list[ComparisonRow]:
    """Run the adaptive driver at each target and compare its measured cost
    with the modeled standard-MC cost.

    Costs are from a single driver run per target (no replication); the
    standard-MC side is modeled, never executed, since at small targets it
    is exactly the cost the multilevel construction avoids.
    """
    from .mlmc import MlmcConfig, mlmc_run

    eps = [float(e) for e in epsilons]
    if not eps:
        raise ValueError("need at least one accuracy target")
    if any(not math.isfinite(e) or e <= 0.0 for e in eps):
        raise ValueError("accuracy targets must be positive")
    if any(a <= b for a, b in zip(eps, eps[1:])):
        raise ValueError("accuracy targets must be strictly descending")
    rows = []
    for k, epsilon in enumerate(eps):
        config = MlmcConfig(epsilon=epsilon, warmup_samples=_COMPARISON_WARMUP)
        result = mlmc_run(model, config, stream.split(k), threads=threads)
        std_cost = _standard_cost_model(result.level_stats, result.fitted_alpha, epsilon)
        rows.append(
            ComparisonRow(
                epsilon=epsilon,
                mlmc_cost=float(result.total_cost),
                std_cost_model=std_cost,
                ratio=std_cost / float(result.total_cost),
            )
        )
    return rows


def projected_costs(
    stats: Sequence[LevelStats],
    epsilon: float,
    warmup_samples: int = _COMPARISON_WARMUP,
) -> ComparisonRow:
    """Model both costs at a target accuracy from measured level statistics,
    without running the driver.

    Mirrors the driver's arithmetic: the level cutoff comes from the
    extrapolated bias, per-level sample counts from the optimal allocation
    with the warm-up as a floor, and variances beyond the measured range
    decay at the fitted beta. Useful where executing the run is itself too
    expensive.
    """
    from .mlmc import bias_remainder

    if epsilon <= 0.0 or not math.isfinite(epsilon):
        raise ValueError("the accuracy target must be positive")
    measured = sorted((s for s in stats if s.level >= 1), key=lambda s: s.level)
    if not measured:
        raise InsufficientDataError("cost projection needs statistics for levels >= 1")
    rates = fit_rates(stats, min_level=2)
    alpha = max(0.5, rates.alpha)
    target = epsilon / math.sqrt(2.0)
    coefficient = bias_remainder(measured, alpha, 0)
    if coefficient <= 0.0:
        cutoff = 1
    else:
        cutoff = max(1, math.ceil(math.log2(coefficient / target) / alpha))

    by_level = {s.level: s.var_z for s in measured}
    top = measured[-1]

    def variance_at(level: int) -> float:
        if level in by_level:
            return max(by_level[level], 0.0)
        return max(top.var_z, 0.0) * 2.0 ** (-rates.beta * (level - top.level))

    levels = range(1, cutoff + 1)
    root_vc = math.fsum(math.sqrt(variance_at(l) * 2.0**l) for l in levels)
    scale = 2.0 / (epsilon * epsilon) * root_vc
    mlmc_cost = math.fsum(
        max(warmup_samples, math.ceil(scale * math.sqrt(variance_at(l) / 2.0**l))) * 2.0**l
        for l in levels
    )
    std_cost = float(math.ceil(2.0 * top.var_p / (epsilon * epsilon))) * 2.0**cutoff
    return ComparisonRow(
        epsilon=float(epsilon),
        mlmc_cost=mlmc_cost,
        std_cost_model=std_cost,
        ratio=std_cost / mlmc_cost,
    )


@dataclass(frozen=True)
class EvppiReport:
    """EVPI, the partial-information gap, and their difference EVPPI.

    ``evppi`` is computed as ``evpi - difference``, so that identity holds
    exactly in the report. RMS errors for the multilevel quantities combine
    the estimator variance with the bias remainder estimate.
    """

    evpi: float
    evpi_std_error: float
    difference: float
    difference_rms_error: float
    evppi: float
    evppi_rms_error: float
    epsilon: float
    n_evpi: int
    converged: bool
    evpi_estimate: Estimate
    mlmc_result: "MlmcResult"  # noqa: F821 (runtime type lives in .mlmc)


def evppi_report(
    model: DecisionModel,
    partition: Sequence[int] | None,
    epsilon: float,
    n_evpi: int,
    stream: RandomStream,
    threads: int = 1,
) -> EvppiReport:
    """Estimate EVPI by plain MC and EVPI - EVPPI by the multilevel driver,
    on independent substreams, and report both with EVPPI = EVPI - gap.

    ``partition`` selects the observed (outer) variables for models with a
    configurable partition; pass None to keep the model's own.
    """
    from .mlmc import MlmcConfig, mlmc_run

    if partition is not None:
        if isinstance(model, BkocModel):
            outer = tuple(int(i) for i in partition)
            model = BkocModel(dataclasses.replace(model.spec, outer_indices=outer))
        else:
            raise ConfigError(f"model {model.name!r} has a fixed partition")
    if n_evpi < 2:
        raise ValueError("the EVPI estimate needs at least two samples")
    evpi_estimate = evpi_mc(model, int(n_evpi), stream.split(0), threads=threads)
    result = mlmc_run(model, MlmcConfig(epsilon=float(epsilon)), stream.split(1), threads=threads)
    bias = result.bias_estimate if math.isfinite(result.bias_estimate) else 0.0
    difference_rms = math.sqrt(max(result.variance_of_estimator, 0.0) + bias * bias)
    evppi_rms = math.sqrt(evpi_estimate.std_error**2 + difference_rms**2)
    return EvppiReport(
        evpi=evpi_estimate.value,
        evpi_std_error=evpi_estimate.std_error,
        difference=result.estimate,
        difference_rms_error=difference_rms,
        evppi=evpi_estimate.value - result.estimate,
        evppi_rms_error=evppi_rms,
        epsilon=float(epsilon),
        n_evpi=int(n_evpi),
        converged=result.converged,
        evpi_estimate=evpi_estimate,
        mlmc_result=result,
    )
