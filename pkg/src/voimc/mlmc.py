"""Adaptive multilevel driver for the value-of-information gap.

The driver estimates E[max_d f_d] - E[max_d E[f_d|X]] as the telescoped sum
of level-correction means, choosing how deep to go and how many draws each
level gets so the mean-square error splits evenly: estimator variance at
most eps^2/2 and squared bias at most eps^2/2.

The control loop is sequential. Each pass recomputes pooled per-level
statistics, refits decay rates, and derives the optimal sample allocation;
if any level is short, it is topped up and the loop repeats. Only once every
allocation is satisfied under the current variance estimates is the bias
remainder tested, and a failing test appends one finer level with warm-up
draws. Sampling inside a level fans out over block substreams, so the whole
run is reproducible bit for bit from (model, config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .diagnostics import LevelStats, fit_rates, stats_from_accumulators
from .errors import ConfigError, InsufficientDataError
from .estimators import accumulate_level
from .models import DecisionModel
from .moments import MomentAccumulator
from .streams import RandomStream

# Safety valve for the top-up loop; normal runs settle in a handful of
# passes per level extension.
_MAX_ITERATIONS = 200

_KURTOSIS_WARNING = 100.0


@dataclass(frozen=True)
class MlmcConfig:
    """Driver settings: the RMS accuracy target and sampling policy knobs."""

    epsilon: float
    warmup_samples: int = 10_000
    initial_levels: int = 3
    max_level: int = 25
    alpha_override: Optional[float] = None
    beta_override: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise ConfigError("epsilon must be a positive finite number")
        if self.warmup_samples < 100:
            raise ConfigError("warmup_samples must be at least 100")
        if self.initial_levels < 2:
            raise ConfigError("initial_levels must be at least 2")
        if self.max_level < self.initial_levels:
            raise ConfigError("max_level must be at least initial_levels")
        for name in ("alpha_override", "beta_override"):
            value = getattr(self, name)
            if value is not None and not (math.isfinite(value) and value > 0.0):
                raise ConfigError(f"{name} must be positive when given")


@dataclass(frozen=True)
class MlmcResult:
    """Outcome of one driver run.

    ``allocations`` holds the samples actually drawn per level (warm-up
    included), and ``total_cost`` their inner-sample cost sum(2^l N_l).
    ``history`` carries one record per control-loop pass: the level set,
    pooled variances, allocation targets, drawn counts, the remainder
    estimate when the bias was tested (None otherwise), and the action
    taken. On a run that stops before testing the bias, ``bias_estimate``
    is NaN.
    """

    estimate: float
    epsilon: float
    converged: bool
    level_stats: tuple[LevelStats, ...]
    max_level_used: int
    allocations: tuple[int, ...]
    total_cost: int
    fitted_alpha: float
    fitted_beta: float
    variance_of_estimator: float
    bias_estimate: float
    warnings: tuple[str, ...]
    history: tuple[dict, ...]


def warmup(
    model: DecisionModel,
    levels: Sequence[int],
    n0: int,
    stream: RandomStream,
    threads: int = 1,
) -> list[LevelStats]:
    """Draw n0 level samples at each requested level and return their stats.

    Level l draws from substream ``stream.split(l)``, the same layout the
    driver uses, so a warm-up is reproducible inside and outside a run.
    """
    if n0 < 100:
        raise ValueError("warm-up needs at least 100 draws per level")
    out = []
    for level in levels:
        if level < 1:
            raise ValueError("warm-up levels start at 1")
        acc_z = MomentAccumulator()
        acc_p = MomentAccumulator()
        accumulate_level(model, level, int(n0), stream.split(level), acc_z, acc_p, threads=threads)
        out.append(stats_from_accumulators(level, acc_z, acc_p))
    return out


def optimal_allocation(
    stats: Sequence[LevelStats], epsilon: float, min_allocation: int = 10_000
) -> tuple[list[int], bool]:
    """Per-level sample counts that hit variance eps^2/2 at minimal cost.

    N_l = ceil(2 eps^-2 sqrt(V_l / C_l) sum_k sqrt(V_k C_k)), the classic
    cost-weighted split. Zero-variance levels get zero new samples. When
    every level has zero variance the formula degenerates; the fallback is
    ``min_allocation`` per level, flagged in the second return value.
    """
    if not stats:
        raise ValueError("allocation needs at least one level")
    if epsilon <= 0.0 or not math.isfinite(epsilon):
        raise ValueError("epsilon must be positive")
    variances = []
    for s in stats:
        if not math.isfinite(s.var_z) or s.var_z < 0.0:
            raise ValueError(f"level {s.level} variance estimate is unusable: {s.var_z}")
        variances.append(s.var_z)
    costs = [float(s.cost_per_sample) for s in stats]
    if all(v == 0.0 for v in variances):
        return [int(min_allocation)] * len(stats), True
    root_vc = math.fsum(math.sqrt(v * c) for v, c in zip(variances, costs))
    scale = 2.0 / (epsilon * epsilon) * root_vc
    counts = [int(math.ceil(scale * math.sqrt(v / c))) for v, c in zip(variances, costs)]
    return counts, False


def bias_remainder(stats: Sequence[LevelStats], alpha: float, at_level: int) -> float:
    """Extrapolated |E[P - P_L]| at L = ``at_level``: geometric tail of the
    level means at decay rate alpha, anchored on the last three measured
    levels and taking their maximum for robustness to one noisy mean."""
    if not stats:
        raise ValueError("remainder extrapolation needs level statistics")
    if alpha <= 0.0 or not math.isfinite(alpha):
        raise ValueError("alpha must be positive")
    ordered = sorted(stats, key=lambda s: s.level)
    denom = 2.0**alpha - 1.0
    return max(
        abs(s.mean_z) * 2.0 ** (alpha * (s.level - at_level)) / denom for s in ordered[-3:]
    )


def bias_converged(
    stats: Sequence[LevelStats], alpha: float, epsilon: float
) -> tuple[bool, float]:
    """Test whether the estimated bias remainder clears eps/sqrt(2)."""
    if len(stats) < 3:
        raise InsufficientDataError("the bias test needs at least 3 levels")
    finest = max(s.level for s in stats)
    remainder = bias_remainder(stats, alpha, finest)
    return remainder <= epsilon / math.sqrt(2.0), remainder


def _driver_rates(
    stats: Sequence[LevelStats], config: MlmcConfig
) -> tuple[float, float]:
    """Decay rates for the control loop: overrides win, otherwise a fit over
    levels >= 2 (falling back to all levels while too few exist), with alpha
    floored at 0.5. An unfittable alpha defaults to 1.0; it only matters
    when some level mean is nonzero, and by then the fit succeeds."""
    alpha = config.alpha_override
    beta = config.beta_override
    if alpha is not None and beta is not None:
        return float(alpha), float(beta)
    fitted = None
    try:
        fitted = fit_rates(stats, min_level=2)
    except InsufficientDataError:
        try:
            fitted = fit_rates(stats, min_level=1)
        except InsufficientDataError:
            fitted = None
    if alpha is None:
        if fitted is not None and math.isfinite(fitted.alpha):
            alpha = max(0.5, fitted.alpha)
        else:
            alpha = 1.0
    if beta is None:
        beta = fitted.beta if fitted is not None else math.nan
    return float(alpha), float(beta)


class _LevelState:
    """Pooled accumulators plus the next free block index for one level."""

    __slots__ = ("acc_z", "acc_p", "next_block")

    def __init__(self) -> None:
        self.acc_z = MomentAccumulator()
        self.acc_p = MomentAccumulator()
        self.next_block = 0


def mlmc_run(
    model: DecisionModel,
    config: MlmcConfig,
    stream: RandomStream,
    threads: int = 1,
) -> MlmcResult:
    """Run the adaptive multilevel estimator to the configured accuracy.

    Returns a result whose ``converged`` flag is False when max_level was
    reached (or the loop safety valve tripped) before the bias target; the
    partial diagnostics are still filled in.
    """
    states: dict[int, _LevelState] = {}
    warnings: list[str] = []
    history: list[dict] = []

    def grow(level: int, extra: int) -> None:
        state = states.setdefault(level, _LevelState())
        state.next_block = accumulate_level(
            model,
            level,
            extra,
            stream.split(level),
            state.acc_z,
            state.acc_p,
            threads=threads,
            first_block=state.next_block,
        )

    def pooled_stats() -> list[LevelStats]:
        return [
            stats_from_accumulators(level, states[level].acc_z, states[level].acc_p)
            for level in sorted(states)
        ]

    for level in range(1, config.initial_levels + 1):
        grow(level, config.warmup_samples)

    converged = False
    alpha, beta = math.nan, math.nan
    remainder = math.nan
    degenerate_warned = False

    for iteration in range(_MAX_ITERATIONS):
        stats = pooled_stats()
        alpha, beta = _driver_rates(stats, config)
        targets, degenerate = optimal_allocation(
            stats, config.epsilon, min_allocation=config.warmup_samples
        )
        if degenerate and not degenerate_warned:
            warnings.append(
                "all level variances are zero; using the minimum allocation per level"
            )
            degenerate_warned = True
        record = {
            "iteration": iteration,
            "levels": [s.level for s in stats],
            "variances": [s.var_z for s in stats],
            "targets": [int(t) for t in targets],
            "drawn": [s.n for s in stats],
            "remainder": None,
        }
        shortfall = {
            s.level: target - s.n for s, target in zip(stats, targets) if target > s.n
        }
        if shortfall:
            record["action"] = "top_up"
            history.append(record)
            for level, extra in shortfall.items():
                grow(level, extra)
            continue
        finest = stats[-1].level
        if len(stats) >= 3:
            converged, remainder = bias_converged(stats, alpha, config.epsilon)
            record["remainder"] = float(remainder)
        if converged:
            record["action"] = "stop"
            history.append(record)
            break
        if finest >= config.max_level:
            record["action"] = "fail"
            history.append(record)
            warnings.append(
                f"bias target not reached at max_level={config.max_level}"
            )
            break
        record["action"] = "extend"
        history.append(record)
        grow(finest + 1, config.warmup_samples)
    else:
        warnings.append(
            f"control loop stopped after {_MAX_ITERATIONS} passes without converging"
        )

    stats = pooled_stats()
    finest = stats[-1]
    if math.isfinite(finest.kurtosis_z) and finest.kurtosis_z > _KURTOSIS_WARNING:
        warnings.append(
            f"kurtosis {finest.kurtosis_z:.0f} at level {finest.level}; the variance "
            "estimate there is dominated by a few rare samples"
        )
    estimate = math.fsum(s.mean_z for s in stats)
    variance_of_estimator = math.fsum(s.var_z / s.n for s in stats)
    total_cost = sum(s.cost_per_sample * s.n for s in stats)
    return MlmcResult(
        estimate=estimate,
        epsilon=float(config.epsilon),
        converged=converged,
        level_stats=tuple(stats),
        max_level_used=finest.level,
        allocations=tuple(s.n for s in stats),
        total_cost=int(total_cost),
        fitted_alpha=float(alpha),
        fitted_beta=float(beta),
        variance_of_estimator=float(variance_of_estimator),
        bias_estimate=float(remainder),
        warnings=tuple(warnings),
        history=tuple(history),
    )
