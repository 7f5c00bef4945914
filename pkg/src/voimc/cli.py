"""Command-line front end.

Four subcommands drive the library: ``run`` (the adaptive estimator at one
accuracy target), ``levels`` (a per-level statistics sweep), ``compare``
(multilevel cost against the modeled standard-MC cost over several
targets), and ``evppi`` (the EVPI / EVPPI summary for one partition).

Every command writes one output file (CSV or JSON) and prints a one-line
summary. Output bytes are a pure function of the flags and the seed; worker
count and wall clock never leak into them. Exit codes: 0 success, 2 usage,
3 configuration, 4 driver non-convergence (outputs are still written).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Sequence

from .diagnostics import (
    ComparisonRow,
    EvppiReport,
    LevelStats,
    cost_comparison,
    evppi_report,
    fit_rates,
    level_sweep,
)
from .errors import ConfigError, InsufficientDataError, VoimcError
from .mlmc import MlmcConfig, MlmcResult, mlmc_run
from .models import BkocModel, DecisionModel, MODEL_NAMES, make_model
from .streams import RandomStream

# Fixed default so bare invocations are reproducible run to run.
DEFAULT_SEED = 101

SCHEMA_VERSION = "1"

OUTPUT_DIR_ENV = "VOIMC_OUTPUT_DIR"

_LEVEL_COLUMNS = ("level", "n", "mean_z", "var_z", "kurtosis_z", "mean_p", "var_p", "cost")
_COMPARE_COLUMNS = ("epsilon", "mlmc_cost", "std_cost_model", "ratio")
_EVPPI_COLUMNS = (
    "evpi",
    "evpi_std_error",
    "difference",
    "difference_rms_error",
    "evppi",
    "evppi_rms_error",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voimc",
        description="Estimate the expected value of perfect and partial "
        "perfect information by multilevel Monte Carlo.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, plot: bool = False) -> None:
        p.add_argument("--model", help=f"built-in model name ({', '.join(MODEL_NAMES)})")
        p.add_argument("--config", help="path to a JSON model configuration file")
        p.add_argument(
            "--outer",
            help="comma-separated 1-based indices of the observed variables "
            "(models with a configurable partition only)",
        )
        p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed")
        p.add_argument(
            "--threads",
            type=int,
            default=1,
            help="worker threads for sampling; never affects the output bytes",
        )
        p.add_argument(
            "--output",
            help=f"output file path (default: derived name under ${OUTPUT_DIR_ENV} "
            "or the working directory)",
        )
        p.add_argument("--format", choices=("csv", "json"), help="output file format")
        if plot:
            p.add_argument(
                "--emit-plot-script",
                action="store_true",
                help="also write a gnuplot script next to the CSV output",
            )

    p_run = sub.add_parser("run", help="adaptive estimate of EVPI - EVPPI at one target")
    p_run.add_argument(
        "--epsilon", action="append", type=float, help="RMS accuracy target (exactly one)"
    )
    p_run.add_argument("--max-level", type=int, default=25, help="finest level the driver may use")
    add_common(p_run)

    p_levels = sub.add_parser("levels", help="per-level statistics sweep")
    p_levels.add_argument("--max-level", type=int, default=10, help="finest level to sweep")
    p_levels.add_argument(
        "--n", type=int, default=200_000, help="independent draws per level"
    )
    add_common(p_levels, plot=True)

    p_compare = sub.add_parser(
        "compare", help="multilevel cost vs modeled standard-MC cost over targets"
    )
    p_compare.add_argument(
        "--epsilon",
        action="append",
        type=float,
        help="RMS accuracy target (repeat for several)",
    )
    add_common(p_compare, plot=True)

    p_evppi = sub.add_parser("evppi", help="EVPI / EVPPI report for one partition")
    p_evppi.add_argument(
        "--epsilon", action="append", type=float, help="RMS target for the gap (exactly one)"
    )
    p_evppi.add_argument(
        "--n", type=int, default=1_000_000, help="samples for the plain-MC EVPI estimate"
    )
    add_common(p_evppi)

    return parser


# ---------------------------------------------------------------------------
# Serialization


def _sanitize(obj):
    """Replace non-finite floats with None so JSON stays strictly standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {key: _sanitize(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(value) for value in obj]
    return obj


def write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_sanitize(payload), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n")


def _cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        # 17 significant digits round-trip any double exactly.
        return format(value, ".17g")
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = [",".join(columns)]
    lines.extend(",".join(_cell(value) for value in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _level_rows(stats: Sequence[LevelStats]) -> list[tuple]:
    return [
        (s.level, s.n, s.mean_z, s.var_z, s.kurtosis_z, s.mean_p, s.var_p, s.cost_per_sample)
        for s in stats
    ]


def _level_dicts(stats: Sequence[LevelStats]) -> list[dict]:
    return [dict(zip(_LEVEL_COLUMNS, row)) for row in _level_rows(stats)]


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


# ---------------------------------------------------------------------------
# Shared argument handling


def _parse_outer(raw: str | None) -> tuple[int, ...] | None:
    if raw is None:
        return None
    try:
        indices = tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"--outer must be a comma-separated index list: {exc}") from exc
    if not indices:
        raise ConfigError("--outer must name at least one variable")
    return indices


def _build_model(args) -> DecisionModel:
    return make_model(
        name=args.model, config=args.config, outer=_parse_outer(args.outer)
    )


def _single_epsilon(args) -> float:
    values = args.epsilon or []
    if len(values) != 1:
        raise ConfigError("give exactly one --epsilon for this command")
    return float(values[0])


def _epsilon_list(args) -> list[float]:
    values = args.epsilon or []
    if not values:
        raise ConfigError("give at least one --epsilon")
    return sorted({float(v) for v in values}, reverse=True)


def _model_label(args) -> str:
    raw = args.model if args.model else Path(args.config).stem
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in raw)


def _output_path(args, default_name: str) -> Path:
    if args.output:
        path = Path(args.output)
    else:
        path = Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _positive(value: int, flag: str) -> int:
    if value < 1:
        raise ConfigError(f"{flag} must be positive")
    return int(value)


def _outer_list(model: DecisionModel) -> list[int] | None:
    if isinstance(model, BkocModel):
        return [int(i) for i in model.spec.outer_indices]
    return None


def _envelope(args, command: str, model: DecisionModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "model": _model_label(args),
        "outer_indices": _outer_list(model),
        "seed": int(args.seed),
    }


# ---------------------------------------------------------------------------
# Plot scripts

_LEVELS_PLOT = """\
# Per-level decay of the correction mean and variances.
set datafile separator ","
set key autotitle columnhead
set key top right
set xlabel "level"
set logscale y 2
plot "{csv}" using 1:(abs($3)) with linespoints title "|mean Z|", \\
     "{csv}" using 1:4 with linespoints title "var Z", \\
     "{csv}" using 1:7 with linespoints title "var P"
"""

_COMPARE_PLOT = """\
# Normalized cost against the accuracy target.
set datafile separator ","
set key autotitle columnhead
set key top right
set xlabel "epsilon"
set logscale xy 10
plot "{csv}" using 1:($1*$1*$2) with linespoints title "eps^2 x multilevel cost", \\
     "{csv}" using 1:($1*$1*$3) with linespoints title "eps^2 x standard cost (modeled)"
"""


def _emit_plot(args, path: Path, template: str) -> Path:
    if getattr(args, "format", None) == "json" or path.suffix == ".json":
        raise ConfigError("--emit-plot-script needs the csv format")
    script = path.with_suffix(path.suffix + ".gnuplot")
    script.write_text(template.format(csv=path.name))
    return script


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_run(args) -> int:
    model = _build_model(args)
    epsilon = _single_epsilon(args)
    config = MlmcConfig(epsilon=epsilon, max_level=_positive(args.max_level, "--max-level"))
    result = mlmc_run(model, config, RandomStream(args.seed), threads=args.threads)
    fmt = args.format or "json"
    path = _output_path(args, f"voimc_run_{_model_label(args)}.{fmt}")
    if fmt == "json":
        payload = _envelope(args, "run", model)
        payload.update(
            {
                "epsilon": result.epsilon,
                "estimate": result.estimate,
                "converged": result.converged,
                "variance_of_estimator": result.variance_of_estimator,
                "bias_estimate": result.bias_estimate,
                "fitted_alpha": result.fitted_alpha,
                "fitted_beta": result.fitted_beta,
                "max_level_used": result.max_level_used,
                "total_cost": result.total_cost,
                "allocations": list(result.allocations),
                "levels": _level_dicts(result.level_stats),
                "history": list(result.history),
                "warnings": list(result.warnings),
            }
        )
        write_json(path, payload)
    else:
        write_csv(path, _LEVEL_COLUMNS, _level_rows(result.level_stats))
    status = "converged" if result.converged else "NOT CONVERGED"
    print(
        f"run {_model_label(args)} epsilon={epsilon:g} estimate={result.estimate:.6g} "
        f"{status} levels=1..{result.max_level_used} cost={result.total_cost} -> {path}"
    )
    if not result.converged:
        _emit_error(
            "non_convergence",
            f"bias target not reached by level {result.max_level_used}; "
            f"partial results written to {path}",
        )
        return 4
    return 0


def _cmd_levels(args) -> int:
    model = _build_model(args)
    stats = level_sweep(
        model,
        _positive(args.max_level, "--max-level"),
        _positive(args.n, "--n"),
        RandomStream(args.seed),
        threads=args.threads,
    )
    try:
        rates = fit_rates(stats, min_level=2)
        rate_note = f"alpha={rates.alpha:.3f} beta={rates.beta:.3f}"
    except InsufficientDataError:
        rates = None
        rate_note = "rates unavailable"
    fmt = args.format or "csv"
    path = _output_path(args, f"voimc_levels_{_model_label(args)}.{fmt}")
    if fmt == "json":
        payload = _envelope(args, "levels", model)
        payload.update(
            {
                "n_per_level": int(args.n),
                "levels": _level_dicts(stats),
                "rates": None
                if rates is None
                else {
                    "alpha": rates.alpha,
                    "beta": rates.beta,
                    "gamma": rates.gamma,
                    "r_squared_alpha": rates.r_squared_alpha,
                    "r_squared_beta": rates.r_squared_beta,
                },
            }
        )
        write_json(path, payload)
    else:
        write_csv(path, _LEVEL_COLUMNS, _level_rows(stats))
    note = ""
    if args.emit_plot_script:
        note = f" plot={_emit_plot(args, path, _LEVELS_PLOT)}"
    print(
        f"levels {_model_label(args)} n={args.n} levels=0..{args.max_level} "
        f"{rate_note} -> {path}{note}"
    )
    return 0


def _cmd_compare(args) -> int:
    model = _build_model(args)
    epsilons = _epsilon_list(args)
    rows = cost_comparison(model, epsilons, RandomStream(args.seed), threads=args.threads)
    fmt = args.format or "csv"
    path = _output_path(args, f"voimc_compare_{_model_label(args)}.{fmt}")
    if fmt == "json":
        payload = _envelope(args, "compare", model)
        payload.update(
            {
                "replications": 1,
                "rows": [
                    {
                        "epsilon": r.epsilon,
                        "mlmc_cost": r.mlmc_cost,
                        "std_cost_model": r.std_cost_model,
                        "ratio": r.ratio,
                    }
                    for r in rows
                ],
            }
        )
        write_json(path, payload)
    else:
        write_csv(
            path,
            _COMPARE_COLUMNS,
            [(r.epsilon, r.mlmc_cost, r.std_cost_model, r.ratio) for r in rows],
        )
    note = ""
    if args.emit_plot_script:
        note = f" plot={_emit_plot(args, path, _COMPARE_PLOT)}"
    ratios = [r.ratio for r in rows]
    print(
        f"compare {_model_label(args)} targets={len(rows)} "
        f"ratio={min(ratios):.3g}..{max(ratios):.3g} -> {path}{note}"
    )
    return 0


def _cmd_evppi(args) -> int:
    model = _build_model(args)
    epsilon = _single_epsilon(args)
    report = evppi_report(
        model,
        None,  # --outer was already applied when the model was built
        epsilon,
        _positive(args.n, "--n"),
        RandomStream(args.seed),
        threads=args.threads,
    )
    fmt = args.format or "json"
    path = _output_path(args, f"voimc_evppi_{_model_label(args)}.{fmt}")
    row = (
        report.evpi,
        report.evpi_std_error,
        report.difference,
        report.difference_rms_error,
        report.evppi,
        report.evppi_rms_error,
    )
    if fmt == "json":
        payload = _envelope(args, "evppi", model)
        payload.update(dict(zip(_EVPPI_COLUMNS, row)))
        payload.update(
            {
                "epsilon": report.epsilon,
                "n_evpi": report.n_evpi,
                "converged": report.converged,
                "total_cost": report.mlmc_result.total_cost,
                "warnings": list(report.mlmc_result.warnings),
            }
        )
        write_json(path, payload)
    else:
        write_csv(path, _EVPPI_COLUMNS, [row])
    status = "" if report.converged else " NOT CONVERGED"
    print(
        f"evppi {_model_label(args)} evpi={report.evpi:.6g} "
        f"difference={report.difference:.6g} evppi={report.evppi:.6g}"
        f"{status} -> {path}"
    )
    if not report.converged:
        _emit_error(
            "non_convergence",
            f"driver did not converge at epsilon={epsilon:g}; "
            f"partial results written to {path}",
        )
        return 4
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "levels": _cmd_levels,
    "compare": _cmd_compare,
    "evppi": _cmd_evppi,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except VoimcError as exc:
        _emit_error("config", str(exc))
        return 3


if __name__ == "__main__":
    sys.exit(main())
