"""Command-line front end.

Subcommands:
  fit        estimate location/scale from a data file
  test       compute a goodness-of-fit statistic with a simulated p-value
  calibrate  tabulate Monte Carlo critical values as CSV
  power      run a power study or contamination power curve from a config file

Exit codes: 0 success, 2 usage/input error, 3 degenerate data, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from . import montecarlo, statistics
from ._kernels import NumericOverflowError
from .estimation import (ConvergenceError, DegenerateSampleError, Method,
                         SampleSizeError, fit, scaled_residuals)
from .logistic_core import DomainError
from .montecarlo import AlternativeSpec, McConfig, McError, StatSpec

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_NUMERIC = 4

BUNDLED_DATASETS = ("bladder_cancer",)


class InputError(Exception):
    """Unreadable, malformed, or domain-violating input."""


# ---------------------------------------------------------------------------
# data ingestion


@dataclass(frozen=True)
class Dataset:
    """Numbers read from a file, optionally log-transformed."""

    values: np.ndarray
    source: str
    transform: str  # "none" or "log"

    @property
    def n(self) -> int:
        return int(self.values.size)


def bundled_data_path(name: str = "bladder_cancer"):
    """Filesystem path of a dataset shipped inside the package."""
    if name not in BUNDLED_DATASETS:
        raise InputError(f"unknown bundled dataset {name!r}; available: "
                         + ", ".join(BUNDLED_DATASETS))
    return resources.files("logigof").joinpath("data", f"{name}.txt")


def resolve_input(path: str) -> str:
    """Map ``bundled:[name]`` to the packaged dataset file, else pass through.

    Bare ``bundled:`` means the default dataset (bladder_cancer).
    """
    if path.startswith("bundled:"):
        name = path[len("bundled:"):] or "bladder_cancer"
        return str(bundled_data_path(name))
    return path


def load_dataset(path: str, log: bool = False) -> Dataset:
    """Read one number per line; blank lines and ``#`` comments are ignored.

    A malformed line aborts with its line number; under ``log=True`` any
    nonpositive value aborts likewise, and the natural log is applied.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    values = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            value = float(text)
        except ValueError:
            raise InputError(f"{path}:{lineno}: not a number: {text!r}") from None
        if not math.isfinite(value):
            raise InputError(f"{path}:{lineno}: non-finite value: {text!r}")
        if log:
            if value <= 0:
                raise InputError(
                    f"{path}:{lineno}: log transform requires positive values, "
                    f"got {text}")
            value = math.log(value)
        values.append(value)
    if not values:
        raise InputError(f"{path}: no data values found")
    return Dataset(np.asarray(values), path, "log" if log else "none")


# ---------------------------------------------------------------------------
# shared flag helpers


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        items = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"{flag}: expected comma-separated numbers, got {text!r}") from exc
    if not items:
        raise InputError(f"{flag}: empty list")
    return items


def _parse_int_list(text: str, flag: str) -> list[int]:
    return [int(v) for v in _parse_float_list(text, flag)]


def _stat_specs_from_flags(stat_text: str, a_text: str, v_text: str) -> list[StatSpec]:
    specs: list[StatSpec] = []
    for part in stat_text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            specs.append(StatSpec.parse(part))
        elif part.upper() == "T":
            specs.extend(StatSpec("T", a) for a in _parse_float_list(a_text, "--a"))
        elif part.upper() == "R":
            specs.extend(StatSpec("R", v) for v in _parse_int_list(v_text, "--v"))
        else:
            specs.append(StatSpec(part))
    if not specs:
        raise InputError("--stat: no statistics given")
    return specs


def _compute_outcome(spec: StatSpec, res) -> statistics.TestOutcome:
    if spec.stat_id == "T":
        return statistics.t_stat_closed(res, statistics.WeightSpec(spec.tuning))
    if spec.stat_id == "S":
        return statistics.s_stat(res)
    if spec.stat_id == "R":
        return statistics.r_stat(res, int(spec.tuning))
    return statistics.edf_stats(res)[spec.stat_id]


def _write_output(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    data = load_dataset(resolve_input(args.input), log=args.log)
    result = fit(data.values, method=Method.parse(args.method), unbiased=args.unbiased)
    print(f"source = {data.source}")
    print(f"transform = {data.transform}")
    print(f"n = {data.n}")
    print(f"method = {result.method.value}")
    print(f"mu_hat = {_fmt(result.mu_hat)}")
    print(f"sigma_hat = {_fmt(result.sigma_hat)}")
    return EXIT_OK


def cmd_test(args) -> int:
    data = load_dataset(resolve_input(args.input), log=args.log)
    method = Method.parse(args.method)
    res = scaled_residuals(data.values, method=method)
    if args.plot_data:
        n = res.n
        ordered = np.sort(res.values)
        grid = (np.arange(1, n + 1)) / (n + 1.0)
        theo = np.log(grid / (1.0 - grid))
        print("theoretical_quantile,ordered_residual")
        for q, y in zip(theo, ordered):
            print(f"{_fmt(q)},{_fmt(y)}")
        return EXIT_OK
    spec = StatSpec.parse(args.stat) if ":" in args.stat else StatSpec(
        args.stat,
        args.a if args.stat.upper() == "T" else (args.v if args.stat.upper() == "R" else None))
    outcome = _compute_outcome(spec, res)
    cfg = McConfig(reps=args.reps, seed=args.seed, workers=args.workers, method=method)
    pvalue = montecarlo.pvalue_simulated(spec.stat_id, spec.tuning, outcome.value,
                                         data.n, cfg)
    print(f"statistic = {spec.stat_id}")
    print(f"tuning = {'' if spec.tuning is None else _fmt(spec.tuning)}")
    print(f"n = {data.n}")
    print(f"method = {method.value}")
    print(f"value = {_fmt(outcome.value)}")
    print(f"p_value = {_fmt(pvalue)}")
    print(f"reps = {args.reps}")
    print(f"seed = {args.seed}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    specs = _stat_specs_from_flags(args.stat, args.a, args.v)
    n_list = _parse_int_list(args.n, "--n")
    alphas = _parse_float_list(args.alpha_list, "--alpha-list")
    cfg = McConfig(reps=args.reps, seed=args.seed, workers=args.workers,
                   method=Method.parse(args.method))
    rows = []
    for n in n_list:
        table = montecarlo.calibrate(specs, n, alphas, cfg)
        rows.extend(table.rows)
    _write_output(montecarlo.rows_to_csv(rows, key_name="alpha"), args.out)
    return EXIT_OK


_CONFIG_KEYS = {"mode", "n", "reps", "calibration-reps", "seed", "alpha",
                "method", "statistic", "alternative", "contaminant", "p",
                "out", "workers"}
_REPEATABLE = {"statistic", "alternative"}


@dataclass(frozen=True)
class PowerConfig:
    """Parsed study description for the ``power`` subcommand."""

    mode: str
    n_list: tuple
    reps: int
    calibration_reps: int
    seed: int
    alpha: float
    method: Method
    specs: tuple
    alternatives: tuple
    contaminant: Optional[AlternativeSpec]
    p_grid: tuple
    out: Optional[str]
    workers: Optional[int]


def parse_power_config(path: str) -> PowerConfig:
    """Parse the flat ``key = value`` study format (lists comma-separated,
    ``statistic``/``alternative`` repeatable)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    single: dict = {}
    stats: list[str] = []
    alts: list[str] = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise InputError(f"{path}:{lineno}: expected 'key = value', got {text!r}")
        key, _, value = text.partition("=")
        key, value = key.strip().lower(), value.strip()
        if key not in _CONFIG_KEYS:
            raise InputError(f"{path}:{lineno}: unknown key {key!r}; valid keys: "
                             + ", ".join(sorted(_CONFIG_KEYS)))
        if not value:
            raise InputError(f"{path}:{lineno}: empty value for {key!r}")
        if key == "statistic":
            stats.append(value)
        elif key == "alternative":
            alts.append(value)
        elif key in single:
            raise InputError(f"{path}:{lineno}: duplicate key {key!r}")
        else:
            single[(key)] = (lineno, value)

    def take(key: str, default=None) -> tuple[int, Optional[str]]:
        if key in single:
            return single.pop(key)
        return (0, default)

    def fail(lineno: int, key: str, value, reason: str):
        raise InputError(f"{path}:{lineno}: bad value for {key!r} ({value!r}): {reason}")

    try:
        ln, mode = take("mode", "power")
        if mode not in ("power", "local-power"):
            fail(ln, "mode", mode, "expected 'power' or 'local-power'")
        ln, n_text = take("n")
        if n_text is None:
            raise InputError(f"{path}: missing required key 'n'")
        n_list = tuple(_parse_int_list(n_text, "n"))
        ln, reps_text = take("reps", "10000")
        reps = int(reps_text)
        ln, cal_text = take("calibration-reps")
        calibration_reps = int(cal_text) if cal_text is not None else reps
        ln, seed_text = take("seed", "1")
        seed = int(seed_text)
        ln, alpha_text = take("alpha", "0.05")
        alpha = float(alpha_text)
        if not 0.0 < alpha < 1.0:
            fail(ln, "alpha", alpha_text, "must lie strictly between 0 and 1")
        ln, method_text = take("method", "moments")
        method = Method.parse(method_text)
        ln, out = take("out")
        ln, workers_text = take("workers")
        workers = int(workers_text) if workers_text is not None else None
        if not stats:
            raise InputError(f"{path}: at least one 'statistic = ...' line is required")
        specs = tuple(StatSpec.parse(s) for s in stats)
        contaminant = None
        p_grid: tuple = ()
        alternatives: tuple = ()
        if mode == "local-power":
            ln, cont_text = take("contaminant")
            if cont_text is None:
                raise InputError(f"{path}: mode 'local-power' requires 'contaminant'")
            contaminant = AlternativeSpec.parse(cont_text)
            ln, p_text = take("p")
            if p_text is None:
                raise InputError(f"{path}: mode 'local-power' requires 'p'")
            p_grid = tuple(_parse_float_list(p_text, "p"))
            if alts:
                raise InputError(f"{path}: 'alternative' lines are only for mode 'power'")
        else:
            if not alts:
                raise InputError(f"{path}: at least one 'alternative = ...' line is required")
            alternatives = tuple(AlternativeSpec.parse(a) for a in alts)
            if "contaminant" in single or "p" in single:
                raise InputError(f"{path}: 'contaminant'/'p' are only for mode 'local-power'")
    except (ValueError, DomainError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    return PowerConfig(mode, n_list, reps, calibration_reps, seed, alpha, method,
                       specs, alternatives, contaminant, p_grid, out, workers)


def cmd_power(args) -> int:
    config = parse_power_config(args.config)
    workers = args.workers if args.workers else config.workers
    cal_cfg = McConfig(reps=config.calibration_reps, seed=config.seed,
                       workers=workers, method=config.method)
    # Power replications draw under an offset seed so that a pure-logistic
    # alternative never reuses the exact samples the thresholds came from.
    study_cfg = McConfig(reps=config.reps, seed=(config.seed + 1) % 2**64,
                         workers=workers, method=config.method)
    rows = []
    for n in config.n_list:
        table = montecarlo.calibrate(config.specs, n, [config.alpha], cal_cfg)
        if config.mode == "power":
            rows.extend(montecarlo.power_study(
                config.specs, config.alternatives, n, study_cfg, table,
                alpha=config.alpha))
        else:
            rows.extend(montecarlo.local_power_curve(
                config.contaminant, config.p_grid, config.specs, n, study_cfg,
                table, alpha=config.alpha))
    key_name = "alternative" if config.mode == "power" else "p"
    csv_text = montecarlo.rows_to_csv(rows, key_name=key_name)
    if config.out:
        _write_output(csv_text, config.out)
        sys.stdout.write(montecarlo.rows_to_text(rows, key_name=key_name,
                                                 round_percent=True))
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logigof",
        description="Goodness-of-fit tests for the logistic distribution.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_fit_flags(p):
        p.add_argument("input", help="data file, one number per line "
                                      "(or 'bundled:' for the packaged example)")
        p.add_argument("--log", action="store_true",
                       help="apply a natural-log transform (requires positive data)")
        p.add_argument("--method", default="moments",
                       help="estimation method: moments (default) or ml")

    p_fit = sub.add_parser("fit", help="estimate location and scale")
    add_common_fit_flags(p_fit)
    p_fit.add_argument("--unbiased", action="store_true",
                       help="use the n-1 variance divisor for the moment fit")
    p_fit.set_defaults(func=cmd_fit)

    p_test = sub.add_parser("test", help="goodness-of-fit test with simulated p-value")
    add_common_fit_flags(p_test)
    p_test.add_argument("--stat", default="T",
                        help="statistic: T, S, R, KS, CM, AD or WA (also 'T:4' form)")
    p_test.add_argument("--a", type=float, default=3.0,
                        help="weight decay for T (default 3)")
    p_test.add_argument("--v", type=int, default=1,
                        help="frequency cutoff for R (default 1)")
    p_test.add_argument("--reps", type=int, default=10000,
                        help="null replications for the p-value (default 10000)")
    p_test.add_argument("--seed", type=int, default=1, help="RNG seed (default 1)")
    p_test.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: all cores, or "
                             f"${montecarlo.WORKERS_ENV_VAR})")
    p_test.add_argument("--plot-data", action="store_true",
                        help="emit probability-plot coordinates as CSV and exit")
    p_test.set_defaults(func=cmd_test)

    p_cal = sub.add_parser("calibrate", help="tabulate Monte Carlo critical values")
    p_cal.add_argument("--stat", default="T",
                       help="comma list of statistics (T expands over --a, R over --v)")
    p_cal.add_argument("--a", default="3", help="comma list of weight decays for T")
    p_cal.add_argument("--v", default="1", help="comma list of frequency cutoffs for R")
    p_cal.add_argument("--n", required=True, help="comma list of sample sizes")
    p_cal.add_argument("--alpha-list", default="0.01,0.05,0.1",
                       help="comma list of significance levels")
    p_cal.add_argument("--reps", type=int, default=10000)
    p_cal.add_argument("--seed", type=int, default=1)
    p_cal.add_argument("--method", default="moments")
    p_cal.add_argument("--workers", type=int, default=None)
    p_cal.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    p_cal.set_defaults(func=cmd_calibrate)

    p_pow = sub.add_parser("power", help="power study driven by a config file")
    p_pow.add_argument("--config", required=True, help="key = value study description")
    p_pow.add_argument("--workers", type=int, default=None,
                       help="override the config's worker count")
    p_pow.set_defaults(func=cmd_power)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateSampleError, SampleSizeError) as exc:
        print(f"error: degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ConvergenceError, NumericOverflowError, statistics.QuadratureError,
            McError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
