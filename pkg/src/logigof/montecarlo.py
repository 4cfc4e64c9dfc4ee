"""Monte Carlo machinery: critical-value calibration, size/power studies
(including contamination mixtures), and simulated p-values.

Replication r of a run with seed s always draws from the counter-based
substream (s, r), so results are bit-identical no matter how many worker
processes participate.  Replications are evaluated in fixed-size chunks of
vectorized work; chunk boundaries depend only on the sample size, never on
the worker count, and chunk results are concatenated in order.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.stats

from . import _kernels
from .estimation import ConvergenceError, Method, fit_mle
from .logistic_core import (DomainError, LogisticParams, RngStream,
                            sample_from_generator)

WORKERS_ENV_VAR = "LOGIGOF_WORKERS"

SQRT3 = math.sqrt(3.0)


class McError(RuntimeError):
    """Systematic Monte Carlo failure (e.g. >0.1% of replications unusable)."""


# ---------------------------------------------------------------------------
# alternatives


@dataclass(frozen=True)
class AlternativeSpec:
    """A sampleable alternative distribution, possibly a two-part mixture.

    Mixtures draw each observation from the standard logistic base with
    probability 1 - p and from the contaminant with probability p.
    """

    kind: str
    params: tuple = ()
    p: Optional[float] = None
    contaminant: Optional["AlternativeSpec"] = None

    # -- constructors ------------------------------------------------------
    @classmethod
    def logistic(cls, mu: float = 0.0, sigma: float = 1.0):
        if sigma <= 0:
            raise DomainError("scale must be positive")
        if (mu, sigma) == (0.0, 1.0):
            return cls("logistic")
        return cls("logistic", (float(mu), float(sigma)))

    @classmethod
    def normal(cls):
        return cls("normal")

    @classmethod
    def student_t(cls, df: float):
        if df <= 0:
            raise DomainError("degrees of freedom must be positive")
        return cls("t", (float(df),))

    @classmethod
    def cauchy(cls):
        return cls("cauchy")

    @classmethod
    def laplace(cls):
        return cls("laplace")

    @classmethod
    def lognormal(cls, s: float):
        if s <= 0:
            raise DomainError("log-scale must be positive")
        return cls("lognormal", (float(s),))

    @classmethod
    def gamma(cls, k: float):
        if k <= 0:
            raise DomainError("shape must be positive")
        return cls("gamma", (float(k),))

    @classmethod
    def uniform(cls, lo: float = -SQRT3, hi: float = SQRT3):
        if not lo < hi:
            raise DomainError("uniform bounds must satisfy lo < hi")
        return cls("uniform", (float(lo), float(hi)))

    @classmethod
    def beta(cls, alpha: float, beta_: float):
        if alpha <= 0 or beta_ <= 0:
            raise DomainError("beta shapes must be positive")
        return cls("beta", (float(alpha), float(beta_)))

    @classmethod
    def chisquare(cls, df: float):
        if df <= 0:
            raise DomainError("degrees of freedom must be positive")
        return cls("chisquare", (float(df),))

    @classmethod
    def mixture(cls, p: float, contaminant: "AlternativeSpec"):
        if not 0.0 <= p <= 1.0:
            raise DomainError("mixing proportion must lie in [0, 1]")
        if contaminant.kind == "mixture":
            raise DomainError("nested mixtures are not supported")
        return cls("mixture", (), p=float(p), contaminant=contaminant)

    # -- sampling ----------------------------------------------------------
    def sample(self, n: int, stream: RngStream) -> np.ndarray:
        """n iid draws, deterministic given the stream."""
        if n < 1:
            raise DomainError("sample size must be at least 1")
        return self._draw(stream.generator(), n)

    def _draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        kind, params = self.kind, self.params
        if kind == "logistic":
            if params:
                return sample_from_generator(gen, n, LogisticParams(*params))
            return sample_from_generator(gen, n)
        if kind == "normal":
            return gen.standard_normal(n)
        if kind == "t":
            return gen.standard_t(params[0], n)
        if kind == "cauchy":
            return gen.standard_cauchy(n)
        if kind == "laplace":
            return gen.laplace(0.0, 1.0, n)
        if kind == "lognormal":
            return gen.lognormal(0.0, params[0], n)
        if kind == "gamma":
            return gen.gamma(params[0], 1.0, n)
        if kind == "uniform":
            return gen.uniform(params[0], params[1], n)
        if kind == "beta":
            return gen.beta(params[0], params[1], n)
        if kind == "chisquare":
            return gen.chisquare(params[0], n)
        if kind == "mixture":
            if self.p == 0.0:
                return sample_from_generator(gen, n)
            if self.p == 1.0:
                return self.contaminant._draw(gen, n)
            pick = gen.random(n)
            base = sample_from_generator(gen, n)
            contaminated = self.contaminant._draw(gen, n)
            return np.where(pick < self.p, contaminated, base)
        raise DomainError(f"unknown alternative kind: {kind!r}")

    # -- density and moments (for the population discrepancy) ---------------
    def _frozen(self):
        kind, params = self.kind, self.params
        if kind == "logistic":
            if params:
                return scipy.stats.logistic(loc=params[0], scale=params[1])
            return scipy.stats.logistic()
        if kind == "normal":
            return scipy.stats.norm()
        if kind == "t":
            return scipy.stats.t(params[0])
        if kind == "cauchy":
            return scipy.stats.cauchy()
        if kind == "laplace":
            return scipy.stats.laplace()
        if kind == "lognormal":
            return scipy.stats.lognorm(params[0])
        if kind == "gamma":
            return scipy.stats.gamma(params[0])
        if kind == "uniform":
            return scipy.stats.uniform(params[0], params[1] - params[0])
        if kind == "beta":
            return scipy.stats.beta(params[0], params[1])
        if kind == "chisquare":
            return scipy.stats.chi2(params[0])
        raise DomainError(f"no closed density for kind {self.kind!r}")

    def pdf(self, x):
        if self.kind == "mixture":
            base = scipy.stats.logistic().pdf(x)
            return (1.0 - self.p) * base + self.p * self.contaminant.pdf(x)
        return self._frozen().pdf(x)

    def mean(self) -> float:
        if self.kind == "mixture":
            return self.p * self.contaminant.mean()
        return float(self._frozen().mean())

    def std(self) -> float:
        if self.kind == "mixture":
            m_c = self.contaminant.mean()
            second = (1.0 - self.p) * (math.pi**2 / 3.0) \
                + self.p * (self.contaminant.std() ** 2 + m_c**2)
            return math.sqrt(second - self.mean() ** 2)
        return float(self._frozen().std())

    # -- text form ---------------------------------------------------------
    def label(self) -> str:
        if self.kind == "mixture":
            return f"mixture({self.p:g},{self.contaminant.label()})"
        if self.kind == "uniform" and self.params == (-SQRT3, SQRT3):
            return "uniform"
        if self.params:
            inner = ",".join(f"{v:g}" for v in self.params)
            return f"{self.kind}({inner})"
        return self.kind

    _ALIASES = {
        "logistic": "logistic", "l": "logistic",
        "normal": "normal", "n": "normal", "gaussian": "normal",
        "t": "t", "student": "t", "studentt": "t",
        "cauchy": "cauchy", "c": "cauchy",
        "laplace": "laplace", "lp": "laplace",
        "lognormal": "lognormal", "ln": "lognormal",
        "gamma": "gamma",
        "uniform": "uniform", "u": "uniform",
        "beta": "beta", "b": "beta",
        "chisquare": "chisquare", "chisq": "chisquare", "chi2": "chisquare",
        "mixture": "mixture",
    }

    @classmethod
    def parse(cls, text: str) -> "AlternativeSpec":
        """Parse labels like ``t(2)``, ``lognormal(1)`` or ``mixture(0.2,cauchy)``."""
        s = text.strip()
        m = re.fullmatch(r"([A-Za-z0-9_]+)\s*(?:\((.*)\))?", s)
        if not m:
            raise DomainError(f"cannot parse alternative: {text!r}")
        name = cls._ALIASES.get(m.group(1).lower())
        if name is None:
            raise DomainError(f"unknown alternative name: {m.group(1)!r}")
        raw_args = (m.group(2) or "").strip()
        if name == "mixture":
            if "," not in raw_args:
                raise DomainError("mixture needs a proportion and a contaminant")
            p_text, rest = raw_args.split(",", 1)
            return cls.mixture(float(p_text), cls.parse(rest))
        args = [float(v) for v in raw_args.split(",") if v.strip()] if raw_args else []
        builders = {
            "logistic": lambda: cls.logistic(*args),
            "normal": lambda: cls.normal(),
            "t": lambda: cls.student_t(*args),
            "cauchy": lambda: cls.cauchy(),
            "laplace": lambda: cls.laplace(),
            "lognormal": lambda: cls.lognormal(*args),
            "gamma": lambda: cls.gamma(*args),
            "uniform": lambda: cls.uniform(*args) if args else cls.uniform(),
            "beta": lambda: cls.beta(*args),
            "chisquare": lambda: cls.chisquare(*args),
        }
        try:
            return builders[name]()
        except TypeError as exc:
            raise DomainError(f"bad parameters for {name}: {raw_args!r}") from exc


# ---------------------------------------------------------------------------
# statistic identifiers


STAT_IDS = ("T", "S", "R", "KS", "CM", "AD", "WA")
_TUNED = {"T": 3.0, "R": 1}


@dataclass(frozen=True)
class StatSpec:
    """A statistic identifier plus its tuning parameter where one applies."""

    stat_id: str
    tuning: Optional[float] = None

    def __post_init__(self):
        sid = self.stat_id.upper()
        object.__setattr__(self, "stat_id", sid)
        if sid not in STAT_IDS:
            raise DomainError(f"unknown statistic {self.stat_id!r}; valid: {', '.join(STAT_IDS)}")
        if sid in _TUNED:
            tuning = self.tuning if self.tuning is not None else _TUNED[sid]
            tuning = int(tuning) if sid == "R" else float(tuning)
            if tuning <= 0:
                raise DomainError(f"tuning for {sid} must be positive")
            object.__setattr__(self, "tuning", tuning)
        elif self.tuning is not None:
            raise DomainError(f"statistic {sid} takes no tuning parameter")

    @classmethod
    def parse(cls, text: str) -> "StatSpec":
        """Parse forms like ``T:3``, ``R:1`` or ``KS``."""
        part = text.strip()
        if ":" in part:
            sid, _, tun = part.partition(":")
            try:
                tuning = float(tun)
            except ValueError:
                raise DomainError(
                    f"invalid tuning {tun.strip()!r} in {part!r}: expected a number") from None
            return cls(sid.strip(), tuning)
        return cls(part)

    def label(self) -> str:
        if self.tuning is None:
            return self.stat_id
        return f"{self.stat_id}:{self.tuning:g}"

    def key(self) -> tuple:
        return (self.stat_id, self.tuning)


# ---------------------------------------------------------------------------
# configuration and result rows


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DomainError(
                f"{WORKERS_ENV_VAR} must be a positive integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class McConfig:
    """Replication protocol: how many samples, from which seed, how parallel."""

    reps: int
    seed: int
    workers: Optional[int] = None
    method: Method = Method.MOMENTS

    def __post_init__(self):
        if self.reps < 1:
            raise DomainError("replication count must be at least 1")
        if not (0 <= self.seed < 2**64):
            raise DomainError("seed must be a 64-bit unsigned integer")

    def resolved_workers(self) -> int:
        return self.workers if self.workers else default_workers()


@dataclass(frozen=True)
class McRow:
    """One emitted result: (statistic, tuning, n, key, value, SE, excluded)."""

    statistic: str
    tuning: Optional[float]
    n: int
    key: object
    value: float
    mc_std_error: float
    excluded_reps: int


# ---------------------------------------------------------------------------
# the replication engine


def _chunk_reps(n: int) -> int:
    if n <= 25:
        return 4096
    if n <= 64:
        return 1024
    if n <= 160:
        return 256
    return 64


@dataclass(frozen=True)
class _ChunkTask:
    seed: int
    rep_lo: int
    rep_hi: int
    n: int
    specs: tuple
    alternative: AlternativeSpec
    method: Method


def _residuals_for_chunk(x: np.ndarray, method: Method) -> tuple[np.ndarray, int]:
    if method is Method.MOMENTS:
        y = _kernels.moment_residuals_batch(x)
        failures = int(np.isnan(y[:, 0]).sum())
        return y, failures
    y = np.empty_like(x)
    failures = 0
    for i in range(x.shape[0]):
        try:
            fit = fit_mle(x[i])
            y[i] = (x[i] - fit.mu_hat) / fit.sigma_hat
        except (ConvergenceError, ValueError):
            y[i] = np.nan
            failures += 1
    return y, failures


def _run_chunk(task: _ChunkTask) -> tuple[int, np.ndarray, int]:
    count = task.rep_hi - task.rep_lo
    x = np.empty((count, task.n))
    for i in range(count):
        stream = RngStream(task.seed, task.rep_lo + i)
        x[i] = task.alternative.sample(task.n, stream)
    y, failures = _residuals_for_chunk(x, task.method)

    # Rows whose residual range would overflow the exp-based statistics get
    # +inf there (the statistic provably exceeds any calibrated threshold);
    # remaining statistics are still evaluated for those rows.
    with np.errstate(invalid="ignore"):
        row_span = 2.0 * np.nanmax(np.abs(y), axis=1, initial=0.0)
    unsafe = row_span > 690.0
    values = np.empty((len(task.specs), count))
    if np.any(unsafe):
        safe = ~unsafe
        values[:, safe] = _kernels.compute_batch(y[safe], task.specs)
        sub = _kernels.compute_batch(
            np.where(np.isnan(y[unsafe]), np.nan, np.clip(y[unsafe], -300.0, 300.0)),
            task.specs)
        for s_idx, (sid, _) in enumerate(task.specs):
            if sid in ("S", "R"):
                sub[s_idx] = np.inf
        values[:, unsafe] = sub
    else:
        values[:] = _kernels.compute_batch(y, task.specs)
    return task.rep_lo, values, failures


def simulate_statistics(specs: Sequence[StatSpec], n: int, cfg: McConfig,
                        alternative: Optional[AlternativeSpec] = None) -> tuple[np.ndarray, int]:
    """Simulate every requested statistic over cfg.reps replications.

    Returns (values, fit_failures) where values has shape (len(specs), reps);
    replications whose fit failed are NaN columns.  Raises McError when more
    than 0.1% of replications are unusable.
    """
    alt = alternative if alternative is not None else AlternativeSpec.logistic()
    raw_specs = tuple(s.key() for s in specs)
    chunk = _chunk_reps(n)
    tasks = [
        _ChunkTask(cfg.seed, lo, min(lo + chunk, cfg.reps), n, raw_specs, alt, cfg.method)
        for lo in range(0, cfg.reps, chunk)
    ]
    values = np.empty((len(specs), cfg.reps))
    failures = 0
    workers = cfg.resolved_workers()
    if workers <= 1 or len(tasks) == 1:
        results = map(_run_chunk, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=min(workers, len(tasks)))
        try:
            results = list(pool.map(_run_chunk, tasks))
        finally:
            pool.shutdown()
    for rep_lo, chunk_values, chunk_failures in results:
        values[:, rep_lo:rep_lo + chunk_values.shape[1]] = chunk_values
        failures += chunk_failures
    if failures > 0.001 * cfg.reps:
        raise McError(f"{failures} of {cfg.reps} replications failed to fit")
    return values, failures


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class CriticalValueTable:
    """Calibrated upper-tail critical values per (statistic, alpha) at one n."""

    n: int
    method: Method
    entries: dict
    rows: tuple

    def get(self, spec: StatSpec, alpha: float) -> float:
        return self.entries[(spec.key(), alpha)]


def _quantile_with_se(sorted_vals: np.ndarray, prob: float) -> tuple[float, float]:
    m = sorted_vals.size
    q = float(np.quantile(sorted_vals, prob))
    half = math.sqrt(prob * (1.0 - prob) / m)
    lo = float(np.quantile(sorted_vals, max(prob - half, 0.0)))
    hi = float(np.quantile(sorted_vals, min(prob + half, 1.0)))
    return q, (hi - lo) / 2.0


def calibrate(specs: Sequence[StatSpec], n: int, alphas: Sequence[float],
              cfg: McConfig) -> CriticalValueTable:
    """Empirical (1 - alpha) null quantiles for several statistics at once.

    All statistics share one stream of standard-logistic samples, fitted by
    cfg.method; location and scale of the simulated law are irrelevant by
    affine invariance.
    """
    for alpha in alphas:
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"significance level must lie in (0,1), got {alpha}")
    values, _ = simulate_statistics(specs, n, cfg)
    entries = {}
    rows = []
    for i, spec in enumerate(specs):
        vals = values[i]
        valid = np.sort(vals[~np.isnan(vals)])
        excluded = int(vals.size - valid.size)
        for alpha in alphas:
            q, se = _quantile_with_se(valid, 1.0 - alpha)
            entries[(spec.key(), alpha)] = q
            rows.append(McRow(spec.stat_id, spec.tuning, n, alpha, q, se, excluded))
    return CriticalValueTable(n=n, method=cfg.method, entries=entries, rows=tuple(rows))


def critical_values(stat_id: str, tuning: Optional[float], n: int,
                    alphas: Sequence[float], cfg: McConfig) -> CriticalValueTable:
    """Single-statistic calibration (see ``calibrate`` for the batched form)."""
    return calibrate([StatSpec(stat_id, tuning)], n, alphas, cfg)


# ---------------------------------------------------------------------------
# power studies


def power_study(specs: Sequence[StatSpec], alternatives: Sequence[AlternativeSpec],
                n: int, cfg: McConfig, critical_table: CriticalValueTable,
                alpha: float = 0.05) -> list[McRow]:
    """Estimated rejection percentages against each alternative.

    A replication rejects when its statistic exceeds the calibrated critical
    value.  Infinite statistic values (exp-range overflow under heavy-tailed
    alternatives) exceed every threshold and count as rejections; failed fits
    are excluded and reported in the row.
    """
    rows = []
    for alt in alternatives:
        values, _ = simulate_statistics(specs, n, cfg, alternative=alt)
        for i, spec in enumerate(specs):
            vals = values[i]
            valid = vals[~np.isnan(vals)]
            excluded = int(vals.size - valid.size)
            cv = critical_table.get(spec, alpha)
            frac = float(np.mean(valid > cv)) if valid.size else math.nan
            se = 100.0 * math.sqrt(max(frac * (1.0 - frac), 0.0) / max(valid.size, 1))
            rows.append(McRow(spec.stat_id, spec.tuning, n, alt.label(),
                              100.0 * frac, se, excluded))
    return rows


def local_power_curve(contaminant: AlternativeSpec, p_grid: Sequence[float],
                      specs: Sequence[StatSpec], n: int, cfg: McConfig,
                      critical_table: CriticalValueTable,
                      alpha: float = 0.05) -> list[McRow]:
    """Power along a contamination path: mixtures of the logistic base with
    the contaminant at each mixing proportion in p_grid."""
    rows = []
    for p in p_grid:
        alt = AlternativeSpec.mixture(p, contaminant)
        for row in power_study(specs, [alt], n, cfg, critical_table, alpha=alpha):
            rows.append(McRow(row.statistic, row.tuning, row.n, float(p),
                              row.value, row.mc_std_error, row.excluded_reps))
    return rows


# ---------------------------------------------------------------------------
# simulated p-values


def pvalue_simulated(stat_id: str, tuning: Optional[float], observed: float,
                     n: int, cfg: McConfig) -> float:
    """Add-one Monte Carlo p-value: (1 + #{simulated >= observed})/(reps + 1)."""
    if not math.isfinite(observed):
        raise DomainError("observed statistic value must be finite")
    spec = StatSpec(stat_id, tuning)
    values, _ = simulate_statistics([spec], n, cfg)
    vals = values[0]
    valid = vals[~np.isnan(vals)]
    return (1.0 + float(np.sum(valid >= observed))) / (valid.size + 1.0)


def pvalues_simulated(outcomes, n: int, cfg: McConfig) -> list[float]:
    """Add-one p-values for several observed outcomes sharing one null run."""
    specs = [StatSpec(o.name, o.tuning) for o in outcomes]
    values, _ = simulate_statistics(specs, n, cfg)
    out = []
    for i, outcome in enumerate(outcomes):
        vals = values[i]
        valid = vals[~np.isnan(vals)]
        out.append((1.0 + float(np.sum(valid >= outcome.value))) / (valid.size + 1.0))
    return out


# ---------------------------------------------------------------------------
# emission


CSV_COLUMNS = ("statistic", "tuning", "n", "key", "value", "mc_std_error",
               "excluded_reps")


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def rows_to_csv(rows: Sequence[McRow], key_name: str = "key") -> str:
    """Render result rows as CSV with a header; floats carry 6 significant
    digits and fields containing commas (mixture labels) are quoted."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([c if c != "key" else key_name for c in CSV_COLUMNS])
    for r in rows:
        writer.writerow([
            r.statistic,
            _format_value(r.tuning),
            str(r.n),
            _format_value(r.key),
            _format_value(r.value),
            _format_value(r.mc_std_error),
            str(r.excluded_reps),
        ])
    return buffer.getvalue()


def rows_to_text(rows: Sequence[McRow], key_name: str = "key",
                 round_percent: bool = False) -> str:
    """Aligned plain-text table; optionally rounds values to whole percents."""
    header = ["statistic", "tuning", "n", key_name, "value", "se", "excluded"]
    table = [header]
    for r in rows:
        value = str(int(round(r.value))) if round_percent else _format_value(r.value)
        table.append([
            r.statistic, _format_value(r.tuning), str(r.n), _format_value(r.key),
            value, _format_value(r.mc_std_error), str(r.excluded_reps),
        ])
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
             for row in table]
    return "\n".join(lines) + "\n"
