"""Test statistics for logistic goodness-of-fit, plus the asymptotic objects
used to validate them: the process kernel kappa, its derivative helper h,
the limiting covariance kernel K(s, t), and the consistency discrepancy Delta.

The primary statistic integrates, against a Gaussian weight exp(-a t^2), the
squared modulus of an empirical transform that vanishes exactly at the
logistic law.  It is provided in two algebraically identical forms: an O(n^2)
closed form (pairwise Gaussian integrals evaluated analytically) and an
adaptive Gauss-Hermite quadrature of the defining integral, which serves as
the independent oracle for the closed form.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np
from scipy.integrate import quad, quad_vec
from scipy.special import expit

from . import _kernels
from ._kernels import NumericOverflowError
from .estimation import Method, ScaledResiduals, psi1, psi2
from .logistic_core import DomainError, pdf

__all__ = [
    "WeightSpec", "TestOutcome", "QuadratureError", "NumericOverflowError",
    "t_stat_closed", "t_stat_quadrature", "kappa", "h_func",
    "moment_identities", "covariance_kernel", "delta_alternative",
    "s_stat", "s_stat_quadrature", "r_stat", "edf_stats",
]


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to stabilize at the requested tolerance."""


@dataclass(frozen=True)
class WeightSpec:
    """Gaussian weight rate: omega_a(t) = exp(-a t^2), a > 0."""

    a: float = 3.0

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise DomainError(f"weight rate must be positive and finite, got {self.a}")


@dataclass(frozen=True)
class TestOutcome:
    name: str
    tuning: Optional[float]
    value: float
    n: int
    pvalue: Optional[float] = None

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise NumericOverflowError(f"statistic {self.name} is not finite")


# ---------------------------------------------------------------------------
# adaptive Gauss-Hermite machinery


@functools.lru_cache(maxsize=16)
def _hermgauss(k: int):
    return np.polynomial.hermite.hermgauss(k)


def gauss_weighted_integral(fun, a: float, rtol: float = 1e-10,
                            atol: float = 1e-13) -> float:
    """integral of fun(t) * exp(-a t^2) dt by Gauss-Hermite with node doubling.

    ``fun`` must be vectorized over t.  Node counts 15, 30, 60, ... are tried
    until two successive values agree to ``rtol`` (or ``atol`` near zero).
    """
    sqrt_a = math.sqrt(a)
    previous = None
    k = 15
    while k <= 1920:
        nodes, weights = _hermgauss(k)
        value = float(np.dot(weights, fun(nodes / sqrt_a))) / sqrt_a
        if previous is not None:
            if abs(value - previous) <= max(rtol * abs(value), atol):
                return value
        previous = value
        k *= 2
    raise QuadratureError("Gauss-Hermite refinement did not stabilize")


# ---------------------------------------------------------------------------
# the characterisation statistic


def t_stat_closed(res: ScaledResiduals, w: WeightSpec = WeightSpec()) -> TestOutcome:
    """Closed-form evaluation of the characterisation statistic T_{n,a}.

    Each (j, k) pair contributes the analytically evaluated Gaussian-weight
    integral sqrt(pi/a) * exp(-(Y_j-Y_k)^2/4a) * [(2a - (Y_j-Y_k)^2)/4a^2
    + m_j m_k - (Y_j-Y_k)(m_j-m_k)/2a] with m = tanh(Y/2); the sum is
    divided by n.  Agrees with ``t_stat_quadrature`` to quadrature accuracy.
    """
    value = float(_kernels.t_single(res.values, (w.a,))[0])
    return TestOutcome(name="T", tuning=w.a, value=value, n=res.n)


def _t_transform_sq(y: np.ndarray):
    """|empirical transform|^2 as a vectorized function of t."""
    m = np.tanh(y / 2.0)

    def fun(t: np.ndarray) -> np.ndarray:
        phase = np.exp(1j * t[:, None] * y[None, :])
        g = np.mean((1j * t[:, None] - m[None, :]) * phase, axis=1)
        return g.real**2 + g.imag**2

    return fun


def t_stat_quadrature(res: ScaledResiduals, w: WeightSpec = WeightSpec()) -> TestOutcome:
    """Quadrature evaluation of the same statistic; oracle for the closed form."""
    y = np.asarray(res.values, dtype=float)
    value = res.n * gauss_weighted_integral(_t_transform_sq(y), w.a)
    return TestOutcome(name="T", tuning=w.a, value=float(value), n=res.n)


# ---------------------------------------------------------------------------
# process kernel and Taylor helper


def kappa(t, x):
    """Summand kernel of the empirical process behind the statistic.

    kappa(t, x) combines the weight-free integrand terms; it satisfies
    kappa(t, 0) = -t and kappa(0, x) = -tanh(x/2).  Evaluated with logistic
    sigmoids so large |x| cannot overflow.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    ct, st = np.cos(x * t), np.sin(x * t)
    pos, neg = expit(x), expit(-x)
    out = neg * ((1.0 - t) * ct - (t + 1.0) * st) \
        - pos * ((t + 1.0) * ct + (t - 1.0) * st)
    return float(out) if out.ndim == 0 else out


def h_func(t, x):
    """Negative x-derivative of kappa; the first-order Taylor weight.

    Satisfies h(t, 0) = t^2 + 1/2 and h = -d kappa/dx; used in the limiting
    covariance kernel below.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    ct, st = np.cos(x * t), np.sin(x * t)
    pos, neg = expit(x), expit(-x)
    out = t * ((t + 1.0) * ct - (t - 1.0) * st) * neg * neg \
        + 2.0 * (t * t + 1.0) * (ct - st) * pos * neg \
        + t * ((t - 1.0) * ct - (t + 1.0) * st) * pos * pos
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# expectations under the standard logistic law


def _expect(fun, epsabs: float = 1e-11) -> float:
    """E[fun(X)] for X standard logistic, by adaptive quadrature split at 0."""
    def integrand(x):
        return fun(x) * pdf(x)

    left = quad(integrand, -np.inf, 0.0, epsabs=epsabs, epsrel=1e-12, limit=400)
    right = quad(integrand, 0.0, np.inf, epsabs=epsabs, epsrel=1e-12, limit=400)
    return left[0] + right[0]


def moment_identities() -> tuple[float, float, float, float]:
    """Four sigmoid-moment expectations under the standard logistic law.

    Returns numeric values of E[expit(-X)^2], E[|X| expit(X) expit(-X)],
    E[expit(X) expit(-X)], E[|X| expit(-X)^2]; their exact values are
    1/3, log(2)/3 - 1/12, 1/6, and 2 log(2)/3 + 1/12.
    """
    first = _expect(lambda x: expit(-x) ** 2)
    second = _expect(lambda x: np.abs(x) * expit(x) * expit(-x))
    third = _expect(lambda x: expit(x) * expit(-x))
    fourth = _expect(lambda x: np.abs(x) * expit(-x) ** 2)
    return first, second, third, fourth


@functools.lru_cache(maxsize=4)
def _psi_moments(method: Method) -> tuple[float, float, float]:
    e11 = _expect(lambda x: psi1(x, method) ** 2)
    e22 = _expect(lambda x: psi2(x, method) ** 2)
    e12 = _expect(lambda x: psi1(x, method) * psi2(x, method))
    return e11, e22, e12


def covariance_kernel(s: float, t: float, method: Method = Method.MOMENTS) -> float:
    """Covariance K(s, t) of the limiting Gaussian process of the statistic.

    All component expectations are taken under the standard logistic law by
    adaptive quadrature; ``method`` selects the influence functions of the
    estimator whose residuals feed the process.
    """
    e_kk = _expect(lambda x: kappa(s, x) * kappa(t, x))
    eh_s = _expect(lambda x: h_func(s, x))
    eh_t = _expect(lambda x: h_func(t, x))
    exh_s = _expect(lambda x: x * h_func(s, x))
    exh_t = _expect(lambda x: x * h_func(t, x))
    e1k_s = _expect(lambda x: psi1(x, method) * kappa(s, x))
    e1k_t = _expect(lambda x: psi1(x, method) * kappa(t, x))
    e2k_s = _expect(lambda x: psi2(x, method) * kappa(s, x))
    e2k_t = _expect(lambda x: psi2(x, method) * kappa(t, x))
    e11, e22, e12 = _psi_moments(method)
    return (
        e_kk
        + eh_s * e1k_t + eh_t * e1k_s
        + exh_s * e2k_t + exh_t * e2k_s
        + e11 * eh_s * eh_t
        + e22 * exh_s * exh_t
        + e12 * (eh_s * exh_t + exh_s * eh_t)
    )


# ---------------------------------------------------------------------------
# consistency discrepancy against a fixed alternative


class AlternativeDensity(Protocol):
    """Anything with a density and finite mean/standard deviation."""

    def pdf(self, x): ...

    def mean(self) -> float: ...

    def std(self) -> float: ...


def delta_alternative(alt: AlternativeDensity, w: WeightSpec = WeightSpec()) -> float:
    """Population discrepancy Delta of a fixed alternative distribution.

    The alternative is affinely standardized to mean 0 and variance pi^2/3
    (the limit of moment-fitted residuals), then
    Delta = integral over t of |E[(it - tanh(X/2)) exp(itX)]|^2 exp(-a t^2);
    zero exactly when the standardized law is standard logistic.  The scaled
    statistic value/n converges to Delta as the sample grows.
    """
    mean = float(alt.mean())
    std = float(alt.std())
    if not (math.isfinite(mean) and math.isfinite(std) and std > 0):
        raise DomainError("alternative must have a finite mean and positive finite variance")
    c = std * math.sqrt(3.0) / math.pi

    def q(y):
        return alt.pdf(mean + c * y) * c

    lo, hi = _effective_support(q)

    def g_squared(ts: np.ndarray) -> np.ndarray:
        # One adaptive pass integrates, jointly for every node t, the four
        # trigonometric moments E[cos(tY)], E[sin(tY)], E[tanh(Y/2) cos(tY)]
        # and E[tanh(Y/2) sin(tY)] under the standardized density.
        def moment_rows(y: float) -> np.ndarray:
            ty = ts * y
            cos, sin = np.cos(ty), np.sin(ty)
            m = math.tanh(y / 2.0)
            return q(y) * np.concatenate([cos, sin, m * cos, m * sin])

        rows, _ = quad_vec(moment_rows, lo, hi, epsabs=1e-13, epsrel=1e-11,
                           limit=2000)
        e_cos, e_sin, e_mcos, e_msin = np.split(rows, 4)
        re = -(ts * e_sin + e_mcos)
        im = ts * e_cos - e_msin
        return re * re + im * im

    return gauss_weighted_integral(g_squared, w.a, rtol=1e-9, atol=1e-12)


def _effective_support(density, tail: float = 1e-16) -> tuple:
    """Symmetric interval outside which the standardized density is below
    ``tail`` (expanded by doubling, so light tails stay cheap)."""
    r = 30.0
    while r <= 2.0e4:
        if float(density(-r)) < tail and float(density(r)) < tail:
            return -r, r
        r *= 2.0
    raise QuadratureError(
        "alternative density tail decays too slowly for the discrepancy "
        "integral; no effective support below 2e4 found")


# ---------------------------------------------------------------------------
# further statistics


def s_stat(res: ScaledResiduals) -> TestOutcome:
    """Finite-interval (moment generating function based) statistic.

    Pairwise closed form of n times the integral over t in (-1, 1) of the
    squared empirical transform; near-cancelling pairs (|Y_j + Y_k| < 0.1)
    are evaluated by series so the result is accurate to ~1e-12 throughout.
    """
    return TestOutcome(name="S", tuning=None,
                       value=float(_kernels.s_single(res.values)), n=res.n)


def s_stat_quadrature(res: ScaledResiduals) -> TestOutcome:
    """Direct 1-D quadrature of the finite-interval statistic (oracle)."""
    y = np.asarray(res.values, dtype=float)
    m = np.tanh(y / 2.0)

    def integrand(t):
        return np.mean((t - m) * np.exp(t * y)) ** 2

    value, _ = quad(integrand, -1.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    return TestOutcome(name="S", tuning=None, value=res.n * value, n=res.n)


def r_stat(res: ScaledResiduals, v: int = 1) -> TestOutcome:
    """Characteristic-function based competitor statistic of order v."""
    if v < 1 or int(v) != v:
        raise DomainError(f"order must be a positive integer, got {v}")
    value = float(_kernels.r_single(res.values, (int(v),))[0])
    return TestOutcome(name="R", tuning=int(v), value=value, n=res.n)


def edf_stats(res: ScaledResiduals) -> dict[str, TestOutcome]:
    """Empirical-distribution-function statistics KS, CM, AD and WA.

    Sorted residuals are mapped through the standard logistic CDF; values at
    0 or 1 to machine precision are clamped to [1e-15, 1 - 1e-15] and a
    warning flags how many were clamped.
    """
    values, clamped = _kernels.edf_single(res.values)
    if clamped:
        warnings.warn(f"{clamped} probability value(s) clamped away from 0/1",
                      RuntimeWarning, stacklevel=2)
    return {name: TestOutcome(name=name, tuning=None, value=val, n=res.n)
            for name, val in values.items()}
