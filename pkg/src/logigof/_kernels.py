"""Vectorized kernels for the O(n^2) test statistics.

Two entry styles share the same pairwise-term code:

* ``*_single`` functions evaluate one residual vector, chunking over row
  blocks so that even very large samples never materialize an n-by-n array.
* ``*_batch`` functions evaluate a (C, n) stack of residual vectors at once,
  which is the shape the Monte Carlo engine feeds in.

Residual vectors are sorted internally, so every statistic is exactly
invariant under permutations of the input and independent of how the batch
is partitioned.  All reductions run over contiguous axes in a fixed order,
which keeps results bit-reproducible regardless of worker count.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

_SQRT_PI = math.sqrt(math.pi)
# Largest |Y_j + Y_k| the exp/sinh based statistics accept before raising.
_EXP_LIMIT = 700.0
# Below this |Y_j + Y_k| the finite-interval pair integrals switch to series
# evaluation; the direct formulas lose ~4e-16/s^3 to cancellation, so 0.1
# keeps both branches accurate to better than 1e-12 in the overlap band.
_SERIES_CUT = 0.1
_SINHC_CUT = 1e-8
_EDF_EPS = 1e-15


class NumericOverflowError(ArithmeticError):
    """A statistic's exponential terms exceed double-precision range."""


# ---------------------------------------------------------------------------
# pairwise terms


def _t_pair(d, mm, dmd, a: float):
    """Gaussian-weight pair term for the characterisation statistic.

    d is Y_j - Y_k, mm is m_j*m_k and dmd is d*(m_j - m_k) with
    m = tanh(Y/2); each pairwise integral of the weighted integrand has the
    closed value  sqrt(pi/a)*exp(-d^2/4a)*[(2a - d^2)/4a^2 + mm - dmd/2a].
    """
    dd = d * d
    return np.exp(dd / (-4.0 * a)) * (
        (2.0 * a - dd) / (4.0 * a * a) + mm - dmd / (2.0 * a)
    )


def _exp_moments(s):
    """A_r(s) = integral of t^r * exp(t*s) over t in (-1, 1) for r = 0, 1, 2.

    Uses the sinh/cosh closed forms away from 0 and their power series for
    |s| < 0.1 where the closed forms cancel catastrophically.
    """
    s2 = s * s
    a0 = 2.0 * (1.0 + s2 * (1.0 / 6.0 + s2 * (1.0 / 120.0 + s2 * (1.0 / 5040.0 + s2 / 362880.0))))
    a1 = 2.0 * s * (1.0 / 3.0 + s2 * (1.0 / 30.0 + s2 * (1.0 / 840.0 + s2 / 45360.0)))
    a2 = 2.0 * (1.0 / 3.0 + s2 * (1.0 / 10.0 + s2 * (1.0 / 168.0 + s2 / 6480.0)))
    big = np.abs(s) >= _SERIES_CUT
    if np.any(big):
        sb = s[big]
        sh, ch = np.sinh(sb), np.cosh(sb)
        a0[big] = 2.0 * sh / sb
        a1[big] = 2.0 * ch / sb - 2.0 * sh / (sb * sb)
        a2[big] = 2.0 * sh / sb - 4.0 * ch / (sb * sb) + 4.0 * sh / (sb * sb * sb)
    return a0, a1, a2


def _s_pair(s, mj, mk):
    """Pair term of the finite-interval (moment generating) statistic:
    integral over t in (-1,1) of (t - m_j)(t - m_k) exp(t*(Y_j + Y_k))."""
    a0, a1, a2 = _exp_moments(s)
    return a2 - (mj + mk) * a1 + (mj * mk) * a0


def _sinhc(s):
    """sinh(s)/s with the removable singularity filled by its limit 1."""
    out = np.ones_like(s)
    big = np.abs(s) >= _SINHC_CUT
    if np.any(big):
        sb = s[big]
        out[big] = np.sinh(sb) / sb
    return out


def _r_pair(s, v: int):
    """Pair term of the characteristic-function statistic for order v."""
    c = 4.0 * v * v * math.pi**2
    return _sinhc(s) / (c + s * s)


def _r_elementwise(y, v: int):
    """S(v, x) summand of the characteristic-function statistic, elementwise."""
    ch, sh = np.cosh(y), np.sinh(y)
    y2 = y * y
    total = np.zeros_like(y)
    for k in range(1, v + 1):
        q = y2 + (2 * k - 1) ** 2 * math.pi**2
        total += (2 * k - 1) * (q * ch - 2.0 * y * sh) / (q * q)
    return total


def _r_constant(v: int) -> float:
    tail = sum((v - k) / k**2 for k in range(1, v))
    return 2.0 * v * math.pi**2 / 3.0 + 2.0 * tail


def _check_exp_range(y: np.ndarray):
    m = np.nanmax(np.abs(y)) if y.size else 0.0
    if 2.0 * m > _EXP_LIMIT:
        raise NumericOverflowError(
            f"residual magnitude {m:.3g} exceeds the exp-safe range of the statistic"
        )


# ---------------------------------------------------------------------------
# single-sample evaluation (row-blocked; safe for very large n)


def _block_size(n: int) -> int:
    return max(1, min(n, int(4_000_000 // max(n, 1)) or 1))


def t_single(y: np.ndarray, a_values) -> np.ndarray:
    """T statistic of one residual vector for each weight rate in a_values."""
    y = np.sort(np.asarray(y, dtype=float))
    n = y.size
    m = np.tanh(y / 2.0)
    totals = np.zeros(len(a_values))
    step = _block_size(n)
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        d = y[lo:hi, None] - y[None, :]
        mm = m[lo:hi, None] * m[None, :]
        dmd = d * (m[lo:hi, None] - m[None, :])
        for i, a in enumerate(a_values):
            totals[i] += float(np.sum(_t_pair(d, mm, dmd, a)))
    return totals * np.sqrt(math.pi / np.asarray(a_values, dtype=float)) / n


def s_single(y: np.ndarray) -> float:
    """Finite-interval statistic of one residual vector."""
    y = np.sort(np.asarray(y, dtype=float))
    _check_exp_range(y)
    n = y.size
    m = np.tanh(y / 2.0)
    total = 0.0
    step = _block_size(n)
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        s = y[lo:hi, None] + y[None, :]
        total += float(np.sum(_s_pair(s, m[lo:hi, None], m[None, :])))
    return total / n


def r_single(y: np.ndarray, v_values) -> np.ndarray:
    """Characteristic-function statistic of one residual vector per order v."""
    y = np.sort(np.asarray(y, dtype=float))
    _check_exp_range(y)
    n = y.size
    out = np.zeros(len(v_values))
    step = _block_size(n)
    pair_totals = np.zeros(len(v_values))
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        s = y[lo:hi, None] + y[None, :]
        for i, v in enumerate(v_values):
            pair_totals[i] += float(np.sum(_r_pair(s, v)))
    for i, v in enumerate(v_values):
        elem = float(np.sum(_r_elementwise(y, v)))
        out[i] = (4.0 * v * v * math.pi**2 / n) * pair_totals[i] \
            - 4.0 * math.pi**2 * elem + n * _r_constant(v)
    return out


def edf_single(y: np.ndarray):
    """EDF statistics (KS, CM, AD, WA) of one residual vector.

    Returns (values dict, clamp count); probabilities at 0 or 1 to machine
    precision are clamped into [eps, 1-eps] and counted.
    """
    y = np.sort(np.asarray(y, dtype=float))
    n = y.size
    u = expit(y)
    clamped = int(np.sum((u < _EDF_EPS) | (u > 1.0 - _EDF_EPS)))
    u = np.clip(u, _EDF_EPS, 1.0 - _EDF_EPS)
    j = np.arange(1, n + 1, dtype=float)
    d_plus = np.max(j / n - u)
    d_minus = np.max(u - (j - 1.0) / n)
    ks = max(d_plus, d_minus)
    cm = 1.0 / (12.0 * n) + float(np.sum((u - (2.0 * j - 1.0) / (2.0 * n)) ** 2))
    ad = -n - float(np.mean((2.0 * j - 1.0) * (np.log(u) + np.log(1.0 - u[::-1]))))
    wa = cm - n * (float(np.mean(u)) - 0.5) ** 2
    return {"KS": float(ks), "CM": cm, "AD": ad, "WA": wa}, clamped


# ---------------------------------------------------------------------------
# batched evaluation for the Monte Carlo engine


def moment_residuals_batch(x: np.ndarray) -> np.ndarray:
    """Moment-fit residuals of each row of x; degenerate rows become NaN."""
    mu = np.mean(x, axis=1, keepdims=True)
    centered = x - mu
    sd = np.sqrt(np.mean(centered * centered, axis=1, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        y = centered / ((math.sqrt(3.0) / math.pi) * sd)
    y[np.broadcast_to(sd == 0.0, y.shape)] = np.nan
    return y


def compute_batch(y: np.ndarray, specs) -> np.ndarray:
    """Evaluate statistics for every row of a (C, n) residual batch.

    ``specs`` is a sequence of (stat_id, tuning) pairs, e.g. ("T", 3.0),
    ("R", 1), ("KS", None).  Returns an array of shape (len(specs), C).
    Rows containing NaN produce NaN for every statistic.
    """
    y = np.sort(np.asarray(y, dtype=float), axis=1)
    c, n = y.shape
    out = np.full((len(specs), c), np.nan)

    ids = [sid for sid, _ in specs]
    need_pair_t = "T" in ids
    need_pair_s = "S" in ids or "R" in ids

    m = np.tanh(y / 2.0) if ("T" in ids or "S" in ids) else None

    if need_pair_t:
        d = y[:, :, None] - y[:, None, :]
        mm = m[:, :, None] * m[:, None, :]
        dmd = d * (m[:, :, None] - m[:, None, :])
        for i, (sid, tuning) in enumerate(specs):
            if sid == "T":
                a = float(tuning)
                out[i] = math.sqrt(math.pi / a) / n * np.sum(_t_pair(d, mm, dmd, a), axis=(1, 2))
        del d, mm, dmd

    if need_pair_s:
        if not np.all(np.isnan(y)):
            finite_max = np.nanmax(np.abs(y))
            if 2.0 * finite_max > _EXP_LIMIT:
                raise NumericOverflowError(
                    f"residual magnitude {finite_max:.3g} exceeds the exp-safe range"
                )
        s = y[:, :, None] + y[:, None, :]
        if "S" in ids:
            pair = _s_pair(s, m[:, :, None], m[:, None, :])
            vals = np.sum(pair, axis=(1, 2)) / n
            del pair
            for i, (sid, _) in enumerate(specs):
                if sid == "S":
                    out[i] = vals
        for i, (sid, tuning) in enumerate(specs):
            if sid == "R":
                v = int(tuning)
                pair_sum = np.sum(_r_pair(s, v), axis=(1, 2))
                elem_sum = np.sum(_r_elementwise(y, v), axis=1)
                out[i] = (4.0 * v * v * math.pi**2 / n) * pair_sum \
                    - 4.0 * math.pi**2 * elem_sum + n * _r_constant(v)
        del s

    edf_ids = [sid for sid in ids if sid in ("KS", "CM", "AD", "WA")]
    if edf_ids:
        u = np.clip(expit(y), _EDF_EPS, 1.0 - _EDF_EPS)
        j = np.arange(1, n + 1, dtype=float)
        d_plus = np.max(j / n - u, axis=1)
        d_minus = np.max(u - (j - 1.0) / n, axis=1)
        cm = 1.0 / (12.0 * n) + np.sum((u - (2.0 * j - 1.0) / (2.0 * n)) ** 2, axis=1)
        values = {
            "KS": np.maximum(d_plus, d_minus),
            "CM": cm,
            "AD": -n - np.mean((2.0 * j - 1.0) * (np.log(u) + np.log(1.0 - u[:, ::-1])), axis=1),
            "WA": cm - n * (np.mean(u, axis=1) - 0.5) ** 2,
        }
        for i, (sid, _) in enumerate(specs):
            if sid in values:
                out[i] = values[sid]

    return out
