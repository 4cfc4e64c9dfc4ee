import math

import numpy as np
import pytest
import scipy.integrate
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from logigof.estimation import Method, ScaledResiduals, fit_moments, scaled_residuals
from logigof.logistic_core import RngStream, sample
from logigof.statistics import (DomainError, WeightSpec, covariance_kernel,
                                delta_alternative, edf_stats,
                                gauss_weighted_integral, h_func, kappa,
                                moment_identities, r_stat, s_stat,
                                s_stat_quadrature, t_stat_closed,
                                t_stat_quadrature)

residual_vectors = arrays(
    np.float64, st.integers(4, 16),
    elements=st.floats(-8, 8, allow_nan=False, width=64),
).filter(lambda v: v.std() > 1e-3)


def _residuals(values) -> ScaledResiduals:
    return scaled_residuals(np.asarray(values, dtype=float))


def _raw(values) -> ScaledResiduals:
    values = np.asarray(values, dtype=float)
    fit = fit_moments(np.array([-1.0, 1.0]))
    return ScaledResiduals(values=values, fit=fit)


# ---------------------------------------------------------------------------
# weighted-L2 statistic (Gaussian weight)


def test_weight_spec_validation():
    with pytest.raises(DomainError):
        WeightSpec(0.0)
    with pytest.raises(DomainError):
        WeightSpec(-2.0)
    with pytest.raises(DomainError):
        WeightSpec(math.inf)


def test_t_stat_at_zero_vector_has_closed_value():
    # With every residual zero the empirical transform is i*t, so the
    # statistic equals n * integral of t^2 exp(-a t^2) = n sqrt(pi)/(2 a^1.5).
    for n in (3, 10):
        for a in (1.0, 3.0, 5.0):
            res = _raw(np.zeros(n))
            expected = n * math.sqrt(math.pi) / (2.0 * a**1.5)
            assert t_stat_closed(res, WeightSpec(a)).value == pytest.approx(
                expected, rel=1e-12)


def test_t_stat_outcome_metadata():
    res = _residuals(sample(25, stream=RngStream(1)))
    out = t_stat_closed(res, WeightSpec(4.0))
    assert out.name == "T"
    assert out.tuning == 4.0
    assert out.n == 25
    assert out.value >= 0.0


def test_t_stat_matches_quadrature_oracle():
    for seed in range(5):
        res = _residuals(sample(12 + seed, stream=RngStream(1000 + seed)))
        for a in (1.0, 3.0, 5.0):
            closed = t_stat_closed(res, WeightSpec(a)).value
            quadrature = t_stat_quadrature(res, WeightSpec(a)).value
            assert closed == pytest.approx(quadrature, rel=1e-9)


@given(residual_vectors, st.sampled_from([0.5, 1.0, 3.0, 5.0, 10.0]))
@settings(max_examples=60, deadline=None)
def test_t_stat_nonnegative(values, a):
    res = _raw(values)
    assert t_stat_closed(res, WeightSpec(a)).value >= -1e-12


@given(residual_vectors)
@settings(max_examples=40, deadline=None)
def test_t_stat_decreasing_in_weight_rate(values):
    res = _raw(values)
    v1 = t_stat_closed(res, WeightSpec(1.0)).value
    v3 = t_stat_closed(res, WeightSpec(3.0)).value
    v5 = t_stat_closed(res, WeightSpec(5.0)).value
    assert v1 >= v3 >= v5


def test_t_stat_exactly_permutation_invariant():
    values = sample(30, stream=RngStream(2))
    res = _raw(values)
    shuffled = _raw(np.random.default_rng(0).permutation(values))
    assert t_stat_closed(res, WeightSpec(3.0)).value == \
        t_stat_closed(shuffled, WeightSpec(3.0)).value


def test_t_stat_affine_invariant_through_fitting():
    x = sample(35, stream=RngStream(44))
    v1 = t_stat_closed(scaled_residuals(x), WeightSpec(3.0)).value
    v2 = t_stat_closed(scaled_residuals(7.0 - 0.3 * x), WeightSpec(3.0)).value
    # The fitted scale is sign-less, and the statistic is symmetric under
    # reflecting the residuals, so a negative-slope map leaves it unchanged.
    assert v1 == pytest.approx(v2, rel=1e-10)


def test_gauss_weighted_integral_on_known_integrals():
    # integral exp(-a t^2) dt and integral t^2 exp(-a t^2) dt.
    for a in (0.5, 3.0):
        v0 = gauss_weighted_integral(lambda t: np.ones_like(t), a)
        v2 = gauss_weighted_integral(lambda t: t * t, a)
        assert v0 == pytest.approx(math.sqrt(math.pi / a), rel=1e-12)
        assert v2 == pytest.approx(math.sqrt(math.pi / a) / (2 * a), rel=1e-11)


# ---------------------------------------------------------------------------
# process kernel and asymptotic covariance


def test_kappa_special_values():
    for t in (-2.0, -0.5, 0.0, 1.0, 4.0):
        assert kappa(t, 0.0) == pytest.approx(-t, abs=1e-14)
    for x in (-3.0, 0.7, 11.0):
        assert kappa(0.0, x) == pytest.approx(-math.tanh(x / 2.0), rel=1e-12)


def test_kappa_centered_under_null():
    # The defining property: E[kappa(t, X)] = 0 when X is standard logistic.
    from logigof.logistic_core import pdf
    for t in (0.3, 1.0, 2.5):
        total, _ = scipy.integrate.quad(
            lambda x, t=t: kappa(t, x) * pdf(x), -np.inf, np.inf)
        assert abs(total) < 1e-9


def test_h_func_special_values():
    for t in (-1.0, 0.0, 0.7, 2.0):
        assert h_func(t, 0.0) == pytest.approx(t * t + 0.5, rel=1e-12)


def test_h_func_is_negative_x_derivative_of_kappa():
    eps = 1e-6
    for t in (0.4, 1.3):
        for x in (-2.0, -0.3, 0.9, 3.1):
            fd = (kappa(t, x + eps) - kappa(t, x - eps)) / (2 * eps)
            assert h_func(t, x) == pytest.approx(-fd, rel=1e-7, abs=1e-9)


def test_h_func_matches_location_scale_sensitivity():
    # Shifting location by d moves kappa(t, y) to kappa(t, y - d); its
    # derivative at d=0 recovers h, which is how the estimated parameters
    # enter the asymptotic expansion.
    eps = 1e-6
    t, y = 0.8, 1.7
    fd = (kappa(t, y - eps) - kappa(t, y + eps)) / (2 * eps)
    assert fd == pytest.approx(h_func(t, y), rel=1e-7)


def test_moment_identities_exact():
    i1, i2, i3, i4 = moment_identities()
    assert i1 == pytest.approx(1.0 / 3.0, abs=1e-10)
    assert i2 == pytest.approx(math.log(2.0) / 3.0 - 1.0 / 12.0, abs=1e-10)
    assert i3 == pytest.approx(1.0 / 6.0, abs=1e-10)
    assert i4 == pytest.approx(2.0 * math.log(2.0) / 3.0 + 1.0 / 12.0, abs=1e-10)


def test_covariance_kernel_symmetry_and_positivity():
    for method in (Method.MOMENTS, Method.MAX_LIKELIHOOD):
        k_st = covariance_kernel(0.5, 1.0, method)
        k_ts = covariance_kernel(1.0, 0.5, method)
        assert k_st == pytest.approx(k_ts, rel=1e-9)
        assert covariance_kernel(0.8, 0.8, method) > 0.0
        # 2x2 Gram matrix of the Gaussian limit must be PSD.
        gram = np.array([[covariance_kernel(0.5, 0.5, method), k_st],
                         [k_st, covariance_kernel(1.0, 1.0, method)]])
        assert np.linalg.eigvalsh(gram).min() > -1e-10


# ---------------------------------------------------------------------------
# population discrepancy


DELTA_NORMAL_GOLDEN = 0.0014988821170463  # frozen from two independent runs


def test_delta_zero_at_logistic():
    from logigof.montecarlo import AlternativeSpec
    assert abs(delta_alternative(AlternativeSpec.logistic(), WeightSpec(3.0))) \
        <= 1e-10


def test_delta_normal_matches_golden_value():
    from logigof.montecarlo import AlternativeSpec
    value = delta_alternative(AlternativeSpec.normal(), WeightSpec(3.0))
    assert value == pytest.approx(DELTA_NORMAL_GOLDEN, rel=1e-8)


def test_delta_positive_for_common_alternatives():
    from logigof.montecarlo import AlternativeSpec
    for alt in (AlternativeSpec.laplace(), AlternativeSpec.gamma(2.0)):
        assert delta_alternative(alt, WeightSpec(3.0)) > 1e-3


def test_delta_rejects_undefined_variance():
    from logigof.montecarlo import AlternativeSpec
    with pytest.raises(DomainError):
        delta_alternative(AlternativeSpec.cauchy(), WeightSpec(3.0))


# ---------------------------------------------------------------------------
# finite-interval statistic


def test_s_stat_at_zero_vector():
    # Transform reduces to t; n * integral_{-1}^{1} t^2 dt = 2n/3.
    for n in (4, 9):
        res = _raw(np.zeros(n))
        assert s_stat(res).value == pytest.approx(2.0 * n / 3.0, rel=1e-12)


def test_s_stat_matches_quadrature_oracle():
    for seed in range(5):
        res = _residuals(sample(10 + 2 * seed, stream=RngStream(2000 + seed)))
        closed = s_stat(res).value
        quadrature = s_stat_quadrature(res).value
        assert closed == pytest.approx(quadrature, rel=1e-9)


def test_s_stat_series_handles_cancelling_pairs():
    # Pairs with Y_j = -Y_k make the pair argument exactly zero, which the
    # direct closed form cannot evaluate; the series branch must take over
    # seamlessly, including nearly-cancelling pairs.
    for delta in (0.0, 1e-9, 1e-5, 0.05):
        values = np.array([1.3, -1.3 + delta, 0.4, -0.2])
        res = _raw(values)
        closed = s_stat(res).value
        oracle = s_stat_quadrature(res).value
        assert closed == pytest.approx(oracle, rel=1e-9), delta


@given(residual_vectors)
@settings(max_examples=40, deadline=None)
def test_s_stat_nonnegative(values):
    assert s_stat(_raw(values)).value >= -1e-12


# ---------------------------------------------------------------------------
# trigonometric-moment statistic


def test_r_stat_validation():
    res = _raw(np.array([0.1, -0.4, 0.2]))
    with pytest.raises(DomainError):
        r_stat(res, 0)
    with pytest.raises(DomainError):
        r_stat(res, -1)


def test_r_stat_matches_high_precision_reference():
    # Independent slow implementation with 50-digit arithmetic.
    mpmath = pytest.importorskip("mpmath")
    mp = mpmath.mp
    mp.dps = 50

    def reference(values, v):
        n = len(values)
        pi2 = mpmath.pi**2
        total = mp.mpf(0)
        for yj in values:
            for yk in values:
                s = mp.mpf(yj) + mp.mpf(yk)
                sinhc = mpmath.sinh(s) / s if s != 0 else mp.mpf(1)
                total += sinhc / (4 * v**2 * pi2 + s**2)
        first = 4 * v**2 * pi2 / n * total
        second = mp.mpf(0)
        for y in values:
            x = mp.mpf(y)
            for k in range(1, v + 1):
                denom = x**2 + (2 * k - 1)**2 * pi2
                second += (2 * k - 1) * (denom * mpmath.cosh(x)
                                         - 2 * x * mpmath.sinh(x)) / denom**2
        third = n * (2 * v * pi2 / 3
                     + 2 * sum(mp.mpf(v - k) / k**2 for k in range(1, v)))
        return float(first - 4 * pi2 * second + third)

    values = [0.83, -1.91, 0.07, 2.44, -0.52]
    res = _raw(np.array(values))
    for v in (1, 2, 3):
        assert r_stat(res, v).value == pytest.approx(reference(values, v),
                                                     rel=1e-11)


def test_r_stat_handles_exactly_cancelling_pair():
    res = _raw(np.array([2.0, -2.0, 0.5]))
    value = r_stat(res, 1).value
    assert np.isfinite(value)


def test_r_stat_permutation_invariant():
    values = sample(20, stream=RngStream(3))
    a = r_stat(_raw(values), 2).value
    b = r_stat(_raw(values[::-1].copy()), 2).value
    assert a == b


# ---------------------------------------------------------------------------
# distribution-function statistics


def _edf_reference(values):
    # Independent implementations straight from the order-statistic formulas.
    u = np.sort(scipy.stats.logistic.cdf(values))
    n = u.size
    j = np.arange(1, n + 1)
    d_plus = np.max(j / n - u)
    d_minus = np.max(u - (j - 1) / n)
    ks = max(d_plus, d_minus)
    cm = 1.0 / (12 * n) + np.sum((u - (2 * j - 1) / (2 * n))**2)
    ad = -n - np.mean((2 * j - 1) * (np.log(u) + np.log(1 - u[::-1])))
    wa = cm - n * (u.mean() - 0.5)**2
    return {"KS": ks, "CM": cm, "AD": ad, "WA": wa}


def test_edf_stats_match_reference_formulas():
    res = _residuals(sample(40, stream=RngStream(4)))
    expected = _edf_reference(res.values)
    outcomes = edf_stats(res)
    assert set(outcomes) == {"KS", "CM", "AD", "WA"}
    for name, out in outcomes.items():
        assert out.value == pytest.approx(expected[name], rel=1e-12), name
        assert out.name == name
        assert out.n == res.n


def test_ks_cm_match_library_implementations():
    res = _residuals(sample(60, stream=RngStream(5)))
    outcomes = edf_stats(res)
    ks_ref = scipy.stats.kstest(res.values, scipy.stats.logistic.cdf).statistic
    cm_ref = scipy.stats.cramervonmises(res.values,
                                        scipy.stats.logistic.cdf).statistic
    assert outcomes["KS"].value == pytest.approx(ks_ref, rel=1e-12)
    assert outcomes["CM"].value == pytest.approx(cm_ref, rel=1e-12)


def test_edf_warns_when_probabilities_clamp():
    res = _raw(np.array([0.0, 0.5, -0.25, 800.0]))
    with pytest.warns(RuntimeWarning):
        edf_stats(res)


@given(residual_vectors)
@settings(max_examples=40, deadline=None)
def test_edf_ranges(values):
    outcomes = edf_stats(_raw(values))
    assert 0.0 <= outcomes["KS"].value <= 1.0
    assert outcomes["CM"].value >= 1.0 / (12 * values.size) - 1e-12
    assert outcomes["WA"].value <= outcomes["CM"].value + 1e-12
