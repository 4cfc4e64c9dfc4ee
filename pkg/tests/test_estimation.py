import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logigof.estimation import (ConvergenceError, DegenerateSampleError,
                                Method, SampleSizeError, _likelihood_equations,
                                fit, fit_mle, fit_moments, psi1, psi2,
                                scaled_residuals)
from logigof.logistic_core import (STANDARD, RngStream, fisher_info, pdf,
                                   sample, score)

SQRT3_OVER_PI = math.sqrt(3.0) / math.pi


def test_method_parse():
    assert Method.parse("moments") is Method.MOMENTS
    assert Method.parse("MOM") is Method.MOMENTS
    assert Method.parse("ml") is Method.MAX_LIKELIHOOD
    assert Method.parse("MLE") is Method.MAX_LIKELIHOOD
    assert Method.parse("maximum-likelihood") is Method.MAX_LIKELIHOOD
    with pytest.raises(ValueError):
        Method.parse("banana")


def test_moment_fit_two_point_sample():
    result = fit_moments(np.array([-1.0, 1.0]))
    assert result.mu_hat == pytest.approx(0.0, abs=1e-15)
    assert result.sigma_hat == pytest.approx(SQRT3_OVER_PI, rel=1e-15)


def test_moment_fit_formulas():
    x = sample(400, stream=RngStream(3))
    result = fit_moments(x)
    assert result.mu_hat == pytest.approx(x.mean(), rel=1e-14)
    assert result.sigma_hat == pytest.approx(x.std() * SQRT3_OVER_PI, rel=1e-14)
    unbiased = fit_moments(x, unbiased=True)
    assert unbiased.sigma_hat == pytest.approx(
        x.std(ddof=1) * SQRT3_OVER_PI, rel=1e-14)


@given(st.integers(0, 2**32), st.floats(-20, 20), st.floats(0.05, 20),
       st.integers(5, 60))
@settings(max_examples=60, deadline=None)
def test_moment_fit_affine_equivariance(seed, shift, scale, n):
    x = sample(n, stream=RngStream(seed))
    base = fit_moments(x)
    moved = fit_moments(shift + scale * x)
    assert moved.mu_hat == pytest.approx(shift + scale * base.mu_hat,
                                         rel=1e-9, abs=1e-9)
    assert moved.sigma_hat == pytest.approx(scale * base.sigma_hat, rel=1e-9)


def test_degenerate_and_short_samples():
    with pytest.raises(DegenerateSampleError):
        fit_moments(np.array([2.0, 2.0, 2.0]))
    with pytest.raises(SampleSizeError):
        fit_moments(np.array([1.0]))
    with pytest.raises(ValueError):
        fit_moments(np.array([1.0, math.nan, 2.0]))
    with pytest.raises(DegenerateSampleError):
        fit_mle(np.array([5.0, 5.0]))


def test_mle_satisfies_likelihood_equations():
    for seed in range(12):
        n = 10 + 40 * seed
        x = sample(max(n, 10), LogisticParams_like(seed), stream=RngStream(60 + seed))
        result = fit_mle(x)
        eq = _likelihood_equations(x, result.mu_hat, result.sigma_hat)
        assert np.all(np.abs(eq) < 1e-8), (seed, eq)
        assert result.converged
        assert result.method is Method.MAX_LIKELIHOOD


def LogisticParams_like(seed):
    from logigof.logistic_core import LogisticParams
    return LogisticParams(mu=-3.0 + seed, sigma=0.2 + 0.5 * seed)


def test_mle_is_consistent():
    from logigof.logistic_core import LogisticParams
    p = LogisticParams(2.5, 0.8)
    x = sample(200_000, p, stream=RngStream(1234))
    result = fit_mle(x)
    assert result.mu_hat == pytest.approx(p.mu, abs=0.02)
    assert result.sigma_hat == pytest.approx(p.sigma, rel=0.02)


def test_mle_affine_equivariance():
    x = sample(80, stream=RngStream(8))
    base = fit_mle(x)
    moved = fit_mle(1.5 + 3.0 * x)
    assert moved.mu_hat == pytest.approx(1.5 + 3.0 * base.mu_hat, abs=1e-7)
    assert moved.sigma_hat == pytest.approx(3.0 * base.sigma_hat, rel=1e-7)


def test_mle_handles_extreme_outlier():
    x = np.concatenate([sample(30, stream=RngStream(21)), [1.0e4]])
    result = fit_mle(x)
    eq = _likelihood_equations(x, result.mu_hat, result.sigma_hat)
    assert np.all(np.abs(eq) < 1e-6)


def test_fit_dispatch():
    x = sample(50, stream=RngStream(300))
    assert fit(x, Method.MOMENTS).method is Method.MOMENTS
    assert fit(x, Method.MAX_LIKELIHOOD).method is Method.MAX_LIKELIHOOD


def test_scaled_residuals_exact_standardization():
    x = sample(37, stream=RngStream(31))
    res = scaled_residuals(x, method=Method.MOMENTS)
    assert res.n == 37
    assert res.values.mean() == pytest.approx(0.0, abs=1e-13)
    # With the divisor-n moment fit, the mean square of the residuals is
    # exactly pi^2/3 by construction.
    assert np.mean(res.values**2) == pytest.approx(math.pi**2 / 3.0, rel=1e-12)


def test_scaled_residuals_affine_invariant():
    x = sample(40, stream=RngStream(77))
    a = scaled_residuals(x).values
    b = scaled_residuals(-2.0 + 0.04 * x).values
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-11)


def test_psi_functions_moments():
    x = np.linspace(-4, 4, 9)
    np.testing.assert_allclose(psi1(x, Method.MOMENTS), x, rtol=1e-14)
    np.testing.assert_allclose(
        psi2(x, Method.MOMENTS), (3.0 * x**2 / math.pi**2 - 1.0) / 2.0,
        rtol=1e-14)


def test_psi_functions_ml_are_information_weighted_scores():
    # For maximum likelihood the influence functions are the inverse Fisher
    # information applied to the score, evaluated at the standard parameters.
    info_inv = np.linalg.inv(fisher_info(STANDARD))
    for x in (-2.5, -0.4, 0.0, 1.1, 3.3):
        s = score(x, STANDARD)
        expected = info_inv @ s
        assert psi1(x, Method.MAX_LIKELIHOOD) == pytest.approx(expected[0],
                                                               rel=1e-12)
        assert psi2(x, Method.MAX_LIKELIHOOD) == pytest.approx(expected[1],
                                                               rel=1e-12)


def test_psi_functions_are_centered():
    import scipy.integrate
    for method in (Method.MOMENTS, Method.MAX_LIKELIHOOD):
        for fun in (psi1, psi2):
            total, _ = scipy.integrate.quad(
                lambda v, f=fun, m=method: f(v, m) * pdf(v), -np.inf, np.inf)
            assert abs(total) < 1e-9, (method, fun)


def test_psi_functions_track_estimator_fluctuations():
    # The linearization sqrt(n) (theta_hat - theta) ~ n^{-1/2} sum psi(X_j)
    # should hold to first order for both estimators on one large sample.
    x = sample(100_000, stream=RngStream(5150))
    n = x.size
    for method in (Method.MOMENTS, Method.MAX_LIKELIHOOD):
        result = fit(x, method)
        lin_mu = psi1(x, method).mean()
        lin_sigma = psi2(x, method).mean()
        assert result.mu_hat == pytest.approx(lin_mu, abs=6.0 / n**0.75)
        assert result.sigma_hat - 1.0 == pytest.approx(lin_sigma,
                                                       abs=6.0 / n**0.75)
