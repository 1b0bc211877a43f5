import math

import mpmath
import numpy as np
import pytest
from scipy import special

from errors import DomainError, RangeError, SingularMatrixError
from special_math import (LN2, central_wishart_logdet_mean, delta_m, exp_integral_ei,
                          exp_integral_ei_reference, log_det_hermitian)


def _ei_points():
    negative = -np.logspace(-3, 2, 50)
    positive = np.logspace(-3, math.log10(300.0), 50)
    return np.concatenate([negative, positive])


class TestExponentialIntegral:

    def test_matches_mpmath(self):
        for x in _ei_points():
            expected = float(mpmath.ei(mpmath.mpf(float(x))))
            assert exp_integral_ei(float(x)) == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_two_schemes_agree(self):
        for x in _ei_points():
            assert exp_integral_ei_reference(float(x)) == pytest.approx(
                exp_integral_ei(float(x)), rel=1e-10, abs=1e-14)

    def test_negative_argument_is_minus_e1(self):
        assert exp_integral_ei(-1.0) == pytest.approx(-0.21938393439552062, rel=1e-14)

    def test_singular_at_zero(self):
        with pytest.raises(DomainError):
            exp_integral_ei(0.0)
        with pytest.raises(DomainError):
            exp_integral_ei_reference(0.0)

    def test_overflow(self):
        with pytest.raises(RangeError):
            exp_integral_ei(800.0)
        with pytest.raises(RangeError):
            exp_integral_ei_reference(800.0)


class TestDeltaM:

    def test_single_antenna_closed_form(self):
        # M = 1 leaves only -Ei(-lam) = E1(lam)
        assert delta_m(1.0, 1) == pytest.approx(0.3165, abs=1e-4)
        assert delta_m(1.0, 1) == pytest.approx(special.exp1(1.0) / LN2, rel=1e-12)

    @pytest.mark.parametrize("lam,M", [(0.5, 1), (2.0, 4), (10.0, 8), (3.0, 2), (40.0, 6)])
    def test_closed_form_matches_series(self, lam, M):
        assert delta_m(lam, M, method="closed_form") == pytest.approx(
            delta_m(lam, M, method="series"), abs=1e-9)

    def test_large_antenna_count_falls_back_to_series(self):
        value = delta_m(0.01, 64)
        assert math.isfinite(value)
        assert value == pytest.approx(delta_m(0.01, 64, method="series"), abs=1e-12)

    @pytest.mark.parametrize("M", [4, 8, 16, 32, 64])
    def test_auto_matches_series_across_scales(self, M):
        for lam in np.logspace(-10, 4, 57):
            lam = float(lam)
            assert delta_m(lam, M) == pytest.approx(delta_m(lam, M, method="series"),
                                                    rel=1e-10, abs=1e-10), lam

    @pytest.mark.parametrize("M", [4, 64])
    def test_tiny_lambda_stays_at_central_value(self, M):
        assert delta_m(1e-10, M) == pytest.approx(special.digamma(M) / LN2, abs=1e-8)

    def test_small_lambda_tends_to_central_value(self):
        # lam -> 0 gives E log2 Gamma(M, 1) = psi(M) / ln 2
        assert delta_m(1e-6, 8) == pytest.approx(special.digamma(8) / LN2, abs=1e-5)

    def test_large_lambda_tends_to_log_of_mean(self):
        assert delta_m(1e6, 8) == pytest.approx(math.log2(1e6 + 8), abs=1e-3)

    def test_increasing_in_lambda(self):
        values = [delta_m(lam, 4) for lam in (0.1, 1.0, 5.0, 20.0, 100.0)]
        assert all(b > a for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("M", [1, 2, 4, 8])
    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 8.0])
    def test_matches_monte_carlo(self, M, lam):
        rng = np.random.default_rng(int(11 * M + 100 * lam))
        samples = 20000
        mean = np.full(M, math.sqrt(lam / M))
        h = mean + (rng.standard_normal((samples, M)) + 1j * rng.standard_normal((samples, M))) / math.sqrt(2)
        values = np.log2(np.sum(np.abs(h) ** 2, axis=1))
        standard_error = values.std(ddof=1) / math.sqrt(samples)
        assert abs(delta_m(lam, M) - values.mean()) < 4 * standard_error

    def test_rejects_bad_arguments(self):
        with pytest.raises(DomainError):
            delta_m(0.0, 4)
        with pytest.raises(DomainError):
            delta_m(1.0, 0)
        with pytest.raises(DomainError):
            delta_m(1.0, 2.5)
        with pytest.raises(DomainError):
            delta_m(1.0, 2, method="bisection")


class TestWishartAndLogDet:

    def test_central_wishart_mean(self):
        expected = sum(special.digamma(64 - k) for k in range(8)) / LN2
        assert central_wishart_logdet_mean(64, 8) == pytest.approx(expected, rel=1e-12)
        assert central_wishart_logdet_mean(64, 8) == pytest.approx(47.2470, abs=1e-3)

    @pytest.mark.parametrize("M,L", [(2, 1), (4, 2), (8, 4)])
    def test_central_wishart_mean_monte_carlo(self, random_channel, M, L):
        samples = [log_det_hermitian(H @ H.conj().T) for H in (random_channel(L, M) for _ in range(8000))]
        standard_error = np.std(samples, ddof=1) / math.sqrt(len(samples))
        assert abs(np.mean(samples) - central_wishart_logdet_mean(M, L)) < 4 * standard_error

    def test_central_wishart_rejects_wide(self):
        with pytest.raises(DomainError):
            central_wishart_logdet_mean(4, 8)

    def test_log_det(self):
        assert log_det_hermitian(np.eye(3)) == pytest.approx(0.0, abs=1e-15)
        assert log_det_hermitian(np.diag([2.0, 4.0])) == pytest.approx(3.0, rel=1e-14)

    def test_log_det_rejects_non_hermitian(self):
        with pytest.raises(DomainError):
            log_det_hermitian(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_log_det_singular(self):
        with pytest.raises(SingularMatrixError) as excinfo:
            log_det_hermitian(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert excinfo.value.value == pytest.approx(0.0, abs=1e-12)
