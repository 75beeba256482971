"""Scalar special functions: worked examples, closed-form cross-routes, and
the analytic properties the engines rely on."""

import math

import numpy as np
import pytest
from scipy import integrate as sci_integrate
from scipy import special

from mvgamma.errors import DomainError
from mvgamma.specfun import (
    NonCentralParams,
    SeriesValue,
    erf,
    gamma_cdf,
    gamma_pdf,
    g0_step,
    hyp0f1,
    laguerre_gen,
    laguerre_weight,
    nc_gamma_cdf,
    nc_gamma_cdf_erf_route,
    nc_gamma_cdf_finite_correction_route,
    nc_gamma_cdf_integral_route,
    nc_gamma_pdf,
    poisson_kernel,
)


class TestGammaPdfCdf:
    def test_exponential_case(self):
        assert abs(gamma_pdf(1.0, 1.0) - math.exp(-1.0)) < 1e-15
        assert gamma_pdf(0.0, 2.0) == 0.0
        assert gamma_pdf(0.0, 0.5) == math.inf

    def test_cdf_values(self):
        assert abs(gamma_cdf(1.0, 1.0) - (1.0 - math.exp(-1.0))) < 1e-14
        assert abs(gamma_cdf(1.0, 0.5) - special.erf(1.0)) < 1e-14

    def test_pdf_is_cdf_derivative(self):
        # central finite difference of the cdf at x = 2.5, alpha = 0.5
        h = 1e-5
        num = (gamma_cdf(2.5 + h, 0.5) - gamma_cdf(2.5 - h, 0.5)) / (2 * h)
        assert abs(num - gamma_pdf(2.5, 0.5)) < 1e-7

    def test_cdf_matches_quadrature(self):
        val, err = sci_integrate.quad(lambda t: gamma_pdf(t, 2.7), 0.0, 3.0, epsabs=1e-13)
        assert abs(gamma_cdf(3.0, 2.7) - val) < 1e-10

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            gamma_pdf(-1.0, 1.0)
        with pytest.raises(DomainError):
            gamma_cdf(1.0, 0.0)

    def test_pdf_normalizes(self):
        for alpha in (0.5, 1.0, 3.3):
            val, _ = sci_integrate.quad(lambda t: gamma_pdf(t, alpha), 0.0, np.inf)
            assert abs(val - 1.0) < 1e-9


class TestNonCentralCdf:
    def test_zero_noncentrality_reduces_to_central(self):
        r = nc_gamma_cdf(NonCentralParams(1.5, 2.0, 0.0))
        assert r.converged
        assert abs(r.value - gamma_cdf(2.0, 1.5)) < 1e-14

    def test_half_shape_erf_value(self):
        r = nc_gamma_cdf(NonCentralParams(0.5, 1.0, 1.0))
        expected = 0.5 * (erf(2.0) + erf(0.0))
        assert abs(r.value - expected) < 1e-12
        assert abs(expected - 0.4976611) < 5e-8

    def test_g0_step(self):
        assert g0_step(-1.0) == 0.0
        assert g0_step(0.0) == 0.5
        assert g0_step(2.0) == 1.0

    def test_finite_correction_route(self):
        series = nc_gamma_cdf(NonCentralParams(3.0, 4.0, 2.5), tol=1e-13)
        closed = nc_gamma_cdf_finite_correction_route(4.0, 2.5, 3.0)
        assert abs(series.value - closed) < 1e-10

    def test_closed_forms_randomized(self, rng):
        # half-odd shapes against the erf/Bessel route
        for _ in range(40):
            x, y = rng.uniform(0.05, 10.0, 2)
            n = int(rng.integers(0, 3))
            series = nc_gamma_cdf(NonCentralParams(n + 0.5, x, y), tol=1e-13)
            assert abs(series.value - nc_gamma_cdf_erf_route(x, y, n + 0.5)) < 1e-10
        # integer shapes against the trigonometric integral
        for _ in range(15):
            x, y = rng.uniform(0.05, 10.0, 2)
            n = int(rng.integers(1, 5))
            series = nc_gamma_cdf(NonCentralParams(float(n), x, y), tol=1e-13)
            assert abs(series.value - nc_gamma_cdf_integral_route(x, y, n)) < 1e-10

    def test_probability_range_real(self, rng):
        for _ in range(30):
            alpha = rng.uniform(0.2, 6.0)
            x, y = rng.uniform(0.0, 25.0, 2)
            r = nc_gamma_cdf(NonCentralParams(alpha, x, y))
            assert 0.0 <= r.value <= 1.0

    def test_convergence_metadata(self):
        r = nc_gamma_cdf(NonCentralParams(1.0, 2.0, 5.0), tol=1e-12)
        assert isinstance(r, SeriesValue)
        assert r.converged and r.abs_error_estimate <= 1e-12 and r.terms_used >= 1

    def test_limit_scaling(self):
        # G_a(x/e; y/e) -> step(x - y) as e -> 0
        eps = 1e-3
        hi = nc_gamma_cdf(NonCentralParams(1.0, 2.0 / eps, 1.0 / eps))
        lo = nc_gamma_cdf(NonCentralParams(1.0, 1.0 / eps, 2.0 / eps))
        assert hi.value >= 0.999
        assert lo.value <= 0.001

    def test_tp2_log_supermodularity_grid(self):
        # discrete mixed differences of log G_a(x; y) stay non-negative
        for alpha in (0.5, 1.0, 2.5):
            xs = np.linspace(0.4, 8.0, 20)
            ys = np.linspace(0.4, 8.0, 20)
            logg = np.array(
                [[math.log(nc_gamma_cdf(NonCentralParams(alpha, x, y)).value) for y in ys] for x in xs]
            )
            mixed = logg[1:, 1:] - logg[1:, :-1] - logg[:-1, 1:] + logg[:-1, :-1]
            assert float(mixed.min()) >= -1e-9


class TestNonCentralPdf:
    def test_reduces_to_central_density(self):
        assert abs(nc_gamma_pdf(NonCentralParams(1.0, 1.0, 0.0)) - math.exp(-1.0)) < 1e-14

    def test_density_is_cdf_derivative(self):
        h = 1e-5
        for alpha, x, y in ((0.5, 1.0, 1.0), (2.0, 0.7, 3.0), (1.5, 2.5, 0.4)):
            num = (
                nc_gamma_cdf(NonCentralParams(alpha, x + h, y), tol=1e-13).value
                - nc_gamma_cdf(NonCentralParams(alpha, x - h, y), tol=1e-13).value
            ) / (2 * h)
            assert abs(num - nc_gamma_pdf(NonCentralParams(alpha, x, y))) < 1e-7

    def test_compose_from_hyp0f1(self):
        expected = math.exp(-2.0) * gamma_pdf(0.5, 2.0) * hyp0f1(2.0, 1.0).value
        assert abs(nc_gamma_pdf(NonCentralParams(2.0, 0.5, 2.0)) - expected) < 1e-14


class TestHyp0f1:
    def test_at_zero(self):
        assert hyp0f1(2.0, 0.0).value == 1.0

    def test_cosh_identity(self):
        assert abs(hyp0f1(0.5, 1.0).value - math.cosh(2.0)) < 1e-12

    def test_bessel_cross_check(self):
        got = hyp0f1(1.0, 2.25).value
        assert abs(got - special.iv(0, 3.0)) < 1e-12

    def test_positive_increasing(self):
        vals = [hyp0f1(1.2, z).value for z in np.linspace(0.0, 50.0, 30)]
        assert all(v > 0 for v in vals)
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_log_supermodular_combination(self):
        # F(a)F(a+1) + z (F(a+2)F(a) - F(a+1)^2) > 0 with F = 0F1/Gamma
        for alpha in (0.5, 1.0, 3.0):
            for z in np.linspace(0.01, 50.0, 25):
                f0 = hyp0f1(alpha, z).value / special.gamma(alpha)
                f1 = hyp0f1(alpha + 1.0, z).value / special.gamma(alpha + 1.0)
                f2 = hyp0f1(alpha + 2.0, z).value / special.gamma(alpha + 2.0)
                assert f0 * f1 + z * (f2 * f0 - f1 * f1) > 0.0


class TestLaguerre:
    def test_low_orders(self):
        assert laguerre_gen(0, 3.0, 7.0) == 1.0
        assert laguerre_gen(1, 1.0, 2.0) == -1.0  # alpha - y
        assert abs(laguerre_gen(2, 1.0, 2.0) - (4.0 - 8.0 + 2.0) / 2.0) < 1e-14

    def test_orthogonality_under_gamma_weight(self):
        alpha = 1.7
        for m, k in ((0, 1), (1, 2), (0, 3), (2, 3)):
            val, _ = sci_integrate.quad(
                lambda y: laguerre_gen(m, alpha, y)
                * laguerre_gen(k, alpha, y)
                * gamma_pdf(y, alpha),
                0.0,
                120.0,
                limit=200,
            )
            assert abs(val) < 1e-8

    def test_weight_is_squared_norm(self):
        alpha = 1.7
        for k in (0, 1, 3):
            val, _ = sci_integrate.quad(
                lambda y: laguerre_gen(k, alpha, y) ** 2 * gamma_pdf(y, alpha), 0.0, 120.0, limit=200
            )
            assert abs(val - laguerre_weight(alpha, k)) < 1e-8


class TestPoissonKernel:
    def test_theta_zero(self):
        assert poisson_kernel(1.0, 2.0, 1.5, 0.0) == 1.0

    def test_symmetry(self):
        assert poisson_kernel(1.0, 2.0, 1.5, 0.5) == poisson_kernel(2.0, 1.0, 1.5, 0.5)

    def test_matches_truncated_laguerre_sum(self):
        for (y1, y2, alpha, th) in ((1.0, 2.0, 1.5, 0.5), (0.5, 0.3, 0.8, 0.4), (2.0, 3.0, 2.5, 0.9)):
            direct = poisson_kernel(y1, y2, alpha, th)
            acc = 0.0
            for k in range(400):
                acc += (
                    th ** (2 * k)
                    / laguerre_weight(alpha, k)
                    * laguerre_gen(k, alpha, y1)
                    * laguerre_gen(k, alpha, y2)
                )
            assert abs(direct - acc) < 1e-8

    def test_domain(self):
        with pytest.raises(DomainError):
            poisson_kernel(1.0, 1.0, 1.0, 1.0)
