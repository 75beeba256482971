"""Backend checks: the compiled core and the NumPy fallback must be
numerically interchangeable, and both must match independent references."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from mvgamma import _kernels as active
from mvgamma._kernels import pure

BACKENDS = [pure]
if active.BACKEND == "compiled":
    BACKENDS.append(active)


@pytest.mark.parametrize("K", BACKENDS, ids=lambda m: getattr(m, "BACKEND", "pure_or_core"))
class TestAgainstScipy:
    def test_igamma(self, K):
        for a in (0.3, 0.5, 1.0, 2.7, 8.0):
            for x in (0.0, 0.01, 0.5, 1.0, 4.0, 30.0, 200.0):
                assert abs(K.igamma_p(a, x) - special.gammainc(a, x)) < 5e-15

    def test_erf(self, K):
        for x in np.linspace(-9.0, 9.0, 301):
            assert abs(K.erf_fn(float(x)) - special.erf(x)) < 3e-15
            ref = special.erfc(x)
            assert abs(K.erfc_fn(float(x)) - ref) <= 2e-15 + 1e-12 * abs(ref)

    def test_gamma_table_matches_direct(self, K):
        t = K.gamma_table(1.3, 2.5, 60)
        for k in (0, 1, 7, 30, 59):
            assert abs(t[k] - special.gammainc(1.3 + k, 2.5)) < 1e-13

    def test_hyp0f1_identities(self, K):
        # 0F1(1/2; z) = cosh(2 sqrt z); 0F1(3/2; z) = sinh(2 sqrt z)/(2 sqrt z)
        for z in (0.25, 1.0, 9.0, 100.0):
            s = math.sqrt(z)
            got = K.hyp0f1_many(0.5, np.array([z]))[0]
            assert abs(got / math.cosh(2 * s) - 1.0) < 1e-13
            got = K.hyp0f1_many(1.5, np.array([z]))[0]
            assert abs(got / (math.sinh(2 * s) / (2 * s)) - 1.0) < 1e-13

    def test_hyp0f1_bessel_identity(self, K):
        # I_0(3) via I_nu(z) = (z/2)^nu 0F1(nu+1; z^2/4)/Gamma(nu+1)
        got = K.hyp0f1_many(1.0, np.array([2.25]))[0]
        assert abs(got - special.iv(0, 3.0)) < 1e-12

    def test_laguerre_vs_scipy(self, K):
        rng = np.random.default_rng(5)
        y = rng.uniform(0.0, 30.0, 40)
        for alpha in (0.5, 1.0, 2.5):
            tab = K.laguerre_table(alpha, 25, y)
            for k in (0, 1, 2, 10, 25):
                ref = special.eval_genlaguerre(k, alpha - 1.0, y)
                assert np.max(np.abs(tab[k] - ref) / np.maximum(np.abs(ref), 1.0)) < 1e-10

    def test_nc_cdf_scalar_metadata(self, K):
        t = K.gamma_table(1.5, 2.0, 200)
        val, err, terms, conv = K.nc_cdf_scalar(t, 3.0, 1e-12, 10_000)
        assert conv and err <= 1e-12 and terms >= 1
        # matches a direct Poisson-mixture sum
        ref = sum(
            math.exp(-3.0) * 3.0 ** n / math.factorial(n) * special.gammainc(1.5 + n, 2.0)
            for n in range(60)
        )
        assert abs(val - ref) < 1e-13

    def test_nc_cdf_complex_entire(self, K):
        # complex-argument series evaluated against mpmath-style direct sum
        t = K.gamma_table(0.75, 1.5, 300)
        y = 2.0 + 1.5j
        val, _, _, conv = K.nc_cdf_scalar(t, y, 1e-13, 10_000)
        direct = 0.0
        w = np.exp(-y)
        for n in range(200):
            direct += w * special.gammainc(0.75 + n, 1.5)
            w *= y / (n + 1)
        assert conv
        assert abs(val - direct) < 1e-12


class TestBackendParity:
    @pytest.mark.skipif(active.BACKEND != "compiled", reason="extension not built")
    def test_parity_real(self):
        rng = np.random.default_rng(11)
        for alpha, x in ((0.5, 0.8), (1.0, 2.0), (3.2, 6.0)):
            t1 = active.gamma_table(alpha, x, 240)
            t2 = pure.gamma_table(alpha, x, 240)
            assert np.max(np.abs(t1 - t2)) < 5e-15
            nc = rng.uniform(0.0, 50.0, 2000)
            assert np.max(np.abs(active.nc_cdf_many(t1, nc) - pure.nc_cdf_many(t2, nc))) < 1e-13

    @pytest.mark.skipif(active.BACKEND != "compiled", reason="extension not built")
    def test_parity_complex(self):
        rng = np.random.default_rng(12)
        t1 = active.gamma_table(1.0, 2.4, 400)
        t2 = pure.gamma_table(1.0, 2.4, 400)
        nc = rng.uniform(0, 30, 800) + 1j * rng.uniform(-15, 15, 800)
        d = np.max(np.abs(active.nc_cdf_many(t1, nc) - pure.nc_cdf_many(t2, nc)))
        assert d < 1e-12

    @pytest.mark.skipif(active.BACKEND != "compiled", reason="extension not built")
    def test_parity_hyp0f1_laguerre(self):
        rng = np.random.default_rng(13)
        z = rng.uniform(0.0, 5000.0, 500)
        r1 = active.hyp0f1_many(0.8, z)
        r2 = pure.hyp0f1_many(0.8, z)
        assert np.max(np.abs(r1 / r2 - 1.0)) < 1e-12
        y = rng.uniform(0.0, 40.0, 200)
        l1 = active.laguerre_table(0.5, 40, y)
        l2 = pure.laguerre_table(0.5, 40, y)
        assert np.max(np.abs(l1 - l2) / np.maximum(np.abs(l2), 1.0)) < 1e-12


@given(
    a=st.floats(min_value=0.3, max_value=5.0),
    x=st.floats(min_value=0.01, max_value=20.0),
    y=st.floats(min_value=0.0, max_value=20.0),
)
@settings(max_examples=60, deadline=None)
def test_nc_cdf_bounded_and_monotone_poisson_mix(a, x, y):
    t = active.gamma_table(a, x, active.table_len(y + 1.0))
    val, _, _, conv = active.nc_cdf_scalar(t, y, 1e-11, 10_000)
    assert conv
    assert -1e-12 <= val <= 1.0 + 1e-12
    # non-centrality pushes mass right: G_a(x; y) decreasing in y
    val2, _, _, _ = active.nc_cdf_scalar(t, y + 0.7, 1e-11, 10_000)
    assert val2 <= val + 1e-9
