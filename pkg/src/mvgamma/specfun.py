"""Scalar special functions underpinning every engine.

Gamma pdf/cdf, the non-central gamma cdf/pdf with real or complex
non-centrality, the confluent limit function 0F1, generalized Laguerre
polynomials, and the Laguerre Poisson kernel.

The non-central cdf

    G_a(x; y) = e^{-y} sum_{n>=0} G_{a+n}(x) y^n / n!

is the workhorse; its density is g_a(x; y) = e^{-y} g_a(x) 0F1(a; x*y).
For half-odd and integer shapes two independent closed forms exist (an erf
combination minus a finite Bessel sum, and a trigonometric integral with a
step-function offset); they serve as cross-validation routes for the series
and are exposed here as ``nc_gamma_cdf_erf_route`` / ``nc_gamma_cdf_integral_route``.

All functions are pure and safe for concurrent use.
"""

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import ConvergenceError, DomainError

_MAX_TERMS = 10_000


@dataclass(frozen=True)
class SeriesValue:
    """Numeric result with error metadata, the uniform return type of the
    series/quadrature engines.

    ``converged`` implies ``abs_error_estimate`` is at or below the tolerance
    that was requested; ``value`` is float for real computations and complex
    otherwise.
    """

    value: float | complex
    abs_error_estimate: float
    terms_used: int
    converged: bool

    def __post_init__(self):
        if self.abs_error_estimate < 0.0:
            raise ValueError("abs_error_estimate must be non-negative")
        if self.terms_used < 1:
            raise ValueError("terms_used must be >= 1")

    @property
    def real(self):
        return self.value.real if isinstance(self.value, complex) else self.value


@dataclass(frozen=True)
class NonCentralParams:
    """Arguments of the non-central gamma cdf: shape ``alpha`` > 0,
    truncation point ``x`` >= 0, non-centrality ``y`` (complex allowed;
    real y must be >= 0 in probability contexts)."""

    alpha: float
    x: float
    y: complex = 0.0

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}", module="specfun")
        if self.x < 0.0:
            raise DomainError(f"x must be >= 0, got {self.x}", module="specfun")


def _as_scalar_y(y):
    y = complex(y)
    if y.imag == 0.0:
        return y.real
    return y


def gamma_pdf(x, alpha):
    """Standard gamma density g_alpha(x) = x^{alpha-1} e^{-x} / Gamma(alpha).

    At x = 0 with alpha < 1 the density diverges; +inf is returned as the
    overflow marker.
    """
    if alpha <= 0.0:
        raise DomainError(f"alpha must be > 0, got {alpha}", module="specfun")
    if x < 0.0:
        raise DomainError(f"x must be >= 0, got {x}", module="specfun")
    if x == 0.0:
        if alpha < 1.0:
            return math.inf
        return 1.0 if alpha == 1.0 else 0.0
    lg = (alpha - 1.0) * math.log(x) - x - math.lgamma(alpha)
    return math.exp(lg) if lg > -745.0 else 0.0


def gamma_cdf(x, alpha):
    """Central gamma cdf G_alpha(x), the regularized lower incomplete gamma."""
    if alpha <= 0.0:
        raise DomainError(f"alpha must be > 0, got {alpha}", module="specfun")
    if x < 0.0:
        raise DomainError(f"x must be >= 0, got {x}", module="specfun")
    return K.igamma_p(alpha, x)


def erf(x):
    """Internal error function (series + continued fraction, ~1e-15)."""
    return K.erf_fn(x)


def erfc(x):
    return K.erfc_fn(x)


def nc_table(alpha, x, nc_abs_max, extra=0.0):
    """Central-cdf ladder [G_{alpha+n}(x)] long enough for non-centralities
    up to ``nc_abs_max``; shared across many series evaluations."""
    return K.gamma_table(alpha, x, K.table_len(nc_abs_max, extra))


def nc_gamma_cdf(p, tol=1e-12):
    """Non-central gamma cdf G_alpha(x; y) by the defining series.

    Complex ``y`` is evaluated through the same series (the function is
    entire in y).  For real y >= 0 the value is clipped to [0, 1].
    """
    if tol <= 0.0:
        raise DomainError("tol must be > 0", module="specfun")
    y = _as_scalar_y(p.y)
    if math.isinf(p.x):
        return SeriesValue(1.0, 0.0, 1, True)
    extra = 0.0
    if isinstance(y, complex):
        extra = max(abs(y) - y.real, 0.0)
    table = nc_table(p.alpha, p.x, abs(y), extra)
    value, err, terms, conv = K.nc_cdf_scalar(table, y, tol, _MAX_TERMS)
    return SeriesValue(value, err, terms, conv)


def nc_gamma_pdf(p):
    """Non-central gamma density e^{-y} g_alpha(x) 0F1(alpha; x y)."""
    if p.x <= 0.0:
        raise DomainError("density requires x > 0", module="specfun")
    y = _as_scalar_y(p.y)
    f = hyp0f1(p.alpha, p.x * y, tol=1e-14)
    if isinstance(y, complex):
        return cmath.exp(-y) * gamma_pdf(p.x, p.alpha) * f.value
    return math.exp(-y) * gamma_pdf(p.x, p.alpha) * f.value


def hyp0f1(alpha, z, tol=1e-13):
    """Confluent limit function 0F1(alpha; z) = sum_k z^k / ((alpha)_k k!).

    Normalized so that 0F1(alpha; 0) = 1; strictly positive and increasing
    for real z > 0.
    """
    if alpha <= 0.0:
        raise DomainError(f"alpha must be > 0, got {alpha}", module="specfun")
    zz = _as_scalar_y(z)
    value, err, terms, conv = K.hyp0f1_scalar(alpha, zz, tol, _MAX_TERMS)
    return SeriesValue(value, err, terms, conv)


def laguerre_gen(k, alpha, y):
    """Generalized Laguerre polynomial L_k^{(alpha-1)}(y) by the three-term
    recurrence (rescaled in the rare overflow regime)."""
    if k < 0:
        raise DomainError("k must be >= 0", module="specfun")
    if alpha <= 0.0:
        raise DomainError(f"alpha must be > 0, got {alpha}", module="specfun")
    return K.laguerre_scalar(int(k), alpha, float(y))


def laguerre_weight(alpha, k):
    """Orthogonality normalizer C(alpha+k-1, k) = (alpha)_k / k!:
    the squared norm of L_k^{(alpha-1)} under the g_alpha weight."""
    return math.exp(math.lgamma(alpha + k) - math.lgamma(alpha) - math.lgamma(k + 1.0))


def poisson_kernel(y1, y2, alpha, theta):
    """Closed form of the Laguerre bilinear generating kernel

        sum_k C(alpha+k-1,k)^{-1} theta^{2k} L_k^{(alpha-1)}(y1) L_k^{(alpha-1)}(y2)
      = (1-theta^2)^{-alpha} exp(-theta^2 (y1+y2)/(1-theta^2))
            * 0F1(alpha; theta^2 y1 y2 / (1-theta^2)^2),   |theta| < 1.
    """
    if abs(theta) >= 1.0:
        raise DomainError(f"|theta| must be < 1, got {theta}", module="specfun")
    if alpha <= 0.0:
        raise DomainError(f"alpha must be > 0, got {alpha}", module="specfun")
    t2 = theta * theta
    if t2 == 0.0:
        return 1.0
    omt = 1.0 - t2
    f = hyp0f1(alpha, t2 * y1 * y2 / (omt * omt), tol=1e-14)
    return omt ** (-alpha) * math.exp(-t2 * (y1 + y2) / omt) * f.value


# ---------------------------------------------------------------------------
# closed-form alternative routes for the non-central cdf
# ---------------------------------------------------------------------------

def _bessel_half_sum(x, y, n):
    """sum_{k=1..n} e^{-y} g_{k+1/2}(x) 0F1(k+1/2; x y) through elementary
    scaled Bessel functions of half-odd order.

    The k-th summand equals e^{-(x+y)} (x/y)^{(k-1/2)/2} I_{k-1/2}(2 sqrt(xy));
    the k = 1, 2 cases are explicit sinh/cosh combinations and higher orders
    follow the upward recurrence (adequate for the small n used here).
    """
    if n <= 0:
        return 0.0
    sx, sy = math.sqrt(x), math.sqrt(y)
    z = 2.0 * sx * sy
    # B_k = e^{-(x+y)} (x/y)^{(k-1/2)/2} I_{k-1/2}(z), elementary seeds:
    #   I_{1/2}(z)  = sqrt(2/(pi z)) sinh z
    #   I_{3/2}(z)  = sqrt(2/(pi z)) (cosh z - sinh z / z)
    # scaled hyperbolics: e^{-(x+y)} sinh z = (e^{-(sx-sy)^2} - e^{-(sx+sy)^2})/2
    em = math.exp(-((sx - sy) ** 2))
    ep = math.exp(-((sx + sy) ** 2))
    sh = 0.5 * (em - ep)
    ch = 0.5 * (em + ep)
    if z == 0.0:
        return 0.0
    pref = math.sqrt(2.0 / (math.pi * z))
    rat = sx / sy
    b1 = pref * math.sqrt(rat) * sh
    total = b1
    if n >= 2:
        b2 = pref * rat ** 1.5 * (ch - sh / z)
        total += b2
        bkm1, bk = b1, b2
        for k in range(2, n):
            # I_{nu+1} = I_{nu-1} - (2 nu / z) I_nu with nu = k - 1/2,
            # carried through the (x/y)^{(k-1/2)/2} prefactor.
            bkp1 = (rat * rat) * bkm1 - rat * ((2.0 * k - 1.0) / z) * bk
            total += bkp1
            bkm1, bk = bk, bkp1
    return total


def nc_gamma_cdf_erf_route(x, y, alpha):
    """Closed form for half-odd shapes 2*alpha in {1, 3, 5, ...}:

        G_{n+1/2}(x; y) = (erf(sqrt x + sqrt y) + erf(sqrt x - sqrt y))/2
                          - [finite Bessel sum of n terms]
    """
    two_alpha = 2.0 * alpha
    n = round((two_alpha - 1.0) / 2.0)
    if abs(two_alpha - (2 * n + 1)) > 1e-12 or n < 0:
        raise DomainError(f"erf route needs 2*alpha odd, got alpha={alpha}", module="specfun")
    if x < 0.0 or y < 0.0:
        raise DomainError("erf route needs x, y >= 0", module="specfun")
    sx, sy = math.sqrt(x), math.sqrt(y)
    base = 0.5 * (K.erf_fn(sx + sy) + K.erf_fn(sx - sy))
    return base - _bessel_half_sum(x, y, n)


def g0_step(z):
    """Limit cdf G_0: 0 for z < 0, 1/2 at z = 0, 1 for z > 0."""
    if z < 0.0:
        return 0.0
    if z == 0.0:
        return 0.5
    return 1.0


def nc_gamma_cdf_integral_route(x, y, n, quad_tol=1e-12):
    """Closed form for integer shapes: a trigonometric integral over (0, pi)
    plus the step offset G_0(x - y).

        G_n(x; y) = (x/y)^{n/2} / pi * I + G_0(x - y),
        I = int_0^pi [y cos(n p) - sqrt(xy) cos((n-1) p)]
                     / [x - 2 sqrt(xy) cos p + y] * e^{-(x - 2 sqrt(xy) cos p + y)} dp
    """
    from .quad import Tolerance, integrate_angle

    if n < 1 or n != int(n):
        raise DomainError(f"integral route needs integer n >= 1, got {n}", module="specfun")
    n = int(n)
    if y == 0.0:
        return K.igamma_p(float(n), x)
    sxy = math.sqrt(x * y)

    def f(phi):
        c = np.cos(phi)
        den = x - 2.0 * sxy * c + y
        num = y * np.cos(n * phi) - sxy * np.cos((n - 1.0) * phi)
        return num / den * np.exp(-den)

    r = integrate_angle(f, Tolerance(abs_tol=quad_tol, rel_tol=quad_tol, max_subdivisions=400))
    if not r.converged:
        raise ConvergenceError("trigonometric integral did not converge", module="specfun")
    return (x / y) ** (n / 2.0) / math.pi * r.value + g0_step(x - y)


def nc_gamma_cdf_finite_correction_route(x, y, alpha):
    """Closed form for integer shapes n = alpha >= 1:

        G_n(x; y) = G_1(x; y) - e^{-y} sum_{k=1..n-1} g_{1+k}(x) 0F1(1+k; x y)

    with G_1 taken from the trigonometric-integral route, so the result is
    independent of the defining series.
    """
    n = round(alpha)
    if abs(alpha - n) > 1e-12 or n < 1:
        raise DomainError(f"finite-correction route needs integer alpha, got {alpha}", module="specfun")
    g1 = nc_gamma_cdf_integral_route(x, y, 1)
    corr = 0.0
    ey = math.exp(-y)
    for k in range(1, n):
        gk = gamma_pdf(x, 1.0 + k)
        corr += ey * gk * hyp0f1(1.0 + k, x * y, tol=1e-14).value
    return g1 - corr
