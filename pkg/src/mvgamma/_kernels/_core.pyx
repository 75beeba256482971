# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core.

Mirrors ``mvgamma._kernels.pure`` function for function; both backends must
stay numerically interchangeable.  The hot loops are the non-central gamma
cdf series (real and complex non-centrality) evaluated over arrays of
quadrature nodes, with per-element early termination the NumPy fallback
cannot afford.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, atan2, cos, exp, fabs, isinf, lgamma, log, sin, sqrt

cnp.import_array()

cdef double _SQRT_PI = 1.7724538509055160273
cdef double _LN_MAX = 700.0


# ---------------------------------------------------------------------------
# scalar special functions
# ---------------------------------------------------------------------------

cdef double _erf_c(double x) noexcept nogil:
    cdef double z, term, total
    cdef int n
    if x < 0.0:
        return -_erf_c(-x)
    if x == 0.0:
        return 0.0
    if x <= 3.0:
        z = 2.0 * x * x
        term = 1.0
        total = 1.0
        n = 0
        while True:
            n += 1
            term *= z / (2.0 * n + 1.0)
            total += term
            if term < 1e-18 * total:
                break
        return 2.0 * x * exp(-x * x) / _SQRT_PI * total
    return 1.0 - _erfc_c(x)


cdef double _erfc_c(double x) noexcept nogil:
    cdef double tiny, f, c, d, a_n, delta
    cdef int n
    if x < 0.0:
        return 2.0 - _erfc_c(-x)
    if x <= 3.0:
        return 1.0 - _erf_c(x)
    if x * x > _LN_MAX:
        return 0.0
    tiny = 1e-300
    f = x
    c = x
    d = 0.0
    for n in range(1, 300):
        a_n = 0.5 * n
        d = x + a_n * d
        if d == 0.0:
            d = tiny
        d = 1.0 / d
        c = x + a_n / c
        if c == 0.0:
            c = tiny
        delta = c * d
        f *= delta
        if fabs(delta - 1.0) < 1e-17:
            break
    return exp(-x * x) / (_SQRT_PI * f)


cdef double _igamma_p_c(double a, double x) except -1.0:
    cdef double lpre, ap, term, total, tiny, b, c, d, an, delta, f, q
    cdef int n
    if x < 0.0 or a <= 0.0:
        raise ValueError("igamma_p needs x >= 0, a > 0")
    if x == 0.0:
        return 0.0
    if isinf(x):
        return 1.0
    lpre = a * log(x) - x - lgamma(a)
    if x < a + 1.0:
        ap = a
        term = 1.0
        total = 1.0
        for n in range(10000):
            ap += 1.0
            term *= x / ap
            total += term
            if term < 1e-17 * total:
                break
        if lpre - log(a) + log(total) < -_LN_MAX:
            return 0.0
        return exp(lpre) * total / a
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1e300
    d = 1.0 / b if b != 0.0 else 1e300
    f = d
    for n in range(1, 10000):
        an = -n * (n - a)
        b += 2.0
        d = an * d + b
        if d == 0.0:
            d = tiny
        c = b + an / c
        if c == 0.0:
            c = tiny
        d = 1.0 / d
        delta = d * c
        f *= delta
        if fabs(delta - 1.0) < 1e-17:
            break
    q = exp(lpre) * f if lpre > -_LN_MAX else 0.0
    return 1.0 - q


def erf_fn(double x):
    """Error function (series + continued fraction, ~1e-15)."""
    return _erf_c(x)


def erfc_fn(double x):
    """Complementary error function, accurate in the tail."""
    return _erfc_c(x)


def igamma_p(double a, double x):
    """Regularized lower incomplete gamma P(a, x) = G_a(x)."""
    return _igamma_p_c(a, x)


def gamma_table(double alpha, double x, int n):
    """Table [G_{alpha+k}(x)]_{k=0..n-1}, exact downward recurrence; the
    leading ladder terms are carried in log space while they underflow."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double g, lp, p, lx
    cdef bint use_log
    cdef Py_ssize_t k
    if x == 0.0:
        out.fill(0.0)
        return out
    if isinf(x):
        out.fill(1.0)
        return out
    g = _igamma_p_c(alpha, x)
    lx = log(x)
    lp = alpha * lx - x - lgamma(alpha + 1.0)
    use_log = lp <= -_LN_MAX
    p = 0.0 if use_log else exp(lp)
    for k in range(n):
        out[k] = g if g > 0.0 else 0.0
        g -= p
        if use_log:
            lp += lx - log(alpha + k + 1.0)
            if lp > -_LN_MAX:
                p = exp(lp)
                use_log = False
        else:
            p *= x / (alpha + k + 1.0)
    return out


# ---------------------------------------------------------------------------
# non-central gamma cdf from a table
# ---------------------------------------------------------------------------

def nc_cdf_scalar(table, nc, double tol, int max_terms):
    """One evaluation of G_a(x; nc); returns (value, err, terms, converged).

    Delegates to the reference implementation: the scalar path is not hot
    and must match the fallback's stopping rule exactly.
    """
    from . import pure as _pure
    return _pure.nc_cdf_scalar(np.asarray(table), nc, tol, max_terms)


cdef void _nc_cdf_real(double[:] table, double[:] nc, double[:] out) noexcept nogil:
    cdef Py_ssize_t m = nc.shape[0]
    cdef Py_ssize_t n_max = table.shape[0]
    cdef Py_ssize_t i, n_i, start
    cdef double w, wu, wd, tot, lam, t, lw
    for i in range(m):
        lam = nc[i]
        if lam <= 0.0:
            out[i] = table[0]
            continue
        if lam <= 600.0:
            start = 0
            w = exp(-lam)
        else:
            # forward start weight e^{-lam} underflows; begin at the mode
            start = <Py_ssize_t> lam
            if start > n_max - 1:
                start = n_max - 1
            lw = start * log(lam) - lam - lgamma(start + 1.0)
            w = exp(lw) if lw > -_LN_MAX else 0.0
        tot = 0.0
        wu = w
        for n_i in range(start, n_max):
            t = wu * table[n_i]
            tot += t
            if n_i > lam and n_i > start + 8 and t < 1e-16:
                break
            wu *= lam / (n_i + 1.0)
        if start > 0:
            wd = w
            for n_i in range(start - 1, -1, -1):
                wd *= (n_i + 1.0) / lam
                t = wd * table[n_i]
                tot += t
                if t < 1e-18:
                    break
        if tot < 0.0:
            tot = 0.0
        elif tot > 1.0:
            tot = 1.0
        out[i] = tot


cdef void _nc_cdf_cplx(double[:] table, double complex[:] nc, double complex[:] out) noexcept nogil:
    cdef Py_ssize_t m = nc.shape[0]
    cdef Py_ssize_t n_max = table.shape[0]
    cdef Py_ssize_t i, n_i, start
    cdef double complex w, wu, wd, tot, t, lam
    cdef double alam, re, im, mag, amp, phase
    for i in range(m):
        lam = nc[i]
        re = lam.real
        im = lam.imag
        alam = sqrt(re * re + im * im)
        if alam == 0.0:
            out[i] = table[0]
            continue
        if re <= 600.0 and (alam - re) <= 600.0:
            start = 0
            # e^{-lam} = e^{-re} (cos(im) - i sin(im))
            amp = exp(-re)
            w = amp * cos(im) - 1j * (amp * sin(im))
        else:
            # mode start in log space: w = exp(m0 log(lam) - lam - lgamma(m0+1))
            start = <Py_ssize_t> alam
            if start > n_max - 1:
                start = n_max - 1
            amp = start * log(alam) - re - lgamma(start + 1.0)
            phase = start * atan2(im, re) - im
            amp = exp(amp) if amp < _LN_MAX else exp(_LN_MAX)
            w = amp * cos(phase) + 1j * (amp * sin(phase))
        tot = 0.0
        wu = w
        for n_i in range(start, n_max):
            t = wu * table[n_i]
            tot = tot + t
            mag = fabs(t.real) + fabs(t.imag)
            if n_i > alam and n_i > start + 8 and mag < 1e-16:
                break
            wu = wu * lam / (n_i + 1.0)
        if start > 0:
            wd = w
            for n_i in range(start - 1, -1, -1):
                wd = wd * (n_i + 1.0) / lam
                t = wd * table[n_i]
                tot = tot + t
                if fabs(t.real) + fabs(t.imag) < 1e-18:
                    break
        out[i] = tot


def nc_cdf_many(table, nc):
    """Vectorized G_a(x; nc_i) (fixed ~1e-14 accuracy, early exit per node)."""
    nc_arr = np.asarray(nc)
    t64 = np.ascontiguousarray(table, dtype=np.float64)
    shape = nc_arr.shape
    if nc_arr.size == 0:
        return np.zeros(shape, dtype=np.complex128 if np.iscomplexobj(nc_arr) else np.float64)
    if np.iscomplexobj(nc_arr):
        flat_c = np.ascontiguousarray(nc_arr.ravel(), dtype=np.complex128)
        out = np.empty(flat_c.shape[0], dtype=np.complex128)
        _nc_cdf_cplx(t64, flat_c, out)
        return out.reshape(shape)
    flat = np.ascontiguousarray(nc_arr.ravel(), dtype=np.float64)
    out = np.empty(flat.shape[0], dtype=np.float64)
    _nc_cdf_real(t64, flat, out)
    return out.reshape(shape)


def prod_nc_cdf_many(tables, lens, ncs):
    """prod_j G_a(x_j; ncs[j, i]) over node index i."""
    t2 = np.ascontiguousarray(tables, dtype=np.float64)
    cdef Py_ssize_t ncomp = ncs.shape[0]
    cdef Py_ssize_t m = ncs.shape[1]
    cdef Py_ssize_t j
    cdef long[:] lview = np.ascontiguousarray(lens, dtype=np.int64)
    if np.iscomplexobj(ncs):
        out = np.ones(m, dtype=np.complex128)
        tmp = np.empty(m, dtype=np.complex128)
        ncs_c = np.ascontiguousarray(ncs, dtype=np.complex128)
        for j in range(ncomp):
            _nc_cdf_cplx(t2[j, : lview[j]], ncs_c[j], tmp)
            out *= tmp
        return out
    out = np.ones(m, dtype=np.float64)
    tmp = np.empty(m, dtype=np.float64)
    ncs_r = np.ascontiguousarray(ncs, dtype=np.float64)
    for j in range(ncomp):
        _nc_cdf_real(t2[j, : lview[j]], ncs_r[j], tmp)
        out *= tmp
    return out


# ---------------------------------------------------------------------------
# 0F1 and Laguerre
# ---------------------------------------------------------------------------

def hyp0f1_scalar(double alpha, z, double tol, int max_terms):
    """0F1(alpha; z) with (value, err, terms, converged)."""
    cdef bint is_c = isinstance(z, complex)
    cdef double complex termz, totalz, zz
    cdef double term, total, err, at, r, az
    cdef int k, terms
    cdef bint converged
    err = 0.0
    terms = 1
    if z == 0:
        return (1.0 + 0.0j if is_c else 1.0), 0.0, 1, True
    converged = False
    if is_c:
        zz = z
        az = abs(zz)
        termz = 1.0
        totalz = 1.0
        for k in range(max_terms):
            termz = termz * zz / ((alpha + k) * (k + 1.0))
            totalz = totalz + termz
            terms = k + 2
            at = abs(termz)
            if k + 1 > sqrt(az) and at < tol * max(abs(totalz), 1.0):
                r = az / ((alpha + k + 1.0) * (k + 2.0))
                if r < 1.0:
                    err = at * r / (1.0 - r)
                    if err < tol:
                        converged = True
                        break
        if not converged:
            err = abs(termz)
        return totalz, err, terms, converged
    az = fabs(<double> z)
    term = 1.0
    total = 1.0
    for k in range(max_terms):
        term = term * (<double> z) / ((alpha + k) * (k + 1.0))
        total += term
        terms = k + 2
        at = fabs(term)
        if k + 1 > sqrt(az) and at < tol * max(fabs(total), 1.0):
            r = az / ((alpha + k + 1.0) * (k + 2.0))
            if r < 1.0:
                err = at * r / (1.0 - r)
                if err < tol:
                    converged = True
                    break
    if not converged:
        err = fabs(term)
    return total, err, terms, converged


cdef void _hyp0f1_real(double alpha, double[:] z, double[:] out) noexcept nogil:
    cdef Py_ssize_t m = z.shape[0]
    cdef Py_ssize_t i
    cdef int k
    cdef double term, total, zz, sq
    for i in range(m):
        zz = z[i]
        term = 1.0
        total = 1.0
        sq = sqrt(fabs(zz)) if zz != 0.0 else 0.0
        k = 0
        while k < 100000:
            term = term * zz / ((alpha + k) * (k + 1.0))
            total += term
            if k > sq and fabs(term) < 1e-16 * max(fabs(total), 1.0):
                break
            k += 1
        out[i] = total


cdef void _hyp0f1_cplx(double alpha, double complex[:] z, double complex[:] out) noexcept nogil:
    cdef Py_ssize_t m = z.shape[0]
    cdef Py_ssize_t i
    cdef int k
    cdef double complex term, total, zz
    cdef double sq, mag
    for i in range(m):
        zz = z[i]
        term = 1.0
        total = 1.0
        mag = abs(zz)
        sq = sqrt(mag) if mag != 0.0 else 0.0
        k = 0
        while k < 100000:
            term = term * zz / ((alpha + k) * (k + 1.0))
            total = total + term
            if k > sq and (fabs(term.real) + fabs(term.imag)) < 1e-16 * max(abs(total), 1.0):
                break
            k += 1
        out[i] = total


def hyp0f1_many(double alpha, z):
    """Vectorized 0F1(alpha; z_i) at fixed ~1e-14 relative accuracy."""
    z_arr = np.asarray(z)
    shape = z_arr.shape
    if z_arr.size == 0:
        return np.ones(shape, dtype=np.complex128 if np.iscomplexobj(z_arr) else np.float64)
    if np.iscomplexobj(z_arr):
        zc = np.ascontiguousarray(z_arr.ravel(), dtype=np.complex128)
        out = np.empty(zc.shape[0], dtype=np.complex128)
        _hyp0f1_cplx(alpha, zc, out)
        return out.reshape(shape)
    zr = np.ascontiguousarray(z_arr.ravel(), dtype=np.float64)
    out = np.empty(zr.shape[0], dtype=np.float64)
    _hyp0f1_real(alpha, zr, out)
    return out.reshape(shape)


def laguerre_scalar(int k, double alpha, double y):
    """L_k^{(alpha-1)}(y), three-term recurrence with 1e150 rescaling."""
    cdef double a = alpha - 1.0
    cdef double lm1, l0, lp1
    cdef int m, scale_pow
    if k == 0:
        return 1.0
    lm1 = 1.0
    l0 = 1.0 + a - y
    if k == 1:
        return l0
    scale_pow = 0
    for m in range(1, k):
        lp1 = ((2.0 * m + 1.0 + a - y) * l0 - (m + a) * lm1) / (m + 1.0)
        lm1 = l0
        l0 = lp1
        if fabs(l0) > 1e150:
            l0 *= 1e-150
            lm1 *= 1e-150
            scale_pow += 1
    for m in range(scale_pow):
        l0 *= 1e150
    return l0


def laguerre_table(double alpha, int kmax, cnp.ndarray y):
    """Table of L_k^{(alpha-1)}(y_i), k = 0..kmax."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t m = yy.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((kmax + 1, m))
    cdef double a = alpha - 1.0
    cdef Py_ssize_t i
    cdef int kk
    for i in range(m):
        out[0, i] = 1.0
    if kmax >= 1:
        for i in range(m):
            out[1, i] = 1.0 + a - yy[i]
    for kk in range(1, kmax):
        for i in range(m):
            out[kk + 1, i] = ((2.0 * kk + 1.0 + a - yy[i]) * out[kk, i] - (kk + a) * out[kk - 1, i]) / (kk + 1.0)
    return out
