"""NumPy fallback implementations of the hot numerical kernels.

The compiled extension ``mvgamma._kernels._core`` provides the same functions
with identical semantics; this module is the reference implementation and the
import-time fallback.  Both backends must stay numerically interchangeable
(the test suite compares them to ~1e-13).

Central objects
---------------
Everything revolves around the non-central gamma cdf

    G_a(x; y) = e^{-y} * sum_{n>=0} G_{a+n}(x) * y^n / n!

evaluated at a fixed truncation point ``x`` for many non-centrality values
``y`` (the quadrature nodes of the engines).  The central-cdf ladder
``G_{a+n}(x)`` is precomputed once per (a, x) into a *table* via the exact
downward step  G_{a+n+1}(x) = G_{a+n}(x) - x^{a+n} e^{-x} / Gamma(a+n+1),
after which each evaluation is a Poisson-weight recurrence over the table.
``y`` may be complex (the series defines an entire function of y).
"""

import math

import numpy as np

_SQRT_PI = math.sqrt(math.pi)
_LN_MAX = 700.0


# ---------------------------------------------------------------------------
# scalar special functions
# ---------------------------------------------------------------------------

def erf_fn(x):
    """Error function, |error| < 1e-15.

    Power series with positive terms for |x| <= 3 (no cancellation), Lentz
    continued fraction for the complement beyond.
    """
    if x < 0.0:
        return -erf_fn(-x)
    if x == 0.0:
        return 0.0
    if x <= 3.0:
        # erf(x) = 2 x e^{-x^2}/sqrt(pi) * sum_n (2x^2)^n / (1*3*...*(2n+1))
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
        return 2.0 * x * math.exp(-x * x) / _SQRT_PI * total
    return 1.0 - erfc_fn(x)


def erfc_fn(x):
    """Complementary error function, accurate in the tail."""
    if x < 0.0:
        return 2.0 - erfc_fn(-x)
    if x <= 3.0:
        return 1.0 - erf_fn(x)
    if x * x > _LN_MAX:
        return 0.0
    # Lentz evaluation of erfc(x) = e^{-x^2}/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
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
        if abs(delta - 1.0) < 1e-17:
            break
    return math.exp(-x * x) / (_SQRT_PI * f)


def igamma_p(a, x):
    """Regularized lower incomplete gamma P(a, x) = G_a(x).

    Series for x < a + 1, Lentz continued fraction for the complement
    otherwise (the classic two-regime scheme).
    """
    if x < 0.0 or a <= 0.0:
        raise ValueError("igamma_p needs x >= 0, a > 0")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    lpre = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        # P(a,x) = x^a e^{-x}/Gamma(a+1) * sum_n x^n / ((a+1)...(a+n))
        ap = a
        term = 1.0
        total = 1.0
        for _ in range(10000):
            ap += 1.0
            term *= x / ap
            total += term
            if term < 1e-17 * total:
                break
        if lpre - math.log(a) + math.log(total) < -_LN_MAX:
            return 0.0
        return math.exp(lpre) * total / a
    # Q(a,x) via continued fraction (Lentz)
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
        if abs(delta - 1.0) < 1e-17:
            break
    q = math.exp(lpre) * f if lpre > -_LN_MAX else 0.0
    return 1.0 - q


def gamma_table(alpha, x, n):
    """Table [G_{alpha+k}(x)]_{k=0..n-1} of central gamma cdfs.

    Exact downward recurrence from G_alpha(x); the subtracted Poisson-type
    terms are all positive, so absolute error stays at the ulp level of
    G_alpha(x).  For large x the leading terms underflow; their logarithm is
    carried until the ladder re-enters floating range (the dropped mass is
    below n * 1e-300).  Values are clamped at 0 against roundoff.
    """
    out = np.empty(n)
    if x == 0.0:
        out.fill(0.0)
        return out
    if math.isinf(x):
        out.fill(1.0)
        return out
    g = igamma_p(alpha, x)
    lx = math.log(x)
    lp = alpha * lx - x - math.lgamma(alpha + 1.0)
    use_log = lp <= -_LN_MAX
    p = 0.0 if use_log else math.exp(lp)
    for k in range(n):
        out[k] = g if g > 0.0 else 0.0
        g -= p
        if use_log:
            lp += lx - math.log(alpha + k + 1.0)
            if lp > -_LN_MAX:
                p = math.exp(lp)
                use_log = False
        else:
            p *= x / (alpha + k + 1.0)
    return out


# ---------------------------------------------------------------------------
# non-central gamma cdf from a table
# ---------------------------------------------------------------------------

_FORWARD_LIMIT = 600.0


def _forward_ok(nc):
    """Forward summation from n = 0 stays in floating range when the first
    weight e^{-nc} is representable and the weight peak e^{|nc| - Re nc}
    cannot overflow."""
    if isinstance(nc, complex):
        return nc.real <= _FORWARD_LIMIT and (abs(nc) - nc.real) <= _FORWARD_LIMIT
    return nc <= _FORWARD_LIMIT


def _mode_start_weight(nc, m0):
    """Poisson weight e^{-nc} nc^{m0} / m0! in log space (complex capable)."""
    if isinstance(nc, complex):
        import cmath

        return cmath.exp(m0 * cmath.log(nc) - nc - math.lgamma(m0 + 1.0))
    lw = m0 * math.log(nc) - nc - math.lgamma(m0 + 1.0)
    return math.exp(lw) if lw > -_LN_MAX else 0.0


def nc_cdf_scalar(table, nc, tol, max_terms):
    """One evaluation of G_a(x; nc) from a precomputed table.

    Returns (value, abs_error_estimate, terms_used, converged).  ``nc`` may
    be complex.  Summation runs forward from n = 0 for moderate arguments
    and two-sided from the Poisson mode beyond (the forward start weight
    e^{-nc} underflows there).  Stops once three consecutive terms are below
    tol*|sum| and the geometric tail estimate |t_n| r/(1-r) is below tol,
    after the mode has been passed.
    """
    n_max = min(len(table), max_terms)
    anc = abs(nc)
    iscomplex = isinstance(nc, complex)
    if anc == 0.0:
        v = table[0]
        return (complex(v) if iscomplex else float(v)), 0.0, 1, True
    if _forward_ok(nc):
        start = 0
        w = np.exp(-nc) if iscomplex else math.exp(-nc)
    else:
        start = min(int(anc), n_max - 1)
        w = _mode_start_weight(nc, start)
    total = 0.0 + 0.0j if iscomplex else 0.0
    small = 0
    last = 0.0
    terms = 0
    err = math.inf
    converged = False
    w_up = w
    for n_i in range(start, n_max):
        t = w_up * table[n_i]
        total += t
        terms = n_i + 1
        at = abs(t)
        if n_i > anc:
            scale = max(abs(total), 1e-300)
            small = small + 1 if at < tol * max(scale, 1.0) else 0
            if small >= 3 and last > 0.0:
                r = at / last
                if r < 1.0:
                    err = at * r / (1.0 - r)
                    if err < tol:
                        converged = True
                        break
        last = at if at > 0.0 else last
        w_up *= nc / (n_i + 1.0)
    if start > 0:
        # downward sweep below the mode; weights decay by n/nc < 1
        w_dn = w
        for n_i in range(start - 1, -1, -1):
            w_dn *= (n_i + 1.0) / nc
            t = w_dn * table[n_i]
            total += t
            if abs(t) < 1e-18 * max(abs(total), 1e-300):
                break
    if not converged:
        err = abs(w_up) * (table[min(terms, len(table) - 1)] if len(table) else 1.0)
        err = max(err, tol)
    if not iscomplex:
        total = min(max(total, 0.0), 1.0)
    return total, (0.0 if err == math.inf else err), terms, converged


def _nc_cdf_forward_array(table, nc):
    iscomplex = np.iscomplexobj(nc)
    out = np.zeros(nc.shape, dtype=np.complex128 if iscomplex else np.float64)
    if nc.size == 0:
        return out
    anc = np.abs(nc)
    mode = float(np.max(anc))
    w = np.exp(-nc)
    n_max = len(table)
    for n_i in range(n_max):
        out += w * table[n_i]
        if n_i > mode and n_i > 8:
            if float(np.max(np.abs(w))) * table[n_i] < 1e-16:
                break
        w *= nc / (n_i + 1.0)
    if not iscomplex:
        np.clip(out, 0.0, 1.0, out=out)
    return out


def nc_cdf_many(table, nc):
    """Vectorized G_a(x; nc_i) over an array of non-centralities at fixed
    accuracy (~1e-14 absolute).  Elements beyond the forward-summation range
    fall back to the scalar mode-start path."""
    nc = np.asarray(nc)
    iscomplex = np.iscomplexobj(nc)
    if iscomplex:
        easy = (nc.real <= _FORWARD_LIMIT) & ((np.abs(nc) - nc.real) <= _FORWARD_LIMIT)
    else:
        easy = nc <= _FORWARD_LIMIT
    if bool(np.all(easy)):
        return _nc_cdf_forward_array(table, nc)
    out = np.zeros(nc.shape, dtype=np.complex128 if iscomplex else np.float64)
    flat_easy = np.where(easy.ravel())[0]
    flat = nc.ravel()
    out_flat = out.ravel()
    if flat_easy.size:
        out_flat[flat_easy] = _nc_cdf_forward_array(table, flat[flat_easy])
    for idx in np.where(~easy.ravel())[0]:
        v = flat[idx]
        val = nc_cdf_scalar(table, complex(v) if iscomplex else float(v), 1e-15, len(table))[0]
        out_flat[idx] = val
    return out_flat.reshape(nc.shape)


def prod_nc_cdf_many(tables, lens, ncs):
    """prod_j G_{a}(x_j; ncs[j, i]) over node index i.

    ``tables`` is a padded (ncomp, N) float array, ``lens`` the used length
    per row, ``ncs`` an (ncomp, m) real or complex array.
    """
    ncomp = ncs.shape[0]
    iscomplex = np.iscomplexobj(ncs)
    out = np.ones(ncs.shape[1], dtype=np.complex128 if iscomplex else np.float64)
    for j in range(ncomp):
        out *= nc_cdf_many(tables[j, : lens[j]], ncs[j])
    return out


# ---------------------------------------------------------------------------
# confluent limit function 0F1 and Laguerre polynomials
# ---------------------------------------------------------------------------

def hyp0f1_scalar(alpha, z, tol, max_terms):
    """0F1(alpha; z) = sum_k z^k / ((alpha)_k k!), z real or complex.

    Returns (value, abs_error_estimate, terms_used, converged).
    """
    term = 1.0 + 0.0j if isinstance(z, complex) else 1.0
    total = term
    err = 0.0
    converged = True
    terms = 1
    if z == 0:
        return total, 0.0, 1, True
    converged = False
    for k in range(max_terms):
        term *= z / ((alpha + k) * (k + 1.0))
        total += term
        terms = k + 2
        at = abs(term)
        if k + 1 > math.sqrt(abs(z)) and at < tol * max(abs(total), 1.0):
            r = abs(z) / ((alpha + k + 1.0) * (k + 2.0))
            if r < 1.0:
                err = at * r / (1.0 - r)
                if err < tol:
                    converged = True
                    break
    if not converged:
        err = abs(term)
    return total, err, terms, converged


def hyp0f1_many(alpha, z):
    """Vectorized 0F1(alpha; z_i) at fixed accuracy (~1e-14 relative)."""
    z = np.asarray(z)
    iscomplex = np.iscomplexobj(z)
    term = np.ones(z.shape, dtype=np.complex128 if iscomplex else np.float64)
    out = term.copy()
    if z.size == 0:
        return out
    zmax = float(np.max(np.abs(z)))
    kmax = int(2.0 * math.sqrt(zmax) + 40.0 + 10.0 * math.log1p(zmax))
    for k in range(kmax):
        term = term * z / ((alpha + k) * (k + 1.0))
        out += term
        if k > math.sqrt(zmax):
            if float(np.max(np.abs(term))) < 1e-16 * max(float(np.max(np.abs(out))), 1.0):
                break
    return out


def laguerre_scalar(k, alpha, y):
    """Generalized Laguerre polynomial L_k^{(alpha-1)}(y), stable three-term
    recurrence with rescaling once magnitudes pass 1e150."""
    a = alpha - 1.0
    if k == 0:
        return 1.0
    lm1 = 1.0
    l0 = 1.0 + a - y
    if k == 1:
        return l0
    scale_pow = 0
    for m in range(1, k):
        lp1 = ((2.0 * m + 1.0 + a - y) * l0 - (m + a) * lm1) / (m + 1.0)
        lm1, l0 = l0, lp1
        if abs(l0) > 1e150:
            l0 *= 1e-150
            lm1 *= 1e-150
            scale_pow += 1
    if scale_pow:
        for _ in range(scale_pow):
            l0 *= 1e150
    return l0


def laguerre_table(alpha, kmax, y):
    """Table of L_k^{(alpha-1)}(y_i) for k = 0..kmax (rows) over nodes y."""
    y = np.asarray(y, dtype=np.float64)
    a = alpha - 1.0
    out = np.empty((kmax + 1, y.size))
    out[0] = 1.0
    if kmax >= 1:
        out[1] = 1.0 + a - y
    for m in range(1, kmax):
        out[m + 1] = ((2.0 * m + 1.0 + a - y) * out[m] - (m + a) * out[m - 1]) / (m + 1.0)
    return out
