"""Deterministic cdf/pdf engines for the structured correlation classes.

Every engine reduces to mixtures of non-central gamma cdfs

    G_a(x_j / d_j ; s_j y)

integrated against gamma weights.  Representations implemented:

* one-factorial mixture: a single gamma-distributed mixing variable;
* two-block Laguerre series: sum_k C(a+k-1, k) theta^{2k} c_{1,k} c_{2,k}
  over per-block Laguerre coefficients (|theta| <= 1; exactly 1 merges the
  blocks into one mixture);
* two-block kernel integral: a double gamma-weighted integral against
  0F1(a; theta^2 y1 y2), equivalent to the series for |theta| < 1;
* two-factorial angular integral: valid across the extended theta range
  (including theta > 1, where the second factor column is imaginary and the
  angular integral of the complex product is real by symmetry);
* its alpha = 1/2 limit, where the angular measure degenerates to two atoms;
* three-block power series from the characteristic-function expansion, in
  the direct and the rearranged (homogeneous-degree) orderings;
* tree-type density product formula;
* small-block cross-correlation series in powers of rho, with block cdf
  derivatives evaluated through the factorial representations;
* the equicorrelated upper-tail approximation.

Engines are pure; quadrature node placement is deterministic, so repeated
calls are bit-identical.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, roots_jacobi

from . import _kernels as K
from . import converge
from .corrstruct import (
    BlockFactorialStructure,
    CorrelationMatrix,
    OneFactorialStructure,
    TreeStructure,
    is_m_matrix,
    one_factorial_exact,
    theta_upper_limit,
    two_factorial_structure,
    validate,
)
from .errors import DomainError
from .quad import GammaMap, Tolerance, integrate_2d_gamma, integrate_gamma_weighted
from .specfun import SeriesValue, laguerre_weight

_KMAX_CAP = 360


@dataclass(frozen=True)
class EvalPoint:
    """Truncation points x (positive, +inf marginalizes a component) and the
    common shape alpha (degrees of freedom nu = 2 alpha)."""

    x: np.ndarray
    alpha: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        object.__setattr__(self, "x", x)
        if np.any(x <= 0.0) or np.any(np.isnan(x)):
            raise DomainError("all x_i must be > 0 (inf allowed)", module="engines")
        if self.alpha <= 0.0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}", module="engines")


@dataclass(frozen=True)
class ThreeBlockSeriesParams:
    structure: BlockFactorialStructure
    tol: Tolerance
    max_total_degree: int = 40
    variant: str = "direct"  # or "rearranged"

    def __post_init__(self):
        if self.max_total_degree < 1:
            raise DomainError("max_total_degree must be >= 1", module="engines")
        if self.variant not in ("direct", "rearranged"):
            raise DomainError(f"unknown variant {self.variant!r}", module="engines")
        if self.structure.p != 3:
            raise DomainError("three-block series needs p = 3", module="engines")


def admissible_alpha(alpha, n):
    """Shape admissibility for a general correlation matrix: 2 alpha a
    positive integer or 2 alpha > floor((n - 1)/2)."""
    two_a = 2.0 * alpha
    if abs(two_a - round(two_a)) < 1e-12 and round(two_a) >= 1:
        return True
    return two_a > math.floor((n - 1) / 2)


# ---------------------------------------------------------------------------
# mixture factors
# ---------------------------------------------------------------------------

class _MixtureFactors:
    """Product of non-central gamma cdf factors of one block.

    Splits components into constants (a_j = 0 or x_j = inf), step-function
    limits (a_j^2 = 1), and regular factors with precomputed cdf ladders.
    """

    def __init__(self, x_block, a_block, alpha, y_max, nc_scale=1.0):
        x_block = np.asarray(x_block, dtype=np.float64)
        a_block = np.asarray(a_block, dtype=np.float64)
        self.alpha = alpha
        self.const = 1.0
        self.steps = []  # x_j thresholds of limit components
        scales = []
        tables = []
        for xj, aj in zip(x_block, a_block):
            if math.isinf(xj):
                continue
            a2 = aj * aj
            if a2 >= 1.0:
                self.steps.append(xj)
                continue
            d = 1.0 - a2
            if a2 == 0.0:
                self.const *= K.igamma_p(alpha, xj)
                continue
            s = a2 / d * nc_scale
            scales.append(s)
            tables.append(K.gamma_table(alpha, xj / d, K.table_len(s * y_max)))
        self.scales = np.asarray(scales)
        if tables:
            width = max(t.size for t in tables)
            self.tables = np.zeros((len(tables), width))
            self.lens = np.empty(len(tables), dtype=np.int64)
            for i, t in enumerate(tables):
                self.tables[i, : t.size] = t
                self.lens[i] = t.size
        else:
            self.tables = np.zeros((0, 0))
            self.lens = np.zeros(0, dtype=np.int64)

    def at(self, y):
        """Product over factors at mixing values y (vectorized)."""
        y = np.asarray(y, dtype=np.float64)
        if self.lens.size:
            ncs = self.scales[:, None] * y[None, :]
            out = K.prod_nc_cdf_many(self.tables, self.lens, ncs) * self.const
        else:
            out = np.full(y.shape, self.const)
        for xj in self.steps:
            out = out * np.where(y < xj, 1.0, np.where(y == xj, 0.5, 0.0))
        return out


def cdf_one_factorial(point, s, tol=Tolerance()):
    """Mixture cdf of a one-factorial structure:

        F = int_0^inf prod_j G_a(x_j/(1-a_j^2); a_j^2 y/(1-a_j^2)) g_a(y) dy.
    """
    if not isinstance(s, OneFactorialStructure):
        raise DomainError("expected a OneFactorialStructure", module="engines")
    if point.x.size != s.n:
        raise DomainError("dimension mismatch", module="engines")
    gm = GammaMap(point.alpha, tol.abs_tol)
    fac = _MixtureFactors(point.x, s.a, point.alpha, gm.upper)
    res = integrate_gamma_weighted(fac.at, point.alpha, tol)
    value = min(max(res.value, 0.0), 1.0)
    return SeriesValue(value, res.abs_error_estimate, res.terms_used, res.converged)


# ---------------------------------------------------------------------------
# fixed gamma rule shared across Laguerre orders
# ---------------------------------------------------------------------------

from .quad import _GAUSS_IDX, _WG, _WK, _XK  # noqa: E402  (rule constants)


class _GammaRule:
    """Fixed panel rule for int f(y) g_alpha(y) dy reused across many
    integrands (the Laguerre coefficient ladders share their nodes).

    Panels are uniform in the mapped coordinate; the count scales with the
    highest polynomial order so the Kronrod panels resolve the oscillation.
    """

    def __init__(self, alpha, abs_tol, kmax):
        self.map = GammaMap(alpha, abs_tol)
        half = max(12, (int(0.75 * kmax) + 12) // 2)
        # the map coordinate has a seam at u = 1/2; keep it on a panel edge
        edges = np.concatenate([
            np.linspace(0.0, 0.5, half + 1),
            np.linspace(0.5, 1.0, half + 1)[1:],
        ])
        panels = edges.size - 1
        h = 0.5 * (edges[1] - edges[0])
        u = (edges[:-1, None] + h * (_XK[None, :] + 1.0)).ravel()
        self.y, w_map = self.map.nodes_weights(u)
        self.wk = (h * np.tile(_WK, panels)) * w_map
        wg_panel = np.zeros(15)
        wg_panel[_GAUSS_IDX] = _WG
        self.wg = (h * np.tile(wg_panel, panels)) * w_map
        self.panels = panels

    def integrate(self, vals):
        """(value, error estimate) from the embedded pair, panel by panel."""
        vk = (vals * self.wk).reshape(self.panels, 15).sum(axis=1)
        vg = (vals * self.wg).reshape(self.panels, 15).sum(axis=1)
        return float(vk.sum()), float(np.abs(vk - vg).sum())


def _block_coefficients(x_block, a_block, alpha, kmax, rule):
    """Laguerre coefficients of one block's factor product:

        c_k = C(a+k-1, k)^{-1} int prod_j G_a(.; s_j y) L_k^{(a-1)}(y) g_a(y) dy

    for k = 0..kmax, plus the quadrature error of the k = 0 integral and the
    Parseval residual 1 - sum_k C(a+k-1,k) c_k^2 (the tail mass available to
    truncation bounds; the product has norm <= 1).
    """
    fac = _MixtureFactors(x_block, a_block, alpha, rule.map.upper)
    pvals = fac.at(rule.y)
    ltab = K.laguerre_table(alpha, kmax, rule.y)
    weights = np.array([laguerre_weight(alpha, k) for k in range(kmax + 1)])
    c = np.empty(kmax + 1)
    err0 = 0.0
    for k in range(kmax + 1):
        val, err = rule.integrate(pvals * ltab[k])
        c[k] = val / weights[k]
        if k == 0:
            err0 = err
    # squared norm of the product itself bounds the coefficient tail
    norm_sq, _ = rule.integrate(pvals * pvals)
    parseval = float(np.sum(weights * c * c))
    residual = max(min(norm_sq, 1.0) - parseval, 0.0)
    return c, weights, err0, residual


def coeff_cjk(x_block, alpha, a_block, k, tol=Tolerance()):
    """Single Laguerre coefficient c_{j,k} of a block factor product."""
    if k < 0:
        raise DomainError("k must be >= 0", module="engines")
    rule = _GammaRule(alpha, tol.abs_tol, max(int(k), 8))
    c, _, _, _ = _block_coefficients(x_block, a_block, alpha, int(k), rule)
    return float(c[int(k)])


def _merged_one_factorial(point, s, tol):
    merged = OneFactorialStructure(s.a, allow_limit=False)
    return cdf_one_factorial(point, merged, tol)


def cdf_two_block_laguerre(point, s, tol=Tolerance()):
    """Two-block cdf by the Laguerre orthogonal series, |theta| <= 1.

    Tail certified by Cauchy-Schwarz over the Parseval residuals:
    |tail after K| <= theta^{2(K+1)} sqrt(res1 * res2).
    """
    _check_two_block(point, s)
    th = float(s.theta[0, 1])
    if abs(th) > 1.0 + 1e-12:
        raise DomainError(f"Laguerre series needs |theta| <= 1, got {th}", module="engines")
    alpha = point.alpha
    t2 = min(th * th, 1.0)
    if t2 >= 1.0 - 1e-14:
        return _merged_one_factorial(point, s, tol)
    sl1, sl2 = s.block_slices()
    if t2 == 0.0:
        f1 = cdf_one_factorial(EvalPoint(point.x[sl1], alpha), OneFactorialStructure(s.a[sl1]), tol)
        f2 = cdf_one_factorial(EvalPoint(point.x[sl2], alpha), OneFactorialStructure(s.a[sl2]), tol)
        err = f1.abs_error_estimate + f2.abs_error_estimate
        return SeriesValue(f1.value * f2.value, err, f1.terms_used + f2.terms_used, f1.converged and f2.converged)
    if t2 < 1.0:
        kmax = int(math.log(max(tol.abs_tol, 1e-15)) / math.log(t2)) + 4
    else:
        kmax = _KMAX_CAP
    kmax = min(max(kmax, 8), _KMAX_CAP)
    rule = _GammaRule(alpha, tol.abs_tol, kmax)
    c1, w, e1, r1 = _block_coefficients(point.x[sl1], s.a[sl1], alpha, kmax, rule)
    c2, _, e2, r2 = _block_coefficients(point.x[sl2], s.a[sl2], alpha, kmax, rule)
    powers = t2 ** np.arange(kmax + 1)
    value = float(np.sum(w * powers * c1 * c2))
    tail = t2 ** (kmax + 1) * math.sqrt(max(r1, 0.0) * max(r2, 0.0)) / max(1.0 - t2, 1e-12)
    err = e1 + e2 + tail
    value = min(max(value, 0.0), 1.0)
    ok = err <= max(tol.abs_tol * 10.0, tol.rel_tol * max(value, 1e-12)) or err <= 1e-6
    return SeriesValue(value, err, 15 * rule.panels * (kmax + 1), ok)


def _check_two_block(point, s):
    if not isinstance(s, BlockFactorialStructure) or s.p != 2:
        raise DomainError("expected a two-block structure", module="engines")
    if point.x.size != s.n:
        raise DomainError("dimension mismatch", module="engines")


def cdf_two_block_kernel(point, s, tol=Tolerance()):
    """Two-block cdf by the kernel-integral representation, |theta| < 1:

        (1-t^2)^a  iint G1(x1; (1-t^2) y1) G2(x2; (1-t^2) y2)
                        0F1(a; t^2 y1 y2) g_a(y1) g_a(y2) dy1 dy2.
    """
    _check_two_block(point, s)
    th = float(s.theta[0, 1])
    if abs(th) >= 1.0:
        raise DomainError(f"kernel integral needs |theta| < 1, got {th}", module="engines")
    alpha = point.alpha
    t2 = th * th
    sl1, sl2 = s.block_slices()
    if t2 == 0.0:
        return cdf_two_block_laguerre(point, s, tol)
    gm = GammaMap(alpha, tol.abs_tol)
    fac1 = _MixtureFactors(point.x[sl1], s.a[sl1], alpha, gm.upper, nc_scale=1.0 - t2)
    fac2 = _MixtureFactors(point.x[sl2], s.a[sl2], alpha, gm.upper, nc_scale=1.0 - t2)
    pref = (1.0 - t2) ** alpha

    def integrand(y1, y2):
        u = fac1.at(y1.ravel())
        v = fac2.at(y2.ravel())
        kern = K.hyp0f1_many(alpha, t2 * (y1 * y2))
        return pref * u[:, None] * v[None, :] * kern

    res = integrate_2d_gamma(integrand, alpha, tol)
    value = min(max(res.value, 0.0), 1.0)
    return SeriesValue(value, res.abs_error_estimate, res.terms_used, res.converged)


# ---------------------------------------------------------------------------
# two-factorial angular engines (theta beyond 1)
# ---------------------------------------------------------------------------

def _angular_rule(alpha, m):
    """Gauss-Jacobi rule in u = cos(phi) for the angle density
    sin^{2a-2}(phi)/B(1/2, a-1/2): nodes and weights summing to 1."""
    u, w = roots_jacobi(m, alpha - 1.5, alpha - 1.5)
    lb = gammaln(0.5) + gammaln(alpha - 0.5) - gammaln(alpha)
    return u, w / math.exp(lb)


class _TwoFactorialIntegrand:
    """Angular average of the factor product over a (y1, y2) mesh."""

    def __init__(self, point, s, tol):
        self.alpha = point.alpha
        tf = two_factorial_structure(s)
        self.tf = tf
        self.u = point.x / tf.d
        self.b1 = tf.b1
        self.b2 = tf.b2 * (1j if tf.b2_imaginary else 1.0)
        gm = GammaMap(point.alpha, tol.abs_tol)
        ymax = gm.upper
        self.keep = ~np.isinf(point.x)
        tables = []
        for j in np.nonzero(self.keep)[0]:
            mag = (abs(tf.b1[j]) + abs(tf.b2[j])) ** 2 * ymax
            extra = 2.0 * tf.b2[j] ** 2 * ymax if tf.b2_imaginary else 0.0
            tables.append(K.gamma_table(self.alpha, float(self.u[j]), K.table_len(mag, extra)))
        width = max((t.size for t in tables), default=1)
        self.tables = np.zeros((len(tables), width))
        self.lens = np.empty(len(tables), dtype=np.int64)
        for i, t in enumerate(tables):
            self.tables[i, : t.size] = t
            self.lens[i] = t.size
        self.idx = np.nonzero(self.keep)[0]

    def product_at(self, y1, y2, cosu):
        """prod_j G_a(u_j; b1_j^2 y1 + b2_j^2 y2 + 2 b1_j b2_j sqrt(y1 y2) cosu)."""
        root = np.sqrt(y1 * y2)
        ncs = np.empty((self.idx.size,) + y1.shape, dtype=np.complex128)
        for row, j in enumerate(self.idx):
            b1j = self.b1[j]
            b2j = self.b2[j]
            ncs[row] = b1j * b1j * y1 + b2j * b2j * y2 + 2.0 * b1j * b2j * root * cosu
        flat = ncs.reshape(self.idx.size, -1)
        vals = K.prod_nc_cdf_many(self.tables, self.lens, flat)
        return vals.reshape(y1.shape)

    def averaged(self, y1, y2, nodes, weights):
        out = np.zeros(np.broadcast(y1, y2).shape)
        y1b, y2b = np.broadcast_arrays(y1, y2)
        for u, w in zip(nodes, weights):
            out += w * self.product_at(y1b, y2b, u).real
        return out


def _pick_angular_order(itg, alpha, tol, ymax):
    """Probe the angular integral at representative mesh points; grow the
    rule until doubling changes the probes by less than a tenth of the
    tolerance."""
    probes_y = np.array([0.5 * alpha + 0.2, alpha + 1.0, min(alpha + 6.0 * math.sqrt(alpha), 0.8 * ymax)])
    y1 = probes_y[:, None]
    y2 = probes_y[None, :]
    m = 12
    un, wn = _angular_rule(alpha, m)
    prev = itg.averaged(y1, y2, un, wn)
    while m < 96:
        m2 = int(m * 1.5)
        un, wn = _angular_rule(alpha, m2)
        cur = itg.averaged(y1, y2, un, wn)
        diff = float(np.max(np.abs(cur - prev)))
        if diff < max(tol.abs_tol, 1e-12) / 10.0:
            return m2, diff
        prev = cur
        m = m2
    return m, float("nan")


def cdf_two_factorial(point, s, tol=Tolerance()):
    """Two-block cdf by the rank-two angular representation, valid for
    theta in (0, ((1+1/q1)(1+1/q2))^{1/2}) and alpha > 1/2.

    For theta > 1 the per-angle non-centralities are complex; the angular
    average of the product is real by the symmetry of the angle density.
    """
    _check_two_block(point, s)
    if point.alpha <= 0.5:
        raise DomainError("angular representation needs alpha > 1/2", module="engines")
    th = float(s.theta[0, 1])
    if not (0.0 < th < theta_upper_limit(s)):
        raise DomainError(
            f"theta={th} outside (0, {theta_upper_limit(s):.6f})", module="engines"
        )
    gm = GammaMap(point.alpha, tol.abs_tol)
    itg = _TwoFactorialIntegrand(point, s, tol)
    m_phi, probe_diff = _pick_angular_order(itg, point.alpha, tol, gm.upper)
    un, wn = _angular_rule(point.alpha, m_phi)

    def integrand(y1, y2):
        return itg.averaged(y1, y2, un, wn)

    res = integrate_2d_gamma(integrand, point.alpha, tol)
    extra = 0.0 if math.isnan(probe_diff) else probe_diff
    value = min(max(res.value, 0.0), 1.0)
    return SeriesValue(value, res.abs_error_estimate + extra, res.terms_used * m_phi, res.converged)


def cdf_two_factorial_half(point, s, tol=Tolerance()):
    """alpha = 1/2 limit of the angular representation: the angle measure
    degenerates to equal atoms at 0 and pi, leaving a double integral of the
    real part of the factor product at the fused non-centralities
    (b_{j1} sqrt(y1) +- b_{j2} sqrt(y2))^2."""
    _check_two_block(point, s)
    if abs(point.alpha - 0.5) > 1e-12:
        raise DomainError("this engine is the alpha = 1/2 limit", module="engines")
    th = float(s.theta[0, 1])
    if not (0.0 < th < theta_upper_limit(s)):
        raise DomainError(
            f"theta={th} outside (0, {theta_upper_limit(s):.6f})", module="engines"
        )
    itg = _TwoFactorialIntegrand(point, s, tol)

    def integrand(y1, y2):
        y1b, y2b = np.broadcast_arrays(y1, y2)
        out = np.zeros(y1b.shape)
        for sign in (1.0, -1.0):
            out += 0.5 * itg.product_at(y1b, y2b, sign).real
        return out

    res = integrate_2d_gamma(integrand, 0.5, tol)
    value = min(max(res.value, 0.0), 1.0)
    return SeriesValue(value, res.abs_error_estimate, res.terms_used, res.converged)


# ---------------------------------------------------------------------------
# three-block series
# ---------------------------------------------------------------------------

def _pochhammer(alpha, k):
    return math.exp(gammaln(alpha + k) - gammaln(alpha))


def _three_block_levels_direct(c, theta_c, alpha, kmax):
    """Level-K sums of the direct expansion: the K-th binomial level is

        sum_{k1+k2+k3+k4=K} (a)_K (-2)^{k4}/k4!
            prod_j theta_j^{2 k_j + k4} / k_j!  c_{j, K-k_j}.
    """
    t1, t2, t3 = theta_c
    levels = []
    for Ktot in range(kmax + 1):
        poch = _pochhammer(alpha, Ktot)
        lvl = 0.0
        for k4 in range(Ktot + 1):
            rem = Ktot - k4
            base = poch * (-2.0) ** k4 / math.factorial(k4)
            tp = (t1 * t2 * t3) ** k4
            for k1 in range(rem + 1):
                f1 = t1 ** (2 * k1) / math.factorial(k1) * c[0][Ktot - k1]
                for k2 in range(rem - k1 + 1):
                    k3 = rem - k1 - k2
                    lvl += (
                        base
                        * tp
                        * f1
                        * t2 ** (2 * k2) / math.factorial(k2) * c[1][Ktot - k2]
                        * t3 ** (2 * k3) / math.factorial(k3) * c[2][Ktot - k3]
                    )
        levels.append(lvl)
    return levels


def _three_block_levels_rearranged(c, theta_c, alpha, nmax):
    """Homogeneous-degree reordering: degree-N polynomial levels

        (-1)^N sum_{m1+m2+m3 = n - eps} [sum_m 2^{2m+eps} (a)_{n-m} /
            ((2m+eps)! prod (m_j - m)!)] prod theta_j^{2 m_j + eps} c_{j, n-m_j}

    with n = floor(N/2), eps = N mod 2 (n is a local series index here).
    """
    t1, t2, t3 = theta_c
    levels = [float(c[0][0] * c[1][0] * c[2][0])]
    for N in range(2, nmax + 1):
        nl = N // 2
        eps = N % 2
        s = 0.0
        for m1 in range(nl - eps + 1):
            for m2 in range(nl - eps - m1 + 1):
                m3 = nl - eps - m1 - m2
                inner = 0.0
                for m in range(min(m1, m2, m3) + 1):
                    inner += (
                        2.0 ** (2 * m + eps)
                        * _pochhammer(alpha, nl - m)
                        / (
                            math.factorial(2 * m + eps)
                            * math.factorial(m1 - m)
                            * math.factorial(m2 - m)
                            * math.factorial(m3 - m)
                        )
                    )
                s += (
                    inner
                    * t1 ** (2 * m1 + eps)
                    * t2 ** (2 * m2 + eps)
                    * t3 ** (2 * m3 + eps)
                    * c[0][nl - m1]
                    * c[1][nl - m2]
                    * c[2][nl - m3]
                )
        levels.append((-1.0) ** N * s)
    return levels


def _three_block_eval(point, params):
    s = params.structure
    if point.x.size != s.n:
        raise DomainError("dimension mismatch", module="engines")
    alpha = point.alpha
    tt = converge.theta_tilde_from_structure(s)
    theta_c = (
        float(s.theta[1, 2]),
        float(s.theta[0, 2]),
        float(s.theta[0, 1]),
    )
    if params.variant == "direct":
        mr = converge.max_rho_sq(tt, run_grid=False)
        if not mr.max_rho_sq < 1.0:
            raise DomainError(
                f"direct series needs max rho^2 < 1, got {mr.max_rho_sq:.6f}", module="engines"
            )
        ratio = math.sqrt(mr.max_rho_sq)
    else:
        spec_rad = float(np.max(np.abs(np.linalg.eigvals(_theta_tilde_matrix(tt) - np.eye(3)))))
        if not spec_rad < 1.0:
            raise DomainError(
                f"rearranged series needs spectral radius < 1, got {spec_rad:.6f}", module="engines"
            )
        ratio = spec_rad
    kmax = params.max_total_degree
    rule = _GammaRule(alpha, params.tol.abs_tol, kmax)
    slices = s.block_slices()
    c = []
    qerr = 0.0
    for sl in slices:
        cj, _, ej, _ = _block_coefficients(point.x[sl], s.a[sl], alpha, kmax, rule)
        c.append(cj)
        qerr += ej
    if params.variant == "direct":
        levels = _three_block_levels_direct(c, theta_c, alpha, kmax)
    else:
        levels = _three_block_levels_rearranged(c, theta_c, alpha, kmax)
    total = math.fsum(levels)
    k0 = float(c[0][0] * c[1][0] * c[2][0])
    tail = abs(levels[-1]) * ratio / max(1.0 - ratio, 1e-9) + abs(levels[-1])
    err = qerr + tail
    converged = tail <= params.tol.abs_tol * 10.0 or tail <= 1e-7
    return total, k0, err, 15 * rule.panels * len(levels), converged


def _theta_tilde_matrix(tt):
    g1, g2, g3 = tt.values
    return np.array([[1.0, g3, g2], [g3, 1.0, g1], [g2, g1, 1.0]])


def cdf_three_block(point, params):
    """Three-block cdf by the characteristic-function power series."""
    total, _, err, terms, conv = _three_block_eval(point, params)
    return SeriesValue(min(max(total, 0.0), 1.0), err, terms, conv)


def three_block_excess_term(point, params):
    """(series total, product-of-blocks term): the difference is the
    positive excess bound used by the three-block certificates."""
    total, k0, err, terms, conv = _three_block_eval(point, params)
    return SeriesValue(total, err, terms, conv), k0


# ---------------------------------------------------------------------------
# tree-type density
# ---------------------------------------------------------------------------

def pdf_tree(x, alpha, tree):
    """Density of a tree-type structure:

        f = (|R| prod_i r^{ii})^{-alpha} (prod_i r^{ii} g_a(r^{ii} x_i))
            prod_{edges (i,j)} 0F1(alpha; (r^{ij})^2 x_i x_j).
    """
    if not isinstance(tree, TreeStructure):
        raise DomainError("expected a TreeStructure", module="engines")
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0):
        raise DomainError("x must be positive", module="engines")
    if alpha <= 0.0:
        raise DomainError("alpha must be > 0", module="engines")
    diag = tree.diag
    logv = -alpha * (math.log(tree.det_r) + float(np.sum(np.log(diag))))
    logv += float(np.sum(np.log(diag) + (alpha - 1.0) * np.log(diag * x) - diag * x) - x.size * gammaln(alpha))
    val = math.exp(logv)
    for i, j, rij in tree.edges:
        val *= K.hyp0f1_many(alpha, np.array([rij * rij * x[i] * x[j]]))[0]
    return val


# ---------------------------------------------------------------------------
# small-block rho series
# ---------------------------------------------------------------------------

class _FactorialBlock:
    """Block cdf F(x; beta, R) and its mixed partial derivatives via a
    factorial representation (one-factorial where exact, rank-two fit
    otherwise; block sizes <= 4)."""

    def __init__(self, r, tol):
        self.r = r if isinstance(r, CorrelationMatrix) else validate(r)
        self.n = self.r.n
        self.tol = tol
        self.one_fac = one_factorial_exact(self.r, tol=1e-9)
        self.two_fac = None
        if self.one_fac is None:
            self.two_fac = _fit_two_factorial(self.r)
            if self.two_fac is None:
                raise DomainError(
                    "block has no one- or two-factorial representation", module="engines"
                )

    def cdf_deriv(self, x_block, beta, orders):
        """(prod_mu d^{orders_mu}/dx_mu^{orders_mu}) F(x; beta, R)."""
        orders = np.asarray(orders, dtype=np.int64)
        x_block = np.asarray(x_block, dtype=np.float64)
        if self.one_fac is not None:
            return self._deriv_one_fac(x_block, beta, orders)
        return self._deriv_two_fac(x_block, beta, orders)

    def _factor_values(self, u, beta, s_or_omega, order, complex_mode):
        """d^order/du^order G_beta(u; w) at non-centralities w (vectorized).

        order 0 is the cdf; order m >= 1 expands into non-central densities
        g_{beta-i}(u; w) with alternating binomial coefficients.
        """
        w = s_or_omega
        if order == 0:
            table = K.gamma_table(beta, u, K.table_len(float(np.max(np.abs(w))) + 1.0,
                                                       _complex_extra(w)))
            return K.nc_cdf_many(table, w)
        # d/du g_b(u; w) = g_{b-1}(u; w) - g_b(u; w), hence
        # d^m/du^m g_beta(u; w) = sum_i (-1)^{m-i} C(m, i) g_{beta-i}(u; w)
        m = order - 1
        out = np.zeros(w.shape, dtype=np.complex128 if complex_mode else np.float64)
        ew = np.exp(-w)
        for i in range(m + 1):
            b = beta - i
            coef = (-1.0) ** (m - i) * math.comb(m, i)
            gb = math.exp((b - 1.0) * math.log(u) - u - float(gammaln(b)))
            out += coef * gb * ew * K.hyp0f1_many(b, u * w)
        return out

    def _deriv_one_fac(self, x_block, beta, orders):
        a = self.one_fac.a
        d = 1.0 - a * a
        s = a * a / d
        gm = GammaMap(beta, self.tol.abs_tol)

        def f(y):
            out = np.ones(y.shape)
            for j in range(self.n):
                w = s[j] * y
                vals = self._factor_values(x_block[j] / d[j], beta, w, int(orders[j]), False)
                out = out * vals.real * d[j] ** (-float(orders[j]))
            return out

        res = integrate_gamma_weighted(f, beta, self.tol, sup_f=10.0)
        return float(res.value)

    def _deriv_two_fac(self, x_block, beta, orders):
        tf = self.two_fac
        b1 = tf.b1
        b2 = tf.b2 * (1j if tf.b2_imaginary else 1.0)
        d = tf.d
        if abs(beta - 0.5) < 1e-12:
            atoms = [(1.0, 0.5), (-1.0, 0.5)]
            un = np.array([a[0] for a in atoms])
            wn = np.array([a[1] for a in atoms])
        else:
            un, wn = _angular_rule(beta, 32)

        def integrand(y1, y2):
            y1b, y2b = np.broadcast_arrays(y1, y2)
            root = np.sqrt(y1b * y2b)
            out = np.zeros(y1b.shape)
            for u, wgt in zip(un, wn):
                prod = np.ones(y1b.shape, dtype=np.complex128)
                for j in range(self.n):
                    om = b1[j] ** 2 * y1b + b2[j] ** 2 * y2b + 2.0 * b1[j] * b2[j] * root * u
                    vals = self._factor_values(x_block[j] / d[j], beta, om, int(orders[j]), True)
                    prod = prod * vals * d[j] ** (-float(orders[j]))
                out += wgt * prod.real
            return out

        res = integrate_2d_gamma(integrand, beta, self.tol)
        return float(res.value)


def _complex_extra(w):
    if np.iscomplexobj(w):
        return float(np.max(np.abs(w) - w.real)) + 1.0
    return 0.0


def _fit_two_factorial(r):
    """Diagonal D making R - D rank <= 2 (block sizes <= 4), found by
    least squares on the middle eigenvalues, then eigen-factorized."""
    from scipy.optimize import least_squares

    m = r.entries
    n = m.shape[0]
    if n <= 2:
        return None  # always one-factorial; handled elsewhere
    if n > 4:
        raise DomainError("rank-two fitting limited to blocks of size <= 4", module="engines")

    def resid(dvec):
        ev = np.linalg.eigvalsh(m - np.diag(dvec))
        order = np.argsort(np.abs(ev))
        return ev[order[: n - 2]]

    best = None
    for d0 in (0.5, 0.3, 0.8):
        sol = least_squares(resid, np.full(n, d0), bounds=(1e-6, 1.0), xtol=1e-14, ftol=1e-14)
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or math.sqrt(2.0 * best.cost) > 1e-8:
        return None
    d = best.x
    core = m - np.diag(d)
    ev, vec = np.linalg.eigh(core / np.sqrt(np.outer(d, d)))
    order = np.argsort(-np.abs(ev))
    lam1, lam2 = float(ev[order[0]]), float(ev[order[1]])
    e1, e2 = vec[:, order[0]], vec[:, order[1]]
    if lam1 < 0.0:
        lam1, lam2 = lam2, lam1
        e1, e2 = e2, e1
    return TwoFactorialStructure(
        d, lam1, lam2, math.sqrt(max(lam1, 0.0)) * e1, math.sqrt(abs(lam2)) * e2, lam2 < 0.0
    )


def rho_block_inverse(r11, r22, rho):
    """Closed-form inverse of the rho-coupled block matrix

        R_rho = [[R11, rho 1 1'], [rho 1 1', R22]]:

        R11^{-1} (+) R22^{-1} + (1 - rho^2 q1 q2)^{-1} *
            [[rho^2 q2 w1 w1', -rho w1 w2'], [-rho w2 w1', rho^2 q1 w2 w2']]

    with w_i = R_ii^{-1} 1 and q_i = 1' R_ii^{-1} 1.
    """
    m1 = r11.entries if hasattr(r11, "entries") else np.asarray(r11, dtype=np.float64)
    m2 = r22.entries if hasattr(r22, "entries") else np.asarray(r22, dtype=np.float64)
    n1, n2 = m1.shape[0], m2.shape[0]
    i1 = np.linalg.inv(m1)
    i2 = np.linalg.inv(m2)
    w1 = i1 @ np.ones(n1)
    w2 = i2 @ np.ones(n2)
    q1 = float(np.sum(w1))
    q2 = float(np.sum(w2))
    den = 1.0 - rho * rho * q1 * q2
    if den <= 0.0:
        raise DomainError("rho too large: 1 - rho^2 q1 q2 <= 0", module="engines")
    out = np.zeros((n1 + n2, n1 + n2))
    out[:n1, :n1] = i1 + rho * rho * q2 / den * np.outer(w1, w1)
    out[n1:, n1:] = i2 + rho * rho * q1 / den * np.outer(w2, w2)
    out[:n1, n1:] = -rho / den * np.outer(w1, w2)
    out[n1:, :n1] = out[:n1, n1:].T
    return out


def _subset_q(m):
    """q_J = 1' adj(R_J) 1 = (1' R_J^{-1} 1) |R_J| for every non-empty
    subset J of the block indices."""
    n = m.shape[0]
    out = {}
    for size in range(1, n + 1):
        for J in itertools.combinations(range(n), size):
            sub = m[np.ix_(J, J)]
            det = float(np.linalg.det(sub))
            ones = np.ones(size)
            out[J] = float(ones @ np.linalg.solve(sub, ones)) * det
    return out


def _compositions(total, bins):
    """All ways to place ``total`` identical balls into ``bins`` boxes."""
    if bins == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, bins - 1):
            yield (first,) + rest


def cdf_rho_block(point, r11, r22, rho, order="rho4-approx", tol=Tolerance(), series_kmax=3):
    """Cdf of two blocks coupled by a constant cross correlation rho:

        F = sum_k C(a+k-1, k) rho^{2k} prod_i [ k! sum over subset
            decompositions of k: prod_J q_{iJ}^{k_J}/k_J! *
            (mixed partials) F(x_i; a+k, R_ii) ].

    ``order='rho4-approx'`` keeps k <= 2 (remainder O(rho^6) folded into the
    error estimate); ``'exact-series'`` keeps k <= series_kmax.
    """
    if order not in ("exact-series", "rho4-approx"):
        raise DomainError(f"unknown order {order!r}", module="engines")
    m1 = r11.entries if hasattr(r11, "entries") else np.asarray(r11, dtype=np.float64)
    m2 = r22.entries if hasattr(r22, "entries") else np.asarray(r22, dtype=np.float64)
    n1, n2 = m1.shape[0], m2.shape[0]
    if n1 > 4 or n2 > 4:
        raise DomainError("block sizes must be <= 4", module="engines")
    if rho < 0.0:
        raise DomainError("rho must be >= 0", module="engines")
    for name, mm in (("R11", m1), ("R22", m2)):
        inv = np.linalg.inv(mm)
        off = inv - np.diag(np.diag(inv))
        if mm.shape[0] > 1 and float(off.max()) > 1e-10:
            raise DomainError(f"{name}^-1 must have non-positive off-diagonals", module="engines")
        if not np.all(np.abs(np.diag(inv)) + 1e-12 >= np.sum(np.abs(off), axis=1)):
            raise DomainError(f"{name}^-1 must be diagonally dominant", module="engines")
    if rho > 0.0:
        full = np.zeros((n1 + n2, n1 + n2))
        full[:n1, :n1] = m1
        full[n1:, n1:] = m2
        full[:n1, n1:] = rho
        full[n1:, :n1] = rho
        if not is_m_matrix(np.linalg.inv(full)):
            raise DomainError("rho too large: coupled inverse is not an M-matrix", module="engines")
    alpha = point.alpha
    x1 = point.x[:n1]
    x2 = point.x[n1:]
    kmax = 2 if order == "rho4-approx" else max(int(series_kmax), 0)
    blocks = [(_FactorialBlock(m1, tol), _subset_q(m1), x1, n1),
              (_FactorialBlock(m2, tol), _subset_q(m2), x2, n2)]
    terms = []
    for k in range(kmax + 1):
        coef = laguerre_weight(alpha, k) * rho ** (2 * k)
        if coef == 0.0 and k > 0:
            terms.append(0.0)
            continue
        factors = []
        for blk, qmap, xb, nb in blocks:
            subsets = list(qmap.keys())
            # group subset decompositions by the derivative pattern they
            # induce, so each mixed partial is integrated once
            weight_by_orders = {}
            for comp in _compositions(k, len(subsets)):
                weight = math.factorial(k)
                orders = [0] * nb
                for J, kj in zip(subsets, comp):
                    if kj == 0:
                        continue
                    weight *= qmap[J] ** kj / math.factorial(kj)
                    for mu in J:
                        orders[mu] += kj
                key = tuple(orders)
                weight_by_orders[key] = weight_by_orders.get(key, 0.0) + weight
            total = 0.0
            for key, weight in sorted(weight_by_orders.items()):
                if weight == 0.0:
                    continue
                total += weight * blk.cdf_deriv(xb, alpha + k, np.array(key))
            factors.append(total)
        terms.append(coef * factors[0] * factors[1])
    value = math.fsum(terms)
    remainder = abs(terms[-1]) * rho * rho / max(1.0 - rho * rho, 0.5) if kmax >= 1 else rho * rho
    err = remainder + tol.abs_tol * (kmax + 1)
    return SeriesValue(value, err, kmax + 1, remainder <= max(tol.abs_tol * 100, 1e-6))


def upper_tail_approx(x, alpha, n1, n2, r1, r2, r2cross, tol=Tolerance(), kmax=None):
    """Equicorrelated-block approximation of P(all X_i <= x):

        prod of the two block cdfs
        + sum_{k>=1} C(a+k-1, k) (r2cross/(r1 r2))^k c_k(x; a, n1, r1) c_k(x; a, n2, r2)

    with c_k the Laguerre coefficients of the equicorrelated block product,
    requiring the mean squared cross correlation r2cross <= r1 r2.
    """
    if not (0.0 < r1 < 1.0 and 0.0 < r2 < 1.0):
        raise DomainError("mean block correlations must lie in (0, 1)", module="engines")
    if r2cross < 0.0 or r2cross > r1 * r2 + 1e-12:
        raise DomainError("requires 0 <= r2cross <= r1 * r2", module="engines")
    u = r2cross / (r1 * r2)
    if kmax is None:
        kmax = 40 if u > 0.5 else max(8, int(math.log(1e-12) / math.log(max(u, 1e-12))) + 2)
        kmax = min(kmax, 120)
    rule = _GammaRule(alpha, tol.abs_tol, kmax)
    c1, w, _, _ = _block_coefficients(np.full(n1, x), np.full(n1, math.sqrt(r1)), alpha, kmax, rule)
    c2, _, _, _ = _block_coefficients(np.full(n2, x), np.full(n2, math.sqrt(r2)), alpha, kmax, rule)
    base = float(c1[0] * c2[0])
    ks = np.arange(1, kmax + 1)
    series = float(np.sum(w[1:] * u ** ks * c1[1:] * c2[1:]))
    return base + series


# ---------------------------------------------------------------------------
# structure router
# ---------------------------------------------------------------------------

def structured_cdf(point, structure, tol=Tolerance()):
    """Route a structure to its engine.

    Two-block structures go to the merged mixture at |theta| = 1, the
    Laguerre series for theta < 1 and the angular representation for
    theta > 1 (its alpha = 1/2 limit when applicable).
    """
    if isinstance(structure, OneFactorialStructure):
        return cdf_one_factorial(point, structure, tol)
    if isinstance(structure, BlockFactorialStructure):
        if structure.p == 2:
            th = abs(float(structure.theta[0, 1]))
            if abs(th - 1.0) <= 1e-12:
                return _merged_one_factorial(point, structure, tol)
            if th < 1.0:
                return cdf_two_block_laguerre(point, structure, tol)
            if abs(point.alpha - 0.5) < 1e-12:
                return cdf_two_factorial_half(point, structure, tol)
            return cdf_two_factorial(point, structure, tol)
        params = ThreeBlockSeriesParams(structure, tol)
        return cdf_three_block(point, params)
    if isinstance(structure, TreeStructure):
        raise DomainError("tree structures provide a density, not a cdf engine", module="engines")
    raise DomainError(f"no engine for {type(structure).__name__}", module="engines")
