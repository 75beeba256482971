"""Inequality evaluation and certification.

Certified statements all have the shape  lhs >= rhs  for probabilities of
rectangle events A_i = {X_i <= x_i}:

* the orthant product inequality  P(all) >= P(block1) P(block2);
* its truncated-ratio sharpening between two nested rectangles (compared in
  cross-multiplied form to avoid division noise);
* the three-event cancelling inequality  P(ABC) P(A) >= P(AB) P(AC)  and the
  sum form  P(ABC) + P(A)P(B)P(C) >= P(AB)P(C) + P(AC)P(B);
* explicit positive lower bounds for the excess
  P(all) - prod of block probabilities on two- and three-block factorial
  minorants, the convolution power bound built from the alpha = 1/2 ratio,
  and chained upper bounds of Bonferroni type;
* the local-minimum criterion for equicorrelated matrices and
  log-supermodularity grid checks.

Probabilities come from a deterministic engine or from the Monte Carlo
oracle; Monte Carlo margins carry standard errors estimated by chunk
splitting (the chunks of one batch are independent), which correctly prices
the correlation between estimates that share a batch.
"""

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from . import converge, engines, oracle
from .corrstruct import (
    assemble,
    block_p_values,
    complementary_theta,
    cross_block_rank,
    theta_m_matrix_limit,
)
from .errors import DomainError
from .quad import Tolerance, integrate_gamma_weighted

DEFAULT_SIGMA_GATE = 3.5


@dataclass(frozen=True)
class Partition:
    """Disjoint non-empty index blocks covering {0..n-1} (2 or 3 blocks)."""

    index_blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.index_blocks)
        object.__setattr__(self, "index_blocks", blocks)
        if len(blocks) not in (2, 3):
            raise DomainError("partition needs 2 or 3 blocks", module="bounds")
        flat = [i for b in blocks for i in b]
        if len(set(flat)) != len(flat) or any(len(b) == 0 for b in blocks):
            raise DomainError("blocks must be disjoint and non-empty", module="bounds")

    @property
    def n(self):
        return sum(len(b) for b in self.index_blocks)


@dataclass(frozen=True)
class InequalityCertificate:
    """Result of one inequality check: verdict is 'holds' when the margin
    clears k standard errors, 'fails' when it clears -k, else
    'inconclusive'; deterministic paths have abs_uncertainty 0."""

    lhs: float
    rhs: float
    margin: float
    method: str
    abs_uncertainty: float
    verdict: str

    @staticmethod
    def from_margin(lhs, rhs, method, unc, sigma_gate=DEFAULT_SIGMA_GATE):
        margin = lhs - rhs
        if margin > sigma_gate * unc:
            verdict = "holds"
        elif margin < -sigma_gate * unc:
            verdict = "fails"
        else:
            verdict = "inconclusive"
        return InequalityCertificate(lhs, rhs, margin, method, unc, verdict)


def certificate_record(cert, name, inputs, seed=None):
    """Serialization: one JSON document with a digest of the inputs."""
    digest = hashlib.sha256(repr(sorted(inputs.items())).encode()).hexdigest()[:16]
    rec = {
        "name": name,
        "inputs_digest": digest,
        "lhs": cert.lhs,
        "rhs": cert.rhs,
        "margin": cert.margin,
        "uncertainty": cert.abs_uncertainty,
        "method": cert.method,
        "verdict": cert.verdict,
        "seed": seed,
    }
    return json.dumps(rec, sort_keys=True)


# ---------------------------------------------------------------------------
# evaluators
# ---------------------------------------------------------------------------

class EngineEvaluator:
    """Deterministic cdf source backed by a structured engine."""

    def __init__(self, structure, alpha, tol=Tolerance()):
        self.structure = structure
        self.alpha = alpha
        self.tol = tol
        self._memo = {}

    def cdf(self, x):
        key = tuple(float(v) for v in x)
        if key not in self._memo:
            point = engines.EvalPoint(np.asarray(x, dtype=np.float64), self.alpha)
            self._memo[key] = engines.structured_cdf(point, self.structure, self.tol).real
        return self._memo[key]

    def probs(self, boxes):
        values = np.array([self.cdf(b) for b in boxes])
        return values, None


class MCEvaluator:
    """Monte Carlo cdf source; one pass over the batch serves every box and
    retains per-chunk means for margin standard errors."""

    def __init__(self, batch):
        self.batch = batch
        self.seed = batch.seed

    def probs(self, boxes):
        _, chunk_means = oracle.mc_cdf_chunked(self.batch, boxes)
        return chunk_means.mean(axis=0), chunk_means


def _margin_uncertainty(chunk_means, h):
    """Standard error of margin h(p_1..p_m) from per-chunk evaluations."""
    if chunk_means is None:
        return 0.0
    vals = np.array([h(row) for row in chunk_means])
    b = vals.size
    if b < 2:
        return 0.0
    return float(np.std(vals, ddof=1)) / math.sqrt(b)


def _marginal_box(x, keep):
    out = np.full(len(x), np.inf)
    for i in keep:
        out[i] = x[i]
    return out


# ---------------------------------------------------------------------------
# rectangle inequalities
# ---------------------------------------------------------------------------

def check_orthant_inequality(evaluator, x, part, sigma_gate=DEFAULT_SIGMA_GATE):
    """P(all A_i) >= P(block1) P(block2)."""
    if len(part.index_blocks) != 2:
        raise DomainError("orthant check needs a two-block partition", module="bounds")
    x = np.asarray(x, dtype=np.float64)
    b1, b2 = part.index_blocks
    boxes = [x, _marginal_box(x, b1), _marginal_box(x, b2)]
    p, cm = evaluator.probs(boxes)
    unc = _margin_uncertainty(cm, lambda r: r[0] - r[1] * r[2])
    return InequalityCertificate.from_margin(float(p[0]), float(p[1] * p[2]),
                                             "orthant-product", unc, sigma_gate)


def check_truncated_ratio(evaluator, x, b, part, sigma_gate=DEFAULT_SIGMA_GATE):
    """Ratio sharpening between nested rectangles x <= b, cross-multiplied:

        P(A) P(B_I) P(B_Ic)  >=  P(B) P(A_I) P(A_Ic).
    """
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(x > b):
        raise DomainError("needs x_i <= b_i", module="bounds")
    i1, i2 = part.index_blocks
    boxes = [x, _marginal_box(x, i1), _marginal_box(x, i2),
             b, _marginal_box(b, i1), _marginal_box(b, i2)]
    p, cm = evaluator.probs(boxes)
    unc = _margin_uncertainty(cm, lambda r: r[0] * r[4] * r[5] - r[3] * r[1] * r[2])
    return InequalityCertificate.from_margin(
        float(p[0] * p[4] * p[5]), float(p[3] * p[1] * p[2]),
        "truncated-ratio", unc, sigma_gate,
    )


def check_three_event_inequalities(evaluator, x, part, sigma_gate=DEFAULT_SIGMA_GATE):
    """The cancelling inequality and the three-event sum inequality for
    blocks A, B, C; returns (cancelling, sum) certificates."""
    if len(part.index_blocks) != 3:
        raise DomainError("needs a three-block partition", module="bounds")
    x = np.asarray(x, dtype=np.float64)
    ia, ib, ic = part.index_blocks
    boxes = [
        x,                                   # ABC
        _marginal_box(x, ia + ib),           # AB
        _marginal_box(x, ia + ic),           # AC
        _marginal_box(x, ia),                # A
        _marginal_box(x, ib),                # B
        _marginal_box(x, ic),                # C
    ]
    p, cm = evaluator.probs(boxes)
    unc1 = _margin_uncertainty(cm, lambda r: r[0] * r[3] - r[1] * r[2])
    cert1 = InequalityCertificate.from_margin(
        float(p[0] * p[3]), float(p[1] * p[2]), "cancelling", unc1, sigma_gate
    )
    unc2 = _margin_uncertainty(cm, lambda r: r[0] + r[3] * r[4] * r[5] - r[1] * r[5] - r[2] * r[4])
    cert2 = InequalityCertificate.from_margin(
        float(p[0] + p[3] * p[4] * p[5]), float(p[1] * p[5] + p[2] * p[4]),
        "three-event-sum", unc2, sigma_gate,
    )
    return cert1, cert2


# ---------------------------------------------------------------------------
# excess lower bounds
# ---------------------------------------------------------------------------

def _check_dominates(r, s, tol=1e-10):
    """R must match the structure's diagonal blocks and dominate its
    cross-block entries."""
    target = assemble(s).entries
    m = r.entries if hasattr(r, "entries") else np.asarray(r, dtype=np.float64)
    if m.shape != target.shape:
        raise DomainError("dimension mismatch between R and the structure", module="bounds")
    slices = s.block_slices()
    for sl in slices:
        if float(np.max(np.abs(m[sl, sl] - target[sl, sl]))) > 1e-8:
            raise DomainError("R must have the structure's diagonal blocks", module="bounds")
    if float(np.min(m - target)) < -tol:
        raise DomainError("R must dominate the assembled structure entrywise", module="bounds")


def excess_two_block(x, r, s, tol=Tolerance(), sigma_gate=DEFAULT_SIGMA_GATE):
    """Positive lower bound for the excess P_R(all) - P(block1) P(block2):

        bound = F(x; alpha, R_theta) - F(x; alpha, R_0),

    with R_theta the two-block minorant (theta within its M-matrix range,
    routed to the merged mixture / Laguerre series / angular integral by
    theta) and R_0 its block-diagonal version.
    """
    if s.p != 2:
        raise DomainError("needs a two-block structure", module="bounds")
    if not isinstance(x, engines.EvalPoint):
        raise DomainError("x must be an EvalPoint", module="bounds")
    point = x
    if not engines.admissible_alpha(point.alpha, s.n):
        raise DomainError(
            f"alpha={point.alpha} inadmissible for n={s.n} "
            "(needs 2*alpha integer or > floor((n-1)/2))",
            module="bounds",
        )
    th = float(s.theta[0, 1])
    if th > theta_m_matrix_limit(s) + 1e-12:
        raise DomainError(
            f"theta={th} beyond the M-matrix range (limit {theta_m_matrix_limit(s):.6f})",
            module="bounds",
        )
    _check_dominates(r, s)
    sl1, sl2 = s.block_slices()
    if th == 0.0 or cross_block_rank(r, range(sl1.stop)) == 0:
        return InequalityCertificate.from_margin(0.0, 0.0, "excess-two-block", 0.0, sigma_gate)
    f_theta = engines.structured_cdf(point, s, tol)
    from .corrstruct import OneFactorialStructure

    f1 = engines.cdf_one_factorial(
        engines.EvalPoint(point.x[sl1], point.alpha), OneFactorialStructure(s.a[sl1]), tol
    )
    f2 = engines.cdf_one_factorial(
        engines.EvalPoint(point.x[sl2], point.alpha), OneFactorialStructure(s.a[sl2]), tol
    )
    return InequalityCertificate.from_margin(
        f_theta.real, f1.value * f2.value, "excess-two-block", 0.0, sigma_gate
    )


def three_block_gate(s):
    """M-matrix criterion of the assembled three-block inverse."""
    from .corrstruct import three_block_mmatrix_condition

    return three_block_mmatrix_condition(complementary_theta(s), block_p_values(s))


def excess_three_block(x, params, sigma_gate=DEFAULT_SIGMA_GATE):
    """Positive lower bound for the three-block excess: the series total
    minus its leading product term, gated on the M-matrix criterion and on
    max rho^2 < 1."""
    s = params.structure
    if not isinstance(x, engines.EvalPoint):
        raise DomainError("x must be an EvalPoint", module="bounds")
    point = x
    if not engines.admissible_alpha(point.alpha, s.n):
        raise DomainError(f"alpha={point.alpha} inadmissible for n={s.n}", module="bounds")
    thetas = np.array(complementary_theta(s))
    if np.all(thetas == 0.0):
        return InequalityCertificate.from_margin(0.0, 0.0, "excess-three-block", 0.0, sigma_gate)
    if not three_block_gate(s):
        raise DomainError("three-block M-matrix criterion fails", module="bounds")
    mr = converge.max_rho_sq(converge.theta_tilde_from_structure(s), run_grid=False)
    if not mr.max_rho_sq < 1.0:
        raise DomainError(f"max rho^2 = {mr.max_rho_sq:.6f} >= 1", module="bounds")
    total, k0 = engines.three_block_excess_term(point, params)
    return InequalityCertificate.from_margin(total.real, k0, "excess-three-block", 0.0, sigma_gate)


def power_bound(x, b, evaluator_half, evaluator_alpha, part, alpha, sigma_gate=DEFAULT_SIGMA_GATE):
    """Convolution power bound: with gamma the alpha = 1/2 ratio at the outer
    rectangle b, the excess at shape alpha (2 alpha integer) is at least

        (gamma^{2 alpha} - 1) P(block1) P(block2),

    the block probabilities taken at shape alpha and point x <= b.
    """
    two_a = 2.0 * alpha
    if abs(two_a - round(two_a)) > 1e-12 or round(two_a) < 1:
        raise DomainError("power bound needs 2*alpha a positive integer", module="bounds")
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(x > b):
        raise DomainError("needs x_i <= b_i", module="bounds")
    i1, i2 = part.index_blocks
    ph, cmh = evaluator_half.probs([b, _marginal_box(b, i1), _marginal_box(b, i2)])
    if ph[1] * ph[2] <= 0.0:
        return InequalityCertificate.from_margin(0.0, 0.0, "power-bound", math.inf, sigma_gate)
    gamma = float(ph[0] / (ph[1] * ph[2]))
    pa, cma = evaluator_alpha.probs([_marginal_box(x, i1), _marginal_box(x, i2)])
    blockprod = float(pa[0] * pa[1])
    lhs = gamma ** round(two_a) * blockprod
    unc = 0.0
    if cmh is not None:
        unc += _margin_uncertainty(
            cmh, lambda r: ((r[0] / max(r[1] * r[2], 1e-12)) ** round(two_a) - 1.0) * blockprod
        )
    if cma is not None:
        unc += _margin_uncertainty(cma, lambda r: (gamma ** round(two_a) - 1.0) * r[0] * r[1])
    return InequalityCertificate.from_margin(lhs, blockprod, "power-bound", unc, sigma_gate)


# ---------------------------------------------------------------------------
# local-minimum criterion for equicorrelated matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LambdaCriterion:
    lam: float
    a: float
    b: float
    c: float


def local_min_lambda(x, alpha, r, n, tol=Tolerance(), export_path=None):
    """Second-order coefficient lambda = a + (n-4) b - (n-3) c deciding the
    local-minimum property of R -> P(max X_i <= x) at the equicorrelated
    matrix with correlation r.

    The three integrals run over the mixing variable with F the conditional
    cdf and f_1, f_2 its first and second conditional density derivatives;
    ``export_path`` dumps the raw integrand columns for inspection.
    """
    if n < 3:
        raise DomainError("needs n >= 3", module="bounds")
    if not (0.0 <= r < 1.0):
        raise DomainError("needs r in [0, 1)", module="bounds")
    if alpha < 0.5:
        raise DomainError("needs alpha >= 1/2", module="bounds")
    from . import _kernels as K
    from .quad import GammaMap

    d = 1.0 - r
    u = x / d
    s = r / d
    ymax = GammaMap(alpha, tol.abs_tol).upper
    table0 = K.gamma_table(alpha, u, K.table_len(s * ymax + 20.0))

    def parts(y):
        w = s * y
        big_f = K.nc_cdf_many(table0, w)
        ew = np.exp(-w)
        g1 = math.exp(alpha * math.log(u) - u - math.lgamma(alpha + 1.0))  # g_{alpha+1}(u)
        g2 = math.exp((alpha + 1.0) * math.log(u) - u - math.lgamma(alpha + 2.0))
        f1 = ew * g1 * K.hyp0f1_many(alpha + 1.0, u * w) / d
        f2 = (ew * g1 * K.hyp0f1_many(alpha + 1.0, u * w)
              - ew * g2 * K.hyp0f1_many(alpha + 2.0, u * w)) / (d * d)
        return big_f, f1, f2

    def integrand_a(y):
        big_f, f1, f2 = parts(y)
        return (alpha * f1 * f1 - 2.0 * r * y * f1 * f2 + 2.0 * r * r * y * y * f2 * f2) * big_f ** (n - 2)

    res_a = integrate_gamma_weighted(integrand_a, alpha, tol, sup_f=10.0)
    a_val = res_a.value
    if r == 0.0:
        b_val = 0.0
        c_val = 0.0
    else:
        def integrand_b(y):
            big_f, f1, f2 = parts(y)
            return r * f1 * f1 * (2.0 * r * y * f2 - f1) * big_f ** (n - 3) * y

        def integrand_c(y):
            big_f, f1, f2 = parts(y)
            safe = np.where(big_f > 0.0, big_f, 1.0)
            val = 2.0 * r * r * f1 ** 4 * safe ** (n - 4) * y * y
            return np.where(big_f > 0.0, val, 0.0)

        b_val = integrate_gamma_weighted(integrand_b, alpha, tol, sup_f=10.0).value
        c_val = integrate_gamma_weighted(integrand_c, alpha, tol, sup_f=10.0).value
    lam = a_val + (n - 4.0) * b_val - (n - 3.0) * c_val
    if export_path is not None:
        ys = np.linspace(1e-6, 30.0, 600)
        big_f, f1, f2 = parts(ys)
        ful = (alpha * f1 * f1 - 2 * r * ys * f1 * f2 + 2 * r * r * ys * ys * f2 * f2) * big_f ** (n - 2)
        with open(export_path, "w") as fh:
            fh.write("# y  a_integrand  F  f1  f2\n")
            for row in zip(ys, ful, big_f, f1, f2):
                fh.write(" ".join(f"{v:.12e}" for v in row) + "\n")
    return LambdaCriterion(lam, a_val, b_val, c_val)


# ---------------------------------------------------------------------------
# Bonferroni chains and grid checks
# ---------------------------------------------------------------------------

def bonferroni_refined(x, r, order, perm, mc_budget, seed=12345):
    """Chained upper bound for P(union of complements):

        P(not A_1) + P(not A_2, A_1) + P(not A_3, A_2 A_1) + ...

    each term conditioning on the previous (order - 1) events, estimated by
    one Monte Carlo pass; returns an MCEstimate of the chain sum.
    """
    if order not in (3, 4):
        raise DomainError("order must be 3 or 4", module="bounds")
    point = x if isinstance(x, engines.EvalPoint) else None
    if point is None:
        raise DomainError("x must be an EvalPoint", module="bounds")
    nu = round(2.0 * point.alpha)
    if abs(2.0 * point.alpha - nu) > 1e-12:
        raise DomainError("Monte Carlo chain needs 2*alpha integer", module="bounds")
    perm = list(perm)
    n = point.x.size
    if sorted(perm) != list(range(n)):
        raise DomainError("perm must be a permutation of 0..n-1", module="bounds")
    xb = point.x[perm]
    batch = oracle.sample_chi_square(r, nu, mc_budget, seed)
    chunk_sums = []
    counts = []
    for chunk in batch.chunks():
        c = chunk[:, perm]
        below = c <= xb[None, :]
        total = np.zeros(c.shape[0])
        for k in range(n):
            term = ~below[:, k]
            for j in range(max(0, k - (order - 1)), k):
                term = term & below[:, j]
            total += term
        # terms are disjoint only in the full-order chain; the chain sum is
        # an upper bound either way
        chunk_sums.append(float(np.mean(total)))
        counts.append(c.shape[0])
    w = np.asarray(counts, dtype=np.float64)
    vals = np.asarray(chunk_sums)
    mean = float(np.sum(w * vals) / np.sum(w))
    se = float(np.std(vals, ddof=1)) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
    return oracle.MCEstimate(mean, se, int(np.sum(w)), seed)


@dataclass(frozen=True)
class PairGrid:
    """Grid specification for log-supermodularity checks: per-axis values
    applied to every index pair (or the given pairs) around base_x."""

    base_x: np.ndarray
    values: np.ndarray
    pairs: tuple | None = None


def mtp2_grid_check(evaluator, grid, tolerance=1e-7):
    """Mixed second differences of log F over index-pair grids.

    Returns violations (i, j, gi, gj, value) with value < -tolerance;
    ``evaluator`` maps an x-vector to a positive number (a cdf engine, or a
    positive density for classes whose natural engine output is a density).
    """
    base = np.asarray(grid.base_x, dtype=np.float64)
    vals = np.asarray(grid.values, dtype=np.float64)
    n = base.size
    pairs = grid.pairs
    if pairs is None:
        pairs = tuple((i, j) for i in range(n) for j in range(i + 1, n))
    violations = []
    for (i, j) in pairs:
        m = vals.size
        logf = np.empty((m, m))
        for gi in range(m):
            for gj in range(m):
                x = base.copy()
                x[i] = vals[gi]
                x[j] = vals[gj]
                logf[gi, gj] = math.log(max(evaluator(x), 1e-300))
        mixed = logf[1:, 1:] - logf[1:, :-1] - logf[:-1, 1:] + logf[:-1, :-1]
        bad = np.argwhere(mixed < -tolerance)
        for gi, gj in bad:
            violations.append((i, j, int(gi), int(gj), float(mixed[gi, gj])))
    return violations


def upper_tail_series_monotone(x, alpha, n1, n2, r1, r2, r2cross_values):
    """Evaluate the equicorrelated tail approximation along increasing
    cross-correlation mass; used to verify its monotonicity numerically."""
    return [engines.upper_tail_approx(x, alpha, n1, n2, r1, r2, v) for v in r2cross_values]
