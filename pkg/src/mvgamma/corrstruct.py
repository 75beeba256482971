"""Correlation-matrix validation, structure detection and block algebra.

Structured classes handled here:

* one-factorial:  R = Diag(1 - a_j^2) + a a'        (rank-one update)
* block-factorial: p in {2, 3} index blocks with within-block entries
  a_mu a_nu and cross-block entries theta_{jk} a_mu a_nu
* tree-type: R^{-1} has exactly n-1 non-zero off-diagonal entries whose
  graph is a spanning tree
* two-factorial: R = D^{1/2} (I + B B') D^{1/2} with an (n x 2) column
  matrix B whose second column may be imaginary

plus M-matrix tests, signature search, the closed-form two-block inverse,
the three-block M-matrix criterion, and the rank-reduction determinant
identity used by the block Laplace transforms.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CorrelationValidationError, DomainError

_SYM_TOL = 1e-12
_EIG_TOL = 1e-10


@dataclass(frozen=True)
class CorrelationMatrix:
    """Validated symmetric positive-definite matrix with unit diagonal."""

    entries: np.ndarray

    @property
    def n(self):
        return self.entries.shape[0]

    def __getitem__(self, idx):
        return self.entries[idx]


def validate(matrix):
    """Validate raw entries into a CorrelationMatrix.

    Asymmetry, non-unit diagonal, out-of-range entries and singularity are
    reported distinctly.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise CorrelationValidationError("shape", f"expected a square matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.T)) > _SYM_TOL:
        raise CorrelationValidationError("asymmetry", "matrix is not symmetric")
    if np.max(np.abs(np.diag(m) - 1.0)) > _SYM_TOL:
        raise CorrelationValidationError("diagonal", "not a correlation matrix: diagonal entries must be 1")
    off = m - np.eye(m.shape[0])
    if np.max(np.abs(off)) > 1.0 + _SYM_TOL:
        raise CorrelationValidationError("range", "not a correlation: off-diagonal entry outside [-1, 1]")
    emin = float(np.linalg.eigvalsh(0.5 * (m + m.T)).min())
    if emin <= _EIG_TOL:
        raise CorrelationValidationError("singular", f"matrix is singular or indefinite (min eigenvalue {emin:.3e})")
    sym = 0.5 * (m + m.T)
    sym.flags.writeable = False
    return CorrelationMatrix(sym)


@dataclass(frozen=True)
class OneFactorialStructure:
    """Factor vector a with R = Diag(1 - a_j^2) + a a'.

    Factors must satisfy a_j in (-1, 1); the degenerate value a_k^2 = 1 is
    admitted only when flagged, and engines then treat component k through
    its step-function limit.
    """

    a: np.ndarray
    allow_limit: bool = False

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        object.__setattr__(self, "a", a)
        amax = float(np.max(np.abs(a))) if a.size else 0.0
        if self.allow_limit:
            if amax > 1.0:
                raise DomainError("factors must satisfy a_j^2 <= 1", module="corrstruct")
            if np.sum(a * a >= 1.0) > 1:
                raise DomainError("at most one limit factor a_k^2 = 1 is admissible", module="corrstruct")
        elif amax >= 1.0:
            raise DomainError("factors must satisfy max a_j^2 < 1", module="corrstruct")

    @property
    def n(self):
        return self.a.size

    @property
    def d(self):
        """Diagonal of D: 1 - a_j^2."""
        return 1.0 - self.a * self.a


@dataclass(frozen=True)
class BlockFactorialStructure:
    """Successive index blocks with factors a and block correlation Theta."""

    block_sizes: tuple
    a: np.ndarray
    theta: np.ndarray  # p x p block-level correlation matrix

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.block_sizes)
        object.__setattr__(self, "block_sizes", sizes)
        a = np.asarray(self.a, dtype=np.float64)
        object.__setattr__(self, "a", a)
        th = np.asarray(self.theta, dtype=np.float64)
        object.__setattr__(self, "theta", th)
        p = len(sizes)
        if p not in (2, 3):
            raise DomainError(f"block count must be 2 or 3, got {p}", module="corrstruct")
        if any(s < 1 for s in sizes) or sum(sizes) != a.size:
            raise DomainError("block sizes must be positive and sum to len(a)", module="corrstruct")
        if th.shape != (p, p) or np.max(np.abs(th - th.T)) > _SYM_TOL or np.max(np.abs(np.diag(th) - 1.0)) > _SYM_TOL:
            raise DomainError("theta must be a symmetric unit-diagonal p x p matrix", module="corrstruct")
        if np.max(np.abs(a)) >= 1.0 or np.min(a) <= -1.0:
            raise DomainError("factors must satisfy a_mu in (-1, 1)", module="corrstruct")

    @property
    def p(self):
        return len(self.block_sizes)

    @property
    def n(self):
        return int(self.a.size)

    def block_slices(self):
        edges = np.cumsum((0,) + self.block_sizes)
        return [slice(int(edges[i]), int(edges[i + 1])) for i in range(self.p)]

    def block_factors(self):
        return [self.a[s] for s in self.block_slices()]

    def q_values(self):
        """q_i = a_i' D_i^{-1} a_i per block (the within-block factor mass)."""
        return np.array([float(np.sum(ab * ab / (1.0 - ab * ab))) for ab in self.block_factors()])


@dataclass(frozen=True)
class TreeStructure:
    """Sparse description of R^{-1} when its graph is a spanning tree."""

    n: int
    edges: tuple          # ((i, j, r_ij_inverse_entry), ...)
    diag: np.ndarray      # r^{ii}
    det_r: float


@dataclass(frozen=True)
class TwoFactorialStructure:
    """Rank-two factorization R = D^{1/2}(I + B B')D^{1/2}.

    ``b2`` stores the magnitude of the second column; when ``b2_imaginary``
    the column is i*b2 and its outer product enters with a minus sign.
    """

    d: np.ndarray
    lambda_plus: float
    lambda_minus: float
    b1: np.ndarray
    b2: np.ndarray
    b2_imaginary: bool

    def reconstruct(self):
        bb = np.outer(self.b1, self.b1)
        bb += (-1.0 if self.b2_imaginary else 1.0) * np.outer(self.b2, self.b2)
        drt = np.sqrt(self.d)
        return drt[:, None] * (np.eye(self.d.size) + bb) * drt[None, :]


@dataclass(frozen=True)
class SignatureMatrix:
    signs: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.signs, dtype=np.int64)
        if not np.all(np.abs(s) == 1):
            raise DomainError("signature entries must be +-1", module="corrstruct")
        object.__setattr__(self, "signs", s)

    def conjugate(self, m):
        """S M S."""
        s = self.signs.astype(np.float64)
        return m * np.outer(s, s)


@dataclass(frozen=True)
class BlockFitReport:
    """Diagnostics from factor fitting: per-block scale factors, the capped
    cross-block correlations, and the binding constraint pairs."""

    lambda_per_block: tuple
    theta_caps: dict
    binding_cross_pairs: dict
    within_block_min_slack: float


def is_m_matrix(matrix, tol=1e-10):
    """True iff off-diagonal entries are <= tol, the matrix is positive
    definite, and its inverse has entries >= -tol."""
    m = np.asarray(matrix, dtype=np.float64)
    off = m - np.diag(np.diag(m))
    if float(off.max()) > tol:
        return False
    try:
        np.linalg.cholesky(0.5 * (m + m.T))
    except np.linalg.LinAlgError:
        return False
    inv = np.linalg.inv(m)
    return float(inv.min()) >= -tol


def find_signature(r, tol=1e-10):
    """Signature S with S R^{-1} S an M-matrix, or None.

    The sign conditions s_i s_j = -sign(m_ij) over the non-negligible entries
    of M = R^{-1} form a graph 2-coloring, solved exactly by BFS with s_1
    fixed to +1; a solution exists iff the coloring is consistent.  (PD plus
    the non-positive off-diagonal pattern already forces a non-negative
    inverse, which is re-verified numerically.)
    """
    m = r.entries if isinstance(r, CorrelationMatrix) else np.asarray(r, dtype=np.float64)
    n = m.shape[0]
    if n > 25:
        raise DomainError(f"signature search capped at n = 25, got {n}", module="corrstruct")
    inv = np.linalg.inv(m)
    scale = max(float(np.max(np.abs(inv))), 1.0)
    need = np.abs(inv) > tol * scale
    np.fill_diagonal(need, False)
    signs = np.zeros(n, dtype=np.int64)
    for root in range(n):
        if signs[root]:
            continue
        signs[root] = 1
        stack = [root]
        while stack:
            i = stack.pop()
            for j in range(n):
                if not need[i, j]:
                    continue
                want = -signs[i] if inv[i, j] > 0 else signs[i]
                if signs[j] == 0:
                    signs[j] = want
                    stack.append(j)
                elif signs[j] != want:
                    return None
    if signs[0] == -1:
        signs = -signs
    sig = SignatureMatrix(signs)
    if not is_m_matrix(sig.conjugate(inv), tol):
        return None
    return sig


def one_factorial_exact(r, tol=1e-8):
    """Recover a with |r_ij - a_i a_j| <= tol everywhere, or None.

    Magnitudes come from the closed-form log-least-squares candidate
    a_mu = (prod_nu |r_mu_nu| / (prod_pairs |r|)^{1/(n-1)})^{1/(n-2)} for
    n >= 3; signs are assigned by a consistency sweep.
    """
    m = r.entries if isinstance(r, CorrelationMatrix) else np.asarray(r, dtype=np.float64)
    n = m.shape[0]
    if n == 1:
        return OneFactorialStructure(np.zeros(1))
    absr = np.abs(m - np.diag(np.diag(m)))
    if n == 2:
        v = math.sqrt(absr[0, 1])
        a = np.array([v, math.copysign(v, m[0, 1]) if v else 0.0])
    else:
        a = np.zeros(n)
        active = absr.max(axis=1) > tol
        logs = np.log(np.where(absr > 0, absr, 1.0))
        pair_sum = 0.5 * float(logs.sum())
        row_sum = logs.sum(axis=1)
        for mu in range(n):
            if not active[mu]:
                continue
            others = absr[mu][np.arange(n) != mu]
            if np.any(others <= 0):
                # zero entries break the product formula; fall back to a
                # least-squares magnitude from the non-zero entries only
                pos = others[others > 0]
                a[mu] = float(np.sqrt(np.mean(pos))) if pos.size else 0.0
            else:
                a[mu] = math.exp((row_sum[mu] - pair_sum * 2.0 / (n - 1.0)) / (n - 2.0))
        # signs via consistency with the first active index
        ref = int(np.argmax(active)) if np.any(active) else 0
        sign = np.ones(n)
        for mu in range(n):
            if mu != ref and absr[ref, mu] > tol:
                sign[mu] = math.copysign(1.0, m[ref, mu])
        a = a * sign
    if float(np.max(np.abs(a))) >= 1.0:
        return None
    cand = np.outer(a, a)
    np.fill_diagonal(cand, 1.0)
    if float(np.max(np.abs(cand - m))) > tol:
        return None
    return OneFactorialStructure(a)


def fit_block_factors(r, block_sizes):
    """Factor-fit the index blocks of a positive correlation matrix.

    Per block of size >= 3 the closed-form log-least-squares factors are
    computed, then rescaled by the largest lambda_j with
    lambda_j a_mu a_nu <= r_mu_nu on every within-block pair; size-1 blocks
    use sqrt(max_nu r_mu_nu) capped at 0.99 and size-2 blocks sqrt(r_mu_nu).
    Cross-block correlations are the largest admissible
    theta_jk = min r_mu_nu / (a_mu a_nu), capped at 1.
    """
    m = r.entries if isinstance(r, CorrelationMatrix) else np.asarray(r, dtype=np.float64)
    n = m.shape[0]
    sizes = tuple(int(s) for s in block_sizes)
    if sum(sizes) != n:
        raise DomainError("block sizes must sum to the dimension", module="corrstruct")
    off = m - np.diag(np.diag(m))
    if n > 1 and float(np.min(m + np.eye(n) * 2.0)) <= 0.0:
        raise DomainError("factor fitting requires all correlations > 0", module="corrstruct")
    edges = np.cumsum((0,) + sizes)
    slices = [slice(int(edges[i]), int(edges[i + 1])) for i in range(len(sizes))]
    a = np.zeros(n)
    lambdas = []
    for j, sl in enumerate(slices):
        nj = sizes[j]
        sub = m[sl, sl]
        if nj == 1:
            mu = sl.start
            others = np.delete(m[mu], mu)
            a[sl] = min(math.sqrt(float(others.max())), 0.99) if others.size else 0.5
            lambdas.append(1.0)
            continue
        if nj == 2:
            v = math.sqrt(float(sub[0, 1]))
            a[sl] = v
            lambdas.append(1.0)
            continue
        logs = np.log(sub + np.eye(nj))  # diagonal contributes log 1 = 0
        row_sum = logs.sum(axis=1)
        pair_sum = 0.5 * float(logs.sum())
        aj = np.exp((row_sum - pair_sum * 2.0 / (nj - 1.0)) / (nj - 2.0))
        lam = math.inf
        for u in range(nj):
            for v in range(u + 1, nj):
                lam = min(lam, sub[u, v] / (aj[u] * aj[v]))
        lam = min(lam, 0.98 / float(np.max(aj)) ** 2)
        a[sl] = np.sqrt(lam) * aj
        lambdas.append(lam)
    caps = {}
    binding = {}
    for j in range(len(sizes)):
        for k in range(j + 1, len(sizes)):
            ratios = m[slices[j], slices[k]] / np.outer(a[slices[j]], a[slices[k]])
            cap = float(ratios.min())
            idx = np.unravel_index(int(np.argmin(ratios)), ratios.shape)
            caps[(j, k)] = min(cap, 1.0)
            binding[(j, k)] = (slices[j].start + int(idx[0]), slices[k].start + int(idx[1]))
    p = len(sizes)
    theta = np.eye(p)
    for (j, k), v in caps.items():
        theta[j, k] = theta[k, j] = v
    slack = math.inf
    for j, sl in enumerate(slices):
        sub = m[sl, sl] - np.outer(a[sl], a[sl])
        np.fill_diagonal(sub, math.inf)
        slack = min(slack, float(sub.min()))
    struct = BlockFactorialStructure(sizes, a, theta)
    report = BlockFitReport(tuple(lambdas), caps, binding, slack)
    return struct, report


def assemble(structure):
    """Correlation matrix from a one- or block-factorial structure.

    The assembled matrix is validated; factor/theta combinations outside
    admissibility surface as a validation error.
    """
    if isinstance(structure, OneFactorialStructure):
        m = np.outer(structure.a, structure.a)
        np.fill_diagonal(m, 1.0)
        return validate(m)
    if isinstance(structure, BlockFactorialStructure):
        m = np.outer(structure.a, structure.a)
        slices = structure.block_slices()
        for i in range(structure.p):
            for j in range(structure.p):
                if i != j:
                    m[slices[i], slices[j]] *= structure.theta[i, j]
        np.fill_diagonal(m, 1.0)
        return validate(m)
    raise DomainError(f"cannot assemble {type(structure).__name__}", module="corrstruct")


def theta_upper_limit(structure):
    """Admissibility ceiling ((1 + 1/q1)(1 + 1/q2))^{1/2} for the cross
    correlation of a two-block structure."""
    q1, q2 = structure.q_values()
    return math.sqrt((1.0 + 1.0 / q1) * (1.0 + 1.0 / q2))


def theta_m_matrix_limit(structure):
    """Threshold min(1 + 1/q1, 1 + 1/q2)^{1/2} below which the assembled
    two-block inverse is an M-matrix."""
    q1, q2 = structure.q_values()
    return math.sqrt(min(1.0 + 1.0 / q1, 1.0 + 1.0 / q2))


def two_block_inverse(structure):
    """Closed-form inverse of the assembled two-block matrix.

    R^{-1} = D^{-1} - [(1+q1)(1+q2) - th^2 q1 q2]^{-1} *
             [[ (1+(1-th^2) q2) b1 b1',  th b1 b2' ],
              [ th b2 b1',  (1+(1-th^2) q1) b2 b2' ]],   b_i = D_i^{-1} a_i.
    """
    if structure.p != 2:
        raise DomainError("two_block_inverse needs p = 2", module="corrstruct")
    th = float(structure.theta[0, 1])
    q1, q2 = structure.q_values()
    if not (0.0 <= th < math.sqrt((1.0 + 1.0 / q1) * (1.0 + 1.0 / q2))):
        raise DomainError(
            f"theta={th} outside the admissible range [0, {math.sqrt((1+1/q1)*(1+1/q2)):.6f})",
            module="corrstruct",
        )
    sl1, sl2 = structure.block_slices()
    a1, a2 = structure.a[sl1], structure.a[sl2]
    d1, d2 = 1.0 - a1 * a1, 1.0 - a2 * a2
    b1, b2 = a1 / d1, a2 / d2
    den = (1.0 + q1) * (1.0 + q2) - th * th * q1 * q2
    n = structure.n
    out = np.zeros((n, n))
    out[sl1, sl1] = np.diag(1.0 / d1) - (1.0 + (1.0 - th * th) * q2) / den * np.outer(b1, b1)
    out[sl2, sl2] = np.diag(1.0 / d2) - (1.0 + (1.0 - th * th) * q1) / den * np.outer(b2, b2)
    out[sl1, sl2] = -th / den * np.outer(b1, b2)
    out[sl2, sl1] = out[sl1, sl2].T
    return out


def three_block_mmatrix_condition(theta_triple, p_triple):
    """Sign criterion for the inverse of a three-block matrix to be an
    M-matrix: with the complementary labeling th_1 = theta_23 etc. and
    p_j = sum_{mu in block j} a_mu^2/(1 - a_mu^2),

        (th1 + (th1 - th2 th3) p1)(th2 + (th2 - th1 th3) p2)
                                  (th3 + (th3 - th1 th2) p3) > 0.
    """
    t1, t2, t3 = (float(t) for t in theta_triple)
    p1, p2, p3 = (float(v) for v in p_triple)
    prod = (t1 + (t1 - t2 * t3) * p1) * (t2 + (t2 - t1 * t3) * p2) * (t3 + (t3 - t1 * t2) * p3)
    return prod > 0.0


def complementary_theta(structure):
    """(th1, th2, th3) = (theta_23, theta_13, theta_12) for p = 3."""
    if structure.p != 3:
        raise DomainError("needs a three-block structure", module="corrstruct")
    th = structure.theta
    return (float(th[1, 2]), float(th[0, 2]), float(th[0, 1]))


def block_p_values(structure):
    """p_j = sum_{mu in I_j} a_mu^2 / (1 - a_mu^2)."""
    return tuple(float(np.sum(ab * ab / (1.0 - ab * ab))) for ab in structure.block_factors())


def two_block_eigen(q1, q2, theta):
    """Eigenvalues of the rank-two factor Gram problem:

        lambda^2 - (q1 + q2) lambda + (1 - theta^2) q1 q2 = 0,

    returned as (lambda_plus, lambda_minus); lambda_minus < 0 iff |theta| > 1.
    """
    if q1 <= 0.0 or q2 <= 0.0:
        raise DomainError("q1, q2 must be > 0", module="corrstruct")
    disc = math.sqrt(((q1 - q2) / 2.0) ** 2 + q1 * q2 * theta * theta)
    return ((q1 + q2) / 2.0 + disc, (q1 + q2) / 2.0 - disc)


def two_factorial_structure(structure):
    """Rank-two factorization of an assembled two-block matrix.

    Columns of B are sqrt(lambda_+/-) times the normalized eigenvectors
    (v1, c2 v2) with c2 = (lambda - q1)/(theta q2); the second column is
    imaginary when lambda_- < 0 (|theta| > 1).
    """
    if structure.p != 2:
        raise DomainError("needs a two-block structure", module="corrstruct")
    th = float(structure.theta[0, 1])
    q1, q2 = structure.q_values()
    lam_p, lam_m = two_block_eigen(q1, q2, th)
    sl1, sl2 = structure.block_slices()
    d = 1.0 - structure.a * structure.a
    b = structure.a / np.sqrt(d)

    def unit(lam):
        if th == 0.0:
            # decoupled blocks: eigenvectors live in one block each
            if abs(lam - q1) < abs(lam - q2):
                v = np.concatenate([b[sl1], np.zeros(sl2.stop - sl2.start)])
            else:
                v = np.concatenate([np.zeros(sl1.stop - sl1.start), b[sl2]])
        else:
            v = np.concatenate([b[sl1], ((lam - q1) / (th * q2)) * b[sl2]])
        return v / np.linalg.norm(v)

    e_p, e_m = unit(lam_p), unit(lam_m)
    imag = lam_m < 0.0
    b1 = math.sqrt(lam_p) * e_p
    b2 = math.sqrt(abs(lam_m)) * e_m
    return TwoFactorialStructure(d, lam_p, lam_m, b1, b2, imag)


def lemma1_determinant_check(theta, b_vectors):
    """Rank-reduction determinant identity: with blocks theta_ij b_i b_j'
    and q_i = b_i' b_i,

        |I_n + (theta_ij b_i b_j')| = |I_p + Q^{1/2} Theta Q^{1/2}|.

    Returns both determinants for comparison.
    """
    theta = np.asarray(theta, dtype=np.float64)
    p = theta.shape[0]
    q = np.array([float(np.dot(b, b)) for b in b_vectors])
    if np.any(q == 0.0):
        raise DomainError("q_i = b_i'b_i must be non-zero", module="corrstruct")
    n = int(sum(len(b) for b in b_vectors))
    big = np.zeros((n, n))
    edges = np.cumsum([0] + [len(b) for b in b_vectors])
    for i in range(p):
        for j in range(p):
            big[edges[i]:edges[i + 1], edges[j]:edges[j + 1]] = theta[i, j] * np.outer(
                b_vectors[i], b_vectors[j]
            )
    lhs = float(np.linalg.det(np.eye(n) + big))
    qrt = np.sqrt(q)
    rhs = float(np.linalg.det(np.eye(p) + qrt[:, None] * theta * qrt[None, :]))
    return lhs, rhs


def tree_structure(r, tol=None):
    """Detect a tree-type inverse: threshold the off-diagonal entries of
    R^{-1}; the survivors must number n-1 and span {1..n} without cycles."""
    m = r.entries if isinstance(r, CorrelationMatrix) else np.asarray(r, dtype=np.float64)
    n = m.shape[0]
    inv = np.linalg.inv(m)
    scale = float(np.max(np.abs(inv)))
    cut = (1e-8 * scale) if tol is None else tol
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if abs(inv[i, j]) > cut:
                edges.append((i, j, float(inv[i, j])))
    if len(edges) != n - 1:
        return None
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j, _ in edges:
        ri, rj = find(i), find(j)
        if ri == rj:
            return None
        parent[ri] = rj
    if len({find(i) for i in range(n)}) != 1:
        return None
    return TreeStructure(n, tuple(edges), np.diag(inv).copy(), float(np.linalg.det(m)))


def cross_block_rank(r, block1_indices, tol=1e-10):
    """Rank of the cross block R[I, J^c]; zero means the two groups are
    uncorrelated (reducible across this partition)."""
    m = r.entries if isinstance(r, CorrelationMatrix) else np.asarray(r, dtype=np.float64)
    n = m.shape[0]
    idx1 = np.asarray(sorted(block1_indices), dtype=int)
    idx2 = np.array([i for i in range(n) if i not in set(int(v) for v in idx1)], dtype=int)
    if idx1.size == 0 or idx2.size == 0:
        return 0
    sub = m[np.ix_(idx1, idx2)]
    return int(np.linalg.matrix_rank(sub, tol=tol))
