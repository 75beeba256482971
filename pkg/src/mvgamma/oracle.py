"""Monte Carlo ground truth for every engine.

Sampling is chunked and counter-based: chunk c of a batch draws from a
Philox generator keyed (seed, c), so results are a pure function of
(parameters, seed, count) regardless of how chunks would be scheduled.
Normal variates use the inverse-cdf transform, which also gives monotone
common-random-number couplings for the monotonicity paths.

Constructions
-------------
* chi-square route: X_i = (1/2) sum_{k<=nu} Z_{k,i}^2 with Z rows N(0, R)
  through a Cholesky factor (integer degrees of freedom nu = 2 alpha).
* one-factorial route (any alpha > 0): Y ~ Gamma(alpha), then component-wise
  X_i = (1 - a_i^2) W_i with W_i | Y a Poisson(a_i^2 Y / (1 - a_i^2)) mixture
  of Gamma(alpha + N) variables.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, InputError

CHUNK = 1 << 16
_MAGIC = b"MGBATCH1"


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo estimate with its standard error."""

    mean: float
    std_error: float
    count: int
    seed: int


def _chunk_gen(seed, chunk_index):
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(chunk_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _normals(gen, shape):
    u = gen.random(shape)
    np.clip(u, 1e-16, 1.0 - 1e-16, out=u)
    return ndtri(u)


class SampleBatch:
    """Deterministic stream of length-n positive vectors.

    ``chunks()`` yields (m, n) arrays; the concatenation over chunks is a
    pure function of (sampler parameters, seed, count).
    """

    def __init__(self, n, count, seed, chunk_fn):
        self.n = int(n)
        self.count = int(count)
        self.seed = int(seed)
        self._chunk_fn = chunk_fn

    def chunks(self):
        produced = 0
        index = 0
        while produced < self.count:
            m = min(CHUNK, self.count - produced)
            yield self._chunk_fn(index, m)
            produced += m
            index += 1

    def collect(self):
        return np.concatenate(list(self.chunks()), axis=0)

    def save(self, path):
        """Binary columnar export: magic, dimension, count, seed, then the
        row-major float64 payload (little-endian throughout)."""
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<iqq", self.n, self.count, self.seed))
            for chunk in self.chunks():
                fh.write(np.ascontiguousarray(chunk, dtype="<f8").tobytes())


def load_batch(path):
    """Read a batch file back as (array, n, count, seed)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise InputError(f"not a batch file: bad magic {magic!r}", module="oracle")
        n, count, seed = struct.unpack("<iqq", fh.read(20))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(count, n)
    return data, n, count, seed


def sample_chi_square(r, nu, count, seed):
    """Gamma vector as half the diagonal of a Wishart-style sum:
    X_i = (1/2) sum_{k<=nu} Z_{k,i}^2, Z rows N(0, R)."""
    mat = r.entries if hasattr(r, "entries") else np.asarray(r, dtype=np.float64)
    if nu < 1 or int(nu) != nu:
        raise DomainError(f"nu must be a positive integer, got {nu}", module="oracle")
    nu = int(nu)
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"factorization failed: {exc}", module="oracle")
    n = mat.shape[0]

    def make(index, m):
        gen = _chunk_gen(seed, index)
        z = _normals(gen, (m, nu, n)) @ chol.T
        return 0.5 * np.einsum("mkj,mkj->mj", z, z)

    return SampleBatch(n, count, seed, make)


def sample_one_factorial(structure, alpha, count, seed):
    """One-factorial mixture sampler, valid for every alpha > 0."""
    if alpha <= 0.0:
        raise DomainError(f"alpha must be > 0, got {alpha}", module="oracle")
    a = np.asarray(structure.a, dtype=np.float64)
    if float(np.max(a * a)) >= 1.0:
        raise DomainError("sampler needs max a_j^2 < 1", module="oracle")
    d = 1.0 - a * a
    s = a * a / d
    n = a.size

    def make(index, m):
        gen = _chunk_gen(seed, index)
        y = gen.gamma(alpha, size=m)
        out = np.empty((m, n))
        for j in range(n):
            if s[j] == 0.0:
                out[:, j] = gen.gamma(alpha, size=m)
            else:
                shift = gen.poisson(s[j] * y)
                out[:, j] = d[j] * gen.gamma(alpha + shift)
        return out

    return SampleBatch(n, count, seed, make)


def mc_cdf(batch, x):
    """P(all components <= x) with binomial standard error."""
    x = np.asarray(x, dtype=np.float64)
    hits = 0
    total = 0
    for chunk in batch.chunks():
        hits += int(np.sum(np.all(chunk <= x, axis=1)))
        total += chunk.shape[0]
    p = hits / total
    se = math.sqrt(p * (1.0 - p) / total)
    return MCEstimate(p, se, total, batch.seed)


def mc_cdf_chunked(batch, boxes):
    """Joint estimates for several boxes from one pass over the batch.

    Returns (estimates, chunk_means) where chunk_means is (n_chunks, n_boxes);
    the per-chunk resolution supports standard errors of any smooth function
    of several correlated probabilities.
    """
    boxes = [np.asarray(b, dtype=np.float64) for b in boxes]
    per_chunk = []
    counts = []
    for chunk in batch.chunks():
        row = [float(np.mean(np.all(chunk <= b, axis=1))) for b in boxes]
        per_chunk.append(row)
        counts.append(chunk.shape[0])
    cm = np.asarray(per_chunk)
    w = np.asarray(counts, dtype=np.float64)
    total = float(w.sum())
    means = (w[:, None] * cm).sum(axis=0) / total
    ests = []
    for k, b in enumerate(boxes):
        p = float(means[k])
        se = math.sqrt(max(p * (1.0 - p), 0.0) / total)
        ests.append(MCEstimate(p, se, int(total), batch.seed))
    return ests, cm


def mc_laplace(batch, t):
    """Empirical E[exp(-sum t_i X_i)] with its standard error."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0):
        raise DomainError("t must be >= 0", module="oracle")
    total = 0.0
    total_sq = 0.0
    count = 0
    for chunk in batch.chunks():
        v = np.exp(-(chunk @ t))
        total += float(v.sum())
        total_sq += float((v * v).sum())
        count += v.size
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    return MCEstimate(mean, math.sqrt(var / count), count, batch.seed)


def lt_formula(r, alpha, t):
    """Parametric Laplace transform |I + R T|^{-alpha}, T = Diag(t)."""
    mat = r.entries if hasattr(r, "entries") else np.asarray(r, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    sign, logdet = np.linalg.slogdet(np.eye(mat.shape[0]) + mat * t[None, :])
    if sign <= 0:
        raise DomainError("I + R T must have positive determinant", module="oracle")
    return math.exp(-alpha * logdet)


@dataclass(frozen=True)
class CoupledPath:
    """Common-random-number estimates along an interpolation path, plus the
    standard errors of consecutive differences (far smaller than the naive
    combination because the same normals drive every grid point)."""

    taus: tuple
    estimates: tuple       # MCEstimate per tau
    diff_std_errors: tuple  # per consecutive pair

    def __iter__(self):
        return iter(self.estimates)

    def __len__(self):
        return len(self.estimates)

    def __getitem__(self, i):
        return self.estimates[i]


def mc_coupled_path(r0, r1, nu, tau_grid, x, count, seed):
    """CRN-coupled cdf estimates for R(tau) = R0 + tau (R1 - R0).

    The identical standard-normal draws are pushed through every
    interpolated Cholesky factor.
    """
    m0 = r0.entries if hasattr(r0, "entries") else np.asarray(r0, dtype=np.float64)
    m1 = r1.entries if hasattr(r1, "entries") else np.asarray(r1, dtype=np.float64)
    taus = tuple(float(t) for t in tau_grid)
    x = np.asarray(x, dtype=np.float64)
    if nu < 1 or int(nu) != nu:
        raise DomainError(f"nu must be a positive integer, got {nu}", module="oracle")
    nu = int(nu)
    n = m0.shape[0]
    chols = []
    for tau in taus:
        mt = m0 + tau * (m1 - m0)
        try:
            chols.append(np.linalg.cholesky(mt))
        except np.linalg.LinAlgError as exc:
            raise DomainError(f"factorization failed at tau={tau}: {exc}", module="oracle")
    chunk_means = []
    counts = []
    produced = 0
    index = 0
    while produced < count:
        m = min(CHUNK, count - produced)
        gen = _chunk_gen(seed, index)
        z = _normals(gen, (m, nu, n))
        row = []
        for chol in chols:
            zz = z @ chol.T
            xx = 0.5 * np.einsum("mkj,mkj->mj", zz, zz)
            row.append(float(np.mean(np.all(xx <= x, axis=1))))
        chunk_means.append(row)
        counts.append(m)
        produced += m
        index += 1
    cm = np.asarray(chunk_means)
    w = np.asarray(counts, dtype=np.float64)
    total = float(w.sum())
    means = (w[:, None] * cm).sum(axis=0) / total
    ests = []
    for k in range(len(taus)):
        p = float(means[k])
        se = math.sqrt(max(p * (1.0 - p), 0.0) / total)
        ests.append(MCEstimate(p, se, int(total), seed))
    diffs = []
    nchunks = cm.shape[0]
    for k in range(len(taus) - 1):
        dvals = cm[:, k + 1] - cm[:, k]
        if nchunks > 1:
            se = float(np.std(dvals, ddof=1)) / math.sqrt(nchunks)
        else:
            se = ests[k].std_error + ests[k + 1].std_error
        diffs.append(se)
    return CoupledPath(taus, tuple(ests), tuple(diffs))
