"""Convergence analysis for the three-block characteristic-function series.

The binomial expansion behind the three-block cdf converges iff the modulus

    rho^2(t) = (g~^2 + (sum_j g~_j^2 t_j)^2) / prod_j (1 + t_j^2),
    g~ = g~_1^2 + g~_2^2 + g~_3^2 - 2 g~_1 g~_2 g~_3   (= 1 - det Theta~)

stays below 1 over all real t = (t1, t2, t3); the g~_j = theta_jk sqrt(d_j d_k)
are the block correlations shrunk by the per-block mass ratios d_j.  The
maximum is located by stationary-point equations in a single bounded variable
x = tau^2 (an interior equation and a boundary equation with the smallest
coordinate pinned to zero), each solvable by bracketed bisection, and always
cross-validated against a refining grid search.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_BISECT_TOL = 1e-12
_SCAN_POINTS = 256


@dataclass(frozen=True)
class ThetaTilde:
    """Shrunk block correlations (g~_1, g~_2, g~_3) with their d-ratios.

    The complementary labeling is used throughout: g~_1 pairs blocks (2,3),
    g~_2 pairs (1,3), g~_3 pairs (1,2).
    """

    values: tuple
    d: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if len(v) != 3 or any(x < 0.0 for x in v):
            raise DomainError("ThetaTilde needs three non-negative values", module="converge")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "d", tuple(float(x) for x in self.d))

    @property
    def scalar(self):
        """g~ = sum g~_j^2 - 2 prod g~_j, equal to 1 - det(Theta~)."""
        g1, g2, g3 = self.values
        return g1 * g1 + g2 * g2 + g3 * g3 - 2.0 * g1 * g2 * g3


@dataclass(frozen=True)
class MaxRhoResult:
    max_rho_sq: float
    argmax_t: tuple
    branch: str  # "interior" | "boundary_tk_zero" | "origin"
    converged: bool
    grid_value: float


def d_values(structure):
    """Per-block shrink ratios d_j = p_j / (1 + p_j) with
    p_j = sum_{mu in I_j} a_mu^2 / (1 - a_mu^2)."""
    if structure.p != 3:
        raise DomainError("d_values needs a three-block structure", module="converge")
    out = []
    for ab in structure.block_factors():
        p = float(np.sum(ab * ab / (1.0 - ab * ab)))
        out.append(p / (1.0 + p))
    return tuple(out)


def theta_tilde_from_structure(structure):
    """ThetaTilde of a three-block structure (complementary labeling)."""
    d = d_values(structure)
    th = structure.theta
    vals = (
        abs(float(th[1, 2])) * math.sqrt(d[1] * d[2]),
        abs(float(th[0, 2])) * math.sqrt(d[0] * d[2]),
        abs(float(th[0, 1])) * math.sqrt(d[0] * d[1]),
    )
    return ThetaTilde(vals, d)


def rho_sq(t, tt):
    """Series modulus rho^2 at t = (t1, t2, t3) = tan of the three phases."""
    t1, t2, t3 = (float(v) for v in t)
    g1, g2, g3 = tt.values
    g = tt.scalar
    num = g * g + (g1 * g1 * t1 + g2 * g2 * t2 + g3 * g3 * t3) ** 2
    den = (1.0 + t1 * t1) * (1.0 + t2 * t2) * (1.0 + t3 * t3)
    return num / den


def rho_sq_phases(gammas, tt):
    """Independent re-derivation of rho^2 through the complex modulus form
    (the cross-check oracle for the rational formula)."""
    g1, g2, g3 = tt.values
    c = [math.cos(g) for g in gammas]
    z = (
        g3 * g3 * c[0] * c[1] * np.exp(1j * (gammas[0] + gammas[1]))
        + g2 * g2 * c[0] * c[2] * np.exp(1j * (gammas[0] + gammas[2]))
        + g1 * g1 * c[1] * c[2] * np.exp(1j * (gammas[1] + gammas[2]))
        - 2.0 * g1 * g2 * g3 * c[0] * c[1] * c[2] * np.exp(1j * (gammas[0] + gammas[1] + gammas[2]))
    )
    return float(abs(z) ** 2)


def sufficient_condition(tt):
    """Simple sufficient (not necessary) criterion sum_j g~_j^4 <= 1 for
    max rho^2 < 1 (positive semi-definiteness of the quartic gap form)."""
    g1, g2, g3 = tt.values
    return g1 ** 4 + g2 ** 4 + g3 ** 4 <= 1.0


def grid_search(tt, points=60, refine=6):
    """Refining grid search over the phase cube (-pi/2, pi/2)^3.

    Each pass re-grids around the best cell, so the final value resolves the
    maximum well past the 1e-6 comparison tolerance.  The origin t = 0 is
    always included as a candidate.
    """
    g1, g2, g3 = tt.values
    g = tt.scalar
    best = g * g  # origin
    best_t = (0.0, 0.0, 0.0)
    lo = np.full(3, -math.pi / 2 + 1e-12)
    hi = np.full(3, math.pi / 2 - 1e-12)
    for _ in range(refine):
        axes = [np.linspace(lo[d], hi[d], points) for d in range(3)]
        t_axes = [np.tan(ax) for ax in axes]
        t1 = t_axes[0][:, None, None]
        t2 = t_axes[1][None, :, None]
        t3 = t_axes[2][None, None, :]
        num = g * g + (g1 * g1 * t1 + g2 * g2 * t2 + g3 * g3 * t3) ** 2
        den = (1.0 + t1 * t1) * (1.0 + t2 * t2) * (1.0 + t3 * t3)
        r = num / den
        i = np.unravel_index(int(np.argmax(r)), r.shape)
        if float(r[i]) > best:
            best = float(r[i])
            best_t = tuple(float(t_axes[d][i[d]]) for d in range(3))
        centers = np.array([axes[d][i[d]] for d in range(3)])
        steps = np.array([(hi[d] - lo[d]) / (points - 1) for d in range(3)])
        lo = np.maximum(centers - 2.0 * steps, -math.pi / 2 + 1e-12)
        hi = np.minimum(centers + 2.0 * steps, math.pi / 2 - 1e-12)
    return best, best_t


def _bisect(h, lo, hi):
    flo = h(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = h(mid)
        if flo * fm <= 0.0:
            hi = mid
        else:
            lo = mid
            flo = fm
        if hi - lo < _BISECT_TOL * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def _stationary_candidates(tt, active, target):
    """Solve  target - sum_{j in active} sqrt(1 - 4 g~_j^4 x)
                     -/+ sqrt(1 - 4 g~^2 x) = 0  on (0, x1].

    The sign flip at the crossing point x0 is handled by scanning both signed
    half-equations for brackets and bisecting each (the equations have at
    most one root apiece).  Returns candidate t-vectors.
    """
    g = np.array(tt.values)
    g2 = g * g
    g4 = g2 * g2
    gs = tt.scalar
    if gs <= 0.0:
        return []
    x1 = 0.25 / (gs * gs)

    def radsi(x, j):
        return math.sqrt(max(1.0 - 4.0 * g4[j] * x, 0.0))

    def rads(x):
        return math.sqrt(max(1.0 - 4.0 * gs * gs * x, 0.0))

    cands = []
    for sign in (1.0, -1.0):
        def h(x, s=sign):
            return target - sum(radsi for radsi in (radsi(x, j) for j in active)) - s * rads(x)

        xs = np.linspace(x1 * 1e-9, x1, _SCAN_POINTS + 1)
        vals = [h(float(z)) for z in xs]
        for i in range(_SCAN_POINTS):
            if vals[i] == 0.0:
                root = float(xs[i])
            elif vals[i] * vals[i + 1] < 0.0:
                root = _bisect(h, float(xs[i]), float(xs[i + 1]))
            else:
                continue
            tau = math.sqrt(root)
            t = [0.0, 0.0, 0.0]
            for j in active:
                c2 = 0.5 * (1.0 + radsi(root, j))
                t[j] = tau * g2[j] / c2
            cands.append(tuple(t))
    return cands


def max_rho_sq(tt, tol=1e-9, run_grid=True):
    """Certified maximum of rho^2 over the phase cube.

    Candidates: the origin, the interior stationary equation, and the
    boundary equation with the smallest g~_k pinned (all three pins are
    tried; the extra candidates are harmless).  When ``run_grid`` the value
    is cross-validated against the refining grid search and flagged
    non-converged on disagreement beyond 1e-6 relative.
    """
    g = np.array(tt.values)
    if np.any(g >= 1.0):
        raise DomainError("needs g~_j in [0, 1)", module="converge")
    if float(g.max()) == 0.0:
        return MaxRhoResult(0.0, (0.0, 0.0, 0.0), "origin", True, 0.0)
    origin_val = tt.scalar ** 2
    cands = [(origin_val, (0.0, 0.0, 0.0), "origin")]
    for t in _stationary_candidates(tt, (0, 1, 2), 2.0):
        cands.append((rho_sq(t, tt), t, "interior"))
    for k in range(3):
        active = tuple(j for j in range(3) if j != k)
        for t in _stationary_candidates(tt, active, 1.0):
            cands.append((rho_sq(t, tt), t, "boundary_tk_zero"))
    best = max(cands, key=lambda c: c[0])
    converged = True
    gval = best[0]
    if run_grid:
        gval, _ = grid_search(tt)
        rel = abs(best[0] - gval) / max(best[0], gval, 1e-300)
        if gval > best[0] + 1e-9 and rel > 1e-6:
            # stationary solve missed the max; report the grid value honestly
            return MaxRhoResult(gval, best[1], best[2], False, gval)
        converged = rel <= 1e-6
    return MaxRhoResult(best[0], best[1], best[2], converged, gval)
