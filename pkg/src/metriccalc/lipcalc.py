"""Pointwise Lipschitz calculus on finite metric measure spaces.

Scale conventions
-----------------
``varlip f(x, r) = sup_{y in B(x,r)} |f(x) - f(y)| / r`` is evaluated exactly.

The upper constant ``Lip f(x, r) = sup_{0 < s <= r} varlip f(x, s)`` is also
exact: on a finite space the supremum over all real ``s`` is attained at
``s = d(x, y)`` and equals the largest difference quotient
``|f(x) - f(y)| / d(x, y)`` over ``y`` in the punctured ball.

The lower constant ``lip f(x, r) = inf_s varlip f(x, s)`` runs over the rungs
of a :class:`~metriccalc.space.ScaleLadder` that are ``<= r`` and admissible at
``x`` (the ball holds a second point).  Both infinitesimal constants are read
off at the smallest admissible rung, the per-point floor.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import norm, qmc

from . import kernels
from .kernels import BALL_RTOL
from .space import ScaleLadder, ScalarField, as_values, ball


class LipschitzError(ValueError):
    pass


def _ladder(space, ladder):
    if ladder is None:
        return ScaleLadder.default(space)
    if isinstance(ladder, str):
        return ScaleLadder.parse(ladder)
    if not isinstance(ladder, ScaleLadder):
        return ScaleLadder(tuple(ladder))
    return ladder


def varlip(space, f, x, r):
    """(1/r) * max over the closed ball B(x, r) of |f(x) - f(y)|."""
    if r <= 0:
        raise ValueError("varlip needs r > 0")
    v = as_values(space, f)
    b = ball(space, x, r)
    amp = float(np.abs(v[b] - v[x]).max() / r)
    # a neighbour admitted by the ball slack sits a hair beyond r; never report
    # more than its difference quotient
    return min(amp, max_quotient(space, f, x, r)) if amp > 0 else 0.0


def max_quotient(space, f, x, r):
    """Largest |f(x) - f(y)| / d(x, y) over y != x in B(x, r); 0 if none."""
    v = as_values(space, f)
    b = ball(space, x, r)
    b = b[b != x]
    if len(b) == 0:
        return 0.0
    d = space.distance_block([x])[0][b]
    return float((np.abs(v[b] - v[x]) / d).max())


def local_lipschitz(space, f, x, r, kind="upper", ladder=None):
    """Upper or lower variation of ``f`` at ``x`` from scale ``r`` down.

    ``r`` must be at least the point's floor on the ladder.
    """
    ladder = _ladder(space, ladder)
    space.check_point(x)
    floor = ladder.point_floor(space)[x]
    if np.isnan(floor):
        raise LipschitzError(f"point {x} is isolated at every ladder scale")
    if r < floor * (1 - BALL_RTOL):
        raise LipschitzError(f"scale {r} is below the floor {floor} of point {x}")
    if kind == "upper":
        return max_quotient(space, f, x, r)
    if kind == "lower":
        rungs = [s for s in ladder.radii if floor * (1 - BALL_RTOL) <= s <= r * (1 + BALL_RTOL)]
        return min(varlip(space, f, x, s) for s in rungs)
    raise ValueError(f"kind must be 'upper' or 'lower', got {kind!r}")


@dataclass(frozen=True)
class LipProfile:
    """Per-point, per-rung variations of one field.

    Arrays have shape (n, K) following ``ladder.radii``; entries at rungs
    that are not admissible for a point are nan.
    """

    ladder: ScaleLadder
    varlip_at: np.ndarray
    biglip_at: np.ndarray
    smllip_at: np.ndarray
    floor_index: np.ndarray
    biglip: np.ndarray
    smllip: np.ndarray

    @property
    def isolated(self):
        return self.floor_index < 0

    def field(self, space, kind="upper"):
        values = self.biglip if kind == "upper" else self.smllip
        return ScalarField(values, space)

    def rows(self):
        """(point, r, varlip, upper, lower) for every admissible pair."""
        out = []
        n, K = self.varlip_at.shape
        for x in range(n):
            for k in range(K):
                if k <= self.floor_index[x]:
                    out.append((x, self.ladder.radii[k], float(self.varlip_at[x, k]),
                                float(self.biglip_at[x, k]), float(self.smllip_at[x, k])))
        return out


def _neighbors_to(space, radius):
    return space.neighbors(radius)


def lip_profile(space, f, ladder=None):
    """Full :class:`LipProfile` of ``f`` over ``ladder``."""
    ladder = _ladder(space, ladder)
    v = np.ascontiguousarray(as_values(space, f))
    radii = np.asarray(ladder.radii)
    fidx = ladder.floor_index(space)
    nb = _neighbors_to(space, ladder.top)
    amp, slope = kernels.scale_maxima(nb.indptr, nb.indices, nb.dists, v, radii)
    K = len(radii)
    admissible = np.arange(K)[None, :] <= fidx[:, None]
    # clamp by the quotient: see varlip
    var_at = np.where(admissible, np.minimum(amp / radii[None, :], slope), np.nan)
    big_at = np.where(admissible, slope, np.nan)
    # inf over rungs s <= r_k, i.e. over columns k..floor
    low = np.where(admissible, var_at, np.inf)
    low = np.minimum.accumulate(low[:, ::-1], axis=1)[:, ::-1]
    small_at = np.where(admissible, low, np.nan)
    rows = np.arange(space.n)
    ok = fidx >= 0
    big = np.zeros(space.n)
    small = np.zeros(space.n)
    big[ok] = big_at[rows[ok], fidx[ok]]
    small[ok] = var_at[rows[ok], fidx[ok]]
    return LipProfile(ladder, var_at, big_at, small_at, fidx, big, small)


def lip_field(space, f, kind="upper", ladder=None):
    """Lip f (upper) or lip f (lower) at every point, read at the per-point floor.

    Points isolated at every rung get 0.
    """
    return lip_fields(space, [f], kind, ladder)[0]


def lip_fields(space, fields, kind="upper", ladder=None):
    """:func:`lip_field` for several fields, sharing one neighbour search."""
    if kind not in ("upper", "lower"):
        raise ValueError(f"kind must be 'upper' or 'lower', got {kind!r}")
    ladder = _ladder(space, ladder)
    fidx = ladder.floor_index(space)
    ok = fidx >= 0
    floor = np.where(ok, np.asarray(ladder.radii)[np.maximum(fidx, 0)], 0.0)
    nb = space.neighbors(floor)
    radius = np.array([max(floor.max(), 1e-300)])
    out = []
    for f in fields:
        v = np.ascontiguousarray(as_values(space, f))
        amp, slope = kernels.scale_maxima(nb.indptr, nb.indices, nb.dists, v, radius)
        if kind == "upper":
            vals = slope[:, 0]
        else:
            vals = np.minimum(np.where(ok, amp[:, 0] / np.where(ok, floor, 1.0), 0.0), slope[:, 0])
        out.append(ScalarField(np.where(ok, vals, 0.0), space))
    return out


def floor_neighbors(space, ladder=None):
    """Neighbours of every point inside its floor ball (empty rows when isolated)."""
    ladder = _ladder(space, ladder)
    fidx = ladder.floor_index(space)
    floor = np.where(fidx >= 0, np.asarray(ladder.radii)[np.maximum(fidx, 0)], 0.0)
    return space.neighbors(floor)


def combination_lip(space, fields, coeffs, ladder=None, nb=None):
    """Lip(sum_j c_j(x) f_j)(x) at every point, with per-point coefficients.

    ``coeffs`` has shape (n, m).  The combination is frozen at x before the
    local constant is taken, exactly as in the local independence seminorm.
    """
    nb = floor_neighbors(space, ladder) if nb is None else nb
    vals = np.stack([as_values(space, f) for f in fields], axis=1)
    coeffs = np.asarray(coeffs, dtype=float).reshape(space.n, len(fields))
    centers = np.repeat(np.arange(space.n), np.diff(nb.indptr))
    q = (vals[nb.indices] - vals[centers]) / nb.dists[:, None]
    r = np.abs(np.einsum("ij,ij->i", q, coeffs[centers]))
    out = np.zeros(space.n)
    if len(r):
        np.maximum.at(out, centers, r)
    return out


def glip(space, f):
    """Global Lipschitz constant, max over pairs of |f(x) - f(y)| / d(x, y)."""
    return glip_witness(space, f)[0]


def glip_witness(space, f):
    """(glip, i, j) with the first maximizing pair; (0, -1, -1) if n < 2."""
    v = np.ascontiguousarray(as_values(space, f))
    if space.n < 2:
        return 0.0, -1, -1
    if space.coords is not None:
        return kernels.max_slope_coords(space.coords, space.alpha, v)
    return kernels.max_slope_dense(space.dist_matrix(), v)


def lip_norm(space, f):
    """max(sup |f|, glip f)."""
    v = as_values(space, f)
    return max(float(np.abs(v).max()), glip(space, f))


def mcshane_extend(space, A, f_on_A, L):
    """Extend ``f_on_A`` (values on the points ``A``, same order) with constant ``L``.

    g(y) = min over a in A of f(a) + L d(a, y).  Raises when ``L`` is below the
    Lipschitz constant of the data, naming a witnessing pair.
    """
    A = np.asarray(A, dtype=np.int64)
    fa = np.ascontiguousarray(f_on_A, dtype=float)
    if A.ndim != 1 or len(A) == 0:
        raise ValueError("McShane extension needs a nonempty point set")
    if len(fa) != len(A):
        raise ValueError("one value per anchor point is required")
    if len(np.unique(A)) != len(A):
        raise ValueError("anchor points must be distinct")
    if len(A) > 1:
        if space.coords is not None:
            lip_a, i, j = kernels.max_slope_coords(np.ascontiguousarray(space.coords[A]),
                                                   space.alpha, fa)
        else:
            sub = np.ascontiguousarray(space.dist_matrix()[np.ix_(A, A)])
            lip_a, i, j = kernels.max_slope_dense(sub, fa)
        if L < lip_a * (1 - 1e-12):
            raise LipschitzError(
                f"L = {L} is below the Lipschitz constant {lip_a} of the data, "
                f"witnessed by points {int(A[i])} and {int(A[j])}")
    if space.coords is not None:
        g = kernels.mcshane_coords(space.coords, space.alpha, A, fa, float(L))
    else:
        g = kernels.mcshane_dense(space.dist_matrix(), A, fa, float(L))
    g[A] = fa
    return ScalarField(g, space)


# -- local independence ------------------------------------------------------


def quotient_matrix(space, fields, x, ladder=None):
    """Rows (f_i(y) - f_i(x)) / d(x, y) for y != x in the floor ball of x.

    ``Lip(sum lam_i f_i)(x)`` equals ``max |Q @ lam|``.  Returns an empty
    (0, m) matrix at isolated points.
    """
    ladder = _ladder(space, ladder)
    floor = ladder.point_floor(space)[x]
    m = len(fields)
    if np.isnan(floor):
        return np.zeros((0, m))
    b = ball(space, x, floor)
    b = b[b != x]
    d = space.distance_block([x])[0][b]
    vals = np.stack([as_values(space, f) for f in fields], axis=1)
    return (vals[b] - vals[x]) / d[:, None]


def independence_seminorm(space, fields, lam, x, ladder=None):
    """Phi_x(lam) = Lip(sum_i lam_i f_i)(x)."""
    lam = np.asarray(lam, dtype=float)
    if len(fields) == 0 or lam.shape != (len(fields),):
        raise ValueError("need one coefficient per field")
    Q = quotient_matrix(space, fields, x, ladder)
    return float(np.abs(Q @ lam).max()) if len(Q) else 0.0


@dataclass(frozen=True)
class IndependenceResult:
    independent: bool
    min_value: float
    argmin: np.ndarray
    tau: float


@lru_cache(maxsize=32)
def _sphere_cached(m, count):
    pts = _sphere(m, count)
    pts.setflags(write=False)
    return pts


def sphere_points(m, count):
    """Deterministic low-discrepancy points on the unit sphere of R^m."""
    return _sphere_cached(int(m), int(count)).copy()


def _sphere(m, count):
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        t = np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    u = qmc.Halton(d=m, scramble=False).random(count + 1)[1:]
    z = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _descend(Q, lam, steps=20, step=None):
    def phi(v):
        return np.abs(Q @ v).max()

    best = phi(lam)
    step = step if step is not None else 0.5
    m = len(lam)
    for _ in range(steps):
        improved = False
        for i in range(m):
            for sgn in (1.0, -1.0):
                cand = lam.copy()
                cand[i] += sgn * step
                nrm = np.linalg.norm(cand)
                if nrm == 0:
                    continue
                cand /= nrm
                val = phi(cand)
                if val < best:
                    best, lam, improved = val, cand, True
        if not improved:
            step *= 0.5
    return lam, best


def independence_test(space, fields, x, tau=None, sphere_samples=None, ladder=None):
    """Decide whether ``fields`` are independent at ``x``.

    Minimizes Phi_x over a low-discrepancy sample of the unit sphere (plus the
    smallest right singular vector of the quotient matrix), then 20 rounds of
    coordinate descent.  Independent iff the minimum exceeds ``tau``; the
    default ``tau`` is 1e-3 times the largest Lip f_i(x).
    """
    m = len(fields)
    if m == 0:
        raise ValueError("need at least one field")
    count = sphere_samples if sphere_samples is not None else 64 * m
    if count < 2 * m:
        raise ValueError("sphere_samples must be at least twice the number of fields")
    Q = quotient_matrix(space, fields, x, ladder)
    if tau is None:
        col = np.abs(Q).max(axis=0) if len(Q) else np.zeros(m)
        tau = 1e-3 * float(col.max())
    if len(Q) == 0:
        return IndependenceResult(False, 0.0, np.eye(m)[0], float(tau))
    cands = _sphere_cached(m, count)
    _, _, vt = np.linalg.svd(Q, full_matrices=True)
    cands = np.vstack([cands, vt[-1][None, :]])
    vals = np.abs(cands @ Q.T).max(axis=1)
    k = int(np.argmin(vals))
    spacing = np.pi / count ** (1.0 / max(m - 1, 1))
    lam, best = _descend(Q, cands[k].copy(), steps=20, step=spacing)
    # canonical sign: first nonzero entry positive
    nz = np.flatnonzero(np.abs(lam) > 0)
    if len(nz) and lam[nz[0]] < 0:
        lam = -lam
    return IndependenceResult(bool(best > tau), float(best), lam, float(tau))
