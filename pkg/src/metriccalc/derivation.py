"""Finite-reach difference-quotient derivations.

A derivation acts by ``Df(x) = sum_j w_j (f(y_j) - f(x)) / d(x, y_j)`` over a
per-point stencil.  Linearity and ``D(const) = 0`` hold exactly; the Leibniz
rule holds up to the residual ``sum_j w_j df_j dg_j / d_j``, which is
O(reach).  Weak-* continuity is automatic in finite dimensions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lipcalc import glip, lip_field, _ladder
from .space import ScalarField, as_values, _as_mask


class DerivationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Derivation:
    """Stencil operator in CSR form: row x holds (neighbour, weight, distance)."""

    space: object
    indptr: np.ndarray
    nbr: np.ndarray
    w: np.ndarray
    d: np.ndarray
    label: str = ""

    def __post_init__(self):
        n = self.space.n
        if len(self.indptr) != n + 1 or self.indptr[0] != 0 or np.any(np.diff(self.indptr) < 0):
            raise DerivationError("malformed stencil index pointer")
        if len(self.nbr) and (self.nbr.min() < 0 or self.nbr.max() >= n):
            raise DerivationError("stencil references an out-of-range point")
        if np.any(self.d <= 0):
            rows = self.centers[self.d <= 0]
            raise DerivationError(f"zero-distance stencil neighbour at point {int(rows[0])}")
        if not np.all(np.isfinite(self.w)):
            raise DerivationError("stencil weights must be finite")
        for a in (self.indptr, self.nbr, self.w, self.d):
            a.setflags(write=False)

    @property
    def centers(self):
        return np.repeat(np.arange(self.space.n), np.diff(self.indptr))

    @property
    def weight_mass(self):
        """sum_j |w_j| per point."""
        return np.bincount(self.centers, weights=np.abs(self.w), minlength=self.space.n)

    @property
    def reach_at(self):
        out = np.zeros(self.space.n)
        if len(self.d):
            np.maximum.at(out, self.centers, self.d)
        return out

    @property
    def reach(self):
        return float(self.d.max()) if len(self.d) else 0.0

    def stencil(self, x):
        lo, hi = self.indptr[x], self.indptr[x + 1]
        return list(zip(self.nbr[lo:hi].tolist(), self.w[lo:hi].tolist()))

    def __call__(self, f):
        return apply(self, f)


def _from_entries(space, centers, nbr, w, label="", merge=True):
    centers = np.asarray(centers, dtype=np.int64)
    nbr = np.asarray(nbr, dtype=np.int64)
    w = np.asarray(w, dtype=float)
    if len(nbr) and (nbr.min() < 0 or nbr.max() >= space.n):
        raise DerivationError("stencil references an out-of-range point")
    if len(centers) and (centers.min() < 0 or centers.max() >= space.n):
        raise DerivationError("stencil references an out-of-range point")
    if np.any(centers == nbr):
        x = int(centers[centers == nbr][0])
        raise DerivationError(f"stencil of point {x} contains the point itself")
    order = np.lexsort((nbr, centers))
    centers, nbr, w = centers[order], nbr[order], w[order]
    if merge and len(centers):
        key = centers * space.n + nbr
        start = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        w = np.add.reduceat(w, start)
        centers, nbr = centers[start], nbr[start]
    if len(centers):
        d = _pair_dist(space, centers, nbr)
    else:
        d = np.zeros(0)
    indptr = np.zeros(space.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(centers, minlength=space.n), out=indptr[1:])
    return Derivation(space, indptr, nbr, w, d, label)


def _pair_dist(space, a, b):
    if space.coords is not None:
        diff = space.coords[a] - space.coords[b]
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        return d**space.alpha if space.alpha != 1.0 else d
    return space.dist_matrix()[a, b]


def dq_derivation(space, scheme, normalize=True, **params):
    """Build a difference-quotient derivation.

    Schemes
    -------
    ``axis``   (``dim``, ``step``): forward neighbour at ``x + step e_dim`` with
               weight +1, backward neighbour with weight -1 where the forward
               one does not exist.  ``step`` defaults to the grid spacing.
    ``knn``    (``k``, ``radius``, ``seed``): the k nearest neighbours within
               ``radius`` with seeded Gaussian weights.
    ``custom`` (``stencil``): ``{center: [(y, w), ...]}`` or a list of
               ``(center, [(y, w), ...])`` pairs.

    With ``normalize`` the weights at each point are rescaled so that
    ``sum_j |w_j| <= 1``.
    """
    if scheme == "axis":
        D = _axis(space, params.get("dim", 0), params.get("step"))
    elif scheme == "knn":
        D = _knn(space, params["k"], params.get("radius"), params.get("seed", 0))
    elif scheme == "custom":
        D = _custom(space, params["stencil"])
    else:
        raise DerivationError(f"unknown scheme {scheme!r}")
    if normalize:
        mass = D.weight_mass
        scale = np.where(mass > 1.0, 1.0 / np.where(mass > 0, mass, 1.0), 1.0)
        if np.any(scale != 1.0):
            D = Derivation(space, D.indptr.copy(), D.nbr.copy(), D.w * scale[D.centers],
                           D.d.copy(), D.label)
    return D


def _axis(space, dim, step):
    if space.coords is None:
        raise DerivationError("axis derivations need coordinates")
    if step is None:
        step = space.meta.get("spacing")
        if step is None:
            raise DerivationError("axis derivation needs a step on non-grid spaces")
    step = float(step)
    shift = np.zeros(space.dim)
    shift[dim] = step
    tol = 1e-9 * step
    d_fwd, fwd = space.tree.query(space.coords + shift, k=1)
    d_bwd, bwd = space.tree.query(space.coords - shift, k=1)
    has_fwd = d_fwd <= tol
    has_bwd = d_bwd <= tol
    if not np.all(has_fwd | has_bwd):
        x = int(np.flatnonzero(~(has_fwd | has_bwd))[0])
        raise DerivationError(f"no axis neighbour for point {x}")
    nbr = np.where(has_fwd, fwd, bwd)
    w = np.where(has_fwd, 1.0, -1.0)
    return _from_entries(space, np.arange(space.n), nbr, w, label=f"axis{dim}")


def _knn(space, k, radius, seed):
    if k < 1:
        raise DerivationError("knn needs k >= 1")
    rng = np.random.default_rng(seed)
    if radius is None:
        radius = np.inf
    centers, nbr = [], []
    if space.coords is not None:
        dd, idx = space.tree.query(space.coords, k=min(k + 1, space.n))
        dd = dd.reshape(space.n, -1) ** space.alpha
        idx = idx.reshape(space.n, -1)
        for x in range(space.n):
            sel = [(j, dj) for j, dj in zip(idx[x], dd[x]) if j != x and dj <= radius][:k]
            centers += [x] * len(sel)
            nbr += [j for j, _ in sel]
    else:
        D = space.dist_matrix()
        for x in range(space.n):
            order = np.lexsort((np.arange(space.n), D[x]))
            sel = [j for j in order if j != x and D[x, j] <= radius][:k]
            centers += [x] * len(sel)
            nbr += sel
    w = rng.standard_normal(len(nbr))
    return _from_entries(space, centers, nbr, w, label=f"knn{k}")


def _custom(space, stencil):
    items = stencil.items() if isinstance(stencil, dict) else stencil
    centers, nbr, w = [], [], []
    for center, entries in items:
        for y, wt in entries:
            centers.append(int(center))
            nbr.append(int(y))
            w.append(float(wt))
    return _from_entries(space, centers, nbr, w, label="custom", merge=False)


def zero_derivation(space):
    return _from_entries(space, [], [], [], label="zero")


def apply(D, f):
    """Df as a ScalarField; sums accumulate in stencil order."""
    if isinstance(f, ScalarField) and f.space is not D.space:
        raise DerivationError("field and derivation live on different spaces")
    v = as_values(D.space, f)
    c = D.centers
    terms = D.w * (v[D.nbr] - v[c]) / D.d
    return ScalarField(np.bincount(c, weights=terms, minlength=D.space.n), D.space)


def leibniz_residual(D, f, g):
    """R = D(fg) - f Dg - g Df, the closed form, and whether |R| stays under its bound.

    Returns ``(R, closed_form, bound_ok)``; the bound is
    weight_mass * glip f * glip g * reach at every point.
    """
    vf, vg = as_values(D.space, f), as_values(D.space, g)
    direct = (apply(D, vf * vg).values - vf * apply(D, vg).values - vg * apply(D, vf).values)
    c = D.centers
    terms = D.w * (vf[D.nbr] - vf[c]) * (vg[D.nbr] - vg[c]) / D.d
    closed = np.bincount(c, weights=terms, minlength=D.space.n)
    bound = D.weight_mass * glip(D.space, vf) * glip(D.space, vg) * D.reach_at
    scale = 1e-12 * (1.0 + np.abs(bound))
    ok = bool(np.all(np.abs(closed) <= bound + scale))
    return ScalarField(direct, D.space), ScalarField(closed, D.space), ok


def stencil_interior(D, A):
    """Points of A whose centre and whole stencil lie in A."""
    mask = _as_mask(D.space, A)
    outside = np.bincount(D.centers, weights=(~mask[D.nbr]).astype(float), minlength=D.space.n)
    return mask & (outside == 0)


def locality_residual(D, f, g, A, atol=0.0):
    """Df - Dg on A, for f and g that agree on A.

    Returns ``(residual on A, interior mask)``; the residual vanishes exactly
    on the stencil interior of A.
    """
    mask = _as_mask(D.space, A)
    vf, vg = as_values(D.space, f), as_values(D.space, g)
    diff = np.abs(vf - vg)[mask]
    if np.any(diff > atol):
        raise DerivationError("f and g disagree on A")
    res = apply(D, vf).values - apply(D, vg).values
    interior = stencil_interior(D, mask)
    if np.any(res[interior] != 0):
        raise DerivationError("locality residual nonzero on the stencil interior")
    return np.where(mask, res, 0.0), interior


@dataclass(frozen=True)
class OperatorNorm:
    exact_bound: float
    empirical: float | None
    violations: list


def operator_norm(D, probes=None, ladder=None):
    """``exact_bound = max weight_mass`` and, with probes, the empirical
    max |Df(x)| / Lip f(x).  Points with Lip f(x) = 0 but Df(x) != 0 are
    returned as violation witnesses ``(probe index, point)``.
    """
    exact = float(D.weight_mass.max()) if D.space.n else 0.0
    if probes is None:
        return OperatorNorm(exact, None, [])
    if len(probes) == 0:
        raise DerivationError("empirical operator norm needs probe fields")
    ladder = _ladder(D.space, ladder)
    best = 0.0
    violations = []
    for k, f in enumerate(probes):
        df = np.abs(apply(D, f).values)
        lf = lip_field(D.space, f, "upper", ladder).values
        tol = 1e-12 * (1.0 + df)
        zero = lf == 0
        bad = np.flatnonzero(zero & (df > tol))
        violations += [(k, int(x)) for x in bad]
        ok = ~zero
        if ok.any():
            best = max(best, float((df[ok] / lf[ok]).max()))
    return OperatorNorm(exact, best, violations)


def combine(lambdas, derivations):
    """sum_i lambda_i(x) D_i as one stencil derivation."""
    if len(lambdas) != len(derivations) or not derivations:
        raise DerivationError("need matching, nonempty lists of coefficients and derivations")
    space = derivations[0].space
    centers, nbr, w = [], [], []
    for lam, D in zip(lambdas, derivations):
        if D.space is not space:
            raise DerivationError("derivations live on different spaces")
        lv = as_values(space, lam) if not np.isscalar(lam) else np.full(space.n, float(lam))
        c = D.centers
        centers.append(c)
        nbr.append(D.nbr)
        w.append(lv[c] * D.w)
    out = _from_entries(space, np.concatenate(centers), np.concatenate(nbr), np.concatenate(w),
                        label="combined")
    keep = out.w != 0
    if not keep.all():
        c = out.centers[keep]
        indptr = np.zeros(space.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(c, minlength=space.n), out=indptr[1:])
        out = Derivation(space, indptr, out.nbr[keep].copy(), out.w[keep].copy(),
                         out.d[keep].copy(), out.label)
    return out


@dataclass(frozen=True, eq=False)
class ComponentTable:
    """values[i, k, x] = D_i g_k (x)."""

    values: np.ndarray
    derivations: list
    generators: list

    @property
    def shape(self):
        return self.values.shape

    def at(self, x):
        """The (derivation x generator) matrix at point x."""
        return self.values[:, :, x]

    def rows(self):
        N, K, n = self.values.shape
        for i in range(N):
            for k in range(K):
                for x in range(n):
                    yield i, k, x, float(self.values[i, k, x])


def component_table(derivations, generators):
    if not derivations or not generators:
        raise DerivationError("component table needs derivations and generators")
    space = derivations[0].space
    for D in derivations:
        if D.space is not space:
            raise DerivationError("derivations live on different spaces")
    vals = np.empty((len(derivations), len(generators), space.n))
    for k, g in enumerate(generators):
        gv = as_values(space, g)
        for i, D in enumerate(derivations):
            vals[i, k] = apply(D, gv).values
    vals.setflags(write=False)
    return ComponentTable(vals, list(derivations), list(generators))


# -- file formats --------------------------------------------------------------

def stencil_to_dict(D):
    return {"points": [{"center": x, "stencil": [[y, w] for y, w in D.stencil(x)]}
                       for x in range(D.space.n) if D.indptr[x + 1] > D.indptr[x]]}


def stencil_from_dict(space, data):
    try:
        items = [(p["center"], p["stencil"]) for p in data["points"]]
    except (KeyError, TypeError) as exc:
        raise DerivationError(f"malformed stencil document: {exc}") from exc
    return dq_derivation(space, "custom", normalize=False, stencil=items)


def load_stencil(space, path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DerivationError(f"cannot read stencil file {path}: {exc}") from exc
    return stencil_from_dict(space, data)
