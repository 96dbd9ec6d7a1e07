"""Pointwise linear algebra of the derivation module.

Every weight is positive, so "almost everywhere" statements become
statements at every point and the measure-exhaustion arguments reduce to a
classification of points by the rank of their component matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.linalg

from .derivation import combine, component_table
from .space import _as_mask

DEFAULT_TAU = 1e-6


class RankError(ValueError):
    pass


class NotFound(LookupError):
    """No generator subset gives a nonsingular minor anywhere on the domain."""


def _matrix(table, x):
    return table.at(x) if hasattr(table, "at") else np.asarray(table)[:, :, x]


def _values(table):
    return table.values if hasattr(table, "values") else np.asarray(table)


def rank_of(M, tau=DEFAULT_TAU):
    """Number of singular values above tau * the largest one."""
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tau * s[0]))


def pointwise_rank(table, x, tau=DEFAULT_TAU):
    """Rank of the (derivation x generator) matrix at ``x``."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    return rank_of(_matrix(table, x), tau)


def rank_field(table, tau=DEFAULT_TAU):
    """pointwise_rank at every point, via batched singular values."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    V = np.moveaxis(_values(table), -1, 0)
    if V.shape[1] == 0 or V.shape[2] == 0:
        return np.zeros(V.shape[0], dtype=int)
    s = np.linalg.svd(V, compute_uv=False)
    top = s[:, :1]
    return np.where(top[:, 0] > 0, np.sum(s > tau * top, axis=1), 0).astype(int)


@dataclass(frozen=True)
class KernelSelection:
    """Per-point kernel coefficients with sup-norm 1 and the pivot used."""

    coeffs: np.ndarray  # (len(domain), M)
    domain: np.ndarray
    pivot: np.ndarray

    def field(self, i, n):
        out = np.zeros(n)
        out[self.domain] = self.coeffs[:, i]
        return out


def _lift(vectors, v, tol=1e-12):
    """Rescale the null vector ``v`` of the rows ``vectors`` to pivot entry +1.

    The pivot is the lowest index whose |entry| is within ``tol`` of the
    largest.  The other entries are re-solved from the square system picked
    by column-pivoted QR, which keeps exact data exact.
    """
    a = np.abs(v)
    p = int(np.flatnonzero(a >= a.max() * (1 - tol))[0])
    M = len(v)
    rest = [i for i in range(M) if i != p]
    lam = np.zeros(M)
    lam[p] = 1.0
    if rest:
        A = vectors[rest].T  # columns V_i, i != p
        b = -vectors[p]
        _, _, piv = scipy.linalg.qr(A.T, pivoting=True, mode="economic")
        rows = np.sort(piv[:len(rest)])
        try:
            sol = np.linalg.solve(A[rows], b[rows])
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(A, b, rcond=None)[0]
        resid = np.abs(A @ sol - b).max() if len(b) else 0.0
        scale = max(np.abs(vectors).max(), 1e-300)
        if resid > 1e-10 * scale:
            sol = (v / v[p])[rest]
        lam[rest] = sol
    m = np.abs(lam).max()
    if m > 1:
        lam = lam / m
    return lam, p


def kernel_select(table, domain=None, tau=DEFAULT_TAU, axis="derivations",
                  last_nonvanishing=False):
    """Per-point coefficients lam(x) != 0 with sum_i lam_i V_i(x) = 0.

    The vectors V_i(x) are the rows (``axis="derivations"``) or the columns
    (``axis="generators"``) of the component matrix, or the first axis of a
    raw (M, dim, n) array.  Each point must have rank exactly M - 1.
    """
    V = _values(table)
    if axis == "generators":
        V = np.swapaxes(V, 0, 1)
    M, _, n = V.shape
    domain = np.arange(n) if domain is None else np.flatnonzero(_as_mask_n(n, domain))
    coeffs = np.zeros((len(domain), M))
    pivots = np.zeros(len(domain), dtype=int)
    for k, x in enumerate(domain):
        vecs = V[:, :, x]
        r = rank_of(vecs, tau)
        if r != M - 1:
            raise RankError(f"rank {r} at point {int(x)}, expected {M - 1}")
        if M == 1:
            coeffs[k] = 1.0
            continue
        _, _, vt = np.linalg.svd(vecs.T, full_matrices=True)
        lam, p = _lift(vecs, vt[-1])
        if last_nonvanishing and lam[-1] == 0:
            raise RankError(f"last coefficient vanishes at point {int(x)}")
        coeffs[k] = lam
        pivots[k] = p
    return KernelSelection(coeffs, domain, pivots)


def _as_mask_n(n, A):
    A = np.asarray(A)
    if A.dtype == bool:
        return A
    mask = np.zeros(n, dtype=bool)
    mask[A.astype(np.int64)] = True
    return mask


@dataclass
class BasisPiece:
    points: np.ndarray
    basis: list
    # coeffs[j] expresses derivation j in the basis rows on these points,
    # shape (len(points), len(basis)); absent for basis members
    coeffs: dict = field(default_factory=dict)


@dataclass
class Stratification:
    rank: np.ndarray
    strata: dict
    bases: dict

    def sizes(self):
        return {i: len(p) for i, p in self.strata.items() if len(p)}

    def to_dict(self):
        return {
            "rank": self.rank.tolist(),
            "strata": {str(i): p.tolist() for i, p in sorted(self.strata.items()) if len(p)},
            "bases": {
                str(i): {
                    "derivations": sorted({d for piece in pieces for d in piece.basis}),
                    "pieces": [{"points": pc.points.tolist(), "basis": list(pc.basis)}
                               for pc in pieces],
                }
                for i, pieces in sorted(self.bases.items())
            },
        }


def _greedy_basis(M, tau):
    chosen = []
    for i in range(M.shape[0]):
        if rank_of(M[chosen + [i]], tau) > len(chosen):
            chosen.append(i)
    return chosen


def stratify(derivations=None, generators=None, tau=DEFAULT_TAU, table=None):
    """Partition points by the rank of their component matrix.

    Each nonempty stratum X_i carries one or more pieces; a piece is a set of
    points on which a fixed set of i derivations has independent component
    rows, together with the coefficients expressing every other derivation
    in that basis.
    """
    if table is None:
        table = component_table(derivations, generators)
    V = _values(table)
    N, K, n = V.shape
    rank = rank_field(table, tau)
    strata = {i: np.flatnonzero(rank == i) for i in range(min(N, K) + 1)}
    bases = {}
    for i, pts in strata.items():
        if i == 0 or len(pts) == 0:
            continue
        pieces = []
        left = list(pts)
        while left:
            basis = _greedy_basis(V[:, :, left[0]], tau)
            sub = V[basis][:, :, left]  # (i, K, m)
            ranks = rank_field(sub, tau)
            take = [x for x, r in zip(left, ranks) if r == i]
            piece = BasisPiece(np.array(take, dtype=np.int64), basis)
            B = np.moveaxis(V[basis][:, :, take], -1, 0)  # (m, i, K)
            for j in range(N):
                if j in basis:
                    continue
                rows = np.moveaxis(V[j][:, take], -1, 0)  # (m, K)
                c = np.stack([np.linalg.lstsq(B[t].T, rows[t], rcond=None)[0]
                              for t in range(len(take))])
                piece.coeffs[j] = c
            pieces.append(piece)
            taken = set(take)
            left = [x for x in left if x not in taken]
        bases[i] = pieces
    return Stratification(rank, strata, bases)


def dependence_derivation(strat, derivations, rank, piece_index, j):
    """D_j - sum_b c_b D_b on a piece: annihilates every generator there."""
    piece = strat.bases[rank][piece_index]
    n = derivations[0].space.n
    lams = [np.zeros(n)]
    lams[0][piece.points] = 1.0
    ders = [derivations[j]]
    for col, b in enumerate(piece.basis):
        lam = np.zeros(n)
        lam[piece.points] = -piece.coeffs[j][:, col]
        lams.append(lam)
        ders.append(derivations[b])
    return combine(lams, ders)


def _subset_order(K, n):
    """Generator subsets in doubling blocks, index order inside each block."""
    seen = set()
    block = n
    while True:
        b = min(block, K)
        for sub in combinations(range(b), n):
            if sub not in seen:
                seen.add(sub)
                yield sub
        if b == K:
            return
        block *= 2


def find_nonsingular_minor(table, domain=None, n=None, eps_floor=1e-3, derivation_rows=None):
    """First generator subset whose n x n minor is nonsingular somewhere on ``domain``.

    B(x) = [D_i g_j(x)] over ``derivation_rows`` (default: the first n
    derivations) and the subset.  Nonsingular means
    |det B(x)| >= eps_floor * prod of the row norms of B(x).  Returns the
    subset and the maximal set of such points; raises :class:`NotFound`.
    """
    V = _values(table)
    N, K, npts = V.shape
    if n is None:
        n = N if derivation_rows is None else len(derivation_rows)
    rows = list(range(n)) if derivation_rows is None else list(derivation_rows)
    if len(rows) != n or n > N:
        raise ValueError("need n derivation rows, n <= number of derivations")
    domain = np.arange(npts) if domain is None else np.flatnonzero(_as_mask_n(npts, domain))
    if n == 0 or len(domain) == 0:
        raise NotFound("nothing to search")
    Vd = V[rows][:, :, domain]
    for sub in _subset_order(K, n):
        B = np.moveaxis(Vd[:, list(sub), :], -1, 0)  # (m, n, n)
        det = np.abs(np.linalg.det(B))
        norms = np.prod(np.linalg.norm(B, axis=2), axis=1)
        ok = (det >= eps_floor * norms) & (norms > 0)
        if ok.any():
            return list(sub), domain[ok]
    raise NotFound("no generator subset gives a nonsingular minor")


def cofactor_inverse(B):
    """Batched inverse via adj(B) / det(B) for shape (m, n, n)."""
    m, n, _ = B.shape
    det = np.linalg.det(B)
    if n == 1:
        return np.ones_like(B) / det[:, None, None], det
    cof = np.empty_like(B)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(B, i, axis=1), j, axis=2)
            cof[:, i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return np.swapaxes(cof, 1, 2) / det[:, None, None], det


@dataclass
class DualBasisRecord:
    subset: list
    domain: np.ndarray
    B: np.ndarray  # (len(domain), n, n)
    A: np.ndarray
    eps_floor: float
    derivation_rows: list
    dual: list  # D'_1..D'_n, supported on the domain

    def identity_error(self):
        return float(np.abs(self.A @ self.B - np.eye(len(self.subset))).max())


def dual_basis(derivations, table, minor, eps_floor=1e-3, derivation_rows=None):
    """D' = A D with A = B^{-1} = adj(B)/det(B) on the minor's domain V.

    Afterwards D'_i g'_j = delta_ij on V.
    """
    subset, V_dom = minor
    V_dom = np.asarray(V_dom, dtype=np.int64)
    n = len(subset)
    rows = list(range(n)) if derivation_rows is None else list(derivation_rows)
    vals = _values(table)
    B = np.moveaxis(vals[rows][:, list(subset)][:, :, V_dom], -1, 0)
    det = np.abs(np.linalg.det(B))
    norms = np.prod(np.linalg.norm(B, axis=2), axis=1)
    bad = np.flatnonzero(det < eps_floor * norms)
    if len(bad):
        raise RankError(f"minor determinant below the floor at point {int(V_dom[bad[0]])}")
    A, _ = cofactor_inverse(B)
    space = derivations[0].space
    dual = []
    for i in range(n):
        lams = []
        for k in range(n):
            lam = np.zeros(space.n)
            lam[V_dom] = A[:, i, k]
            lams.append(lam)
        Dp = combine(lams, [derivations[r] for r in rows])
        dual.append(Dp)
    return DualBasisRecord(list(subset), V_dom, B, A, eps_floor, rows, dual)


def reconstruct(record, D, generators):
    """Coefficients D g'_j and the derivation sum_j (D g'_j) D'_j on the record's domain."""
    space = D.space
    mask = _as_mask(space, record.domain).astype(float)
    coefs = [D(generators[j]).values * mask for j in record.subset]
    return coefs, combine(coefs, record.dual)


def freeness_residual(record, D, generators, probes):
    """max |D f - sum_j (D g'_j) D'_j f| over the domain, relative to max |D f|."""
    _, R = reconstruct(record, D, generators)
    dom = np.asarray(record.domain)
    worst, scale = 0.0, 0.0
    for f in probes:
        a = D(f).values[dom]
        b = R(f).values[dom]
        worst = max(worst, float(np.abs(a - b).max(initial=0.0)))
        scale = max(scale, float(np.abs(a).max(initial=0.0)))
    return worst / scale if scale > 0 else worst
