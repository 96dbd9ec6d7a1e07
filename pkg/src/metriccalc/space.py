"""Finite metric measure spaces, ball queries and example generators."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .kernels import BALL_RTOL

DENSE_LIMIT = 4096
EXHAUSTIVE_TRIANGLE_LIMIT = 512


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class Neighbors:
    """CSR neighbour lists, each row sorted by (distance, index), self excluded."""

    indptr: np.ndarray
    indices: np.ndarray
    dists: np.ndarray

    def row(self, x):
        lo, hi = self.indptr[x], self.indptr[x + 1]
        return self.indices[lo:hi], self.dists[lo:hi]

    @property
    def rows(self):
        return np.repeat(np.arange(len(self.indptr) - 1), np.diff(self.indptr))


class FiniteMetricMeasureSpace:
    """Finitely many points with a metric and strictly positive weights.

    The metric is either an explicit symmetric matrix or a coordinate array
    with the rule ``d(x, y) = |x - y|_2 ** alpha`` (alpha = 1 is Euclidean,
    0 < alpha < 1 a snowflake).  Spaces are immutable after construction.
    """

    def __init__(self, weights, *, dist=None, coords=None, alpha=1.0, labels=None,
                 meta=None, validate=True):
        w = np.array(weights, dtype=float)
        if w.ndim != 1 or len(w) == 0:
            raise SpaceError("weights must be a nonempty 1-D array")
        if (dist is None) == (coords is None):
            raise SpaceError("give exactly one of dist or coords")
        self.weights = w
        self.n = len(w)
        self.alpha = float(alpha)
        self.labels = list(labels) if labels is not None else None
        self.meta = dict(meta or {})
        self._dist = None
        self.coords = None
        if coords is not None:
            c = np.array(coords, dtype=float)
            if c.ndim == 1:
                c = c[:, None]
            if c.shape[0] != self.n:
                raise SpaceError("coords and weights disagree on the number of points")
            if not 0 < self.alpha <= 1:
                raise SpaceError(f"metric exponent must lie in (0, 1], got {alpha}")
            self.coords = np.ascontiguousarray(c)
        else:
            d = np.array(dist, dtype=float)
            if d.shape != (self.n, self.n):
                raise SpaceError("dist must be n x n")
            self._dist = np.ascontiguousarray(d)
        for arr in (self.weights, self.coords, self._dist):
            if arr is not None:
                arr.setflags(write=False)
        if self.labels is not None and len(self.labels) != self.n:
            raise SpaceError("labels and weights disagree on the number of points")
        if validate:
            self.validate()

    # -- construction checks -------------------------------------------------

    def validate(self, seed=0):
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
            bad = int(np.flatnonzero(~(self.weights > 0))[0])
            raise SpaceError(f"weight of point {bad} is not strictly positive")
        if self.coords is not None:
            if not np.all(np.isfinite(self.coords)):
                raise SpaceError("coordinates must be finite")
            if self.n > 1:
                d, _ = self.tree.query(self.coords, k=2)
                if np.any(d[:, 1] == 0):
                    raise SpaceError("two points share the same coordinates")
            return
        d = self._dist
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise SpaceError("distances must be finite and nonnegative")
        if np.any(np.diag(d) != 0):
            raise SpaceError("dist(i, i) must be 0")
        if not np.array_equal(d, d.T):
            raise SpaceError("distance matrix is not symmetric")
        off = d + np.eye(self.n)
        if np.any(off <= 0):
            i, j = np.argwhere(off <= 0)[0]
            raise SpaceError(f"distinct points {i}, {j} at distance 0")
        witness = triangle_violation(self, seed=seed)
        if witness is not None:
            raise SpaceError(f"triangle inequality fails on triple {witness}")

    # -- metric access -------------------------------------------------------

    @property
    def dim(self):
        return None if self.coords is None else self.coords.shape[1]

    @cached_property
    def tree(self):
        if self.coords is None:
            raise SpaceError("space has no coordinates")
        return cKDTree(self.coords)

    @property
    def has_matrix(self):
        return self._dist is not None

    def dist_matrix(self):
        """The full distance matrix (materialized lazily for coordinate spaces)."""
        if self._dist is None:
            if self.n > DENSE_LIMIT:
                raise SpaceError(f"refusing to materialize a {self.n}x{self.n} matrix")
            d = kernels.cross_dist(self.coords, self.coords, self.alpha)
            d.setflags(write=False)
            self._dist = d
        return self._dist

    def distances_from(self, x):
        self.check_point(x)
        if self._dist is not None:
            return self._dist[x]
        return kernels.cross_dist(self.coords[x:x + 1], self.coords, self.alpha)[0]

    def distance_block(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        if self._dist is not None:
            return self._dist[rows]
        return kernels.cross_dist(self.coords[rows], self.coords, self.alpha)

    def dist(self, x, y):
        return float(self.distances_from(x)[y])

    def check_point(self, x):
        if not (isinstance(x, (int, np.integer)) and 0 <= x < self.n):
            raise IndexError(f"invalid point index {x!r} for a space of {self.n} points")

    @cached_property
    def nn_dist(self):
        """Distance from every point to its nearest other point (inf if n == 1)."""
        if self.n == 1:
            return np.array([np.inf])
        if self.coords is not None:
            d, _ = self.tree.query(self.coords, k=2)
            out = d[:, 1] ** self.alpha if self.alpha != 1.0 else d[:, 1].copy()
        else:
            dd = self._dist + np.diag(np.full(self.n, np.inf))
            out = dd.min(axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def diameter(self):
        if self.n == 1:
            return 0.0
        if self.coords is not None:
            # extreme points of the convex hull suffice for Euclidean powers
            from scipy.spatial import ConvexHull

            pts = self.coords
            if pts.shape[1] >= 2 and self.n > pts.shape[1] + 1:
                try:
                    pts = pts[ConvexHull(pts).vertices]
                except Exception:  # degenerate hull, fall back to all points
                    pass
            elif pts.shape[1] == 1:
                pts = np.array([[pts.min()], [pts.max()]])
            best = 0.0
            for lo in range(0, len(pts), 512):
                best = max(best, float(kernels.cross_dist(pts[lo:lo + 512], pts, 1.0).max()))
            return best**self.alpha
        return float(self._dist.max())

    def _euclid_radius(self, r):
        return np.asarray(r, dtype=float) ** (1.0 / self.alpha)

    def neighbors(self, radius):
        """Neighbour lists within ``radius`` (scalar or one radius per point)."""
        radius = np.broadcast_to(np.asarray(radius, dtype=float), (self.n,))
        rmax = float(radius.max()) * (1.0 + BALL_RTOL)
        if self._dist is not None:
            mask = self._dist <= (radius * (1.0 + BALL_RTOL))[:, None]
            np.fill_diagonal(mask, False)
            rows, cols = np.nonzero(mask)
            dists = self._dist[rows, cols]
        else:
            pairs = self.tree.query_pairs(float(self._euclid_radius(rmax)) * (1 + 1e-9),
                                          output_type="ndarray")
            a = np.concatenate([pairs[:, 0], pairs[:, 1]]).astype(np.int64)
            b = np.concatenate([pairs[:, 1], pairs[:, 0]]).astype(np.int64)
            diff = self.coords[a] - self.coords[b]
            dists = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            if self.alpha != 1.0:
                dists = dists**self.alpha
            keep = dists <= radius[a] * (1.0 + BALL_RTOL)
            rows, cols, dists = a[keep], b[keep], dists[keep]
        order = np.lexsort((cols, dists, rows))
        rows, cols, dists = rows[order], cols[order], dists[order]
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=self.n), out=indptr[1:])
        return Neighbors(indptr, np.ascontiguousarray(cols, dtype=np.int64),
                         np.ascontiguousarray(dists, dtype=float))

    def __repr__(self):
        kind = "matrix" if self.coords is None else f"coords(dim={self.dim}, alpha={self.alpha})"
        return f"FiniteMetricMeasureSpace(n={self.n}, {kind})"


def triangle_violation(space, seed=0, rtol=1e-12):
    """First triple (i, j, k) with d(i, k) > d(i, j) + d(j, k), or None.

    Exhaustive for n <= 512, otherwise 10 n sampled triples.
    """
    n = space.n
    if n < 3:
        return None
    if n <= EXHAUSTIVE_TRIANGLE_LIMIT:
        d = space.dist_matrix()
        for j in range(n):
            via = d[:, j][:, None] + d[j][None, :]
            bad = d > via * (1 + rtol) + 1e-300
            if bad.any():
                i, k = np.argwhere(bad)[0]
                return int(i), j, int(k)
        return None
    rng = np.random.default_rng(seed)
    tri = rng.integers(0, n, size=(10 * n, 3))
    for i, j, k in tri:
        dij, djk = space.dist(int(i), int(j)), space.dist(int(j), int(k))
        if space.dist(int(i), int(k)) > (dij + djk) * (1 + rtol):
            return int(i), int(j), int(k)
    return None


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One finite real value per point of ``space``."""

    values: np.ndarray
    space: FiniteMetricMeasureSpace = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.space.n,):
            raise ValueError(f"field has shape {v.shape}, space has {self.space.n} points")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.space is not self.space:
                raise ValueError("fields live on different spaces")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.values + self._other(other), self.space)

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.values - self._other(other), self.space)

    def __rsub__(self, other):
        return ScalarField(self._other(other) - self.values, self.space)

    def __mul__(self, other):
        return ScalarField(self.values * self._other(other), self.space)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(-self.values, self.space)

    def __getitem__(self, idx):
        return self.values[idx]

    def __len__(self):
        return self.space.n


def constant(space, c):
    return ScalarField(np.full(space.n, float(c)), space)


def coordinate(space, axis=0):
    if space.coords is None:
        raise SpaceError("space has no coordinates")
    return ScalarField(space.coords[:, axis], space)


def as_values(space, f):
    """Values of ``f`` (a ScalarField or array-like) checked against ``space``."""
    if isinstance(f, ScalarField):
        if f.space is not space:
            raise ValueError("field lives on a different space")
        return f.values
    v = np.asarray(f, dtype=float)
    if v.shape != (space.n,):
        raise ValueError(f"field has shape {v.shape}, space has {space.n} points")
    return v


@dataclass(frozen=True)
class ScaleLadder:
    """Strictly decreasing radii r_0 > r_1 > ... > r_K > 0."""

    radii: tuple

    def __post_init__(self):
        r = tuple(float(x) for x in self.radii)
        if len(r) < 1:
            raise ValueError("ladder needs at least one radius")
        if r[-1] <= 0 or any(a <= b for a, b in zip(r, r[1:])):
            raise ValueError(f"ladder radii must be positive and strictly decreasing: {r}")
        object.__setattr__(self, "radii", r)

    @property
    def top(self):
        return self.radii[0]

    @property
    def floor(self):
        return self.radii[-1]

    def __len__(self):
        return len(self.radii)

    @classmethod
    def geometric(cls, r0, ratio=0.5, floor=None):
        """r0, r0*ratio, ... down to ``floor``; the floor itself is always the last rung."""
        if not 0 < ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        r0 = float(r0)
        if floor is None or floor >= r0 * (1 - 1e-9):
            return cls((r0,))
        radii = [r0]
        while radii[-1] * ratio > floor * (1 + 1e-9):
            radii.append(radii[-1] * ratio)
        radii.append(float(floor))
        return cls(tuple(radii))

    @classmethod
    def parse(cls, text):
        """Parse ``"r0:ratio:floor"``."""
        try:
            r0, ratio, floor = (float(t) for t in text.split(":"))
        except ValueError as exc:
            raise ValueError(f"ladder spec must be r0:ratio:floor, got {text!r}") from exc
        return cls.geometric(r0, ratio, floor)

    @classmethod
    def default(cls, space):
        """Halving ladder from diameter/4 down to the median nearest-neighbour distance."""
        if space.n == 1:
            return cls((1.0,))
        floor = float(np.median(space.nn_dist))
        r0 = max(space.diameter / 4.0, floor)
        return cls.geometric(r0, 0.5, floor)

    def floor_index(self, space):
        """Index of the smallest admissible radius per point, -1 where none is.

        A radius is admissible at x when B(x, r) contains a point other than x.
        """
        lim = np.asarray(self.radii) * (1.0 + BALL_RTOL)
        count = np.searchsorted(-lim, -space.nn_dist, side="right")
        return count - 1

    def point_floor(self, space):
        """Per-point floor radius (nan for points isolated at this resolution)."""
        idx = self.floor_index(space)
        out = np.full(space.n, np.nan)
        ok = idx >= 0
        out[ok] = np.asarray(self.radii)[idx[ok]]
        return out

    def spec(self):
        return {"radii": list(self.radii)}


# -- operations ---------------------------------------------------------------

def ball(space, x, r):
    """Indices of the closed ball {y : d(x, y) <= r}, sorted."""
    space.check_point(x)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if space.coords is not None:
        idx = np.array(space.tree.query_ball_point(space.coords[x],
                                                   float(space._euclid_radius(r)) * (1 + 1e-9)),
                       dtype=np.int64)
        d = space.distance_block([x])[0][idx] if len(idx) else np.empty(0)
        idx = np.sort(idx[d <= r * (1.0 + BALL_RTOL)])
        if x not in idx:
            idx = np.sort(np.append(idx, x))
        return idx
    return np.flatnonzero(space.distances_from(x) <= r * (1.0 + BALL_RTOL))


def ball_average(space, g, x, r):
    b = ball(space, x, r)
    v = as_values(space, g)
    w = space.weights[b]
    return float(np.dot(w, v[b]) / w.sum())


def _as_mask(space, A):
    A = np.asarray(A)
    if A.dtype == bool:
        if A.shape != (space.n,):
            raise ValueError("boolean set mask has the wrong length")
        return A
    mask = np.zeros(space.n, dtype=bool)
    if A.size:
        if A.min() < 0 or A.max() >= space.n:
            raise IndexError("point set references an invalid index")
        mask[A.astype(np.int64)] = True
    return mask


def density_ratio(space, A, x, r):
    """mu(B(x, r) & A) / mu(B(x, r))."""
    mask = _as_mask(space, A)
    b = ball(space, x, r)
    w = space.weights[b]
    return float(w[mask[b]].sum() / w.sum())


def local_density_check(space, A, x, eps, r):
    """Every y in B(x, r) lies within eps*r of A & B(x, (1+eps) r)."""
    if eps <= 0 or r <= 0:
        raise ValueError("eps and r must be positive")
    mask = _as_mask(space, A)
    big = ball(space, x, (1 + eps) * r)
    targets = big[mask[big]]
    if len(targets) == 0:
        return False
    small = ball(space, x, r)
    d = space.distance_block(small)[:, targets]
    return bool(np.all(d.min(axis=1) <= eps * r * (1.0 + BALL_RTOL)))


KAPPA_GRID = np.round(np.arange(1, 61) * 0.1, 10)


@dataclass(frozen=True)
class DoublingProfile:
    C: float
    kappa: float
    degenerate: bool = False
    pairs: int = 0
    slope: float = float("nan")


def _ball_mass(space, x, r):
    return float(space.weights[ball(space, x, r)].sum())


def doubling_profile(space, sample_count=200, seed=0):
    """Fit mu(B(w,s)) / mu(B(x,r)) >= (1/C) (s/r)^kappa on sampled nested balls.

    Nested pairs are B(w, s) inside B(x, r) with w in B(x, r) and
    s <= r - d(x, w); radii are log-uniform between the median
    nearest-neighbour distance and diameter/4.  kappa is the least-squares
    slope of log mass ratio against log(s/r), snapped to the grid
    {0.1, ..., 6.0}; C is the smallest constant >= 1 for which every sampled
    pair satisfies the inequality at that kappa.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    if space.n == 1:
        warnings.warn("doubling profile of a one-point space is degenerate", stacklevel=2)
        return DoublingProfile(1.0, 0.0, degenerate=True)
    rng = np.random.default_rng(seed)
    lo = float(np.median(space.nn_dist))
    hi = max(float(space.diameter) / 4.0, lo)
    log_s_over_r, log_ratio = [], []
    attempts = 0
    while len(log_ratio) < sample_count and attempts < 50 * sample_count:
        attempts += 1
        x = int(rng.integers(space.n))
        r = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        b = ball(space, x, r)
        w = int(b[rng.integers(len(b))])
        room = r - space.dist(x, w)
        if room < lo:
            continue
        s = float(np.exp(rng.uniform(np.log(lo), np.log(room))))
        ratio = _ball_mass(space, w, s) / _ball_mass(space, x, r)
        log_s_over_r.append(np.log(s / r))
        log_ratio.append(np.log(ratio))
    a = np.array(log_s_over_r)
    b = np.array(log_ratio)
    if len(a) < 2 or np.ptp(a) == 0:
        warnings.warn("too few nested ball pairs to fit a doubling profile", stacklevel=2)
        return DoublingProfile(1.0, 0.0, degenerate=True, pairs=len(a))
    slope = np.polyfit(a, b, 1)[0]
    kappa = float(KAPPA_GRID[np.argmin(np.abs(KAPPA_GRID - slope))])
    C = float(np.exp(max(0.0, float((kappa * a - b).max()))))
    return DoublingProfile(C, kappa, pairs=len(b), slope=float(slope))


# -- generators -----------------------------------------------------------------

def grid(dim, side, extent=1.0):
    """Uniform grid with ``side`` points per axis on [0, extent]^dim."""
    if dim < 1 or side < 1:
        raise ValueError("grid needs dim >= 1 and side >= 1")
    axis = np.linspace(0.0, extent, side)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    n = side**dim
    weights = np.full(n, extent**dim / n)
    spacing = extent / (side - 1) if side > 1 else extent
    meta = {"kind": "grid", "dim": dim, "side": side, "extent": extent, "spacing": spacing}
    return FiniteMetricMeasureSpace(weights, coords=coords, meta=meta, validate=False)


def cantor_intervals(depth, gap):
    """Left endpoints and common length of the level-``depth`` intervals.

    ``gap(k, length)`` gives the length removed from the middle of each
    level-(k-1) interval of the given length.
    """
    lefts = np.array([0.0])
    length = 1.0
    for k in range(1, depth + 1):
        g = gap(k, length)
        if not 0 < g < length:
            raise ValueError(f"gap {g} does not fit an interval of length {length}")
        child = (length - g) / 2.0
        lefts = np.concatenate([[a, a + child + g] for a in lefts])
        length = child
    return lefts, length


def standard_cantor(depth):
    if depth < 1:
        raise ValueError("depth must be >= 1")
    lefts, _ = cantor_intervals(depth, lambda k, length: length / 3.0)
    weights = np.full(len(lefts), 2.0**-depth)
    meta = {"kind": "standard_cantor", "depth": depth}
    return FiniteMetricMeasureSpace(weights, coords=lefts, meta=meta, validate=False)


def fat_cantor(depth, gap_ratio=0.25):
    """Smith-Volterra-Cantor construction: level k removes gap_ratio**k from each interval."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if not 0 < gap_ratio < 0.5:
        raise ValueError("gap_ratio must lie in (0, 1/2)")
    lefts, length = cantor_intervals(depth, lambda k, _: gap_ratio**k)
    weights = np.full(len(lefts), length)
    meta = {"kind": "fat_cantor", "depth": depth, "gap_ratio": gap_ratio}
    return FiniteMetricMeasureSpace(weights, coords=lefts, meta=meta, validate=False)


def fat_cantor_mask(coords, depth, gap_ratio=0.25):
    """Which of the 1-D ``coords`` lie in the level-``depth`` fat Cantor set."""
    lefts, length = cantor_intervals(depth, lambda k, _: gap_ratio**k)
    c = np.asarray(coords, dtype=float).ravel()
    pos = np.searchsorted(lefts, c, side="right") - 1
    ok = pos >= 0
    inside = np.zeros(len(c), dtype=bool)
    inside[ok] = c[ok] <= lefts[pos[ok]] + length * (1 + 1e-12)
    return inside


def snowflake(base, alpha):
    """Same points and weights, metric d ** alpha."""
    if not 0 < alpha < 1:
        raise ValueError("snowflake exponent must lie in (0, 1)")
    meta = dict(base.meta, snowflake=alpha)
    if base.coords is not None:
        return FiniteMetricMeasureSpace(base.weights, coords=base.coords, alpha=base.alpha * alpha,
                                        labels=base.labels, meta=meta, validate=False)
    return FiniteMetricMeasureSpace(base.weights, dist=base.dist_matrix() ** alpha,
                                    labels=base.labels, meta=meta)


def two_point(d=1.0, weights=(1.0, 1.0)):
    return FiniteMetricMeasureSpace(weights, dist=[[0.0, d], [d, 0.0]])


def make_space(kind, **params):
    """Build a space by generator name; see the individual generators."""
    if kind == "grid":
        return grid(params["dim"], params["side"], params.get("extent", 1.0))
    if kind == "standard_cantor":
        return standard_cantor(params["depth"])
    if kind == "fat_cantor":
        return fat_cantor(params["depth"], params.get("gap_ratio", 0.25))
    if kind == "snowflake":
        base = params["base"]
        if isinstance(base, dict):
            base = make_space(**base)
        return snowflake(base, params["alpha"])
    if kind == "two_point":
        return two_point(params.get("d", 1.0))
    if kind == "from_file":
        return load_space(params["path"])
    raise SpaceError(f"unknown space kind {kind!r}")


def load_space(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpaceError(f"cannot read space file {path}: {exc}") from exc
    return space_from_dict(data)


def space_from_dict(data):
    if not isinstance(data, dict):
        raise SpaceError("space file must hold a JSON object")
    metric = data.get("metric", "matrix" if "dist" in data else "euclidean")
    labels = data.get("labels")
    if "points" in data:
        pts = np.array(data["points"], dtype=float)
        n = len(pts)
        weights = data.get("weights", [1.0 / n] * n)
        if metric == "euclidean":
            alpha = 1.0
        elif isinstance(metric, dict) and "snowflake" in metric:
            alpha = float(metric["snowflake"])
            if not 0 < alpha < 1:
                raise SpaceError("snowflake exponent must lie in (0, 1)")
        else:
            raise SpaceError(f"unsupported metric {metric!r} for coordinate points")
        return FiniteMetricMeasureSpace(weights, coords=pts, alpha=alpha, labels=labels,
                                        meta=data.get("meta"))
    if "dist" in data:
        d = np.array(data["dist"], dtype=float)
        weights = data.get("weights", [1.0 / len(d)] * len(d))
        if isinstance(metric, dict) and "snowflake" in metric:
            alpha = float(metric["snowflake"])
            if not 0 < alpha < 1:
                raise SpaceError("snowflake exponent must lie in (0, 1)")
            d = d**alpha
        elif metric != "matrix":
            raise SpaceError(f"unsupported metric {metric!r} for a distance matrix")
        return FiniteMetricMeasureSpace(weights, dist=d, labels=labels, meta=data.get("meta"))
    raise SpaceError("space file needs 'points' or 'dist'")


def space_to_dict(space):
    out = {}
    if space.coords is not None:
        out["points"] = space.coords.tolist()
        out["metric"] = "euclidean" if space.alpha == 1.0 else {"snowflake": space.alpha}
    else:
        out["dist"] = space.dist_matrix().tolist()
        out["metric"] = "matrix"
    out["weights"] = space.weights.tolist()
    if space.labels is not None:
        out["labels"] = list(space.labels)
    return out


def landmark_generators(space, landmarks):
    """Distance fields y -> d(p, y), one per landmark p."""
    landmarks = [int(p) for p in np.atleast_1d(landmarks)]
    if not landmarks:
        raise ValueError("landmark set is empty")
    return [ScalarField(space.distances_from(p), space) for p in landmarks]


def grid_corners(space):
    """Indices of the grid corners in lexicographic order (grid spaces only)."""
    if space.meta.get("kind") != "grid":
        raise SpaceError("corners are defined for grid spaces only")
    side, dim = space.meta["side"], space.meta["dim"]
    out = []
    for bits in np.ndindex(*([2] * dim)):
        idx = 0
        for b in bits:
            idx = idx * side + (side - 1) * b
        out.append(idx)
    return out


def grid_index(space, *pos):
    """Flat index of the grid point with integer position ``pos``."""
    side = space.meta["side"]
    idx = 0
    for p in pos:
        idx = idx * side + int(p)
    return idx
