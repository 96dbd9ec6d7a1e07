"""Charts, partial derivatives, cotangent norms and Sobolev norms.

Chart functions are referenced by index into a generator list (the field
registry); every routine that needs their values takes that list.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import modalg
from .derivation import component_table
from .lipcalc import (_ladder, combination_lip, floor_neighbors, independence_test,
                      lip_fields)
from .space import _as_mask, as_values

LSQ_RIDGE = 1e-12


class ChartError(ValueError):
    pass


@dataclass
class Chart:
    domain: np.ndarray
    functions: list
    method: dict = field(default_factory=lambda: {"kind": "lsq"})
    record: object = None  # DualBasisRecord for dual-basis charts

    @property
    def dim(self):
        return len(self.functions)

    def to_dict(self):
        return {"domain": np.asarray(self.domain).tolist(), "functions": list(self.functions),
                "method": dict(self.method)}


@dataclass
class Atlas:
    charts: list
    generators: list
    leftover: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def dimension(self):
        return max((c.dim for c in self.charts), default=0)

    def chart_index(self, n):
        """Chart number per point, -1 where uncovered."""
        out = np.full(n, -1, dtype=np.int64)
        for a, c in enumerate(self.charts):
            out[c.domain] = a
        return out

    def to_dict(self):
        return {"charts": [c.to_dict() for c in self.charts], "dimension": self.dimension,
                "leftover": np.asarray(self.leftover).tolist()}

    @classmethod
    def single(cls, space, generators, functions=None):
        """One least-squares chart on the whole space."""
        functions = list(range(len(generators))) if functions is None else list(functions)
        return cls([Chart(np.arange(space.n), functions)], list(generators))


@dataclass
class PartialDerivativeTable:
    points: np.ndarray
    values: np.ndarray  # (len(points), N)
    residual: np.ndarray
    chart: Chart

    def at(self, x):
        k = np.searchsorted(self.points, x)
        if k >= len(self.points) or self.points[k] != x:
            raise ChartError(f"point {x} is outside the chart")
        return self.values[k]

    def rows(self):
        for k, x in enumerate(self.points.tolist()):
            for j in range(self.values.shape[1]):
                yield x, j, float(self.values[k, j]), float(self.residual[k])


@dataclass
class CotangentField:
    points: np.ndarray
    coeffs: np.ndarray  # (len(points), N) in the frame dx^1..dx^N
    chart: Chart


def chart_tolerance(floor, second_difference=0.0):
    """1e-3 + 2 * floor * (second-difference bound of the corpus)."""
    return 1e-3 + 2.0 * floor * second_difference


def make_chart(space, generators, functions, derivations=None, domain=None, eps_floor=1e-3,
               derivation_rows=None):
    """Chart on ``domain``; with ``derivations`` it also carries a dual-basis record."""
    functions = list(functions)
    domain = np.arange(space.n) if domain is None else np.flatnonzero(_as_mask(space, domain))
    if derivations is None:
        return Chart(domain, functions)
    table = component_table(derivations, [generators[j] for j in functions])
    rec = modalg.dual_basis(derivations, table, (list(range(len(functions))), domain),
                            eps_floor=eps_floor, derivation_rows=derivation_rows)
    rec.subset = functions
    return Chart(domain, functions, _dual_method(rec), rec)


def _dual_method(rec):
    return {"kind": "dual", "derivations": list(rec.derivation_rows),
            "eps_floor": rec.eps_floor}


def _chart_values(space, chart, generators):
    if not chart.functions:
        return np.zeros((space.n, 0))
    return np.stack([as_values(space, generators[j]) for j in chart.functions], axis=1)


def _lsq(space, fv, X, points, radius):
    n, N = X.shape
    nb = space.neighbors(radius)
    counts = np.diff(nb.indptr) + 1
    short = points[counts[points] < N + 1]
    if len(short):
        raise ChartError(f"ball of radius {radius} at point {int(short[0])} holds "
                         f"{int(counts[short[0]])} points, need {N + 1}")
    c = np.repeat(np.arange(n), np.diff(nb.indptr))
    w = space.weights[nb.indices]
    dX = X[nb.indices] - X[c]
    df = fv[nb.indices] - fv[c]
    G = np.empty((n, N, N))
    b = np.empty((n, N))
    for i in range(N):
        b[:, i] = np.bincount(c, weights=w * dX[:, i] * df, minlength=n)
        for j in range(i, N):
            G[:, i, j] = G[:, j, i] = np.bincount(c, weights=w * dX[:, i] * dX[:, j],
                                                  minlength=n)
    G, b = G[points], b[points]
    tr = np.trace(G, axis1=1, axis2=2) / N
    G = G + (LSQ_RIDGE * np.maximum(tr, 1e-300))[:, None, None] * np.eye(N)
    return np.linalg.solve(G, b[..., None])[..., 0]


def partial_derivatives(space, f, chart, generators, method="lsq", radius=None, ladder=None):
    """df/dx^j on the chart domain plus the residual Lip(f - sum c_j x^j)(x).

    ``lsq`` fits the weighted first-order model on B(x, radius) (default: twice
    the ladder floor); ``dual`` applies the chart's dual-basis derivations.
    """
    ladder = _ladder(space, ladder)
    fv = as_values(space, f)
    X = _chart_values(space, chart, generators)
    pts = np.asarray(chart.domain, dtype=np.int64)
    N = X.shape[1]
    if N == 0:
        vals = np.zeros((len(pts), 0))
    elif method == "lsq":
        r = 2.0 * ladder.floor if radius is None else float(radius)
        if r <= 0:
            raise ChartError("lsq radius must be positive")
        vals = _lsq(space, fv, X, pts, r)
    elif method == "dual":
        rec = chart.record
        if rec is None:
            raise ChartError("chart has no dual-basis record")
        missing = np.setdiff1d(pts, rec.domain)
        if len(missing):
            raise ChartError(f"point {int(missing[0])} is not covered by the dual basis")
        vals = np.stack([D(fv).values[pts] for D in rec.dual], axis=1)
    else:
        raise ChartError(f"unknown method {method!r}")
    coef = np.zeros((space.n, N + 1))
    coef[pts, 0] = 1.0
    coef[pts, 1:] = -vals
    fields = [fv] + [X[:, j] for j in range(N)]
    res = combination_lip(space, fields, coef, ladder)[pts]
    return PartialDerivativeTable(pts, vals, res, chart)


def differential(space, f, chart, generators, method="lsq", radius=None, ladder=None):
    t = partial_derivatives(space, f, chart, generators, method, radius, ladder)
    return CotangentField(t.points, t.values, chart)


def cot_norm(space, v, generators, x=None, ladder=None):
    """Lip(sum_j v_j x^j)(x): the fibrewise norm; whole field when ``x`` is None."""
    X = _chart_values(space, v.chart, generators)
    if X.shape[1] == 0:
        out = np.zeros(len(v.points))
    else:
        coef = np.zeros((space.n, X.shape[1]))
        coef[v.points] = v.coeffs
        out = combination_lip(space, [X[:, j] for j in range(X.shape[1])], coef, ladder)
        out = out[v.points]
    if x is None:
        return out
    k = np.searchsorted(v.points, x)
    if k >= len(v.points) or v.points[k] != x:
        raise ChartError(f"point {x} is outside the chart")
    return float(out[k])


def _covered(space, atlas):
    idx = atlas.chart_index(space.n)
    if np.any(idx < 0):
        raise ChartError(f"point {int(np.flatnonzero(idx < 0)[0])} is not covered by the atlas")


def df_norm_field(space, f, atlas, method="lsq", radius=None, ladder=None):
    """cot_norm(df, x) at every point of a covering atlas."""
    _covered(space, atlas)
    out = np.zeros(space.n)
    for chart in atlas.charts:
        v = differential(space, f, chart, atlas.generators, method, radius, ladder)
        out[v.points] = cot_norm(space, v, atlas.generators, ladder=ladder)
    return out


def sobolev_norm(space, f, atlas, p=2.0, method="lsq", radius=None, ladder=None):
    """(sum w |f|^p)^(1/p) + (sum w ||df||^p)^(1/p)."""
    if p < 1:
        raise ValueError("p must be at least 1")
    fv = as_values(space, f)
    g = df_norm_field(space, fv, atlas, method, radius, ladder)
    w = space.weights
    return float(np.sum(w * np.abs(fv) ** p) ** (1 / p) + np.sum(w * g**p) ** (1 / p))


@dataclass
class ResidualReport:
    points: np.ndarray
    values: np.ndarray
    max: float
    mean: float


def representation_residual(space, D, f, chart, generators, method="lsq", radius=None,
                            ladder=None):
    """Df - sum_j (df/dx^j) D x^j on the chart domain."""
    t = partial_derivatives(space, f, chart, generators, method, radius, ladder)
    pts = t.points
    rhs = np.zeros(len(pts))
    for j, gi in enumerate(chart.functions):
        rhs += t.values[:, j] * D(generators[gi]).values[pts]
    r = D(f).values[pts] - rhs
    w = space.weights[pts]
    mean = float(np.sum(w * np.abs(r)) / np.sum(w)) if len(pts) else 0.0
    return ResidualReport(pts, r, float(np.abs(r).max(initial=0.0)), mean)


@dataclass
class InequalityReport:
    norms: list
    upper_violations: list  # (derivation, field, point, |Df|, bound)
    reverse_violations: list  # (field, point, max_j |D_j f|, Lip f) at Lip f = 0 or below given lambda
    lam: np.ndarray  # fitted or given, nan where undefined
    min_lambda: float
    degenerate: bool
    scale_mismatch: list  # derivations whose reach exceeds the ladder floor somewhere

    def to_dict(self):
        return {
            "norms": self.norms,
            "upper_violations": [list(v) for v in self.upper_violations],
            "reverse_violations": [list(v) for v in self.reverse_violations],
            "min_lambda": None if np.isnan(self.min_lambda) else self.min_lambda,
            "degenerate": self.degenerate,
            "scale_mismatch": self.scale_mismatch,
            "lambda": [None if np.isnan(v) else float(v) for v in self.lam],
        }


def inequality_report(space, derivations, corpus, lam=None, ladder=None, atol=1e-12):
    """Localized check |D f| <= ||D|| Lip f and reverse check max_j |D_j f| >= lam Lip f.

    ``lam=None`` fits lam(x) as the corpus infimum of max_j |D_j f(x)| / Lip f(x).
    """
    if not corpus:
        raise ValueError("empty corpus")
    ladder = _ladder(space, ladder)
    lips = [l.values for l in lip_fields(space, corpus, "upper", ladder)]
    floor = np.nan_to_num(ladder.point_floor(space))
    norms = [float(D.weight_mass.max(initial=0.0)) for D in derivations]
    mismatch = [i for i, D in enumerate(derivations) if np.any(D.reach_at > floor * (1 + 1e-12))]
    upper, reverse = [], []
    ratio = np.full((len(corpus), space.n), np.nan)
    given = None if lam is None else as_values(space, lam)
    for k, f in enumerate(corpus):
        L = lips[k]
        scale = atol * max(1.0, float(np.abs(L).max(initial=0.0)))
        dmax = np.zeros(space.n)
        for i, D in enumerate(derivations):
            a = np.abs(D(f).values)
            dmax = np.maximum(dmax, a)
            for x in np.flatnonzero(a > norms[i] * L + scale):
                upper.append((i, k, int(x), float(a[x]), float(norms[i] * L[x])))
        live = L > scale
        ratio[k, live] = dmax[live] / L[live]
        for x in np.flatnonzero(~live & (dmax > scale)):
            reverse.append((k, int(x), float(dmax[x]), float(L[x])))
        if given is not None:
            for x in np.flatnonzero(live & (dmax < given * L - scale)):
                reverse.append((k, int(x), float(dmax[x]), float(L[x])))
    if given is not None:
        lam_out = given.copy()
    else:
        with np.errstate(all="ignore"):
            lam_out = np.where(np.all(np.isnan(ratio), axis=0), np.nan,
                               np.nanmin(np.where(np.isnan(ratio), np.inf, ratio), axis=0))
    degenerate = bool(np.all(np.isnan(ratio)))
    min_lam = float(np.nanmin(lam_out)) if not np.all(np.isnan(lam_out)) else float("nan")
    return InequalityReport(norms, upper, reverse, lam_out, min_lam, degenerate, mismatch)


class AtlasError(RuntimeError):
    pass


def build_atlas(space, generators, derivations, tau=modalg.DEFAULT_TAU, eps_floor=1e-3):
    """Cover the space by dual-basis charts whose functions come from ``generators``.

    Strata are processed from the highest rank down; inside each piece the
    first nonsingular minor is taken, its domain becomes a chart and the search
    repeats on what is left.  Rank-0 points form one 0-dimensional chart.
    """
    generators = list(generators)
    if not derivations or not generators:
        return Atlas([Chart(np.arange(space.n), [], {"kind": "zero"})], generators)
    table = component_table(derivations, generators)
    strat = modalg.stratify(table=table, tau=tau)
    charts = []
    for n in sorted(strat.bases, reverse=True):
        for piece in strat.bases[n]:
            left = piece.points
            while len(left):
                try:
                    subset, V = modalg.find_nonsingular_minor(
                        table, _mask(space.n, left), n, eps_floor, derivation_rows=piece.basis)
                except modalg.NotFound as exc:
                    raise AtlasError(
                        f"rank {n} at point {int(left[0])} but no nonsingular {n}x{n} minor "
                        f"above eps_floor={eps_floor}; tau and eps_floor are inconsistent") from exc
                rec = modalg.dual_basis(derivations, table, (subset, V), eps_floor,
                                        derivation_rows=piece.basis)
                charts.append(Chart(V, list(subset), _dual_method(rec), rec))
                left = np.setdiff1d(left, V)
    zero = strat.strata.get(0, np.zeros(0, dtype=np.int64))
    if len(zero):
        charts.append(Chart(zero, [], {"kind": "zero"}))
    return Atlas(charts, generators)


def _mask(n, pts):
    m = np.zeros(n, dtype=bool)
    m[pts] = True
    return m


def atlas_freeness(space, atlas, derivations, probes):
    """Largest relative freeness-witness residual over charts and derivations."""
    worst = 0.0
    for chart in atlas.charts:
        if chart.record is None:
            continue
        for D in derivations:
            worst = max(worst, modalg.freeness_residual(chart.record, D, atlas.generators, probes))
    return worst


def chart_independence(space, chart, generators, tau=None, ladder=None):
    """Fraction of the chart's points where its functions pass the independence test."""
    if not chart.functions:
        return 1.0
    fields = [generators[j] for j in chart.functions]
    ok = [independence_test(space, fields, int(x), tau=tau, ladder=ladder).independent
          for x in chart.domain]
    return float(np.mean(ok)) if ok else 1.0


@dataclass
class ProbeReport:
    points: np.ndarray
    dependent: np.ndarray  # bool per probed point
    min_values: np.ndarray
    fraction_dependent: float
    verdict: object  # "dependent", "independent" or None when declined
    witnesses: dict  # point -> kernel coefficients from the component table

    def to_dict(self):
        return {"points": self.points.tolist(), "dependent": self.dependent.tolist(),
                "min_values": self.min_values.tolist(),
                "fraction_dependent": self.fraction_dependent, "verdict": self.verdict,
                "witnesses": {str(k): v for k, v in self.witnesses.items()}}


def dimension_probe(space, derivations, candidates, tau=None, ladder=None, points=None,
                    rank_tau=modalg.DEFAULT_TAU):
    """Independence test of ``candidates`` at each point, with kernel witnesses.

    A verdict is only returned when there are more candidates than
    derivations; otherwise the failure fraction is reported and the verdict
    declined.
    """
    pts = np.arange(space.n) if points is None else np.flatnonzero(_as_mask(space, points))
    dep = np.zeros(len(pts), dtype=bool)
    mins = np.zeros(len(pts))
    for k, x in enumerate(pts):
        r = independence_test(space, candidates, int(x), tau=tau, ladder=ladder)
        dep[k] = not r.independent
        mins[k] = r.min_value
    frac = float(dep.mean()) if len(pts) else 0.0
    witnesses = {}
    if derivations:
        table = component_table(derivations, candidates)
        M = len(candidates)
        ranks = modalg.rank_field(table, rank_tau)
        wpts = pts[ranks[pts] == M - 1]
        if len(wpts):
            ks = modalg.kernel_select(table, _mask(space.n, wpts), rank_tau, axis="generators")
            witnesses = {int(x): ks.coeffs[i].tolist() for i, x in enumerate(ks.domain)}
    if len(candidates) <= len(derivations):
        verdict = None
    else:
        verdict = "dependent" if frac > 0 else "independent"
    return ProbeReport(pts, dep, mins, frac, verdict, witnesses)
