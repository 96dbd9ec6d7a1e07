"""Exit criteria, each at its stated tolerance.

One PASS/FAIL line per criterion is printed in the terminal summary.
"""
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from metriccalc import derivation as dv, lipcalc as lc, mds, modalg as ma, space as sp
from conftest import record, smooth_corpus

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def g64():
    s = sp.grid(2, 64)
    ders = [dv.dq_derivation(s, "axis", dim=k) for k in range(2)]
    gens = [sp.coordinate(s, 0), sp.coordinate(s, 1)]
    return s, ders, gens


def _center(s):
    return int(np.argmin(np.sum((s.coords - 0.5) ** 2, axis=1)))


def test_c01_lipschitz_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    spaces = {"grid": sp.grid(2, 24), "cantor": sp.standard_cantor(7),
              "snowflake": sp.snowflake(sp.grid(1, 200), 0.5)}
    failures, nfields = [], 0
    for name, s in spaces.items():
        if s.dim == 2:
            corpus = smooth_corpus(s, rng)
        else:
            t = s.coords[:, 0]
            corpus = [sp.ScalarField(v, s) for v in
                      (t, t**2, np.sin(6 * t), np.abs(t - 0.37), np.sqrt(t), np.cos(3 * t) * t,
                       rng.normal(size=s.n))]
        nfields += len(corpus)
        lad = sp.ScaleLadder.default(s)
        ups = [lc.lip_field(s, f, "upper", lad).values for f in corpus]
        for f, up in zip(corpus, ups):
            prof = lc.lip_profile(s, f, lad)
            ok = ~np.isnan(prof.biglip_at)
            big = np.where(ok, prof.biglip_at, -np.inf)
            small = np.where(ok, prof.smllip_at, np.inf)
            if np.any(np.diff(big, axis=1) > 0):
                failures.append((name, "upper not monotone"))
            if np.any(np.diff(small, axis=1) < 0):
                failures.append((name, "lower not monotone"))
            if np.any(prof.smllip > prof.biglip):
                failures.append((name, "lower above upper"))
            if np.any(lc.glip(s, f) < up):
                failures.append((name, "glip below Lip"))
        for i in range(len(corpus)):
            f, g = corpus[i], corpus[(i + 1) % len(corpus)]
            a, b = rng.normal(size=2)
            lhs = lc.lip_field(s, a * f + b * g, "upper", lad).values
            rhs = abs(a) * ups[i] + abs(b) * ups[(i + 1) % len(corpus)]
            if np.any(lhs > rhs * (1 + 1e-12) + 1e-14):
                failures.append((name, "subadditivity"))
    dt = time.perf_counter() - t0
    ok = not failures and nfields >= 20 and dt < 10
    record(1, ok, f"{nfields} fields on 3 spaces, {len(failures)} failures, {dt:.1f}s (< 10s)")
    assert ok, failures[:5]


def test_c02_euclidean_recovery(g64):
    t0 = time.perf_counter()
    s, ders, gens = g64
    h = s.meta["spacing"]
    lad = sp.ScaleLadder.geometric(s.diameter / 4, 0.5, 2 * h)
    f = s.coords[:, 0] ** 2 + s.coords[:, 1] ** 2
    x0 = _center(s)
    up = lc.lip_field(s, f, "upper", lad).values[x0]
    chart = mds.make_chart(s, gens, [0, 1], derivations=ders)
    parts = {m: mds.partial_derivatives(s, f, chart, gens, m, ladder=lad).at(x0)
             for m in ("lsq", "dual")}
    dt = time.perf_counter() - t0
    ok = (abs(up / np.sqrt(2) - 1) <= 0.05
          and all(np.all(np.abs(p - 1.0) <= 0.05) for p in parts.values()) and dt < 30)
    record(2, ok, f"Lip={up:.4f} (sqrt2 +-5%), lsq={np.round(parts['lsq'], 4).tolist()}, "
                  f"dual={np.round(parts['dual'], 4).tolist()}, {dt:.1f}s (< 30s)")
    assert ok


def test_c03_leibniz_and_locality():
    s = sp.grid(2, 20)
    rng = np.random.default_rng(3)
    ders = [dv.dq_derivation(s, "axis", dim=0), dv.dq_derivation(s, "axis", dim=1),
            dv.dq_derivation(s, "knn", k=6, seed=1)]
    worst, bound_fail = 0.0, 0
    for k in range(100):
        D = ders[k % 3]
        f, g = rng.normal(size=(2, s.n))
        R, closed, ok = dv.leibniz_residual(D, f, g)
        worst = max(worst, float(np.abs(R.values - closed.values).max()))
        bound_fail += not ok
    loc_bad = 0
    for k in range(50):
        D = ders[k % 3]
        A = rng.random(s.n) < rng.uniform(0.2, 0.8)
        f = rng.normal(size=s.n)
        g = np.where(A, f, rng.normal(size=s.n))
        res, interior = dv.locality_residual(D, f, g, A)
        loc_bad += int(np.count_nonzero(res[interior]))
    ok = worst <= 1e-12 and bound_fail == 0 and loc_bad == 0
    record(3, ok, f"Leibniz closed-form gap {worst:.2e} (<= 1e-12), bound failures {bound_fail}, "
                  f"locality nonzeros on interiors {loc_bad}")
    assert ok


def test_c04_localized_inequality():
    rng = np.random.default_rng(4)
    violations, checks = 0, 0
    spaces = [sp.grid(2, 32), sp.standard_cantor(6), sp.snowflake(sp.grid(1, 80), 0.5)]
    for s in spaces:
        lad = sp.ScaleLadder.default(s)
        pf = lad.point_floor(s)
        suite = [dv.dq_derivation(s, "knn", k=k, seed=k, radius=lad.floor) for k in (1, 3, 6)]
        if s.meta.get("kind") == "grid":
            suite += [dv.dq_derivation(s, "axis", dim=d) for d in range(s.dim)]
            corpus = smooth_corpus(s, rng)
        else:
            t = s.coords[:, 0]
            corpus = [sp.ScalarField(v, s) for v in (t, t**2, np.sin(9 * t), rng.normal(size=s.n))]
        for D in suite:
            assert np.all(D.weight_mass <= 1 + 1e-12)
            assert np.all(D.reach_at <= np.nan_to_num(pf) * (1 + 1e-12))
            for f in corpus:
                L = lc.lip_field(s, f, "upper", lad).values
                df = np.abs(D(f).values)
                violations += int(np.count_nonzero(df > L * (1 + 1e-12) + 1e-15))
                checks += s.n
    ok = violations == 0
    record(4, ok, f"{violations} violations over {checks} point checks")
    assert ok


def _dual_case(rng, npts=100, n=3, cond=1e3):
    s = sp.grid(1, npts + n + 1)
    gens = [rng.normal(size=s.n) for _ in range(n)]
    G = np.stack(gens, axis=1)
    stencils = [dict() for _ in range(n)]
    targets = []
    for x in range(npts):
        Q1, _ = np.linalg.qr(rng.normal(size=(n, n)))
        Q2, _ = np.linalg.qr(rng.normal(size=(n, n)))
        sv = np.exp(rng.uniform(0, np.log(cond), n))
        sv[0], sv[-1] = 1.0, cond ** rng.uniform(0, 1)
        B = Q1 @ np.diag(sv) @ Q2
        ys = [x + k + 1 for k in range(n)]
        Gx = np.array([(G[y] - G[x]) / s.dist(x, y) for y in ys])
        W = B @ np.linalg.inv(Gx)
        for i in range(n):
            stencils[i][x] = [(y, float(W[i, k])) for k, y in enumerate(ys)]
        targets.append(B)
    ders = [dv.dq_derivation(s, "custom", normalize=False, stencil=st) for st in stencils]
    return s, ders, gens, np.arange(npts)


def test_c05_module_algebra():
    V = np.zeros((2, 2, 10))
    V[0, 0] = 1.0
    V[1, 0, :5] = 2.0
    V[1, 1, 5:] = 1.0
    strat = ma.stratify(table=V)
    strat_ok = strat.strata[1].tolist() == [0, 1, 2, 3, 4] and strat.strata[2].tolist() == [5, 6, 7, 8, 9]
    K = np.repeat(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])[:, :, None], 4, axis=2)
    a, b = ma.kernel_select(K).coeffs, ma.kernel_select(K.copy()).coeffs
    kern_ok = a.tobytes() == b.tobytes() and np.array_equal(a[0], [1.0, 1.0, -1.0])
    rng = np.random.default_rng(5)
    s, ders, gens, dom = _dual_case(rng)
    table = dv.component_table(ders, gens)
    rec = ma.dual_basis(ders, table, ([0, 1, 2], dom), eps_floor=1e-12)
    ab = rec.identity_error()
    dd = max(float(np.abs(D(gens[j]).values[dom] - (i == j)).max())
             for i, D in enumerate(rec.dual) for j in range(3))
    ok = strat_ok and kern_ok and ab <= 1e-8 and dd <= 1e-8
    record(5, ok, f"strata {strat.sizes()}, kernel {a[0].tolist()} deterministic={kern_ok}, "
                  f"max|AB-I|={ab:.1e}, max|D'g'-delta|={dd:.1e} (<= 1e-8, 100 points, cond <= 1e3)")
    assert ok


def test_c06_representation(g64):
    s, ders, gens, = g64
    h = s.meta["spacing"]
    chart = mds.make_chart(s, gens, [0, 1], derivations=ders)
    sq = max(mds.representation_residual(s, D, s.coords[:, 0] ** 2, chart, gens,
                                         radius=4 * h).max for D in ders)
    lin = 1.3 * s.coords[:, 0] - 0.4 * s.coords[:, 1] + 0.2
    li = max(mds.representation_residual(s, D, lin, chart, gens, radius=4 * h).max for D in ders)
    ok = sq <= 0.1 and li <= 1e-8
    record(6, ok, f"x^2 residual {sq:.4f} (<= 0.1, r=4h), linear residual {li:.1e} (<= 1e-8)")
    assert ok


def test_c07_reverse_inequality_and_dimension(g64):
    s, ders, gens = g64
    x, y = gens
    rng = np.random.default_rng(7)
    corpus = [x, y] + [rng.normal() * x + rng.normal() * y + rng.normal() for _ in range(10)]
    rep = mds.inequality_report(s, ders, corpus)
    lam_ok = rep.min_lambda >= 2**-0.5 - 0.05
    p1 = mds.dimension_probe(s, ders, [x, y, x + y])
    X = s.coords
    interior = np.flatnonzero(np.all((X > 0) & (X < 1), axis=1))
    generic = sp.ScalarField(np.clip(X[:, 0] * X[:, 1], 0.0, 0.9), s)
    p2 = mds.dimension_probe(s, ders, [x, y, generic], points=interior)
    ok = lam_ok and p1.fraction_dependent == 1.0 and p2.fraction_dependent >= 0.99
    record(7, ok, f"fitted lambda {rep.min_lambda:.4f} (>= {2**-0.5 - 0.05:.4f}), (x,y,x+y) "
                  f"dependent at {100 * p1.fraction_dependent:.1f}%, (x,y,clip(xy)) at "
                  f"{100 * p2.fraction_dependent:.2f}% of interior points (>= 99%)")
    assert ok


def test_c08_chart_choice(g64):
    s, ders, gens = g64
    lm = sp.grid_corners(s)[:3]
    dist_gens = sp.landmark_generators(s, lm)
    atlas = mds.build_atlas(s, dist_gens, ders)
    covered = float(np.mean(atlas.chart_index(s.n) >= 0))
    drawn = all(set(c.functions) <= {0, 1, 2} for c in atlas.charts)
    probes = [gens[0], gens[1], s.coords[:, 0] * s.coords[:, 1], np.sin(3 * s.coords[:, 1])]
    free = mds.atlas_freeness(s, atlas, ders, probes)
    ok = covered == 1.0 and atlas.dimension == 2 and drawn and free <= 1e-6
    record(8, ok, f"coverage {100 * covered:.0f}%, dimension {atlas.dimension}, "
                  f"{len(atlas.charts)} chart(s) from supplied generators={drawn}, "
                  f"freeness residual {free:.1e} (<= 1e-6)")
    assert ok


def test_c09_sobolev():
    s = sp.grid(2, 128)
    assert not s.has_matrix
    gens = [sp.coordinate(s, 0), sp.coordinate(s, 1)]
    atlas = mds.Atlas.single(s, gens)
    val = mds.sobolev_norm(s, gens[0], atlas, 2)
    want = 1 / np.sqrt(3) + 1
    ok = abs(val / want - 1) <= 0.02 and not s.has_matrix
    record(9, ok, f"sobolev {val:.5f} vs {want:.5f} (+-2%) at 128x128, no dense matrix")
    assert ok


def test_c10_cli_determinism(tmp_path):
    cfg = {"space": {"kind": "grid", "dim": 2, "side": 24},
           "fields": ["x", "y", "x*y", "sin(3*x) + y**2"],
           "derivations": [{"scheme": "axis", "dim": 0}, {"scheme": "axis", "dim": 1},
                           {"scheme": "knn", "k": 4}],
           "points": "interior"}
    cpath = tmp_path / "cfg.json"
    cpath.write_text(json.dumps(cfg))
    bad = []
    for sub in ("space", "lip", "derive", "stratify", "atlas", "check-ineq", "sobolev",
                "probe-dim"):
        outs = []
        for k in range(2):
            d = tmp_path / f"{sub}-{k}"
            r = subprocess.run([sys.executable, "-m", "metriccalc.cli", sub, "--config",
                                str(cpath), "--out", str(d), "--seed", "11"], capture_output=True)
            if r.returncode not in (0, 2):
                bad.append((sub, "exit", r.returncode))
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        if outs[0] != outs[1] or not outs[0]:
            bad.append((sub, "differs"))
    ok = not bad
    record(10, ok, f"8 subcommands run twice, {len(bad)} mismatches")
    assert ok, bad
