import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metriccalc import lipcalc as lc, space as sp
from conftest import smooth_corpus


def test_varlip_examples(line65):
    two = sp.two_point()
    f = [0.0, 1.0]
    assert lc.varlip(two, f, 0, 1.0) == 1.0
    assert lc.varlip(two, f, 0, 0.5) == 0.0
    assert lc.varlip(line65, sp.constant(line65, 2.0), 10, 0.1) == 0.0
    h = line65.meta["spacing"]
    assert lc.varlip(line65, sp.coordinate(line65), 32, 2 * h) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        lc.varlip(two, f, 0, 0.0)


def test_local_lipschitz_two_point():
    two = sp.two_point()
    f = [0.0, 1.0]
    for lad in (sp.ScaleLadder((1.0,)), sp.ScaleLadder((1.0, 0.5))):
        assert lc.local_lipschitz(two, f, 0, 1.0, "upper", lad) == 1.0
        assert lc.local_lipschitz(two, f, 0, 1.0, "lower", lad) == 1.0
    with pytest.raises(lc.LipschitzError, match="floor"):
        lc.local_lipschitz(two, f, 0, 0.5, "upper", sp.ScaleLadder((1.0, 0.5)))


def test_upper_square_near_half(sq64):
    h = sq64.meta["spacing"]
    f = sq64.coords[:, 0] ** 2
    lad = sp.ScaleLadder.geometric(0.2, 0.5, 2 * h)
    x = sp.grid_index(sq64, 32, 20)
    val = lc.local_lipschitz(sq64, f, x, lad.floor, "upper", lad)
    assert abs(val - 1.0) < 0.05


def test_lip_field_examples(line65):
    assert np.all(lc.lip_field(line65, sp.constant(line65, 4.0)).values == 0)
    up = lc.lip_field(line65, sp.coordinate(line65)).values
    assert np.allclose(up, 1.0, rtol=1e-12)


def test_lip_field_matches_pointwise(sq16):
    f = np.sin(3 * sq16.coords[:, 0]) * sq16.coords[:, 1]
    lad = sp.ScaleLadder.default(sq16)
    up = lc.lip_field(sq16, f, "upper", lad).values
    lo = lc.lip_field(sq16, f, "lower", lad).values
    for x in (0, 7, 100, 255):
        fl = lad.point_floor(sq16)[x]
        assert up[x] == pytest.approx(lc.local_lipschitz(sq16, f, x, fl, "upper", lad))
        assert lo[x] == pytest.approx(lc.local_lipschitz(sq16, f, x, fl, "lower", lad))


def test_isolated_points_report_zero():
    s = sp.FiniteMetricMeasureSpace([1, 1, 1], coords=[[0.0], [0.01], [5.0]])
    lad = sp.ScaleLadder((0.5, 0.1))
    prof = lc.lip_profile(s, [0.0, 1.0, 7.0], lad)
    assert prof.isolated.tolist() == [False, False, True]
    assert prof.biglip[2] == 0.0


def test_glip_examples(sq16):
    two = sp.two_point()
    assert lc.glip(two, [0.0, 1.0]) == 1.0
    assert lc.lip_norm(two, [0.0, 1.0]) == 1.0
    assert lc.glip(sq16, sp.constant(sq16, -2.0)) == 0.0
    assert lc.lip_norm(sq16, sp.constant(sq16, -2.0)) == 2.0
    g = 3 * sp.landmark_generators(sq16, [17])[0]
    assert lc.glip(sq16, g) == pytest.approx(3.0, rel=1e-12)


def test_glip_brute_force(cantor):
    rng = np.random.default_rng(1)
    f = rng.normal(size=cantor.n)
    D = cantor.dist_matrix()
    off = ~np.eye(cantor.n, dtype=bool)
    want = (np.abs(f[:, None] - f[None, :])[off] / D[off]).max()
    assert lc.glip(cantor, f) == pytest.approx(want, rel=1e-12)


def test_mcshane_examples(line65):
    line = sp.grid(1, 3)
    g = lc.mcshane_extend(line, [0, 2], [0.0, 1.0], 1.0)
    assert g.values.tolist() == [0.0, 0.5, 1.0]
    f = np.sin(line65.coords[:, 0])
    g = lc.mcshane_extend(line65, np.arange(line65.n), f, 1.0)
    assert np.array_equal(g.values, f)
    with pytest.raises(lc.LipschitzError, match="points 0 and 2"):
        lc.mcshane_extend(line, [0, 2], [0.0, 5.0], 1.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), frac=st.floats(0.05, 0.9))
def test_mcshane_random(sq16, seed, frac):
    rng = np.random.default_rng(seed)
    A = np.flatnonzero(rng.random(sq16.n) < frac)
    if len(A) == 0:
        A = np.array([0])
    p = rng.integers(sq16.n, size=3)
    data = sum(rng.uniform(-1, 1) * sq16.distances_from(int(q)) for q in p) / 3
    L = lc.glip(sq16, data)
    g = lc.mcshane_extend(sq16, A, data[A], L)
    assert np.array_equal(g.values[A], data[A])
    assert lc.glip(sq16, g) <= L * (1 + 1e-12)
    again = lc.mcshane_extend(sq16, np.arange(sq16.n), g.values, L)
    assert np.array_equal(again.values, g.values)
    twice = lc.mcshane_extend(sq16, A, g.values[A], L)
    assert np.array_equal(twice.values, g.values)


def test_independence_seminorm_examples(sq16):
    x, y = sp.coordinate(sq16, 0), sp.coordinate(sq16, 1)
    p = 100
    assert lc.independence_seminorm(sq16, [x, y], [0, 0], p) == 0.0
    f = x * y
    one = lc.independence_seminorm(sq16, [f], [1.0], p)
    assert lc.independence_seminorm(sq16, [f], [2.0], p) == pytest.approx(2 * one)
    assert lc.independence_seminorm(sq16, [x, y, x + y], [1, 1, -1], p) == pytest.approx(0, abs=1e-12)
    with pytest.raises(ValueError):
        lc.independence_seminorm(sq16, [x, y], [1.0], p)


def test_independence_test_examples(sq16):
    x, y = sp.coordinate(sq16, 0), sp.coordinate(sq16, 1)
    p = sp.grid_index(sq16, 7, 8)
    h = sq16.meta["spacing"]
    # the floor ball at 2h sees eight directions, so Phi is close to Euclidean
    lad = sp.ScaleLadder.geometric(0.25, 0.5, 2 * h)
    r = lc.independence_test(sq16, [x, y], p, tau=0.1, ladder=lad)
    assert r.independent and r.min_value == pytest.approx(1.0, abs=0.1)
    # at floor h only the four axis neighbours are seen: Phi is the sup norm
    r = lc.independence_test(sq16, [x, y], p, tau=0.1)
    assert r.independent and r.min_value == pytest.approx(2**-0.5, rel=1e-4)
    r = lc.independence_test(sq16, [x, 2 * x], p)
    assert not r.independent and r.min_value < 1e-12
    assert np.allclose(r.argmin, np.array([2, -1]) / np.sqrt(5), atol=1e-6)
    r = lc.independence_test(sq16, [x, y, x + y], p)
    assert not r.independent
    assert np.allclose(r.argmin, np.array([1, 1, -1]) / np.sqrt(3), atol=1e-6)
    with pytest.raises(ValueError):
        lc.independence_test(sq16, [x, y], p, sphere_samples=3)


def test_independence_scale_invariance(sq16):
    x, y = sp.coordinate(sq16, 0), sp.coordinate(sq16, 1)
    p = 90
    for fields in ([x, y], [x, x * y], [x, 2 * x]):
        base = lc.independence_test(sq16, fields, p, tau=0.05)
        c = [3.0, -0.25]
        scaled = [ci * f for ci, f in zip(c, fields)]
        r = lc.independence_test(sq16, scaled, p, tau=0.05 * min(abs(v) for v in c))
        assert r.independent == base.independent


def test_sphere_points_unit_and_deterministic():
    for m in (1, 2, 3, 5):
        a = lc.sphere_points(m, 64)
        assert np.allclose(np.linalg.norm(a, axis=1), 1.0)
        assert np.array_equal(a, lc.sphere_points(m, 64))


@pytest.mark.parametrize("which", ["sq16", "cantor", "flake"])
def test_lipschitz_invariants(request, which):
    s = request.getfixturevalue(which)
    rng = np.random.default_rng(5)
    if s.coords is not None and s.dim == 2:
        corpus = smooth_corpus(s, rng)
    else:
        t = s.coords[:, 0]
        corpus = [sp.ScalarField(v, s) for v in (t, t**2, np.sin(5 * t), np.abs(t - 0.4),
                                                  rng.normal(size=s.n))]
    lad = sp.ScaleLadder.default(s)
    for f in corpus:
        prof = lc.lip_profile(s, f, lad)
        big, small = prof.biglip_at, prof.smllip_at
        ok = ~np.isnan(big)
        d_big = np.diff(np.where(ok, big, -np.inf), axis=1)
        assert np.all((d_big <= 0) | np.isnan(d_big))
        d_small = np.diff(np.where(ok, small, np.inf), axis=1)
        assert np.all((d_small >= 0) | np.isnan(d_small))
        assert np.all(prof.smllip <= prof.biglip)
        assert np.all(prof.varlip_at[ok] <= big[ok])
        assert np.all(prof.varlip_at[ok] >= small[ok])
        assert np.all(lc.glip(s, f) >= prof.biglip)
    for f, g in zip(corpus, corpus[1:]):
        a, b = rng.normal(size=2)
        lhs = lc.lip_field(s, a * f + b * g, ladder=lad).values
        rhs = abs(a) * lc.lip_field(s, f, ladder=lad).values + abs(b) * lc.lip_field(s, g, ladder=lad).values
        assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-12)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_subadditivity_property(sq16, a, b, seed):
    rng = np.random.default_rng(seed)
    f, g = rng.normal(size=(2, sq16.n))
    lhs = lc.lip_field(sq16, a * f + b * g).values
    rhs = abs(a) * lc.lip_field(sq16, f).values + abs(b) * lc.lip_field(sq16, g).values
    assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-12)


def test_combination_lip_matches_seminorm(sq16):
    x, y = sp.coordinate(sq16, 0), sp.coordinate(sq16, 1)
    f = x * y
    rng = np.random.default_rng(2)
    C = rng.normal(size=(sq16.n, 3))
    vals = lc.combination_lip(sq16, [x, y, f], C)
    for p in (0, 31, 200):
        assert vals[p] == pytest.approx(lc.independence_seminorm(sq16, [x, y, f], C[p], p))
