import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metriccalc import space as sp


def test_ball_two_point():
    s = sp.two_point(1.0)
    assert sp.ball(s, 0, 1.0).tolist() == [0, 1]
    assert sp.ball(s, 0, 0.5).tolist() == [0]


def test_ball_grid_center(sq16):
    s = sp.grid(2, 8)
    h = s.meta["spacing"]
    c = sp.grid_index(s, 3, 4)
    assert len(sp.ball(s, c, 1.5 * h)) == 9


def test_ball_invalid_index():
    with pytest.raises(IndexError):
        sp.ball(sp.two_point(), 5, 1.0)


def test_ball_matches_dense_enumeration(sq16):
    D = sq16.dist_matrix()
    for x in (0, 17, 100, 255):
        for r in (0.0, 0.05, 0.1, 0.3):
            want = np.flatnonzero(D[x] <= r * (1 + 1e-12))
            assert sp.ball(sq16, x, r).tolist() == want.tolist()


def test_ball_average_examples(sq16):
    s = sp.two_point(1.0)
    assert sp.ball_average(s, [0.0, 2.0], 0, 1.0) == 1.0
    assert sp.ball_average(sq16, sp.constant(sq16, 3.5), 40, 0.2) == pytest.approx(3.5)


def test_ball_average_nonuniform_weights():
    base = sp.grid(2, 10)
    rng = np.random.default_rng(3)
    w = rng.uniform(0.1, 2.0, base.n)
    s = sp.FiniteMetricMeasureSpace(w, coords=base.coords)
    g = rng.normal(size=s.n)
    D = s.dist_matrix()
    for x in (0, 33, 77):
        b = D[x] <= 0.25
        want = sum(w[i] * g[i] for i in np.flatnonzero(b)) / sum(w[i] for i in np.flatnonzero(b))
        assert sp.ball_average(s, g, x, 0.25) == pytest.approx(want, rel=1e-12)


def test_density_ratio_examples(sq16):
    assert sp.density_ratio(sq16, np.arange(sq16.n), 10, 0.3) == 1.0
    h = sq16.meta["spacing"]
    assert sp.density_ratio(sq16, [10], 10, 0.5 * h) == 1.0


def test_density_ratio_fat_cantor_increases():
    line = sp.grid(1, 4097)
    A = sp.fat_cantor_mask(line.coords, 6)
    lefts, length = sp.cantor_intervals(6, lambda k, _: 0.25**k)
    mid = lefts[len(lefts) // 3] + length / 2
    x = int(np.argmin(np.abs(line.coords[:, 0] - mid)))
    assert A[x]
    ratios = [sp.density_ratio(line, A, x, r) for r in (0.2, 0.05, 0.01, 0.002)]
    assert ratios == sorted(ratios)
    assert ratios[-1] == 1.0


def test_local_density_check_examples(sq16):
    assert sp.local_density_check(sq16, np.arange(sq16.n), 5, 0.1, 0.2)
    assert not sp.local_density_check(sp.two_point(), [0], 0, 0.5, 1.0)
    left = np.flatnonzero(sq16.coords[:, 0] <= 0.5)
    x = sp.grid_index(sq16, 3, 8)
    assert sp.local_density_check(sq16, left, x, 0.5, 0.1)


def test_density_complement(sq16):
    rng = np.random.default_rng(0)
    A = rng.random(sq16.n) < 0.4
    for x in (0, 50, 200):
        for r in (0.05, 0.2, 0.9):
            total = sp.density_ratio(sq16, A, x, r) + sp.density_ratio(sq16, ~A, x, r)
            assert total == pytest.approx(1.0, abs=1e-15)


def test_doubling_line():
    prof = sp.doubling_profile(sp.grid(1, 257), 200, seed=0)
    assert abs(prof.kappa - 1.0) <= 0.2
    assert 1.0 <= prof.C <= 4.0


def test_doubling_square(sq64):
    prof = sp.doubling_profile(sq64, 200, seed=0)
    assert abs(prof.kappa - 2.0) <= 0.3


def test_doubling_deterministic(sq16):
    assert sp.doubling_profile(sq16, 50, seed=7) == sp.doubling_profile(sq16, 50, seed=7)


def test_doubling_single_point():
    s = sp.FiniteMetricMeasureSpace([1.0], coords=[[0.0]])
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        prof = sp.doubling_profile(s, 10)
    assert (prof.C, prof.kappa, prof.degenerate) == (1.0, 0.0, True)
    assert rec


def test_make_space_grid():
    s = sp.make_space("grid", dim=1, side=3, extent=1.0)
    assert s.coords[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert np.allclose(s.weights, 1 / 3)
    s2 = sp.grid(2, 5, extent=2.0)
    assert s2.weights.sum() == pytest.approx(4.0)


def test_standard_cantor_left_endpoints():
    s = sp.standard_cantor(2)
    assert np.allclose(s.coords[:, 0] * 9, [0, 2, 6, 8])
    assert np.allclose(s.weights, 0.25)


def test_fat_cantor_weights():
    s = sp.fat_cantor(3, 0.25)
    lefts, length = sp.cantor_intervals(3, lambda k, _: 0.25**k)
    assert np.allclose(s.weights, length)
    assert s.weights.sum() == pytest.approx(1 - 0.25 - 2 * 0.25**2 - 4 * 0.25**3)


def test_snowflake_two_point():
    s = sp.snowflake(sp.two_point(1.0), 0.5)
    assert s.dist(0, 1) == 1.0
    s = sp.snowflake(sp.two_point(4.0), 0.5)
    assert s.dist(0, 1) == 2.0


def test_make_space_errors(tmp_path):
    with pytest.raises(ValueError):
        sp.make_space("snowflake", base=sp.two_point(), alpha=1.5)
    with pytest.raises(ValueError):
        sp.make_space("standard_cantor", depth=0)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(sp.SpaceError):
        sp.make_space("from_file", path=str(bad))
    with pytest.raises(sp.SpaceError):
        sp.make_space("moebius")


def test_space_file_roundtrip(tmp_path):
    s = sp.snowflake(sp.grid(1, 7), 0.5)
    path = tmp_path / "s.json"
    import json
    path.write_text(json.dumps(sp.space_to_dict(s)))
    t = sp.load_space(path)
    assert np.allclose(t.dist_matrix(), s.dist_matrix())
    m = sp.FiniteMetricMeasureSpace([1, 2, 3], dist=[[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    path.write_text(json.dumps(sp.space_to_dict(m)))
    t = sp.load_space(path)
    assert np.array_equal(t.dist_matrix(), m.dist_matrix())
    assert t.weights.tolist() == [1, 2, 3]


def test_validation_rejects_bad_inputs():
    with pytest.raises(sp.SpaceError):
        sp.FiniteMetricMeasureSpace([1, 0], dist=[[0, 1], [1, 0]])
    with pytest.raises(sp.SpaceError):
        sp.FiniteMetricMeasureSpace([1, 1], dist=[[0, 1], [2, 0]])
    with pytest.raises(sp.SpaceError):
        sp.FiniteMetricMeasureSpace([1, 1, 1], dist=[[0, 1, 5], [1, 0, 1], [5, 1, 0]])
    with pytest.raises(sp.SpaceError):
        sp.FiniteMetricMeasureSpace([1, 1], dist=[[0, 0], [0, 0]])


def test_large_space_stays_lazy():
    s = sp.grid(2, 80)
    assert s.n > sp.DENSE_LIMIT
    assert not s.has_matrix
    assert len(sp.ball(s, 0, 0.05)) > 1
    with pytest.raises(sp.SpaceError):
        s.dist_matrix()


def test_landmark_examples(line65, sq16):
    g = sp.landmark_generators(line65, [0])[0]
    assert np.allclose(g.values, line65.coords[:, 0])
    p = 37
    g = sp.landmark_generators(sq16, [p])[0]
    assert g.values[p] == 0.0 and np.count_nonzero(g.values == 0) == 1
    with pytest.raises(ValueError):
        sp.landmark_generators(sq16, [])


def test_landmark_corner_rank(sq16):
    from metriccalc import derivation as dv, modalg
    c = sp.grid_corners(sq16)
    gens = sp.landmark_generators(sq16, [c[0], c[3]])
    ders = [dv.dq_derivation(sq16, "axis", dim=k) for k in range(2)]
    T = dv.component_table(ders, gens)
    X = sq16.coords
    off_diag = np.abs(X[:, 0] - X[:, 1]) > 2 * sq16.meta["spacing"]
    ranks = modalg.rank_field(T)
    assert np.all(ranks[off_diag] == 2)


def test_landmarks_one_lipschitz(sq16):
    D = sq16.dist_matrix()
    for g in sp.landmark_generators(sq16, [0, 100, 255]):
        diff = np.abs(g.values[:, None] - g.values[None, :])
        assert np.all(diff <= D * (1 + 1e-12) + 1e-15)


def test_snowflake_triangle():
    s = sp.snowflake(sp.grid(2, 12), 0.4)
    assert sp.triangle_violation(s) is None


@settings(max_examples=30, deadline=None)
@given(x=st.integers(0, 255), r1=st.floats(0, 1.5), r2=st.floats(0, 1.5))
def test_ball_monotone_and_centered(sq16, x, r1, r2):
    lo, hi = sorted((r1, r2))
    a, b = sp.ball(sq16, x, lo), sp.ball(sq16, x, hi)
    assert x in a
    assert set(a) <= set(b)
    assert sp.ball_average(sq16, sp.constant(sq16, 1.0), x, hi) == pytest.approx(1.0)


def test_ladder_parse_and_floor(line65):
    lad = sp.ScaleLadder.parse("0.2:0.5:0.03")
    assert lad.radii[0] == 0.2 and lad.floor == 0.03
    assert all(a > b for a, b in zip(lad.radii, lad.radii[1:]))
    two = sp.two_point()
    lad = sp.ScaleLadder((1.0, 0.5))
    assert lad.floor_index(two).tolist() == [0, 0]
    with pytest.raises(ValueError):
        sp.ScaleLadder((0.5, 1.0))
