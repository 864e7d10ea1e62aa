import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from amspec.errors import CoverageGap, PreconditionError
from amspec.lattice import (
    AlphaGeometry,
    TFIndex,
    Truncation,
    ball_cover,
    certify_covering,
    default_a,
    interior_half_width,
    qball,
    qball_overlap,
    r_of,
    select_c1,
    x_of,
    xi_of,
)


def geom(alpha, dim=1, c1=1.0, a=None):
    return AlphaGeometry(alpha, dim, c1, default_a(c1, dim) if a is None else a)


@pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 0.9])
@pytest.mark.parametrize("dim", [1, 2, 3])
def test_r_of_origin_is_one(alpha, dim):
    assert r_of((0,) * dim, geom(alpha, dim)) == 1.0


@pytest.mark.parametrize("k", [(0,), (5,), (-7,), (3, 4), (1, 1, 1)])
def test_r_of_alpha_zero_is_one(k):
    assert r_of(k, geom(0.0, len(k))) == 1.0


def test_r_of_and_xi_of_closed_form():
    g = geom(0.5)
    assert r_of((3,), g) == pytest.approx(oracles.R3_HALF, rel=1e-15)
    assert xi_of((3,), g)[0] == pytest.approx(oracles.XI3_HALF, rel=1e-15)


def test_x_of_with_a_half_pi():
    g = AlphaGeometry(0.0, 1, 0.5, math.pi / 2)
    for k in (0, 3, -11):
        assert x_of(TFIndex((k,), (1,)), g)[0] == pytest.approx(2.0)
    assert x_of(TFIndex((0,), (0,)), g)[0] == 0.0


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=3), st.floats(0.0, 0.95))
def test_r_of_monotone_and_at_least_one(k, alpha):
    g = geom(alpha, len(k))
    r = r_of(tuple(k), g)
    assert r >= 1.0
    bigger = tuple(v + (1 if v >= 0 else -1) for v in k)
    assert r_of(bigger, g) >= r


def test_ball_cover_alpha_zero_integer_centres():
    g = geom(0.0)
    cover = ball_cover(g, Truncation(5, 1.0))
    centres = np.array([c[0] for c, _ in cover])
    assert np.array_equal(centres, np.arange(-5, 6))
    assert all(rad == g.c1 for _, rad in cover)


def test_ball_cover_alpha_half_k2():
    g = geom(0.5, c1=1.5)
    trunc = Truncation(3, 1.0)
    cover = {int(k[0]): ball for k, ball in zip(trunc.freq_indices(1), ball_cover(g, trunc))}
    c, rad = cover[2]
    assert c[0] == pytest.approx(oracles.XI2_HALF)
    assert rad == pytest.approx(1.5 * oracles.R2_HALF)


@pytest.mark.parametrize("kmax", [-1, 2.5])
def test_truncation_rejects_bad_kmax(kmax):
    with pytest.raises(PreconditionError):
        Truncation(kmax, 1.0)


def test_geometry_rejects_small_a():
    with pytest.raises(PreconditionError):
        AlphaGeometry(0.0, 1, 1.0, 1.0)
    with pytest.raises(PreconditionError):
        AlphaGeometry(1.0, 1, 1.0, 4.0)


def test_default_a_commensurate():
    T = 32.0
    a = default_a(1.0, 1, T)
    assert a >= 2.0 * (1 + 1 / 16) - 1e-12
    assert (a * T / math.pi) == pytest.approx(round(a * T / math.pi), abs=1e-9)


def test_certify_covering_alpha_zero_unit_balls():
    rep = certify_covering(geom(0.0), Truncation(8, 1.0))
    assert rep.coverage_ok
    assert rep.n0 == oracles.MEASURED["n0_alpha0_c1"]
    js = rep.to_json()
    assert set(js) == {"n0", "coverage_ok", "size_ratio_min", "size_ratio_max", "c1", "a"}


def test_certify_covering_gap_reports_points():
    with pytest.raises(CoverageGap) as err:
        certify_covering(geom(0.0, c1=0.4), Truncation(8, 1.0))
    pts = np.asarray(err.value.points)
    assert pts.ndim == 2 and len(pts) > 0
    # the uncovered points are at distance > 0.4 from every integer
    assert np.all(np.abs(pts[:, 0] - np.round(pts[:, 0])) > 0.4)


def test_certify_covering_alpha_half_c1_two():
    assert certify_covering(geom(0.5, c1=2.0), Truncation(8, 1.0)).coverage_ok


@pytest.mark.parametrize("alpha", [0.0, 0.5])
def test_n0_and_size_ratio_uniform_in_kmax(alpha):
    g = select_c1(alpha, 1, 4)
    reps = [certify_covering(g, Truncation(km, 1.0)) for km in (4, 8, 16)]
    assert len({r.n0 for r in reps}) == 1
    lo = min(r.size_ratio_min for r in reps)
    hi = max(r.size_ratio_max for r in reps)
    assert hi / lo < 10.0
    assert reps[-1].size_ratio_min >= reps[0].size_ratio_min / 2


def test_select_c1_smallest_certified():
    g = select_c1(0.0, 1, 8)
    assert g.c1 == 1.0
    g2 = select_c1(0.0, 2, 4)
    assert g2.c1 in (1.0, 1.5, 2.0, 2.5, 3.0)


def test_interior_half_width():
    g = geom(0.0)
    assert interior_half_width(g, Truncation(16, 1.0)) == pytest.approx(14.0)


def test_qball():
    c, r = qball(TFIndex((0,), (0,)), geom(0.0))
    assert c[0] == 0.0 and r == 1.0
    g = AlphaGeometry(0.5, 1, 1.0, math.pi)
    c, r = qball(TFIndex((3,), (1,)), g)
    assert c[0] == pytest.approx(oracles.QBALL_3_1_CENTRE)
    assert r == pytest.approx(oracles.QBALL_3_1_RADIUS)


@pytest.mark.parametrize("k", [1, 3, 8])
def test_qball_overlap_independent_of_k(k):
    g = geom(0.5)
    assert qball_overlap(g, (k,), 16.0) == qball_overlap(g, (0,), 16.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-12.0, 12.0))
def test_every_interior_point_covered(xi):
    from amspec.lattice import covering_members

    _, mask = covering_members(geom(0.0), np.array([[xi]]), 1.0, 16)
    assert 1 <= mask.sum() <= 3
