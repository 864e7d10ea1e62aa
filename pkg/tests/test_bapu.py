import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from amspec.bapu import (
    SUPPORT_FACTOR,
    BapuSystem,
    BumpProfile,
    certify_bapu,
    unit_ball_mixed_norm,
)
from amspec.errors import DenominatorUnderflow
from amspec.lattice import AlphaGeometry, Truncation, default_a
from amspec.mixednorm import PVec


def system(alpha=0.0, kmax=4, c1=1.0, dim=1, profile=None):
    g = AlphaGeometry(alpha, dim, c1, default_a(c1, dim))
    return BapuSystem(g, Truncation(kmax, 16.0), profile or BumpProfile.standard())


@pytest.mark.parametrize("profile", [BumpProfile.standard(), BumpProfile.alternate()])
def test_profile_plateau_and_support(profile):
    t = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 10.0])
    assert np.array_equal(profile(t), [1.0, 1.0, 1.0, 0.0, 0.0, 0.0])


@pytest.mark.parametrize("profile", [BumpProfile.standard(), BumpProfile.alternate()])
def test_profile_monotone_and_symmetric(profile):
    t = np.linspace(1.0, 1.5, 501)
    v = profile(t)
    assert np.all(np.diff(v) <= 0)
    # rho(t) + rho(5/2 - t) = 1 around the midpoint of the transition
    assert np.allclose(v + profile(2.5 - t), 1.0, atol=1e-15)


def test_profile_midpoint_matches_reference():
    assert BumpProfile.standard()(1.25) == pytest.approx(oracles.RHO_1_25, abs=1e-15)


@pytest.mark.parametrize("t", [1.05, 1.2, 1.33, 1.45])
def test_profile_matches_high_precision(t):
    assert float(BumpProfile.standard()(t)) == pytest.approx(oracles.bump_profile(t), rel=1e-13)


@pytest.mark.parametrize("alpha", [0.0, 0.5])
@pytest.mark.parametrize("k", [0, 2, -3])
def test_phi_is_one_at_centre_and_zero_outside(alpha, k):
    s = system(alpha)
    g = s.geometry
    xk = g.xi(np.array([float(k)]))
    rk = float(g.r(np.array([float(k)])))
    assert s.phi(xk[None, :], (k,))[0] == 1.0
    far = xk + SUPPORT_FACTOR * g.c1 * rk * np.array([1.0 + 1e-9])
    assert s.phi(far[None, :], (k,))[0] == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(-2.0, 2.0))
def test_partition_of_squares_interior(xi):
    s = system(0.0, kmax=4)
    assert s.sum_theta_squared(np.array([[xi]]))[0] == pytest.approx(1.0, abs=1e-12)


def test_partition_of_squares_alpha_half():
    s = system(0.5, kmax=8, c1=2.0)
    xi = np.linspace(-6.0, 6.0, 301)[:, None]
    assert np.max(np.abs(s.sum_theta_squared(xi) - 1.0)) < 1e-12


def test_theta_underflow_outside_certified_region():
    s = system(0.0, kmax=4)
    with pytest.raises(DenominatorUnderflow):
        s.theta(np.array([[40.0]]), (0,))


def test_theta_symmetric_at_alpha_zero():
    s = system(0.0, kmax=4)
    xi = np.linspace(-2.0, 2.0, 41)[:, None]
    assert np.allclose(s.theta(xi, (0,)), s.theta(-xi, (0,)), atol=1e-15)
    assert np.allclose(s.theta(xi, (1,)), s.theta(-xi, (-1,)), atol=1e-15)


def test_theta_at_origin_three_overlapping_bumps():
    # at xi = 0 the bumps for k = -1, 0, 1 all equal 1 (unit cover radius)
    s = system(0.0, kmax=4)
    assert s.theta(np.array([[0.0]]), (0,))[0] == pytest.approx(3**-0.5, rel=1e-15)


@pytest.mark.parametrize("p", [1.0, 2.0, 0.5])
def test_unit_ball_mixed_norm_1d(p):
    assert unit_ball_mixed_norm((p,)) == pytest.approx(oracles.ball_indicator_norm_1d(p), rel=1e-14)


def test_unit_ball_mixed_norm_2d_equal_exponents():
    # disc area pi, ||1_B||_{L_2} = sqrt(pi)
    assert unit_ball_mixed_norm((2.0, 2.0)) == pytest.approx(np.sqrt(np.pi), rel=1e-10)


@pytest.mark.parametrize("alpha, N", [(0.0, 256), (0.5, 512)])
def test_certify_bapu(alpha, N):
    from amspec.grid import Grid

    s = system(alpha, kmax=4)
    rep = certify_bapu(s, PVec((2.0,), 2.0), Grid(1, 16.0, N))
    js = rep.to_json()
    assert set(js) == {"pu_max_err", "support_ok", "bapu3_sup", "deriv_decay"}
    assert js["pu_max_err"] < 1e-12
    assert js["support_ok"]
    assert 0 < js["bapu3_sup"] < 10
    assert set(js["deriv_decay"]) == {"1", "2"}
    assert all(np.isfinite(v) and v > 0 for v in js["deriv_decay"].values())


def test_certify_bapu_uniform_in_kmax():
    from amspec.grid import Grid

    reps = [certify_bapu(system(0.5, kmax=km), PVec((2.0,), 2.0), Grid(1, 16.0, 1024)) for km in (4, 8)]
    a, b = reps
    assert b.bapu3_sup == pytest.approx(a.bapu3_sup, rel=0.1)
    for o in ("1", "2"):
        assert b.deriv_decay[o] <= 1.25 * a.deriv_decay[o]
