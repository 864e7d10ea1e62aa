import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from amspec.bapu import SUPPORT_FACTOR, BumpProfile
from amspec.coeffs import CoeffField
from amspec.errors import PreconditionError
from amspec.grid import SampledSignal
from amspec.lattice import covering_members
from amspec.panels import random_panel
from amspec.transform import (
    SpaceParams,
    analyze,
    growth_class,
    mod_norm,
    norm_equivalence_check,
    seq_norm,
    synthesize,
)
from conftest import band_radius, make_frame


@pytest.mark.parametrize("alpha", [-0.1, 1.0])
def test_space_params_reject_alpha(alpha):
    with pytest.raises(PreconditionError):
        SpaceParams(0.0, alpha, (2.0,), 2.0)


def test_space_params_shift():
    sp = SpaceParams(0.5, 0.5, (1.5, 2.0), 1.0)
    assert sp.shifted(1.0).s == 1.5 and sp.shifted(1.0).p == sp.p and sp.q == 1.0


def test_seq_norm_dimension_check(frame1_small):
    with pytest.raises(PreconditionError):
        seq_norm(CoeffField.zeros(frame1_small.layout), SpaceParams(0, 0, (2.0, 2.0), 2.0), frame1_small.grid)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 4.0])
def test_seq_norm_single_entry(frame1_small, p):
    F = frame1_small
    c = CoeffField.delta(F.layout, ((0,), (0,)))
    h = F.grid.h
    val = seq_norm(c, SpaceParams(0.0, 0.0, (p,), 2.0), F.grid)
    # the closed unit ball centred on a sample holds 2/h + 1 samples
    assert val == pytest.approx((2.0 + h) ** (1 / p), rel=1e-13)
    assert val == pytest.approx(oracles.ball_indicator_norm_1d(p), rel=h / p)


def test_seq_norm_single_entry_fine_grid():
    F = make_frame(0.0, 16.0, 4096, 4)
    val = seq_norm(CoeffField.delta(F.layout, ((0,), (0,))), SpaceParams(0.0, 0.0, (1.5,), 2.0), F.grid)
    # closed-ball rasterisation bias (1 + h/2)^{1/p} - 1, h = 1/128
    assert val == pytest.approx(oracles.ball_indicator_norm_1d(1.5), rel=F.grid.h / 1.5)
    assert val > oracles.ball_indicator_norm_1d(1.5)


def test_seq_norm_smoothness_weight(frame_half):
    F = frame_half
    c = CoeffField.delta(F.layout, ((3,), (0,)))
    r = float(F.geometry.r(np.array([3.0])))
    s0 = seq_norm(c, SpaceParams(0.0, 0.5, (2.0,), 2.0), F.grid)
    s1 = seq_norm(c, SpaceParams(1.0, 0.5, (2.0,), 2.0), F.grid)
    assert s1 / s0 == pytest.approx(r, rel=1e-13)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_seq_norm_homogeneous_and_triangle(frame1_small, seed, lam):
    F = frame1_small
    rng = np.random.default_rng(seed)
    sp = SpaceParams(0.5, 0.0, (1.5,), 2.0)
    a = CoeffField(F.layout, rng.standard_normal(F.layout.size) * (rng.random(F.layout.size) < 0.1))
    b = CoeffField(F.layout, rng.standard_normal(F.layout.size) * (rng.random(F.layout.size) < 0.1))
    na, nb = seq_norm(a, sp, F.grid), seq_norm(b, sp, F.grid)
    assert seq_norm(a * lam, sp, F.grid) == pytest.approx(abs(lam) * na, rel=1e-12)
    assert seq_norm(a + b, sp, F.grid) <= na + nb + 1e-12


def test_seq_norm_decreases_in_q(frame1_small, rng):
    F = frame1_small
    c = CoeffField(F.layout, rng.standard_normal(F.layout.size))
    vals = [seq_norm(c, SpaceParams(0.0, 0.0, (2.0,), q), F.grid) for q in (1.0, 2.0, 4.0)]
    assert vals[0] >= vals[1] >= vals[2]


def test_analyze_synthesize_wrappers(frame1_small, rng):
    F = frame1_small
    f = random_panel(F.grid, band_radius(F), 1, seed=2)[0]
    assert np.array_equal(analyze(F, f).data, F.analyze(f).data)
    assert (synthesize(F, analyze(F, f)) - f).norm() <= 1e-12 * f.norm()


def test_mod_norm_zero_and_homogeneous(frame1_small):
    F = frame1_small
    sp = SpaceParams(0.0, 0.0, (1.5,), 1.0)
    f = random_panel(F.grid, band_radius(F), 1, seed=3)[0]
    n = mod_norm(f, sp, F.system)
    assert n > 0
    g = SampledSignal(F.grid, 3.0 * f.values)
    assert mod_norm(g, sp, F.system) == pytest.approx(3.0 * n, rel=1e-12)


def _overlap_count_1d(frame):
    R = band_radius(frame)
    xi = np.linspace(-R, R, 2001)[:, None]
    _, mask = covering_members(frame.geometry, xi, SUPPORT_FACTOR, frame.truncation.kmax)
    return int(mask.sum(axis=1).max())


def test_mod_norm_l2_bracket(frame1):
    # phi_k = 1 on its cover ball, so for band-limited f: ||f|| <= mod_norm <= sqrt(n_supp) ||f||
    n_supp = _overlap_count_1d(frame1)
    sp = SpaceParams(0.0, 0.0, (2.0,), 2.0)
    for f in random_panel(frame1.grid, band_radius(frame1), 3, seed=4):
        m = mod_norm(f, sp, frame1.system)
        assert f.norm() * (1 - 1e-12) <= m <= np.sqrt(n_supp) * f.norm()


def test_norm_equivalence_ratio_bounded(frame1, panel1):
    rep = norm_equivalence_check(frame1, panel1, SpaceParams(0.0, 0.0, (2.0,), 2.0))
    assert 0.2 < rep.ratio_min <= rep.ratio_max < 5.0
    assert rep.ratio_max / rep.ratio_min < 2.0


def test_norm_equivalence_empty_panel(frame1):
    with pytest.raises(PreconditionError):
        norm_equivalence_check(frame1, [], SpaceParams(0.0, 0.0, (2.0,), 2.0))


@pytest.mark.parametrize("s, p", [(0.0, 2.0), (1.0, 1.5)])
def test_profile_swap_changes_norm_boundedly(s, p):
    std = make_frame(0.0, 16.0, 256, 4)
    alt = make_frame(0.0, 16.0, 256, 4, profile=BumpProfile.alternate())
    sp = SpaceParams(s, 0.0, (p,), 2.0)
    for f in random_panel(std.grid, band_radius(std), 3, seed=9):
        ratio = mod_norm(f, sp, alt.system) / mod_norm(f, sp, std.system)
        assert 0.8 < ratio < 1.25


def test_growth_class(frame_half):
    F = frame_half
    c = CoeffField.zeros(F.layout)
    c[((4,), (0,))] = 17.0
    c[((0,), (1,))] = 0.5
    # <4> = sqrt(17); beta = 2 divides by 17
    assert growth_class(c, 2.0) == pytest.approx(1.0, rel=1e-14)
    assert growth_class(c, 0.0) == 17.0
    assert growth_class(CoeffField.zeros(F.layout), 1.0) == 0.0
