import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

import oracles
from amspec.csupp import (
    BSplineGenerator,
    KTermApprox,
    build_perturbed_family,
    centred_shifts,
    contraction_ratio,
    decomposition_identity_error,
    envelope_perturbation,
    exponent_targets,
    fit_all,
    fit_samples,
    fit_tau,
    frame_expansion,
    frame_family,
    frame_operator_apply,
    neumann_invert,
    norming_check,
    support_violation,
)
from amspec.errors import NoConvergence, PreconditionError, TargetNotReached
from amspec.panels import random_panel
from amspec.transform import SpaceParams, norm_equivalence_check
from conftest import band_radius


@pytest.fixture(scope="module")
def gen4():
    return BSplineGenerator(4)


@pytest.fixture(scope="module")
def taus1(frame1, gen4):
    return fit_all(frame1, gen4, N_env=4.0, M_env=11.0)


@pytest.fixture(scope="module")
def psi1(frame1, taus1):
    return build_perturbed_family(frame1, taus1)


@pytest.fixture(scope="module")
def cs_panel(frame1):
    return random_panel(frame1.grid, band_radius(frame1), 3, seed=3)


def zero_family(frame, gen):
    z = KTermApprox(gen, 1.0, np.zeros(1, dtype=complex), [np.zeros(1)])
    return build_perturbed_family(frame, {tuple(int(v) for v in k): z for k in frame.layout.ks})


# -- generator ------------------------------------------------------------------------
@pytest.mark.parametrize("order", [3, 4, 6])
def test_bspline_support_and_integral(order):
    g = BSplineGenerator(order)
    t = np.linspace(-1.0, order + 1.0, 20001)
    v = g.eval1(t)
    assert np.all(v[(t < 0) | (t > order)] == 0.0)
    assert np.all(v >= 0)
    assert trapezoid(v, t) == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("order", [2, 3.5, 0])
def test_bspline_rejects_low_or_fractional_order(order):
    with pytest.raises(PreconditionError):
        BSplineGenerator(order)


@pytest.mark.parametrize("order", [3, 4])
@pytest.mark.parametrize("w", [0.5, 1.0, 3.0, 7.5, 20.0])
def test_bspline_transform_matches_reference(order, w):
    assert abs(BSplineGenerator(order).ft1(w)) == pytest.approx(oracles.bspline_ft_modulus(order, w), rel=1e-12)


def test_bspline_transform_is_quadrature(gen4):
    t = np.linspace(0.0, 4.0, 40001)
    for w in (0.0, 1.3, 5.0):
        q = trapezoid(gen4.eval1(t) * np.exp(-1j * t * w), t)
        assert gen4.ft1(w) == pytest.approx(q, abs=1e-8)


@pytest.mark.parametrize("order", [3, 4, 5])
def test_bspline_decay_exponent(order):
    assert BSplineGenerator(order).decay_exponent() >= 0.95 * order


def test_bspline_decay_constant_finite_iff_order_allows(gen4):
    assert gen4.decay_constant(3.0) < 100
    # M + 1 = 5 exceeds the order: the weighted sup grows linearly with the probed range
    assert gen4.decay_constant(4.0, w_max=1e3) > 5 * gen4.decay_constant(4.0, w_max=1e2)


def test_bspline_tensor_product():
    g = BSplineGenerator(3, dim=2)
    x = np.array([[0.5, 1.5], [1.5, 1.5], [-0.1, 1.0]])
    g1 = BSplineGenerator(3)
    assert np.allclose(g(x), g1.eval1(x[:, 0]) * g1.eval1(x[:, 1]))


def test_exponent_targets():
    assert exponent_targets(1.0, 1.0) == (4.0, 11.0)
    assert exponent_targets(2.0, 0.5, s=1.0, delta=1.0) == (6.0, 6.0 + 4.0 * (1.0 + 4.0 + 1.5))


# -- fitting --------------------------------------------------------------------------
def test_fit_samples_reproduces_the_generator(gen4):
    # the target is g itself: one shift at the origin reproduces it exactly
    y = np.linspace(-4.0, 8.0, 481)
    shifts = centred_shifts([0.0], gen4, 1.0)
    target = gen4.eval1(y + shifts[0])
    tau = fit_samples([y], target, gen4, 1.0, [shifts], 0.0, None)
    assert np.max(np.abs(tau.coeffs.ravel() - 1.0)) <= 1e-12


def test_fit_tau_single_term_misses_target(frame1, gen4):
    with pytest.raises(TargetNotReached) as err:
        fit_tau(frame1, (0,), gen4, K=1, eps_target=0.05)
    assert err.value.args[0].startswith("k=(0,)")


def test_fit_all_reaches_target(frame1, taus1):
    assert set(taus1) == {tuple(int(v) for v in k) for k in frame1.layout.ks}
    worst = max(t.eps for t in taus1.values())
    assert worst <= 0.05
    assert all(np.isfinite(t.eps_space) and np.isfinite(t.eps_freq) for t in taus1.values())


def test_fit_improves_with_more_terms(frame1_small, gen4):
    e = [fit_tau(frame1_small, (0,), gen4, K=K, m=2.0).eps for K in (8, 32)]
    assert e[1] < e[0]


def test_fit_rejects_bad_m(frame1_small, gen4):
    with pytest.raises(PreconditionError):
        fit_tau(frame1_small, (0,), gen4, K=4, m=-1.0)


# -- families -------------------------------------------------------------------------
def test_fitted_atoms_stay_in_declared_boxes(psi1):
    assert support_violation(psi1) == 0.0


def test_fitted_family_close_to_frame(frame1, psi1):
    Phi = frame1.space_matrix()
    assert np.max(np.abs(psi1.dense() - Phi)) <= 1e-6 * np.max(np.abs(Phi))


def test_support_violation_needs_boxes(frame1_small, gen4):
    fam = envelope_perturbation(frame1_small, 0.1, gen4)
    with pytest.raises(PreconditionError):
        support_violation(fam)


def test_frame_operator_self_adjoint(frame1, psi1, cs_panel):
    R = band_radius(frame1)
    f, g = cs_panel[0], cs_panel[1]
    Sf = frame_operator_apply(psi1, f, R)
    Sg = frame_operator_apply(psi1, g, R)
    assert abs(Sf.inner(g) - f.inner(Sg)) <= 1e-12 * f.norm() * g.norm()


def test_frame_operator_of_tight_frame_is_identity_in_band(frame1, cs_panel):
    R = band_radius(frame1)
    fam = frame_family(frame1)
    for f in cs_panel:
        assert (frame_operator_apply(fam, f, R) - f).norm() <= 1e-10 * f.norm()


def test_neumann_converges_in_one_step_for_tight_frame(frame1, cs_panel):
    nr = neumann_invert(frame_family(frame1), cs_panel[0], band_radius(frame1), tol=1e-10)
    assert nr.iterations == 1


def test_neumann_fails_for_zero_family(frame1_small, gen4):
    f = random_panel(frame1_small.grid, band_radius(frame1_small), 1, seed=0)[0]
    with pytest.raises(NoConvergence):
        neumann_invert(zero_family(frame1_small, gen4), f, band_radius(frame1_small))


def test_contraction_and_expansion(frame1, psi1, cs_panel):
    R = band_radius(frame1)
    assert contraction_ratio(psi1, cs_panel, R) < 1.0
    for f in cs_panel:
        ex = frame_expansion(psi1, f, R, tol=1e-8)
        assert ex.reconstruction_error <= 1e-6
        assert ex.iterations <= 50


@settings(max_examples=5, deadline=None)
@given(st.floats(0.01, 0.2))
def test_small_envelope_perturbation_still_contracts(frame1_small, gen4, eps):
    R = band_radius(frame1_small)
    panel = random_panel(frame1_small.grid, R, 2, seed=4)
    fam = envelope_perturbation(frame1_small, eps, gen4)
    assert contraction_ratio(fam, panel, R) < 1.0


def test_gram_of_difference_linear_in_eps(frame1_small, gen4):
    from amspec.admat import AdParams, fitted_constant, gram

    par = AdParams(0.0, 0.0, (2.0,), 1.0, q=2.0)
    Phi = frame_family(frame1_small)
    C = []
    for eps in (0.1, 0.05):
        D = envelope_perturbation(frame1_small, eps, gen4).combine(Phi, 1, -1)
        C.append(fitted_constant(gram(Phi, D), par) / eps)
    assert C[1] == pytest.approx(C[0], rel=1e-8)


def test_norming_family(frame1, psi1, cs_panel, frame1_small, gen4):
    sp = SpaceParams(0.0, 0.0, (2.0,), 2.0)
    rep = norming_check(psi1, sp, cs_panel, frame1)
    ref = norm_equivalence_check(frame1, cs_panel, sp)
    assert rep.ratio_min == pytest.approx(ref.ratio_min, rel=1e-3)
    assert rep.ratio_max == pytest.approx(ref.ratio_max, rel=1e-3)
    assert set(rep.to_json()) == {"C1", "C2"}
    panel = random_panel(frame1_small.grid, band_radius(frame1_small), 2, seed=1)
    assert norming_check(zero_family(frame1_small, gen4), sp, panel, frame1_small).ratio_min == 0.0


def test_decomposition_identity(frame1, psi1):
    assert decomposition_identity_error(frame1, psi1) <= 1e-12
