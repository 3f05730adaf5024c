import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvfluid import tensor2 as t2
from tvfluid.constitutive import (
    MaterialFunction,
    MaterialModel,
    Regime,
    de_dtheta,
    dpsi_dB,
    elastic_energy_f,
    entropy_eta,
    h_lambda,
    helmholtz_psi,
    internal_energy_e,
    preset_model,
    validate_bounds,
)
from tvfluid.errors import NonPositiveTemperature, NotPositiveDefinite, QuadratureFailure
from tvfluid.quadrature import adaptive_simpson

P1, P2, P3 = (preset_model(r) for r in ("P1", "P2", "P3"))
DIAG41 = t2.SymMat2(4.0, 0.0, 1.0)
F_DIAG41 = 3.0 - math.log(4.0)


def spd(a, b, c):
    """Positive definite B from an arbitrary lower-triangular factor."""
    return t2.bb_from_f(t2.Mat2(a, 0.0, b, c))


spd_mats = st.builds(
    spd,
    st.floats(0.2, 3.0),
    st.floats(-2.0, 2.0),
    st.floats(0.2, 3.0),
)
temps = st.floats(0.1, 10.0)


def test_elastic_energy_examples():
    assert elastic_energy_f(t2.SymMat2(1.0, 0.0, 1.0)) == 0.0
    assert elastic_energy_f(DIAG41) == pytest.approx(1.61371, abs=1e-5)
    assert elastic_energy_f(t2.SymMat2(2.0, 0.0, 0.5)) == pytest.approx(0.5, abs=1e-14)


def test_elastic_energy_rejects_singular():
    with pytest.raises(NotPositiveDefinite):
        elastic_energy_f(t2.SymMat2(1.0, 1.0, 1.0))


def test_psi_examples():
    for m in (P1, P2, P3):
        assert helmholtz_psi(m, 1.0, t2.SymMat2(1.0, 0.0, 1.0)) == pytest.approx(m.c_v)
    assert helmholtz_psi(P1, 1.0, DIAG41) == pytest.approx(1.0 + F_DIAG41)
    assert helmholtz_psi(P1, math.e, t2.SymMat2(1.0, 0.0, 1.0)) == pytest.approx(0.0, abs=1e-15)


def test_eta_examples():
    assert entropy_eta(P3, 1.0, t2.SymMat2(1.0, 0.0, 1.0)) == 0.0
    assert entropy_eta(P1, math.e, DIAG41) == pytest.approx(1.0)
    assert entropy_eta(P3, 1.0, DIAG41) == pytest.approx(-0.25 * F_DIAG41)
    assert entropy_eta(P3, 1.0, DIAG41) == pytest.approx(-0.40343, abs=1e-5)


def test_internal_energy_examples():
    assert internal_energy_e(P3, 2.0, t2.SymMat2(1.0, 0.0, 1.0)) == 2.0
    assert internal_energy_e(P2, 3.0, DIAG41) == pytest.approx(3.0, abs=1e-15)
    assert internal_energy_e(P3, 1.0, DIAG41) == pytest.approx(1.0 + 1.25 * F_DIAG41)
    assert internal_energy_e(P3, 1.0, DIAG41) == pytest.approx(3.01714, abs=1e-5)


def test_c_v_scales_thermal_part():
    m = preset_model("P3", c_v=2.5)
    assert internal_energy_e(m, 2.0, t2.SymMat2(1.0, 0.0, 1.0)) == pytest.approx(5.0)


def test_nonpositive_temperature_rejected():
    with pytest.raises(NonPositiveTemperature):
        helmholtz_psi(P1, 0.0, DIAG41)
    with pytest.raises(NonPositiveTemperature):
        internal_energy_e(P3, np.array([1.0, -1.0]), t2.SymMat2(1.0, 0.0, 1.0))


def test_dpsi_dB_examples():
    z = dpsi_dB(P1, 1.0, t2.SymMat2(1.0, 0.0, 1.0))
    assert z == t2.SymMat2(0.0, 0.0, 0.0)
    np.testing.assert_allclose(dpsi_dB(P1, 1.0, DIAG41).to_array(), np.diag([0.75, 0.0]))


def _fd_gradient(model, theta, B, h=1e-5):
    """Symmetric-matrix gradient of psi in B by centred differences.

    The off-diagonal entry appears twice in B, so its derivative is halved to
    match the full-matrix gradient.
    """
    out = []
    for k in range(3):
        e = [0.0, 0.0, 0.0]
        e[k] = h
        up = helmholtz_psi(model, theta, t2.SymMat2(*(b + d for b, d in zip(B, e))))
        dn = helmholtz_psi(model, theta, t2.SymMat2(*(b - d for b, d in zip(B, e))))
        out.append((up - dn) / (2 * h) * (0.5 if k == 1 else 1.0))
    return np.array(out)


def test_dpsi_dB_matches_finite_difference_example():
    B = t2.SymMat2(2.0, 1.0, 1.0)
    got = np.array(dpsi_dB(P1, 1.0, B))
    np.testing.assert_allclose(got, _fd_gradient(P1, 1.0, B), atol=1e-6)


@settings(max_examples=50)
@given(spd_mats, temps)
def test_dpsi_dB_matches_finite_difference(B, theta):
    got = np.array(dpsi_dB(P3, theta, B))
    scale = 1.0 + np.max(np.abs(np.array(t2.invert_spd(B))))
    np.testing.assert_allclose(got, _fd_gradient(P3, theta, B, 1e-6), atol=1e-6 * scale**3)


@given(spd_mats, temps, st.sampled_from([P1, P2, P3]))
def test_energy_definition_chain(B, theta, model):
    e = internal_energy_e(model, theta, B)
    psi = helmholtz_psi(model, theta, B)
    eta = entropy_eta(model, theta, B)
    assert e == pytest.approx(psi + theta * eta, rel=1e-12, abs=1e-12)


@given(spd_mats)
def test_elastic_energy_nonnegative(B):
    f = elastic_energy_f(B)
    assert f >= -1e-12
    dist = math.sqrt(t2.frob_norm_sq(t2.minus_identity(B)))
    if dist > 1e-6:
        assert f > 1e-12 or f > 0.1 * dist**2


def test_elastic_energy_zero_only_near_identity():
    for eps in (1e-7, 1e-9):
        assert elastic_energy_f(t2.SymMat2(1.0 + eps, 0.0, 1.0)) <= 1e-12
    assert elastic_energy_f(t2.SymMat2(1.0 + 1e-4, 0.0, 1.0)) > 1e-12


@settings(max_examples=50)
@given(spd_mats, temps)
def test_energy_monotone_in_temperature(B, theta):
    fB = elastic_energy_f(B)
    h = 1e-6 * theta
    fd = (internal_energy_e(P3, theta + h, B) - internal_energy_e(P3, theta - h, B)) / (2 * h)
    assert fd == pytest.approx(de_dtheta(P3, theta, fB), rel=1e-6, abs=1e-6)
    assert de_dtheta(P3, theta, fB) >= 1.0


def test_h_lambda_examples():
    assert h_lambda(P3, 1.0, 0.0) == 0.0
    assert h_lambda(P3, 1.0, 1.0) == pytest.approx(-0.25, abs=1e-10)
    lin = MaterialModel(*(MaterialFunction.make("constant"),) * 3, MaterialFunction.make("linear"), Regime.P3)
    assert h_lambda(lin, 0.7, 3.0) == 0.0


def test_h_lambda_closed_form():
    s = np.array([0.5, 1.0, 4.0])
    np.testing.assert_allclose(h_lambda(P3, 1.0, s), -(s**2) / (1 + s) ** 2, atol=1e-9)


def test_h_lambda_broadcasts():
    lam = np.array([[0.5], [1.0]])
    s = np.array([0.5, 2.0])
    out = h_lambda(P3, lam, s)
    assert out.shape == (2, 2)
    assert out[1, 0] == pytest.approx(-0.25 / 2.25, abs=1e-10)


@settings(max_examples=30)
@given(st.floats(0.05, 1.0), st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_h_lambda_nonincreasing_and_bounded(lam, s1, s2):
    lo, hi = sorted((s1, s2))
    a, b = h_lambda(P3, lam, lo), h_lambda(P3, lam, hi)
    assert b <= a + 1e-10
    assert a <= 1e-12
    assert abs(b) <= 2 * P3.C2


def test_h_lambda_rejects_bad_arguments():
    with pytest.raises(ValueError):
        h_lambda(P3, 0.0, 1.0)
    with pytest.raises(ValueError):
        h_lambda(P3, 1.0, -1.0)


def test_quadrature_polynomial_exact():
    val = adaptive_simpson(lambda z: z**3, 0.0, 2.0)
    assert val == pytest.approx(4.0, abs=1e-12)


def test_quadrature_vectorized_limits():
    b = np.array([0.0, 1.0, np.pi])
    np.testing.assert_allclose(adaptive_simpson(np.sin, np.zeros(3), b), 1.0 - np.cos(b), atol=1e-10)


def test_quadrature_failure_reported():
    with pytest.raises(QuadratureFailure):
        adaptive_simpson(lambda z: np.sin(1.0 / np.maximum(z, 1e-300)), 0.0, 1.0, tol=1e-14, max_levels=6)


@pytest.mark.parametrize("model", [P1, P2, P3])
def test_presets_validate(model):
    rep = validate_bounds(model, 1e3, 500)
    assert rep.passed, rep.lines()


def test_unbounded_g_fails_bound():
    m = MaterialModel(P3.nu, P3.kappa, P3.delta, MaterialFunction.make("linear"), Regime.P3)
    rep = validate_bounds(m, 1e3, 500)
    assert not rep["g_bounded"].passed
    assert rep["g_concave"].passed


def test_convex_g_fails_concavity():
    m = MaterialModel(P3.nu, P3.kappa, P3.delta, MaterialFunction.make("exponential"), Regime.P3)
    rep = validate_bounds(m, 1e3, 500)
    assert not rep["g_concave"].passed
    assert rep["g_concave"].first_violation == 0.0


def test_first_violation_is_reported():
    m = MaterialModel(P3.nu, MaterialFunction.make("affine", c0=1.0, c1=0.5), P3.delta, P3.g, Regime.P3)
    rep = validate_bounds(m, 10.0, 2000)
    chk = rep["kappa_bounded"]
    assert not chk.passed
    assert chk.first_violation == pytest.approx(2.0, rel=1e-2)


def test_validate_needs_two_samples():
    with pytest.raises(ValueError):
        validate_bounds(P1, 10.0, 1)


def test_material_function_rejects_unknown():
    with pytest.raises(ValueError):
        MaterialFunction.make("cubic")
    with pytest.raises(ValueError):
        MaterialFunction.make("linear", slope=1.0, offset=2.0)


def test_material_derivatives_match_finite_differences():
    s = np.linspace(0.1, 5.0, 11)
    for name in ("concave_rational", "saturating", "exponential", "affine"):
        fn = MaterialFunction.make(name)
        h = 1e-5
        np.testing.assert_allclose(fn.d1(s), (fn(s + h) - fn(s - h)) / (2 * h), rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(fn.d2(s), (fn.d1(s + h) - fn.d1(s - h)) / (2 * h), rtol=1e-6, atol=1e-8)
