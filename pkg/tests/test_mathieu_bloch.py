import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tbdos import laplacian_dos as lap
from tbdos import mathieu_bloch as mb
from tbdos.error_bounds import Q_OPT, estimate_mathieu_constants, mathieu_bound
from tbdos.spectral_core import eig_bisection, lorentzian_trace

TWO_PI = 2 * math.pi
# continuum Mathieu DoS at lambda=8, mu=0, L=64, 4096 k-panels, from a
# full-zone midpoint rule with scipy.linalg.eigh_tridiagonal spectra
ANCHOR_LAM8_MU0 = 0.41777897984653806

ks = st.floats(-math.pi, math.pi)


# -- construction ------------------------------------------------------------

def test_build_dc_examples():
    m = mb.build_dc(0.0, 0.0, mb.BlochIndexWindow(1))
    np.testing.assert_allclose(m.diag, [TWO_PI ** 2, 0.0, TWO_PI ** 2], rtol=1e-15)
    np.testing.assert_array_equal(m.offdiag, [0.0, 0.0])
    m = mb.build_dc(0.0, 8.0, mb.BlochIndexWindow(1))
    np.testing.assert_array_equal(m.offdiag, [8.0, 8.0])
    m = mb.build_dc(math.pi, 3.0, mb.BlochIndexWindow(2))
    p = math.pi
    np.testing.assert_allclose(m.diag, [(p - 4 * p) ** 2, (p - 2 * p) ** 2, p ** 2,
                                        (p + 2 * p) ** 2, (p + 4 * p) ** 2], rtol=1e-14)
    assert m.dim == 5


@given(ks, st.sampled_from([1 / 10, 1 / 50, 1 / 100]), st.integers(1, 5))
def test_build_dd_diagonal_formula(k, eps, L):
    params = mb.MathieuParams(2.0, eps)
    m = mb.build_dd_scaled(k, params, mb.BlochIndexWindow(L))
    n = np.arange(-L, L + 1)
    expected = 2 * (1 - np.cos(eps * (k + TWO_PI * n))) / eps ** 2
    np.testing.assert_allclose(m.diag, expected, rtol=1e-9, atol=1e-9)
    assert np.all(m.offdiag == 2.0)
    # Taylor remainder of the kinetic symbol
    kn = k + TWO_PI * n
    assert np.all(np.abs(m.diag - kn ** 2) <= eps ** 2 * kn ** 4 / 12 + 1e-12)


@pytest.mark.parametrize("eps", [1 / 2, 1 / 10, 1 / 1000])
def test_dd_centre_entry_vanishes_at_k0(eps):
    m = mb.build_dd_scaled(0.0, mb.MathieuParams(1.0, eps), mb.BlochIndexWindow(1))
    assert m.diag[1] == 0.0


def test_dd_lambda0_spectrum_is_symbols():
    params = mb.MathieuParams(0.0, 1 / 20)
    m = mb.build_dd_scaled(0.7, params, mb.BlochIndexWindow(6))
    np.testing.assert_allclose(eig_bisection(m).values, np.sort(m.diag), atol=1e-13)


def test_window_too_large():
    with pytest.raises(mb.WindowTooLargeError):
        mb.build_dd_scaled(0.0, mb.MathieuParams(8.0, 1 / 20), mb.BlochIndexWindow(11))
    with pytest.raises(mb.WindowTooLargeError):
        mb.dos_at_fixed_resolution(mb.DISCRETE, 0.0, 8.0, 1 / 20, 11, 32)


def test_param_validation():
    with pytest.raises(lap.InvalidParameterError):
        mb.MathieuParams(8.0, 1 / 3)          # odd inverse
    with pytest.raises(lap.InvalidParameterError):
        mb.MathieuParams(8.0, 0.3)            # not a reciprocal integer
    with pytest.raises(lap.InvalidParameterError):
        mb.BlochIndexWindow(0)
    with pytest.raises(lap.InvalidParameterError):
        mb.build_dc(4.0, 1.0, mb.BlochIndexWindow(2))
    assert mb.MathieuParams(8.0, 1 / 100).max_window == 50


def test_default_window_examples():
    assert 100 ** (3 / 11) == pytest.approx(3.5111917, rel=1e-7)
    assert mb.default_window(mb.MathieuParams(8.0, 1 / 100, Q_OPT)).L == 8
    assert 2 * 1e6 ** (3 / 11) == pytest.approx(86.58, abs=0.01)
    assert mb.default_window(mb.MathieuParams(8.0, 1e-6, Q_OPT)).L == 87
    assert mb.default_window(mb.MathieuParams(8.0, 1 / 100, L_override=25)).L == 25
    assert mb.default_window(mb.MathieuParams(8.0)).L == 8


# -- per-k traces ------------------------------------------------------------

@given(ks, st.floats(0, 16), st.floats(-5, 30))
def test_brillouin_symmetry_continuum(k, lam, mu):
    w = mb.BlochIndexWindow(6)
    a = lorentzian_trace(mb.build_dc(k, lam, w), mu)
    b = lorentzian_trace(mb.build_dc(-k, lam, w), mu)
    assert abs(a - b) <= 1e-10
    assert 0 < a <= w.dim


@given(ks, st.floats(0, 16), st.floats(-5, 30))
def test_brillouin_symmetry_discrete(k, lam, mu):
    params = mb.MathieuParams(lam, 1 / 40)
    w = mb.BlochIndexWindow(8)
    a = lorentzian_trace(mb.build_dd_scaled(k, params, w), mu)
    b = lorentzian_trace(mb.build_dd_scaled(-k, params, w), mu)
    assert abs(a - b) <= 1e-10
    assert 0 < a <= w.dim


def test_half_zone_rule_equals_full_zone_rule():
    P, L, lam, mu = 64, 6, 8.0, 3.0
    h = TWO_PI / P
    full = [lorentzian_trace(mb.build_dc(-math.pi + (j + 0.5) * h, lam, mb.BlochIndexWindow(L)), mu)
            for j in range(P)]
    assert mb.dos_at_fixed_resolution(mb.CONTINUUM, mu, lam, None, L, P) == pytest.approx(
        math.fsum(full) / P, abs=1e-13)


# -- DoS values --------------------------------------------------------------

@pytest.mark.parametrize("mu", [0.0, 5.0, 20.0])
def test_lambda0_continuum_reduces_to_laplacian(mu):
    got = mb.dos_mathieu_continuum(mu, 0.0)
    assert got == pytest.approx(lap.dos_laplacian_continuum(mu), abs=1e-6)


@pytest.mark.parametrize("mu", [0.0, 5.0, 20.0])
def test_lambda0_discrete_reduces_to_laplacian(mu):
    got = mb.dos_mathieu_discrete_scaled(mu, mb.MathieuParams(0.0, 1 / 40))
    assert got == pytest.approx(lap.dos_laplacian_discrete_scaled(mu, 1 / 40), abs=1e-6)


def test_far_below_spectrum():
    assert mb.dos_mathieu_continuum(-100.0, 8.0) < 1e-3


def test_regression_anchor_lambda8_mu0():
    assert mb.dos_at_fixed_resolution(mb.CONTINUUM, 0.0, 8.0, None, 64, 4096) == pytest.approx(
        ANCHOR_LAM8_MU0, abs=1e-11)
    assert mb.dos_mathieu_continuum(0.0, 8.0) == pytest.approx(ANCHOR_LAM8_MU0, abs=1e-8)


def test_continuity_in_mu():
    params = mb.MathieuParams(8.0, 1 / 100)
    a = mb.dos_mathieu_discrete_scaled(1.0, params)
    b = mb.dos_mathieu_discrete_scaled(1.0 + 1e-6, params)
    assert abs(a - b) <= 1e-4


def test_discrete_within_bound_envelope():
    params = mb.MathieuParams(8.0, 1 / 100)
    err = abs(mb.dos_mathieu_discrete_scaled(0.0, params) - mb.dos_mathieu_continuum(0.0, 8.0))
    c5, c6 = estimate_mathieu_constants(8.0, 0.0)
    assert err <= mathieu_bound(1 / 100, Q_OPT, c5, c6).dos_bound


@pytest.mark.parametrize("mu", [0.0, 5.0, 10.0])
def test_errors_decrease_with_eps(mu):
    c = mb.dos_mathieu_continuum(mu, 8.0)
    errs = [abs(mb.dos_mathieu_discrete_scaled(mu, mb.MathieuParams(8.0, e)) - c)
            for e in (1 / 50, 1 / 100, 1 / 200)]
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("mu", [0.0, 10.0])
def test_truncation_stability_continuum(mu):
    r = mb.mathieu_continuum_result(mu, 8.0)
    assert r.converged and not r.saturated
    doubled = mb.dos_at_fixed_resolution(mb.CONTINUUM, mu, 8.0, None, 2 * r.L_used, r.k_panels_used)
    assert abs(doubled - r.value) < 1e-8


def test_truncation_stability_discrete():
    params = mb.MathieuParams(8.0, 1 / 200)
    r = mb.mathieu_discrete_result(5.0, params)
    L2 = min(2 * r.L_used, params.max_window)
    doubled = mb.dos_at_fixed_resolution(mb.DISCRETE, 5.0, 8.0, 1 / 200, L2, r.k_panels_used)
    assert abs(doubled - r.value) < 1e-8


def test_saturation_flagged_for_coarse_eps():
    r = mb.mathieu_discrete_result(0.0, mb.MathieuParams(8.0, 1 / 10))
    assert r.saturated and r.L_used == 5


def test_non_convergence_warns(monkeypatch):
    # a continuum window that cannot grow is reported, not silently accepted
    monkeypatch.setattr(mb, "MAX_L", 8)
    with pytest.warns(lap.NonConvergenceWarning):
        mb.dos_mathieu_continuum(7.0, 8.0, kquad=lap.QuadratureSpec(panels=16))


def test_default_path_silent():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        mb.dos_mathieu_continuum(2.0, 8.0)


def test_fixed_resolution_validation():
    with pytest.raises(lap.InvalidParameterError):
        mb.dos_at_fixed_resolution(mb.CONTINUUM, 0.0, 8.0, None, 8, 33)
