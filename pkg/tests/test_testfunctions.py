import math

import numpy as np
import pytest
import sympy as sp

from fractodamp.errors import DomainError
from fractodamp.testfunctions import (TestFunctionFamily, delta_interval, derivative_envelopes,
                                      envelope_ladder, eta, eta_derivatives, far_field_constant,
                                      fractional_laplacian_direct, fractional_laplacian_fourier_1d,
                                      fractional_laplacian_gaussian_1d, gaussian_profile, phi,
                                      phi_power_derivatives, phi_radial, phi_power_profile, RadialProfile,
                                      moment_asymptotics, scaled_test_functions,
                                      scaling_identity_pairs, verify_lemma_bound_8,
                                      verify_lemma_bound_9)


def test_phi_values():
    assert phi(0.0) == 1.0
    assert phi(1.0) == 1.0
    assert phi(2.0) == pytest.approx(2 ** -0.25)
    assert phi(np.array([[0.0, 2.0]]))[0] == pytest.approx(2 ** -0.25)


def test_phi_is_c2_at_join():
    r = sp.symbols("r", positive=True)
    outer = (1 + (r - 1) ** 4) ** sp.Rational(-1, 4)
    for k in range(3):
        assert sp.limit(sp.diff(outer, r, k), r, 1, "+") == (1 if k == 0 else 0)
    f0, f1, f2 = phi_power_derivatives(np.array([1.0 + 1e-9]), 3.0)
    assert abs(f1[0]) < 1e-20 and abs(f2[0]) < 1e-12


def test_closed_form_derivatives_match_sympy():
    r, q = sp.symbols("r q", positive=True)
    g = (1 + (r - 1) ** 4) ** (-q / 4)
    vals = {q: 2.7}
    for x in (1.3, 2.0, 7.5):
        f0, f1, f2 = phi_power_derivatives(np.array([x]), 2.7)
        sub = {**vals, r: x}
        assert f0[0] == pytest.approx(float(g.subs(sub)), rel=1e-12)
        assert f1[0] == pytest.approx(float(sp.diff(g, r).subs(sub)), rel=1e-12)
        assert f2[0] == pytest.approx(float(sp.diff(g, r, 2).subs(sub)), rel=1e-12)


def test_eta_cutoff():
    assert eta(0.0) == 1.0 and eta(0.5) == 1.0
    assert eta(1.0) == 0.0 and eta(3.0) == 0.0
    t = np.linspace(0, 1.2, 500)
    assert np.all(np.diff(eta(t)) <= 0)
    _, d1, _ = eta_derivatives(t)
    assert np.all(d1 <= 0)
    h = 1e-6
    fd = (eta(0.7 + h) - eta(0.7 - h)) / (2 * h)
    assert eta_derivatives(0.7)[1] == pytest.approx(fd, rel=1e-6)


def test_scaled_family_supports():
    fam = TestFunctionFamily.default(1, 0.25, R=16.0)
    x = np.array([0.0, 2.0, 3.9, 4.1, 20.0])
    at0 = scaled_test_functions(fam, x, 0.0)
    assert np.allclose(at0["Phi"][:3], 1.0)
    assert np.all(at0["Phi1"][:3] == 0)  # phi* vanishes inside sqrt(R)
    early = scaled_test_functions(fam, x, 0.4 * 16 ** 0.75)
    assert np.all(early["Phi2"] == 0)  # eta* vanishes before R^(1-sigma)/2
    late = scaled_test_functions(fam, x, 16 ** 0.75)
    assert np.all(late["Phi"] == 0)


def test_family_validation():
    lo, hi = delta_interval(2, 0.25)
    assert lo == pytest.approx(2 / 2.5) and hi == 1.0
    with pytest.raises(DomainError):
        TestFunctionFamily(1.0, 10.0, 0.25, 2, 0.5, 0.01)  # delta below the interval
    with pytest.raises(DomainError):
        TestFunctionFamily(-1.0, 10.0, 0.25, 1, 0.9, 0.01)
    fam = TestFunctionFamily.default(2, 0.25)
    with pytest.raises(DomainError):
        TestFunctionFamily(1.0, fam.nu_lower_bound() / 2, 0.25, 2, fam.delta, fam.delta1)


def test_fraclap_constant_is_zero():
    # the far field of a non-decaying profile has to be declared via decay=(0, A)
    const = RadialProfile(lambda r: np.ones_like(np.asarray(r, float)), decay=(0.0, 1.0))
    for n in (1, 2):
        assert abs(fractional_laplacian_direct(const, 0.3, 0.5 if n == 1 else np.array([0.5, 0]), n)) < 1e-8


@pytest.mark.parametrize("s", [0.1, 0.25, 0.5, 0.75])
def test_fraclap_gaussian_1d(s):
    closed = fractional_laplacian_gaussian_1d(s)
    assert fractional_laplacian_fourier_1d(s) == pytest.approx(closed, rel=1e-10)
    assert fractional_laplacian_direct(gaussian_profile(), s, 0.0, 1) == pytest.approx(closed, rel=1e-6)


def test_fraclap_gaussian_1d_off_origin():
    # Fourier oracle at x = 0.7: (1/pi) int_0^inf k^(2s) sqrt(pi) e^(-k^2/4) cos(0.7 k) dk
    from scipy.integrate import quad
    s = 0.3
    ref = quad(lambda k: k ** (2 * s) * math.sqrt(math.pi) * math.exp(-k * k / 4) * math.cos(0.7 * k),
               0, np.inf, epsabs=0, epsrel=1e-12)[0] / math.pi
    assert fractional_laplacian_direct(gaussian_profile(), s, 0.7, 1) == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("s", [0.25, 0.5])
def test_fraclap_gaussian_2d_origin(s):
    ref = 4**s * math.gamma(1 + s)
    got = fractional_laplacian_direct(gaussian_profile(), s, np.array([0.0, 0.0]), 2)
    assert got == pytest.approx(ref, rel=1e-6)


def test_scaling_identity_few_pairs():
    for n in (1, 2):
        rows = scaling_identity_pairs(n, count=2, seed=3)
        assert max(r["rel_err"] for r in rows) < 1e-5


def test_fraclap_power_bound_one_dimension():
    rep = verify_lemma_bound_9(0.25, 1, points=100)
    assert rep.passed
    assert math.isfinite(rep.details["ratio_at_0"])
    assert rep.C_max <= 1.02 * far_field_constant(0.25, 1, 1.5)


def test_fraclap_power_bound_grid_stability():
    radii = np.array([0.0, 0.5, 1.0, 2.0, 10.0, 50.0])
    a = verify_lemma_bound_9(0.5, 1, radii=radii)
    fine = np.concatenate([radii, np.linspace(0.05, 1.95, 40)])
    b = verify_lemma_bound_9(0.5, 1, radii=np.sort(fine))
    assert a.C_max == pytest.approx(b.C_max, rel=0.02)


def test_fraclap_power_bound_rejects_nonpositive_exponent():
    with pytest.raises(DomainError):
        verify_lemma_bound_9(0.25, 1, exponent=0.0)
    with pytest.raises(DomainError):
        verify_lemma_bound_9(0.7, 1)


def test_far_field_constant_only_for_default_exponent():
    assert math.isnan(far_field_constant(0.25, 1, 2.0))
    assert far_field_constant(0.5, 1, 2.0) > 0


def test_derivative_power_bound_values():
    rep = verify_lemma_bound_8(4.0, 1, radii=np.array([0.0, 0.5, 2.0]))
    assert rep.details["inner_max"] == 0.0
    assert rep.C_max == pytest.approx(2**1.25)
    assert verify_lemma_bound_8(3.0, 2, n=2).passed
    with pytest.raises(DomainError):
        verify_lemma_bound_8(3.0, 3)


@pytest.mark.parametrize("n,sigma", [(1, 0.25), (2, 0.5), (2, 0.0)])
def test_moment_slopes(n, sigma):
    out = moment_asymptotics(n, sigma)
    assert out["passed"]
    assert out["Phi1"]["slope"] == pytest.approx(n / 2 + 1 - sigma, abs=0.05)
    if sigma == 0:
        assert out["Phi2"] is None


def test_moment_slopes_independent_of_delta():
    lo, _ = delta_interval(1, 0.25)
    for d in (lo + 0.02, 0.95):
        assert moment_asymptotics(1, 0.25, delta=d)["passed"]


def test_envelopes_vanish_where_expected():
    out = derivative_envelopes(TestFunctionFamily.default(1, 0.25, R=100.0))
    assert out["passed"]
    assert out["dt_early_max"] == 0.0
    assert out["laplacian_inside_max"] == 0.0


def test_envelope_ladder():
    half = envelope_ladder(1, 0.5)
    assert half["passed"] and half["combined_spread"] < 0.1
    quarter = envelope_ladder(1, 0.25)
    assert quarter["passed"]
    combined = [r["combined"] for r in quarter["rows"]]
    assert combined[-1] <= combined[0]


def test_power_profile_tail_metadata():
    prof = phi_power_profile(2.5, R=4.0)
    assert prof.decay[0] == pytest.approx(2.5)
    assert prof.value(np.array([0.0]))[0] == pytest.approx(phi_radial(0.0))
