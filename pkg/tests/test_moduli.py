import math

import mpmath
import numpy as np
import pytest
import sympy as sp

from fractodamp.errors import ConfigError, DomainError, PreconditionError
from fractodamp.moduli import (Constant, IteratedLog, LifespanModel, PowerLog, PurePower,
                               RegularityMode, SystemParams, Tabulated, Verdict, Psi_accumulated,
                               beta_exponent, check_regularity, classify_system, critical_integral,
                               curve_q_from_p, ell_weight, eval_modulus, lifespan_bound,
                               modulus_derivative, modulus_from_dict, numeric_divergence, p_crit,
                               psi, psi_inverse, psi_shift_constant, s_shift)

# ---------------------------------------------------------------------------
# evaluation


def test_powerlog_unit_at_inverse_e():
    # the default cutoff 0.1 lies below 1/e, so widen it
    assert eval_modulus(PowerLog(1.0, cutoff=0.5), math.exp(-1)) == pytest.approx(1.0)


def test_powerlog_two_against_mpmath():
    mpmath.mp.dps = 40
    s = math.exp(-2)
    ref = float(mpmath.log(1 / mpmath.mpf(s)) ** -2)
    assert eval_modulus(PowerLog(2.0, cutoff=0.5), s) == pytest.approx(ref, rel=1e-14)
    assert ref == pytest.approx(0.25)


def test_constant_everywhere():
    assert np.all(Constant()(np.array([0.0, 1e-30, 0.05, 3.0])) == 1.0)


def test_zero_and_extension():
    mu = PowerLog(1.5)
    assert mu(0.0) == 0.0
    assert mu(0.7) == mu(mu.cutoff)


def test_below_floor_raises():
    with pytest.raises(DomainError):
        PowerLog(1.0)(1e-320)
    assert PowerLog(1.0)(1e-320, below_floor="zero") == 0.0


def test_iterated_log_cutoff_validation():
    with pytest.raises(DomainError):
        IteratedLog(2, 1.0, cutoff=0.5)  # log log 2 < 0
    mu = IteratedLog(2, 1.0, cutoff=0.05)
    s = 1e-8
    L = math.log(1 / s)
    assert mu(s) == pytest.approx(1 / (L * math.log(L)))


@pytest.mark.parametrize("mu", [PowerLog(1.0), PowerLog(3.0), IteratedLog(2, 0.5, 0.01),
                                PurePower(0.5), Tabulated((1e-6, 1e-3, 0.1), (0.1, 0.3, 0.9))])
def test_monotone_on_grid(mu):
    s = np.geomspace(max(mu.floor, 1e-200), mu.cutoff, 1000)
    assert np.all(np.diff(mu(s)) >= 0)


def test_derivatives_against_sympy():
    x = sp.symbols("x", positive=True)
    for alpha in (1.0, 2.5):
        expr = sp.log(1 / x) ** (-alpha)
        for order in (1, 2):
            f = sp.lambdify(x, sp.diff(expr, x, order))
            for s in (1e-6, 1e-3, 0.05):
                assert modulus_derivative(PowerLog(alpha), s, order) == pytest.approx(f(s), rel=1e-10)


def test_simple_derivatives():
    assert modulus_derivative(PurePower(1.0), 0.03, 1) == pytest.approx(1.0)
    assert modulus_derivative(Constant(), 0.03, 1) == 0.0
    s = 1e-4
    assert modulus_derivative(PowerLog(1.0), s) == pytest.approx(1 / (s * math.log(1 / s) ** 2))


def test_derivative_domain():
    with pytest.raises(DomainError):
        modulus_derivative(PowerLog(1.0), 0.5)


def test_tabulated_finite_difference():
    mu = Tabulated((1e-6, 1e-2, 0.1), (1e-3, 1e-2, 0.04))  # a power law on each piece
    s = 1e-4
    assert modulus_derivative(mu, s) == pytest.approx(mu(s) * (1 / 4) / s, rel=1e-6)


def test_from_dict_round_trip_and_errors():
    for mu in (Constant(2.0), PowerLog(1.5, 0.2), IteratedLog(2, 0.5, 0.01), PurePower(0.3)):
        assert modulus_from_dict(mu.to_dict()) == mu
    with pytest.raises(ConfigError, match="alpah"):
        modulus_from_dict({"family": "power_log", "alpah": 1.0})
    with pytest.raises(ConfigError):
        modulus_from_dict({"family": "nope"})


# ---------------------------------------------------------------------------
# regularity


def test_regularity_constant_and_powerlog():
    r = check_regularity(Constant(), RegularityMode.BLOWUP)
    assert r.passed and r.worst_ratio == 0.0
    assert check_regularity(PowerLog(1.0), "BlowupCond").passed


def test_regularity_pure_power_ratio():
    r = check_regularity(PurePower(0.5), RegularityMode.GLOBAL)
    assert r.passed
    assert r.worst_ratio == pytest.approx(0.5, rel=1e-9)


# ---------------------------------------------------------------------------
# integrals and classification


def test_critical_integral_examples():
    assert critical_integral(Constant(), Constant(), 3.0).diverges
    d = critical_integral(PurePower(1.0), PurePower(1.0), 3.0, c=0.1)
    assert not d.diverges and d.value == pytest.approx(0.1)
    # w = (3*1 + 0.5)/4 < 1
    assert critical_integral(PowerLog(1.0), PowerLog(0.5), 3.0).diverges
    conv = critical_integral(PowerLog(2.0), PowerLog(2.0), 2.0, c=0.1)
    assert not conv.diverges and conv.value == pytest.approx(1 / math.log(10))


def test_numeric_path_agrees_with_analytic():
    num = critical_integral(PowerLog(2.0), PowerLog(2.0), 2.0, c=0.1, method="numeric")
    assert not num.diverges
    assert num.value == pytest.approx(1 / math.log(10), rel=1e-3)
    assert critical_integral(PowerLog(0.8), PowerLog(0.8), 2.0, method="numeric").diverges


def test_numeric_divergence_plain_functions():
    assert numeric_divergence(lambda s: 1 / s, 0.1).diverges
    assert not numeric_divergence(lambda s: 1.0, 0.1).diverges


@pytest.mark.parametrize("alpha,verdict", [(2.0, Verdict.GLOBAL_EXISTENCE), (1.0, Verdict.BLOW_UP)])
def test_classify_powerlog_threshold(alpha, verdict):
    sys = SystemParams.on_curve(2, 0.0, 2.0)
    assert classify_system(sys, PowerLog(alpha), PowerLog(alpha)).verdict is verdict


def test_classify_constant_blowup():
    for n, sigma, p in ((1, 0.0, 3.0), (2, 0.25, 2.0), (2, 0.5, 2.5)):
        sys = SystemParams.on_curve(n, sigma, p)
        assert classify_system(sys, Constant(), Constant()).verdict is Verdict.BLOW_UP


def test_classify_off_curve():
    with pytest.raises(PreconditionError):
        classify_system(SystemParams(0.0, 1, 3.0, 4.0), Constant(), Constant())


# ---------------------------------------------------------------------------
# curve algebra


def test_curve_examples():
    assert p_crit(1, 0.0) == 3
    assert curve_q_from_p(2.0, 2, 0.0) == pytest.approx(2.0)
    sys = SystemParams.on_curve(2, 0.25, 7 / 3)
    assert sys.q_star == pytest.approx(7 / 3)
    assert abs(sys.curve_residual) < 1e-14


def test_curve_residual_random():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 3))
        sigma = float(rng.uniform(0, 0.5)) if n == 2 else float(rng.uniform(0, 0.24))
        pc = p_crit(n, sigma)
        lo = 2 / (n - 2 * sigma)  # the curve needs (n - 2 sigma) p > 2
        p = float(rng.uniform(lo + 1e-3, pc))
        q = curve_q_from_p(p, n, sigma)
        assert q >= p
        assert abs(SystemParams(sigma, n, p, q).curve_residual) < 1e-12


def test_curve_domain_errors():
    with pytest.raises(DomainError):
        curve_q_from_p(1.0, 2, 0.0)
    with pytest.raises(DomainError):
        curve_q_from_p(3.0, 2, 0.0)  # q would be below p


def test_s_shift_and_beta():
    sys = SystemParams(0.0, 2, 1.5, 4.0)
    assert sys.on_critical_curve
    assert s_shift(sys) == pytest.approx(0.5)
    assert s_shift(SystemParams(0.5, 2, 1.5, 4.0)) == pytest.approx(1.0)
    # (n - 2 sigma)(p - 1)/(2 q) = 2 * 0.5 / 8
    assert beta_exponent(sys).beta == pytest.approx(1 / 8)
    b = beta_exponent(SystemParams(0.0, 2, 2.0, 2.0))
    assert b.beta == pytest.approx(0.5) and b.one_minus_beta_q == pytest.approx(0.0)
    assert s_shift(SystemParams(0.0, 2, 2.0, 2.0)) == 0.0


def test_ell_weight():
    sys = SystemParams.on_curve(2, 0.25, 2.0)
    mu = PowerLog(1.0)
    assert ell_weight(5.0, sys, mu, mu) == pytest.approx(1.0)
    assert ell_weight(5.0, sys, Constant(3.0), Constant(3.0), "refined") == pytest.approx(3.0)


def test_refined_rate_on_curve():
    from fractodamp.moduli import refined_rate
    for n, sigma, p in ((1, 0.0, 2.5), (2, 0.25, 2.0), (2, 0.5, 2.7)):
        sys = SystemParams.on_curve(n, sigma, p)
        assert refined_rate(sys) == pytest.approx((n - 2 * sigma) / (2 * (1 - sigma)))


# ---------------------------------------------------------------------------
# lifespan scaling


def _sys_model(sigma=0.0, n=1, p=3.0):
    sys = SystemParams.on_curve(n, sigma, p)
    return sys, LifespanModel.for_system(sys)


def test_psi_constant_closed_form():
    sys, model = _sys_model()
    one = Constant()
    assert psi(model.R0, model, sys, one, one) == 0.0
    assert psi(1e4, model, sys, one, one) == pytest.approx(math.log(1e4 / model.R0))
    assert psi_inverse(2.0, model, sys, one, one) == pytest.approx(model.R0 * math.exp(2.0), rel=1e-9)


def test_psi_round_trip_and_monotone():
    sys, model = _sys_model(0.25, 2, 2.0)
    mu1, mu2 = PowerLog(0.5), PowerLog(1.5)
    rng = np.random.default_rng(4)
    R = np.sort(10 ** rng.uniform(1, 6, 20))
    vals = [psi(r, model, sys, mu1, mu2) for r in R]
    assert np.all(np.diff(vals) > 0)
    for r, v in zip(R, vals):
        assert psi_inverse(v, model, sys, mu1, mu2) == pytest.approx(r, rel=1e-9)


def test_psi_quadrature_matches_closed_path():
    sys, model = _sys_model(0.25, 2, 2.0)
    mu = PowerLog(1.5)
    tab = Tabulated(tuple(np.geomspace(1e-12, 0.1, 400)),
                    tuple(np.log(1 / np.geomspace(1e-12, 0.1, 400)) ** -1.5))
    a = psi(1e5, model, sys, mu, mu)
    b = psi(1e5, model, sys, tab, tab)
    assert b == pytest.approx(a, rel=1e-4)


@pytest.mark.parametrize("sigma,n,p", [(0.0, 1, 3.0), (0.25, 2, 7 / 3), (0.5, 2, 3.0)])
def test_lifespan_bound_constant(sigma, n, p):
    sys, model = _sys_model(sigma, n, p)
    one = Constant()
    for eps in (1.0, 0.7, 0.5):
        expect = (model.R0 * math.exp(eps ** -(p - 1))) ** (1 - sigma)
        assert lifespan_bound(eps, model, sys, one, one) == pytest.approx(expect, rel=1e-8)
    assert lifespan_bound(1.0, model, sys, one, one, C=0.0) == pytest.approx(model.R0 ** (1 - sigma))


def test_lifespan_bound_constant_unequal():
    sys, model = _sys_model(0.25, 2, 2.0)
    p, q = sys.p_star, sys.q_star
    alpha = max(p * (p * q - 1) / (p + 1), q * (p * q - 1) / (q + 1))
    assert model.alpha_life == pytest.approx(alpha)
    one = Constant()
    expect = (model.R0 * math.exp(0.8 ** -alpha)) ** 0.75
    assert lifespan_bound(0.8, model, sys, one, one) == pytest.approx(expect, rel=1e-8)


def test_lifespan_bound_decreasing_in_eps():
    sys, model = _sys_model(0.25, 2, 2.0)
    mu = PowerLog(0.5)
    T = [lifespan_bound(e, model, sys, mu, mu) for e in (0.9, 0.8, 0.7, 0.6)]
    assert np.all(np.diff(T) > 0)


def test_Psi_accumulated_basics():
    sys, _ = _sys_model(0.25, 2, 2.0)
    one = Constant()
    assert Psi_accumulated(0.0, sys, one, one) == 0.0
    assert Psi_accumulated(7.0, sys, one, one, gamma=0.3) == pytest.approx(math.log(8.0))
    mu = PowerLog(1.0)
    for t in (1.0, 10.0, 1e3):
        assert Psi_accumulated(t, sys, mu, mu) <= math.log1p(t) * mu(mu.cutoff) * (1 + 1e-12)


def test_Psi_psi_change_of_variables():
    # Psi(t) = (1 - sigma) [psi(C4 (1+t)^(1/(1-sigma))) - psi(C4)]
    for sigma, n, p in ((0.0, 1, 3.0), (0.25, 2, 2.0), (0.5, 2, 2.5)):
        sys = SystemParams.on_curve(n, sigma, p)
        model = LifespanModel.for_system(sys, R0=1.0, C_scale=1.0)
        mu1, mu2 = PowerLog(0.7), PowerLog(1.3)
        C1 = 0.05
        C4 = psi_shift_constant(sys, model, C1)
        for t in (0.5, 10.0, 1e4):
            lhs = Psi_accumulated(t, sys, mu1, mu2, C1=C1)
            rhs = (1 - sigma) * (psi(C4 * (1 + t) ** (1 / (1 - sigma)), model, sys, mu1, mu2)
                                 - psi(C4, model, sys, mu1, mu2))
            assert lhs == pytest.approx(rhs, rel=1e-6)


def test_system_validation():
    with pytest.raises(DomainError):
        SystemParams(0.6, 2, 2.0, 2.0)
    with pytest.raises(DomainError):
        SystemParams(0.0, 2, 3.0, 2.0)  # p* > q*
