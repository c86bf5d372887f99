import math

import mpmath
import numpy as np
import pytest

from fractodamp.errors import DomainError, ShapeError
from fractodamp.grid import GridSpec, to_fourier, to_physical
from fractodamp.kernels import (PropagatorCache, apply_propagator, branch_point, eval_kernels,
                                kernel_arrays, kernel_ode_residual, kernel_table)


def mp_kernels(t, xi, sigma):
    """Displacement/velocity propagators from the characteristic roots, 50 digits."""
    mpmath.mp.dps = 50
    t, xi = mpmath.mpf(t), mpmath.mpf(xi)
    d = xi ** (2 * mpmath.mpf(sigma)) if xi > 0 or sigma > 0 else mpmath.mpf(1)
    disc = mpmath.sqrt(mpmath.mpc(d * d - 4 * xi * xi))
    l1, l2 = (-d + disc) / 2, (-d - disc) / 2
    e1, e2 = mpmath.exp(l1 * t), mpmath.exp(l2 * t)
    R0 = (l1 * e2 - l2 * e1) / (l1 - l2)
    R1 = (e1 - e2) / (l1 - l2)
    return float(mpmath.re(R0)), float(mpmath.re(R1))


@pytest.mark.parametrize("sigma", [0.0, 0.25, 0.4, 0.5])
@pytest.mark.parametrize("xi", [0.05, 0.3, 0.9, 3.0])
@pytest.mark.parametrize("t", [0.1, 1.0, 7.5])
def test_against_high_precision_roots(t, xi, sigma):
    if branch_point(sigma) is not None and abs(xi - branch_point(sigma)) < 1e-3:
        pytest.skip("roots coincide")
    k = eval_kernels(t, xi, sigma)
    R0, R1 = mp_kernels(t, xi, sigma)
    assert k.R0 == pytest.approx(R0, rel=1e-10, abs=1e-14)
    assert k.R1 == pytest.approx(R1, rel=1e-10, abs=1e-14)
    # K0 is the symmetric part: R0 = K0 + (d/2) K1
    d = xi ** (2 * sigma)
    assert k.K0 == pytest.approx(R0 - d / 2 * R1, rel=1e-9, abs=1e-14)


def test_initial_values_exact():
    xi = np.geomspace(1e-4, 1e3, 300)
    for sigma in (0.0, 0.2, 0.5):
        k = kernel_arrays(0.0, xi, sigma)
        assert np.all(k["K0"] == 1.0)
        assert np.all(k["K1"] == 0.0)
        assert np.all(k["R0"] == 1.0)


def test_ode_residual_small():
    rng = np.random.default_rng(1)
    worst = max(kernel_ode_residual(rng.uniform(0.01, 20), 10 ** rng.uniform(-2, 1.5),
                                    rng.uniform(0, 0.5)) for _ in range(100))
    assert worst < 1e-5


def test_frictional_zero_frequency_limit():
    # xi = 0, sigma = 0: w'' + w' = 0
    k = eval_kernels(2.0, 0.0, 0.0)
    assert k.K0 == pytest.approx((1 + math.exp(-2.0)) / 2)
    assert k.K1 == pytest.approx(1 - math.exp(-2.0))


def test_sigma_positive_zero_frequency_is_free():
    # no damping, no restoring force: w(t) = w0 + t w1
    k = eval_kernels(3.0, 0.0, 0.25)
    assert (k.K0, k.K1) == pytest.approx((1.0, 3.0))


@pytest.mark.parametrize("sigma", [0.0, 0.25, 0.4])
def test_branch_point_continuity(sigma):
    bp = branch_point(sigma)
    # perturb through Delta (1 - 4 xi^(2-4 sigma)) by about 1e-12
    dxi = 1e-12 * bp / (4 * (2 - 4 * sigma))
    for t in (0.5, 5.0, 20.0):
        lo = kernel_arrays(t, np.array([bp - dxi]), sigma)
        mid = kernel_arrays(t, np.array([bp]), sigma)
        hi = kernel_arrays(t, np.array([bp + dxi]), sigma)
        for key in ("K0", "K1", "R0"):
            ref = abs(mid[key][0])
            assert abs(lo[key][0] - mid[key][0]) <= 1e-9 * ref
            assert abs(hi[key][0] - mid[key][0]) <= 1e-9 * ref


def test_branch_point_values():
    assert branch_point(0.0) == 0.5
    assert branch_point(0.25) == pytest.approx(0.25)
    assert branch_point(0.5) is None


def test_no_overflow_for_large_times():
    k = kernel_arrays(1e6, np.geomspace(1e-6, 1e3, 100), 0.0)
    for v in k.values():
        assert np.all(np.isfinite(v))


def test_sigma_domain():
    with pytest.raises(DomainError):
        eval_kernels(1.0, 1.0, 0.6)


def test_derivatives_consistent():
    h = 1e-5
    for sigma in (0.1, 0.5):
        xi = np.array([0.2, 1.5])
        k = kernel_arrays(1.3, xi, sigma, derivatives=True)
        kp = kernel_arrays(1.3 + h, xi, sigma)
        km = kernel_arrays(1.3 - h, xi, sigma)
        for name in ("K0", "K1", "R0"):
            fd = (kp[name] - km[name]) / (2 * h)
            assert np.allclose(k["d" + name], fd, rtol=1e-6, atol=1e-9)


def test_propagator_matches_plane_wave():
    grid = GridSpec(1, math.pi, 64)  # box [-pi, pi): integer wavenumbers
    x = grid.coords
    u0 = np.cos(3 * x)
    w0, w1 = to_fourier(u0), np.zeros(grid.shape, complex)
    w, wt = apply_propagator(w0, w1, 2.0, 0.25, grid)
    k = eval_kernels(2.0, 3.0, 0.25)
    assert np.allclose(to_physical(w), k.R0 * u0, atol=1e-12)
    assert np.allclose(to_physical(wt), k.dR0 * u0, atol=1e-12)


def test_propagator_cache_reuses_entries():
    grid = GridSpec(1, 16.0, 32)
    cache = PropagatorCache(grid, 0.25, maxsize=2)
    a = cache.get(0.1)
    assert cache.get(0.1)[0] is a[0]
    cache.get(0.2)
    cache.get(0.3)
    assert cache.get(0.1)[0] is not a[0]


def test_propagator_shape_check():
    grid = GridSpec(1, 16.0, 32)
    with pytest.raises(ShapeError):
        apply_propagator(np.zeros(16, complex), np.zeros(16, complex), 1.0, 0.0, grid)


def test_table_rows_and_branch_column():
    rows = kernel_table(0.25, [0.0, 1.0], 1e-2, 10.0, 20)
    assert len(rows) == 2 * 21  # branch point inserted
    assert any(abs(r["xi"] - 0.25) < 1e-15 for r in rows)
    for r in rows:
        if r["t"] == 0.0:
            assert (r["K0"], r["K1"]) == (1.0, 0.0)
