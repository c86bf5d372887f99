"""Fourier multipliers of the linear structurally damped wave equation.

In Fourier variables the linear problem is the damped oscillator::

    w'' + d w' + |xi|^2 w = 0,    d = |xi|^(2 sigma).

With ``a = d t / 2`` and ``Delta = 1 - 4 |xi|^(2 - 4 sigma)`` every multiplier is
assembled from two stable building blocks::

    P = exp(-a) cosh(sqrt(Delta) a)
    H = exp(-a) sinh(sqrt(Delta) a) / (sqrt(Delta) a)

(cos/sin for ``Delta < 0``), and::

    K0 = P,  K1 = t H,  R0 = P + a H = K0 + (d/2) K1,  R1 = K1.

``R0``/``R1`` propagate displacement/velocity data.  For ``Delta > 0`` the
growing exponential is never formed: ``1 - sqrt(Delta)`` is computed as
``(1 - Delta)/(1 + sqrt(Delta))`` and ``sinh`` through ``expm1``.  Around the
branch point ``Delta = 0`` both branches are replaced by the even power series
in ``z = Delta a^2``.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .grid import GridSpec

SERIES_THRESHOLD = 1e-4
SERIES_TERMS = 6
_COSH_C = np.array([1 / math.factorial(2 * k) for k in range(SERIES_TERMS)])
_SINH_C = np.array([1 / math.factorial(2 * k + 1) for k in range(SERIES_TERMS)])


def check_sigma(sigma: float) -> None:
    if not 0 <= sigma <= 0.5:
        raise DomainError(f"sigma must lie in [0, 1/2], got {sigma}")


def branch_point(sigma: float) -> float | None:
    """``|xi|`` where ``Delta`` changes sign (None for sigma = 1/2)."""
    check_sigma(sigma)
    if sigma == 0.5:
        return None
    return 2.0 ** (-1.0 / (1 - 2 * sigma))


def _damping(xi: np.ndarray, sigma: float) -> np.ndarray:
    # numpy gives 0**0 = 1, which is the right limit for sigma = 0
    return xi ** (2 * sigma)


def _discriminant(xi: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0.5:
        return np.full_like(xi, -3.0)
    return 1 - 4 * xi ** (2 - 4 * sigma)


def _building_blocks(t, xi, sigma):
    t, xi = np.broadcast_arrays(np.asarray(t, float), np.asarray(xi, float))
    d = _damping(xi, sigma)
    delta = _discriminant(xi, sigma)
    a = d * t / 2
    z = delta * a * a
    P = np.empty(a.shape)
    H = np.empty(a.shape)

    ser = np.abs(z) < SERIES_THRESHOLD
    if np.any(ser):
        zs = z[ser]
        e = np.exp(-a[ser])
        P[ser] = e * np.polynomial.polynomial.polyval(zs, _COSH_C)
        H[ser] = e * np.polynomial.polynomial.polyval(zs, _SINH_C)

    pos = ~ser & (delta > 0)
    if np.any(pos):
        r = np.sqrt(delta[pos])
        ap = a[pos]
        slow = np.exp(-ap * (1 - delta[pos]) / (1 + r))
        fast = np.exp(-ap * (1 + r))
        P[pos] = 0.5 * (slow + fast)
        H[pos] = -slow * np.expm1(-2 * ap * r) / (2 * ap * r)

    neg = ~ser & ~pos
    if np.any(neg):
        r = np.sqrt(-delta[neg])
        an = a[neg]
        e = np.exp(-an)
        P[neg] = e * np.cos(r * an)
        H[neg] = e * np.sin(r * an) / (r * an)
    return t, xi, d, delta, a, P, H


@dataclass(frozen=True)
class KernelPoint:
    t: float
    xi: float
    sigma: float
    K0: float
    K1: float
    R0: float
    R1: float
    dK0: float = 0.0
    dK1: float = 0.0
    dR0: float = 0.0
    dR1: float = 0.0

    def to_dict(self):
        return dict(self.__dict__)


def kernel_arrays(t, xi, sigma: float, derivatives: bool = False) -> dict[str, np.ndarray]:
    """Vectorized multipliers; with ``derivatives`` also their exact time derivatives."""
    check_sigma(sigma)
    if np.any(np.asarray(t) < 0) or np.any(np.asarray(xi) < 0):
        raise DomainError("t and xi must be nonnegative")
    t, xi, d, delta, a, P, H = _building_blocks(t, xi, sigma)
    K1 = t * H
    out = {"K0": P, "K1": K1, "R0": P + a * H, "R1": K1}
    if derivatives:
        out["dK0"] = 0.5 * d * (delta * a * H - P)
        out["dK1"] = P - a * H
        out["dR0"] = -(xi * xi) * t * H
        out["dR1"] = out["dK1"]
    return out


def eval_kernels(t: float, xi: float, sigma: float) -> KernelPoint:
    k = kernel_arrays(float(t), float(xi), sigma, derivatives=True)
    return KernelPoint(float(t), float(xi), float(sigma), **{key: float(v) for key, v in k.items()})


def kernel_ode_residual(t: float, xi: float, sigma: float, h: float = 1e-4) -> float:
    """Normalized central-difference residual of the Fourier ODE for K0 and K1.

    Each residual is divided by ``max(1, |xi|^2, d^2)`` times the largest of
    ``|K|, |K'|, |K''|`` so that the result is a relative, scale-free number.
    """
    check_sigma(sigma)
    if t < 2 * h:
        raise DomainError("kernel_ode_residual needs t >= 2h")
    ts = np.array([t - h, t, t + h])
    k = kernel_arrays(ts, np.full(3, xi), sigma)
    d = float(_damping(np.asarray(xi, float), sigma))
    scale = max(1.0, xi * xi, d * d)
    worst = 0.0
    for name in ("K0", "K1"):
        km, k0, kp = k[name]
        dtt = (kp - 2 * k0 + km) / (h * h)
        dt = (kp - km) / (2 * h)
        res = dtt + d * dt + xi * xi * k0
        size = max(abs(k0), abs(dt), abs(dtt))
        if size > 0:
            worst = max(worst, abs(res) / (scale * size))
    return worst


class PropagatorCache:
    """Full-grid multiplier arrays for a fixed ``(grid, sigma)``, keyed by time.

    Kernels are evaluated once per distinct ``|xi|`` (quantized through the
    integer key ``|k|^2``) and scattered onto the grid.  The cache only grows
    through :meth:`get` and is meant to be owned by a single run.
    """

    def __init__(self, grid: GridSpec, sigma: float, maxsize: int = 16):
        check_sigma(sigma)
        self.grid = grid
        self.sigma = sigma
        self.maxsize = maxsize
        self._radii, self._inverse = grid.radial_index
        self._store: OrderedDict[float, tuple[np.ndarray, ...]] = OrderedDict()

    def get(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(R0, R1, dR0, dR1)`` on the grid at time ``t``."""
        key = float(t)
        hit = self._store.get(key)
        if hit is not None:
            self._store.move_to_end(key)
            return hit
        k = kernel_arrays(key, self._radii, self.sigma, derivatives=True)
        inv = self._inverse
        value = tuple(k[name][inv] for name in ("R0", "R1", "dR0", "dR1"))
        self._store[key] = value
        if len(self._store) > self.maxsize:
            self._store.popitem(last=False)
        return value

    def apply(self, w0: np.ndarray, w1: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        R0, R1, dR0, dR1 = self.get(t)
        return R0 * w0 + R1 * w1, dR0 * w0 + dR1 * w1


def apply_propagator(w0: np.ndarray, w1: np.ndarray, t: float, sigma: float, grid: GridSpec,
                     derivative: bool = True, cache: PropagatorCache | None = None):
    """Propagate Fourier data ``(w(0), w_t(0))`` to time ``t``.

    Returns ``(w(t), w_t(t))``, or only ``w(t)`` when ``derivative`` is False.
    """
    grid.check(w0, "w0")
    grid.check(w1, "w1")
    if t < 0:
        raise DomainError("t must be nonnegative")
    if cache is None:
        cache = PropagatorCache(grid, sigma, maxsize=1)
    elif cache.grid != grid or cache.sigma != sigma:
        raise ShapeError("propagator cache was built for a different grid or sigma")
    w, wt = cache.apply(w0, w1, t)
    return (w, wt) if derivative else w


def kernel_table(sigma: float, times, xi_min: float = 1e-3, xi_max: float = 1e2,
                 points: int = 200) -> list[dict[str, float]]:
    """Rows ``(t, xi, K0, K1, R0, R1)`` on a log grid of ``xi`` for each ``t``.

    The branch point (when there is one) is inserted as an explicit sample.
    """
    check_sigma(sigma)
    xi = np.geomspace(xi_min, xi_max, points)
    bp = branch_point(sigma)
    if bp is not None and xi_min < bp < xi_max:
        xi = np.unique(np.append(xi, bp))
    rows = []
    for t in times:
        k = kernel_arrays(float(t), xi, sigma)
        for j, x in enumerate(xi):
            rows.append({"t": float(t), "xi": float(x),
                         **{name: float(k[name][j]) for name in ("K0", "K1", "R0", "R1")}})
    return rows
