"""Pseudospectral integration of the coupled system on a periodic box.

    u_tt - Lap u + (-Lap)^sigma u_t = |v|^p mu1(|v|)
    v_tt - Lap v + (-Lap)^sigma v_t = |u|^q mu2(|u|)

The time stepper is a Lawson (integrating factor) version of Heun's method:
the linear part is propagated exactly by the Fourier multipliers, and the
Duhamel term is treated by a predictor-corrector pair whose difference gives
the local error estimate for step-size control.
"""
from __future__ import annotations

import csv
import enum
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError, DomainError, ShapeError
from .grid import GridSpec, to_fourier, to_physical
from .kernels import PropagatorCache, check_sigma
from .moduli import Constant, Modulus, SystemParams

HISTORY_COLUMNS = ("t", "L2_u", "H1_u", "Linf_u", "L2_v", "H1_v", "Linf_v")
SYMMETRY_TOL = 1e-12


def _reflect(c: np.ndarray) -> np.ndarray:
    """``c(-k)`` in FFT ordering."""
    out = c
    for ax in range(c.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


@dataclass
class FieldState:
    t: float
    u: np.ndarray
    ut: np.ndarray
    v: np.ndarray
    vt: np.ndarray
    real: bool = True

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.u, self.ut, self.v, self.vt)

    def copy(self) -> "FieldState":
        return FieldState(self.t, *(a.copy() for a in self.arrays()), real=self.real)

    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(a))) for a in self.arrays())

    def symmetry_error(self) -> float:
        """Largest ``|c(-k) - conj(c(k))|`` relative to the largest coefficient."""
        worst = 0.0
        for a in self.arrays():
            scale = float(np.abs(a).max())
            if scale > 0:
                worst = max(worst, float(np.abs(_reflect(a) - np.conj(a)).max()) / scale)
        return worst

    def check(self, grid: GridSpec) -> None:
        for name, a in zip(("u", "ut", "v", "vt"), self.arrays()):
            grid.check(a, name)


# ---------------------------------------------------------------------------
# initial data


class DataKind(str, enum.Enum):
    GAUSSIAN_BUMP = "gaussian_bump"
    VELOCITY = "zero_displacement_positive_velocity"


@dataclass(frozen=True)
class InitialData:
    kind: DataKind | str = DataKind.VELOCITY
    amplitude: float = 1.0
    width: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", DataKind(self.kind))
        except ValueError:
            raise ConfigError(f"unknown initial data kind {self.kind!r}; expected one of "
                              f"{[k.value for k in DataKind]}") from None
        if not self.width > 0:
            raise ConfigError("initial data width must be positive")

    def to_dict(self):
        return {"kind": self.kind.value, "amplitude": self.amplitude, "width": self.width,
                "center": self.center}


def gaussian(grid: GridSpec, width: float, center: float = 0.0) -> np.ndarray:
    mesh = grid.mesh()
    r2 = sum((X - center) ** 2 for X in mesh)
    return np.exp(-r2 / width**2)


def make_initial_data(data: InitialData, eps: float, grid: GridSpec) -> FieldState:
    """Fourier-space Cauchy data ``eps * (u0, u1, v0, v1)``."""
    if data.width > grid.L / 4:
        raise ConfigError(f"width {data.width} exceeds L/4 = {grid.L / 4}: box too small")
    if eps < 0:
        raise ConfigError("eps must be >= 0")
    g = to_fourier(eps * data.amplitude * gaussian(grid, data.width, data.center))
    zero = np.zeros(grid.shape, dtype=complex)
    if data.kind is DataKind.VELOCITY:
        return FieldState(0.0, zero, g, zero.copy(), g.copy())
    return FieldState(0.0, g, zero, g.copy(), zero.copy())


# ---------------------------------------------------------------------------
# nonlinearity, norms


def nonlinearity(values: np.ndarray, p_star: float, mu: Modulus) -> np.ndarray:
    """``|w|**p * mu(|w|)``; arguments below a log family's floor contribute 0."""
    w = np.abs(np.asarray(values, dtype=float))
    if not np.all(np.isfinite(w)):
        raise DomainError("nonlinearity received non-finite values")
    return w**p_star * mu(w, below_floor="zero")


def field_norms(c: np.ndarray, grid: GridSpec, drop_mean: bool = False,
                physical: np.ndarray | None = None) -> tuple[float, float, float]:
    if drop_mean:
        c = c.copy()
        c.flat[0] = 0
        physical = None
    a2 = np.abs(c) ** 2
    l2 = math.sqrt(grid.volume * float(a2.sum()))
    h1 = math.sqrt(grid.volume * float((grid.xi**2 * a2).sum()))
    if physical is None:
        physical = to_physical(c)
    return l2, h1, float(np.abs(physical).max())


def norms(state: FieldState, grid: GridSpec, drop_mean: bool = False) -> dict[str, float]:
    """L2, gradient L2 and sup norms of u and v (Parseval for the first two)."""
    out = {}
    for name, c in (("u", state.u), ("v", state.v)):
        l2, h1, li = field_norms(c, grid, drop_mean)
        out[f"L2_{name}"] = l2
        out[f"H1_{name}"] = h1
        out[f"Linf_{name}"] = li
    return out


# ---------------------------------------------------------------------------
# stepping


class _Rhs:
    """Dealiased nonlinear forcing for the velocity components."""

    def __init__(self, grid: GridSpec, sys: SystemParams, mu1: Modulus, mu2: Modulus):
        self.grid = grid
        self.p = sys.p_star
        self.q = sys.q_star
        self.mu1 = mu1
        self.mu2 = mu2
        self.mask = grid.dealias_mask
        self.alias_fraction = 0.0

    def __call__(self, u_hat: np.ndarray, v_hat: np.ndarray, physical=None):
        if physical is None:
            physical = (to_physical(u_hat), to_physical(v_hat))
        u, v = physical
        fu = to_fourier(nonlinearity(v, self.p, self.mu1))
        fv = to_fourier(nonlinearity(u, self.q, self.mu2))
        for f in (fu, fv):
            total = float(np.sum(np.abs(f) ** 2))
            if total > 0:
                cut = float(np.sum(np.abs(f[~self.mask]) ** 2))
                self.alias_fraction = max(self.alias_fraction, cut / total)
        return fu * self.mask, fv * self.mask


def _propagate(cache: PropagatorCache, h: float, u, ut, v, vt):
    R0, R1, dR0, dR1 = cache.get(h)
    return (R0 * u + R1 * ut, dR0 * u + dR1 * ut, R0 * v + R1 * vt, dR0 * v + dR1 * vt)


def _lawson_heun(state: FieldState, h: float, cache: PropagatorCache, rhs: _Rhs, physical=None):
    u, ut, v, vt = state.arrays()
    fu, fv = rhs(u, v, physical)
    pred = _propagate(cache, h, u, ut + h * fu, v, vt + h * fv)
    base = _propagate(cache, h, u, ut + 0.5 * h * fu, v, vt + 0.5 * h * fv)
    gu, gv = rhs(pred[0], pred[2])
    new = (base[0], base[1] + 0.5 * h * gu, base[2], base[3] + 0.5 * h * gv)
    return FieldState(state.t + h, *new, real=state.real), pred


def step(state: FieldState, dt: float, sys: SystemParams, mu1: Modulus, mu2: Modulus,
         grid: GridSpec, cache: PropagatorCache | None = None) -> FieldState:
    """One second-order exponential (Lawson-Heun) step of size ``dt``."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    state.check(grid)
    if cache is None:
        cache = PropagatorCache(grid, sys.sigma, maxsize=1)
    new, _ = _lawson_heun(state, dt, cache, _Rhs(grid, sys, mu1, mu2))
    if not new.is_finite():
        raise OverflowError(f"non-finite coefficients after a step of size {dt:g} at t={state.t:g}")
    return new


# ---------------------------------------------------------------------------
# run loop


class RunStatus(str, enum.Enum):
    REACHED_TMAX = "ReachedTmax"
    BLOW_UP = "BlowUp"
    STEP_UNDERFLOW = "StepUnderflow"
    CENSORED = "Censored"


@dataclass(frozen=True)
class SolverControls:
    dt0: float = 1e-2
    dt_min: float = 1e-13
    dt_max: float = 0.5
    rtol: float = 1e-6
    atol: float = 1e-12
    safety: float = 0.9
    max_growth: float = 1.5
    blow_factor: float = 1e6
    blow_threshold: float | None = None
    samples: int = 50
    sample_spacing: str = "linear"
    adaptive: bool = True
    max_steps: int = 2_000_000
    wall_budget: float | None = None
    drop_mean: bool = False

    def __post_init__(self):
        if not (self.dt0 > 0 and self.dt_min > 0 and self.dt_max > 0):
            raise ConfigError("dt0, dt_min and dt_max must be positive")
        if not self.dt_min <= self.dt0 <= self.dt_max:
            raise ConfigError("controls must satisfy dt_min <= dt0 <= dt_max")
        if not (self.rtol > 0 and self.atol >= 0):
            raise ConfigError("rtol must be positive and atol nonnegative")
        if not 0 < self.safety < 1:
            raise ConfigError("safety must lie in (0, 1)")
        if not self.max_growth > 1:
            raise ConfigError("max_growth must exceed 1")
        if not self.blow_factor > 1:
            raise ConfigError("blow_factor must exceed 1")
        if self.blow_threshold is not None and not self.blow_threshold > 0:
            raise ConfigError("blow_threshold must be positive")
        if self.samples < 2:
            raise ConfigError("samples must be >= 2")
        if self.sample_spacing not in ("linear", "log"):
            raise ConfigError("sample_spacing must be 'linear' or 'log'")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.wall_budget is not None and not self.wall_budget > 0:
            raise ConfigError("wall_budget must be positive")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class RunOutcome:
    status: RunStatus
    t_end: float
    T_detect: float | None
    history: dict[str, np.ndarray]
    diagnostics: dict[str, float] = field(default_factory=dict)
    final_state: FieldState | None = None

    def rows(self) -> list[dict[str, float]]:
        cols = list(self.history)
        return [{c: float(self.history[c][i]) for c in cols} for i in range(len(self.history["t"]))]

    def summary(self) -> dict:
        return {"status": self.status.value, "t_end": self.t_end, "T_detect": self.T_detect,
                **self.diagnostics}

    def write_history(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(HISTORY_COLUMNS))
            writer.writeheader()
            writer.writerows(self.rows())


def _sample_times(Tmax: float, controls: SolverControls) -> np.ndarray:
    if controls.sample_spacing == "log":
        ts = np.geomspace(min(controls.dt0, Tmax / 10), Tmax, controls.samples - 1)
        return np.concatenate([[0.0], ts])
    return np.linspace(0.0, Tmax, controls.samples)


def _initial_scale(ic: FieldState) -> float:
    return max(float(np.abs(to_physical(a)).max()) for a in ic.arrays())


def _quantize(dt: float, dt0: float) -> float:
    # steps live on the ladder dt0 * 2**(j/4) so that propagators can be reused
    j = math.floor(4 * math.log2(dt / dt0) + 1e-9)
    return dt0 * 2.0 ** (j / 4)


def run(ic: FieldState, sys: SystemParams | None, mu1: Modulus | None, mu2: Modulus | None,
        grid: GridSpec, Tmax: float, controls: SolverControls | None = None, *,
        linear: bool = False, sigma: float | None = None,
        sample_times: np.ndarray | None = None) -> RunOutcome:
    """Integrate to ``Tmax`` or until blow-up is detected.

    With ``linear=True`` (or ``sys=None``) the nonlinearity is switched off and
    every sample is obtained by exact propagation of the initial data; then
    ``sigma`` must be given when ``sys`` is None.  ``sample_times`` overrides
    the cadence from ``controls``.
    """
    controls = controls or SolverControls()
    if not Tmax > 0:
        raise ConfigError("Tmax must be positive")
    ic.check(grid)
    if sys is None:
        linear = True
        if sigma is None:
            raise ConfigError("sigma is required for a linear run without SystemParams")
    else:
        sigma = sys.sigma
        if sys.n != grid.n:
            raise ConfigError(f"system dimension n={sys.n} differs from grid dimension {grid.n}")
    check_sigma(sigma)
    mu1 = mu1 or Constant()
    mu2 = mu2 or Constant()
    cache = PropagatorCache(grid, sigma)
    if sample_times is None:
        samples = _sample_times(Tmax, controls)
    else:
        samples = np.unique(np.concatenate([[0.0], np.asarray(sample_times, float)]))
        if samples[0] < 0 or samples[-1] > Tmax * (1 + 1e-12):
            raise ConfigError("sample times must lie in [0, Tmax]")
    hist = {c: [] for c in HISTORY_COLUMNS}

    def record(st: FieldState, phys=None):
        hist["t"].append(st.t)
        for name, c, ph in (("u", st.u, None if phys is None else phys[0]),
                            ("v", st.v, None if phys is None else phys[1])):
            l2, h1, li = field_norms(c, grid, controls.drop_mean, ph)
            hist[f"L2_{name}"].append(l2)
            hist[f"H1_{name}"].append(h1)
            hist[f"Linf_{name}"].append(li)

    started = time.perf_counter()
    if linear:
        final = ic
        for ts in samples:
            pu = cache.apply(ic.u, ic.ut, ts - ic.t) if ts > ic.t else (ic.u, ic.ut)
            pv = cache.apply(ic.v, ic.vt, ts - ic.t) if ts > ic.t else (ic.v, ic.vt)
            final = FieldState(ts, pu[0], pu[1], pv[0], pv[1], real=ic.real)
            record(final)
        return RunOutcome(RunStatus.REACHED_TMAX, float(Tmax), None,
                          {k: np.asarray(v) for k, v in hist.items()},
                          {"steps": 0, "wall_time": time.perf_counter() - started}, final)

    rhs = _Rhs(grid, sys, mu1, mu2)
    scale = _initial_scale(ic)
    threshold = controls.blow_threshold
    if threshold is None:
        threshold = controls.blow_factor * scale if scale > 0 else math.inf

    state = ic.copy()
    phys = (to_physical(state.u), to_physical(state.v))
    record(state, phys)
    next_sample = 1
    dt = controls.dt0
    steps = rejected = 0
    min_step, max_step = math.inf, 0.0
    linf_trace: list[float] = []
    status = RunStatus.REACHED_TMAX
    T_detect = None

    while state.t < Tmax * (1 - 1e-14):
        if steps >= controls.max_steps:
            status = RunStatus.STEP_UNDERFLOW
            break
        if controls.wall_budget is not None and time.perf_counter() - started > controls.wall_budget:
            status = RunStatus.CENSORED
            break
        target = samples[next_sample] if next_sample < len(samples) else Tmax
        h = min(dt, target - state.t)
        clipped = h < dt
        with np.errstate(over="ignore", invalid="ignore"):
            new, pred = _lawson_heun(state, h, cache, rhs, phys)
            if controls.adaptive:
                err = max(float(np.abs(a - b).max()) for a, b in zip(new.arrays(), pred))
                size = max(float(np.abs(a).max()) for a in new.arrays())
                ratio = err / (controls.atol + controls.rtol * size)
            else:
                ratio = 0.0
        finite = new.is_finite() and math.isfinite(ratio)
        if not finite or ratio > 1.0:
            rejected += 1
            if not controls.adaptive:
                status = RunStatus.BLOW_UP if not finite else status
                T_detect = state.t
                break
            factor = 0.5 if not finite else max(0.2, controls.safety * ratio**-0.5)
            dt = h * factor
            if dt < controls.dt_min:
                grows = len(linf_trace) >= 3 and all(np.diff(linf_trace[-10:]) > 0)
                if grows:
                    status, T_detect = RunStatus.BLOW_UP, state.t
                else:
                    status = RunStatus.STEP_UNDERFLOW
                break
            dt = max(_quantize(dt, controls.dt0), controls.dt_min)
            continue

        state = new
        steps += 1
        min_step = min(min_step, h)
        max_step = max(max_step, h)
        phys = (to_physical(state.u), to_physical(state.v))
        linf = max(float(np.abs(phys[0]).max()), float(np.abs(phys[1]).max()))
        linf_trace.append(linf)
        del linf_trace[:-50]
        if next_sample < len(samples) and state.t >= samples[next_sample] * (1 - 1e-14):
            state.t = float(samples[next_sample])
            record(state, phys)
            next_sample += 1
        if linf > threshold:
            status, T_detect = RunStatus.BLOW_UP, state.t
            break
        if controls.adaptive:
            grow = min(controls.max_growth, controls.safety * max(ratio, 1e-12) ** -0.5)
            proposal = max(h, dt if clipped else h) * max(grow, 1.0)
            dt = min(max(_quantize(proposal, controls.dt0), controls.dt_min), controls.dt_max)

    if hist["t"][-1] < state.t:
        record(state, phys)
    diagnostics = {
        "steps": steps,
        "rejected": rejected,
        "min_step": min_step if steps else 0.0,
        "max_step": max_step,
        "alias_fraction": rhs.alias_fraction,
        "blow_threshold": threshold,
        "symmetry_error": state.symmetry_error(),
        "wall_time": time.perf_counter() - started,
    }
    return RunOutcome(status, float(state.t), T_detect, {k: np.asarray(v) for k, v in hist.items()},
                      diagnostics, state)


def fixed_step_solution(ic: FieldState, sys: SystemParams, mu1: Modulus, mu2: Modulus,
                        grid: GridSpec, T: float, n_steps: int) -> FieldState:
    cache = PropagatorCache(grid, sys.sigma, maxsize=1)
    rhs = _Rhs(grid, sys, mu1, mu2)
    h = T / n_steps
    state = ic.copy()
    for _ in range(n_steps):
        state, _ = _lawson_heun(state, h, cache, rhs)
    return state


def richardson_ratio(ic: FieldState, sys: SystemParams, mu1: Modulus, mu2: Modulus,
                     grid: GridSpec, T: float, n_steps: int = 8) -> float:
    """``|U_h - U_(h/2)| / |U_(h/2) - U_(h/4)|``; tends to 4 for a second-order scheme."""
    sols = [fixed_step_solution(ic, sys, mu1, mu2, grid, T, n_steps * 2**j) for j in range(3)]

    def dist(a: FieldState, b: FieldState) -> float:
        return math.sqrt(sum(float(np.sum(np.abs(x - y) ** 2)) for x, y in zip(a.arrays(), b.arrays())))

    return dist(sols[0], sols[1]) / dist(sols[1], sols[2])


# ---------------------------------------------------------------------------
# estimator wrapper


class DampedWaveSolver(BaseEstimator):
    """Estimator-style front end to :func:`run`.

    ``fit(state, grid)`` integrates from ``state`` and stores ``outcome_``;
    ``get_params`` gives the complete, manifest-ready parameter set.
    """

    def __init__(self, sigma=0.0, n=1, p_star=3.0, q_star=3.0, mu1=None, mu2=None, Tmax=10.0,
                 controls=None, linear=False):
        self.sigma = sigma
        self.n = n
        self.p_star = p_star
        self.q_star = q_star
        self.mu1 = mu1
        self.mu2 = mu2
        self.Tmax = Tmax
        self.controls = controls
        self.linear = linear

    def _system(self) -> SystemParams:
        try:
            return SystemParams(self.sigma, self.n, self.p_star, self.q_star)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    def fit(self, state: FieldState, grid: GridSpec):
        if not isinstance(state, FieldState):
            raise ShapeError("fit expects a FieldState")
        sys = self._system()
        self.outcome_ = run(state, sys, self.mu1 or Constant(), self.mu2 or Constant(), grid,
                            self.Tmax, self.controls or SolverControls(), linear=self.linear)
        self.grid_ = grid
        return self

    def predict(self, state: FieldState, grid: GridSpec) -> RunStatus:
        return self.fit(state, grid).outcome_.status
