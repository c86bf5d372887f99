"""Moduli of continuity, critical-curve algebra and lifespan scaling functions.

A modulus ``mu`` multiplies the power nonlinearity, ``|v|**p * mu(|v|)``.  Every
family below is defined by a closed formula on ``(0, cutoff]`` and continued
by the constant ``mu(cutoff)`` above the cutoff, which keeps it bounded and
nondecreasing on ``[0, inf)``.

Near ``s = 0`` the named families are all of the form::

    mu(s) ~ coef * s**power * L1(s)**(-e1) * L2(s)**(-e2) * ...

with ``L1 = log(1/s)`` and ``L(j+1) = log(Lj)``.  This log signature is what
the integral criteria are decided from analytically.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import ConfigError, ConvergenceError, DomainError, InconclusiveError, PreconditionError

FLOOR = float(np.finfo(float).tiny)
DEFAULT_CUTOFF = 0.1

# |x - 1| below this counts as equality in the Bertrand-type threshold tests.
EXPONENT_TOL = 1e-12
CURVE_RTOL = 1e-12


@dataclass(frozen=True)
class LogSignature:
    coef: float
    power: float
    logs: tuple[float, ...] = ()

    def mix(self, other: "LogSignature", a: float, b: float) -> "LogSignature":
        """Signature of ``self**a * other**b``."""
        depth = max(len(self.logs), len(other.logs))
        l1 = self.logs + (0.0,) * (depth - len(self.logs))
        l2 = other.logs + (0.0,) * (depth - len(other.logs))
        logs = tuple(a * x + b * y for x, y in zip(l1, l2))
        while logs and abs(logs[-1]) <= EXPONENT_TOL:
            logs = logs[:-1]
        return LogSignature(self.coef**a * other.coef**b, a * self.power + b * other.power, logs)


def iterated_logs(s: np.ndarray, depth: int) -> list[np.ndarray]:
    """``[L1(s), ..., L_depth(s)]`` with ``L1 = log(1/s)``."""
    out = [-np.log(s)]
    for _ in range(depth - 1):
        out.append(np.log(out[-1]))
    return out


def _log_validity_threshold(depth: int) -> float:
    # Lj(s) > 0 for all j <= depth  <=>  s < exp(-E_{depth-1}), E_0 = 0, E_k = exp(E_{k-1})
    e = 0.0
    for _ in range(depth - 1):
        e = math.exp(e)
    return math.exp(-e)


class Modulus:
    """Base class; subclasses provide ``_raw`` and ``_raw_derivative`` on ``(0, cutoff]``."""

    family: str = ""
    cutoff: float
    floor: float = FLOOR

    def _raw(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _raw_derivative(self, s: np.ndarray, order: int) -> np.ndarray:
        raise NotImplementedError

    def _at_zero(self) -> float:
        return 0.0

    def signature(self) -> LogSignature | None:
        return None

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def __call__(self, s, *, below_floor: str = "raise"):
        """Evaluate the modulus.

        ``below_floor`` controls arguments in ``(0, floor)``: ``"raise"`` gives a
        DomainError, ``"zero"`` maps them to 0.
        """
        arr = np.asarray(s, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr < 0):
            raise DomainError(f"{self.family}: modulus argument must be finite and >= 0")
        out = np.empty_like(arr)
        zero = arr == 0
        tiny = (arr > 0) & (arr < self.floor)
        if np.any(tiny) and below_floor == "raise":
            raise DomainError(
                f"{self.family}: argument below the validity floor {self.floor:.3g}"
            )
        inner = (arr >= self.floor) & (arr <= self.cutoff) & ~zero
        outer = arr > self.cutoff
        out[zero] = self._at_zero()
        out[tiny] = 0.0
        if np.any(inner):
            out[inner] = self._raw(arr[inner])
        if np.any(outer):
            out[outer] = self._raw(np.array([self.cutoff]))[0]
        return float(out) if out.ndim == 0 else out

    def derivative(self, s, order: int = 1):
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        arr = np.asarray(s, dtype=float)
        if np.any(arr <= 0) or np.any(arr >= self.cutoff) or np.any(arr < self.floor):
            raise DomainError(f"{self.family}: derivative requires s in (0, {self.cutoff})")
        out = self._raw_derivative(arr, order)
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Constant(Modulus):
    value: float = 1.0
    cutoff: float = DEFAULT_CUTOFF
    family = "constant"
    floor = 0.0

    def __post_init__(self):
        if not self.value > 0:
            raise DomainError("constant modulus must be positive")
        _check_cutoff(self.cutoff)

    def _raw(self, s):
        return np.full_like(s, self.value)

    def _raw_derivative(self, s, order):
        return np.zeros_like(s)

    def _at_zero(self):
        return self.value

    def signature(self):
        return LogSignature(self.value, 0.0, ())

    def to_dict(self):
        return {"family": self.family, "value": self.value, "cutoff": self.cutoff}


@dataclass(frozen=True)
class PowerLog(Modulus):
    """``(log 1/s)**(-alpha)``."""

    alpha: float
    cutoff: float = DEFAULT_CUTOFF
    family = "power_log"

    def __post_init__(self):
        if not self.alpha >= 0:
            raise DomainError("power_log exponent alpha must be >= 0")
        _check_cutoff(self.cutoff, upper=1.0)

    def _raw(self, s):
        return (-np.log(s)) ** (-self.alpha)

    def _raw_derivative(self, s, order):
        a = self.alpha
        L = -np.log(s)
        if order == 1:
            return a * L ** (-a - 1) / s
        return a * L ** (-a - 2) / s**2 * ((a + 1) - L)

    def signature(self):
        return LogSignature(1.0, 0.0, (self.alpha,) if self.alpha else ())

    def to_dict(self):
        return {"family": self.family, "alpha": self.alpha, "cutoff": self.cutoff}


@dataclass(frozen=True)
class IteratedLog(Modulus):
    """``L1**-1 * ... * L(m-1)**-1 * Lm**(-alpha)`` with iterated logarithms of 1/s."""

    depth: int
    alpha: float
    cutoff: float = DEFAULT_CUTOFF
    family = "iterated_log"

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 1:
            raise DomainError("iterated_log depth must be a positive integer")
        if not self.alpha > 0:
            raise DomainError("iterated_log exponent alpha must be > 0")
        limit = _log_validity_threshold(self.depth)
        if limit <= FLOOR:
            raise DomainError(f"iterated_log depth {self.depth} is not representable in double precision")
        _check_cutoff(self.cutoff, upper=limit)

    @property
    def exponents(self) -> tuple[float, ...]:
        return (1.0,) * (self.depth - 1) + (float(self.alpha),)

    def _raw(self, s):
        out = np.ones_like(s)
        for L, e in zip(iterated_logs(s, self.depth), self.exponents):
            out = out * L ** (-e)
        return out

    def _raw_derivative(self, s, order):
        Ls = iterated_logs(s, self.depth)
        P = np.ones_like(s)
        D, dD = [], []
        running = np.zeros_like(s)
        for L in Ls:
            P = P * L
            Dj = -1.0 / (s * P)  # L_j' / L_j
            running = running + Dj
            D.append(Dj)
            dD.append((1.0 + s * running) / (s**2 * P))
        e = self.exponents
        g = -sum(ej * Dj for ej, Dj in zip(e, D))
        mu = self._raw(s)
        if order == 1:
            return mu * g
        dg = -sum(ej * dDj for ej, dDj in zip(e, dD))
        return mu * (g**2 + dg)

    def signature(self):
        return LogSignature(1.0, 0.0, self.exponents)

    def to_dict(self):
        return {"family": self.family, "depth": self.depth, "alpha": self.alpha, "cutoff": self.cutoff}


@dataclass(frozen=True)
class PurePower(Modulus):
    """``s**delta``."""

    delta: float
    cutoff: float = DEFAULT_CUTOFF
    family = "pure_power"
    floor = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("pure_power exponent delta must be > 0")
        _check_cutoff(self.cutoff)

    def _raw(self, s):
        return s**self.delta

    def _raw_derivative(self, s, order):
        d = self.delta
        if order == 1:
            return d * s ** (d - 1)
        return d * (d - 1) * s ** (d - 2)

    def signature(self):
        return LogSignature(1.0, float(self.delta), ())

    def to_dict(self):
        return {"family": self.family, "delta": self.delta, "cutoff": self.cutoff}


@dataclass(frozen=True)
class Tabulated(Modulus):
    """Sampled modulus, interpolated piecewise-linearly in log-log coordinates.

    Below the first sample the first segment's power law is extended, so
    ``mu(s) -> 0`` whenever that segment has positive slope.
    """

    points: tuple[float, ...]
    values: tuple[float, ...]
    cutoff: float | None = None
    family = "tabulated"

    def __post_init__(self):
        s = np.asarray(self.points, float)
        m = np.asarray(self.values, float)
        if s.ndim != 1 or s.shape != m.shape or s.size < 2:
            raise DomainError("tabulated modulus needs two equal-length sample arrays (>= 2 points)")
        if np.any(s <= 0) or np.any(np.diff(s) <= 0):
            raise DomainError("tabulated sample points must be positive and strictly increasing")
        if np.any(m <= 0) or np.any(np.diff(m) < 0):
            raise DomainError("tabulated values must be positive and nondecreasing")
        object.__setattr__(self, "points", tuple(float(x) for x in s))
        object.__setattr__(self, "values", tuple(float(x) for x in m))
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", float(s[-1]))
        _check_cutoff(self.cutoff, upper=float(s[-1]) * (1 + 1e-12))

    def _raw(self, s):
        ls = np.log(np.asarray(self.points))
        lm = np.log(np.asarray(self.values))
        x = np.log(np.atleast_1d(np.asarray(s, float)))
        out = np.interp(x, ls, lm)
        slope = (lm[1] - lm[0]) / (ls[1] - ls[0])
        low = x < ls[0]
        out[low] = lm[0] + slope * (x[low] - ls[0])
        out = np.exp(out)
        return out.reshape(np.shape(s))

    def _raw_derivative(self, s, order):
        h = s * 1e-5
        if order == 1:
            return (self._raw(s + h) - self._raw(s - h)) / (2 * h)
        return (self._raw(s + h) - 2 * self._raw(s) + self._raw(s - h)) / h**2

    def to_dict(self):
        return {"family": self.family, "points": list(self.points), "values": list(self.values),
                "cutoff": self.cutoff}


def _check_cutoff(c: float, upper: float = 1.0) -> None:
    if not 0 < c < upper:
        raise DomainError(f"cutoff must lie in (0, {upper:.6g}), got {c}")


_FAMILIES: dict[str, type[Modulus]] = {
    "constant": Constant,
    "power_log": PowerLog,
    "iterated_log": IteratedLog,
    "pure_power": PurePower,
    "tabulated": Tabulated,
}


def modulus_from_dict(doc: dict[str, Any]) -> Modulus:
    """Build a modulus from a config table; unknown keys are rejected."""
    from .config import build_dataclass  # local import: config depends on this module

    doc = dict(doc)
    try:
        family = doc.pop("family")
    except KeyError:
        raise ConfigError("modulus table requires a 'family' key") from None
    if family not in _FAMILIES:
        raise ConfigError(f"unknown modulus family {family!r}; expected one of {sorted(_FAMILIES)}")
    cls = _FAMILIES[family]
    if family == "tabulated":
        doc = {**doc, "points": tuple(doc.get("points", ())), "values": tuple(doc.get("values", ()))}
    return build_dataclass(cls, doc, where=f"modulus[{family}]")


def eval_modulus(spec: Modulus, s):
    return spec(s)


def modulus_derivative(spec: Modulus, s, order: int = 1):
    return spec.derivative(s, order)


# ---------------------------------------------------------------------------
# regularity checks


class RegularityMode(str, enum.Enum):
    BLOWUP = "BlowupCond"      # s^k mu^(k) = O(mu),          k = 1, 2
    LIFESPAN = "LifespanCond"  # s^k mu^(k) = O(mu^(k-1)),    k = 1, 2
    GLOBAL = "GlobalCond"      # s mu' = O(mu)


@dataclass
class RegularityReport:
    mode: RegularityMode
    passed: bool
    worst_ratio: float
    worst_s: float
    tail_slope: float

    def to_dict(self):
        return {"mode": self.mode.value, "passed": self.passed, "worst_ratio": self.worst_ratio,
                "worst_s": self.worst_s, "tail_slope": self.tail_slope}


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.abs(num)
    den = np.abs(den)
    out = np.zeros_like(num)
    nz = num > 0
    with np.errstate(divide="ignore"):
        out[nz] = num[nz] / den[nz]
    return out


def check_regularity(spec: Modulus, mode: RegularityMode | str, *, s_min: float = 1e-12,
                     points: int = 1000, slope_threshold: float = -0.01) -> RegularityReport:
    """Bounded-ratio proxy for the small-s big-O conditions on a modulus.

    The ratio is sampled on a log grid over ``[s_min, cutoff)``.  The check
    passes when every ratio is finite and the least-squares slope of
    ``log(ratio)`` against ``log(s)`` over the smallest decade is at least
    ``slope_threshold`` (a negative slope means growth as ``s -> 0``).
    """
    mode = RegularityMode(mode)
    hi = spec.cutoff * (1 - 1e-9)
    lo = max(s_min, spec.floor)
    if not lo < hi:
        raise DomainError("modulus cutoff is below the regularity grid")
    s = np.geomspace(lo, hi, points)
    mu = spec(s)
    d1 = spec.derivative(s, 1)
    d2 = spec.derivative(s, 2)
    r1 = _safe_ratio(s * d1, mu)
    if mode is RegularityMode.GLOBAL:
        ratio = r1
    elif mode is RegularityMode.BLOWUP:
        ratio = np.maximum(r1, _safe_ratio(s**2 * d2, mu))
    else:
        ratio = np.maximum(r1, _safe_ratio(s**2 * d2, d1))
    finite = bool(np.all(np.isfinite(ratio)))
    i = int(np.argmax(np.where(np.isfinite(ratio), ratio, np.inf)))
    tail = s <= lo * 10
    rt = ratio[tail]
    if finite and np.all(rt > 0):
        slope = float(np.polyfit(np.log(s[tail]), np.log(rt), 1)[0])
    else:
        slope = 0.0 if finite and np.all(rt == 0) else float("nan")
    passed = finite and (slope >= slope_threshold)
    return RegularityReport(mode, bool(passed), float(ratio[i]), float(s[i]), slope)


# ---------------------------------------------------------------------------
# integral criteria


@dataclass
class Divergence:
    diverges: bool
    value: float | None
    method: str
    weight: float | None = None

    def to_dict(self):
        return {"diverges": self.diverges, "value": self.value, "method": self.method,
                "weight": self.weight}


def mixed_modulus(mu1: Modulus, mu2: Modulus, q_star: float) -> Callable[[np.ndarray], np.ndarray]:
    """``x -> mu1(x)**(q/(q+1)) * mu2(x)**(1/(q+1))``."""
    a = q_star / (q_star + 1)
    b = 1 / (q_star + 1)

    def g(x):
        return (np.asarray(mu1(x, below_floor="zero")) ** a
                * np.asarray(mu2(x, below_floor="zero")) ** b)

    return g


def bertrand_diverges(sig: LogSignature) -> bool:
    """Does ``int_0 s**(power-1) * prod Lj**(-ej) ds`` diverge?"""
    if sig.power > EXPONENT_TOL:
        return False
    if sig.power < -EXPONENT_TOL:
        return True
    for e in sig.logs:
        if abs(e - 1) > EXPONENT_TOL:
            return e < 1
    return True


def _analytic_value(sig: LogSignature, c: float) -> float | None:
    if abs(sig.power) <= EXPONENT_TOL and sig.logs:
        *head, w = sig.logs
        if all(abs(e - 1) <= EXPONENT_TOL for e in head):
            Lm = iterated_logs(np.array([c]), len(sig.logs))[-1][0]
            return sig.coef * Lm ** (1 - w) / (w - 1)
    if sig.power > EXPONENT_TOL and not sig.logs:
        return sig.coef * c**sig.power / sig.power
    return None


def _integral_near_zero(g: Callable, c: float) -> float:
    # s = c e^{-u}:  int_0^c g(s)/s ds = int_0^inf g(c e^{-u}) du
    val, _ = integrate.quad(lambda u: float(g(c * math.exp(-u), )), 0, np.inf, limit=400,
                            epsabs=0, epsrel=1e-10)
    return val


def critical_integral(mu1: Modulus, mu2: Modulus, q_star: float, c: float | None = None,
                      method: str = "auto") -> Divergence:
    """Decide whether ``int_0^c s**-1 mu1**(q/(q+1)) mu2**(1/(q+1)) ds`` diverges.

    ``method="auto"`` uses the log-signature rule for the named families and
    falls back to :func:`numeric_divergence` otherwise; ``"numeric"`` forces the
    numerical path.
    """
    if not q_star > 1:
        raise DomainError("q_star must exceed 1")
    if c is None:
        c = min(mu1.cutoff, mu2.cutoff)
    if not 0 < c < 1:
        raise DomainError("integration limit c must lie in (0, 1)")
    a = q_star / (q_star + 1)
    b = 1 / (q_star + 1)
    g = mixed_modulus(mu1, mu2, q_star)
    s1, s2 = mu1.signature(), mu2.signature()
    if method == "auto" and s1 is not None and s2 is not None:
        sig = s1.mix(s2, a, b)
        weight = sig.logs[-1] if sig.logs else 0.0
        if bertrand_diverges(sig):
            return Divergence(True, None, "analytic", weight)
        c0 = min(c, mu1.cutoff, mu2.cutoff)
        value = _analytic_value(sig, c0)
        how = "analytic"
        if value is None:
            value = _integral_near_zero(g, c0)
            how = "analytic+quadrature"
        if c > c0:
            extra, _ = integrate.quad(lambda s: float(g(s)) / s, c0, c, epsrel=1e-12)
            value += extra
        return Divergence(False, float(value), how, weight)
    if method not in ("auto", "numeric"):
        raise ValueError(f"unknown method {method!r}")
    return numeric_divergence(lambda s: float(g(s)) / s, c)


def numeric_divergence(f: Callable[[float], float], c: float, *, ratio_threshold: float = 0.9,
                       eps_floor: float = 1e-300) -> Divergence:
    """Heuristic divergence test for ``int_0^c f(s) ds`` with ``f >= 0``.

    The lower limit shrinks as ``eps_k = c exp(-2**k)``; each pass integrates
    the new piece ``[eps_(k+1), eps_k]``.  Two consecutive piece ratios above
    ``ratio_threshold`` classify as divergent, two at or below it as convergent
    (geometric tail extrapolation gives the value).  For ``s**-1 L**-w`` the
    piece ratio tends to ``2**(1-w)``, so the default threshold separates
    ``w`` at about 1.15.
    """
    def h(u):
        s = c * math.exp(-u)
        return f(s) * s

    ell = 1.0
    total, _ = integrate.quad(h, 0.0, ell, epsrel=1e-12)
    pieces: list[float] = []
    ratios: list[float] = []
    converged = False
    while c * math.exp(-2 * ell) >= eps_floor:
        piece, _ = integrate.quad(h, ell, 2 * ell, limit=200, epsrel=1e-11)
        ell *= 2
        total += piece
        if pieces and pieces[-1] > 0:
            ratios.append(piece / pieces[-1])
        elif pieces:
            ratios.append(0.0 if piece == 0 else np.inf)
        pieces.append(piece)
        if converged or len(ratios) < 2:
            continue
        r1, r2 = ratios[-2], ratios[-1]
        if r1 > ratio_threshold and r2 > ratio_threshold:
            return Divergence(True, None, "numeric")
        # once convergent, keep integrating down to the floor to sharpen the value
        converged = r1 <= ratio_threshold and r2 <= ratio_threshold
    if converged:
        r = ratios[-1]
        tail = pieces[-1] * r / (1 - r) if r < 1 else 0.0
        return Divergence(False, float(total + tail), "numeric")
    raise InconclusiveError("divergence test undecided before the lower limit reached 1e-300")


# ---------------------------------------------------------------------------
# system parameters and the critical curve


@dataclass(frozen=True)
class SystemParams:
    sigma: float
    n: int
    p_star: float
    q_star: float

    def __post_init__(self):
        if not 0 <= self.sigma <= 0.5:
            raise DomainError("sigma must lie in [0, 1/2]")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("n must be a positive integer")
        if not self.n > 2 * self.sigma:
            raise DomainError("n must exceed 2 sigma")
        if not (self.p_star > 1 and self.q_star > 1):
            raise DomainError("p_star and q_star must exceed 1")
        if self.p_star > self.q_star:
            raise DomainError("normalization p_star <= q_star violated")

    @classmethod
    def on_curve(cls, n: int, sigma: float, p_star: float) -> "SystemParams":
        return cls(sigma, n, p_star, curve_q_from_p(p_star, n, sigma))

    @property
    def kappa(self) -> float:
        """``n/2 - sigma``, the spatial scaling exponent of the critical curve."""
        return self.n / 2 - self.sigma

    @property
    def curve_lhs(self) -> float:
        return (1 + self.q_star) / (self.p_star * self.q_star - 1)

    @property
    def curve_residual(self) -> float:
        return self.curve_lhs - self.kappa

    @property
    def on_critical_curve(self) -> bool:
        return abs(self.curve_residual) <= CURVE_RTOL * self.kappa

    @property
    def equal_exponents(self) -> bool:
        return self.p_star == self.q_star

    def solver_dimension_ok(self) -> bool:
        return self.n > 4 * self.sigma or self.sigma == 0.5

    def to_dict(self):
        return {"sigma": self.sigma, "n": self.n, "p_star": self.p_star, "q_star": self.q_star}


def p_crit(n: int, sigma: float) -> float:
    if not n > 2 * sigma:
        raise DomainError("n must exceed 2 sigma")
    return 1 + 2 / (n - 2 * sigma)


def curve_q_from_p(p_star: float, n: int, sigma: float) -> float:
    """The ``q >= p`` completing ``(1+q)/(pq-1) = (n-2 sigma)/2``."""
    if not p_star > 1:
        raise DomainError("p_star must exceed 1")
    m = (n - 2 * sigma) / 2
    if not m > 0:
        raise DomainError("n must exceed 2 sigma")
    den = m * p_star - 1
    if den <= 0:
        raise DomainError(f"p_star={p_star} too small: no point of the critical curve")
    q = (1 + m) / den
    if q < p_star * (1 - 1e-14):
        raise DomainError(f"curve point q={q:.6g} < p={p_star}; swap the roles of p and q")
    return max(q, p_star)


def s_shift(sys: SystemParams) -> float:
    p, q = sys.p_star, sys.q_star
    return (q - p) / ((1 - sys.sigma) * (p * q - 1))


@dataclass(frozen=True)
class BetaExponent:
    beta: float
    one_minus_beta_q: float


def beta_exponent(sys: SystemParams) -> BetaExponent:
    beta = (sys.n - 2 * sys.sigma) * (sys.p_star - 1) / (2 * sys.q_star)
    return BetaExponent(beta, 1 - beta * sys.q_star)


# ---------------------------------------------------------------------------
# classification


class Verdict(str, enum.Enum):
    GLOBAL_EXISTENCE = "GlobalExistence"
    BLOW_UP = "BlowUp"


@dataclass
class Classification:
    verdict: Verdict
    rationale: str
    integral: Divergence
    regularity: list[RegularityReport] = field(default_factory=list)
    ratio_monotone: bool | None = None

    def to_dict(self):
        return {
            "verdict": self.verdict.value,
            "rationale": self.rationale,
            "integral": self.integral.to_dict(),
            "regularity": [r.to_dict() for r in self.regularity],
            "ratio_monotone": self.ratio_monotone,
        }


def ratio_is_decreasing(mu1: Modulus, mu2: Modulus, c: float, points: int = 1000) -> bool:
    """Weak monotonicity of ``mu1/mu2`` on a log grid in ``(0, c]``."""
    s = np.geomspace(max(1e-12, mu1.floor, mu2.floor), c, points)
    r = np.asarray(mu1(s)) / np.asarray(mu2(s))
    return bool(np.all(np.diff(r) <= 1e-12 * np.abs(r[1:])))


def classify_system(sys: SystemParams, mu1: Modulus, mu2: Modulus, c: float | None = None,
                    method: str = "auto") -> Classification:
    """Global existence versus blow-up for a critical pair of exponents."""
    if not sys.on_critical_curve:
        raise PreconditionError(
            f"(p*, q*) = ({sys.p_star}, {sys.q_star}) is off the critical curve "
            f"(residual {sys.curve_residual:.3g})"
        )
    if c is None:
        c = min(mu1.cutoff, mu2.cutoff)
    integral = critical_integral(mu1, mu2, sys.q_star, c, method=method)
    if integral.diverges:
        mode = RegularityMode.BLOWUP
        verdict = Verdict.BLOW_UP
        why = "mixed integral diverges: no global solution for data with positive mean"
    else:
        mode = RegularityMode.GLOBAL
        verdict = Verdict.GLOBAL_EXISTENCE
        i1 = critical_integral(mu1, mu1, sys.q_star, c, method=method)
        i2 = critical_integral(mu2, mu2, sys.q_star, c, method=method)
        if not (i1.diverges or i2.diverges):
            why = "both single-modulus integrals converge"
        else:
            why = "a single-modulus integral diverges but the mixed integral converges"
    reports = [check_regularity(mu1, mode), check_regularity(mu2, mode)]
    if not all(r.passed for r in reports):
        raise PreconditionError(f"regularity condition {mode.value} fails: "
                                f"{[r.to_dict() for r in reports]}")
    monotone = None
    if sys.equal_exponents and verdict is Verdict.GLOBAL_EXISTENCE:
        monotone = ratio_is_decreasing(mu1, mu2, c)
        why += "; mu1/mu2 " + ("is" if monotone else "is NOT") + " nonincreasing on the grid"
    return Classification(verdict, why, integral, reports, monotone)


# ---------------------------------------------------------------------------
# weights and lifespan scaling functions


def ell_weight(t, sys: SystemParams, mu1: Modulus, mu2: Modulus, variant: str = "gamma_small", *,
               gamma: float = 0.1, c: float | None = None, C1: float = 1.0):
    """Time weight of the global-existence decay rates.

    ``"gamma_small"``: 1 if both ``int mu_j/s`` converge, otherwise
    ``(mu1/mu2)(c (1+t)**-gamma) ** (1/(q+1))``.
    ``"refined"``: ``mu1(C1 (1+t)**(-(1+q)/((1-sigma)(pq-1))))``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be >= 0")
    q = sys.q_star
    if variant == "gamma_small":
        if c is None:
            c = min(mu1.cutoff, mu2.cutoff)
        if not (critical_integral(mu1, mu1, q, c).diverges or critical_integral(mu2, mu2, q, c).diverges):
            out = np.ones_like(t)
        else:
            x = c * (1 + t) ** (-gamma)
            out = (np.asarray(mu1(x)) / np.asarray(mu2(x))) ** (1 / (q + 1))
    elif variant == "refined":
        x = C1 * (1 + t) ** (-refined_rate(sys))
        out = np.asarray(mu1(x)) * np.ones_like(t)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return float(out) if out.ndim == 0 else out


def refined_rate(sys: SystemParams) -> float:
    """``(1+q)/((1-sigma)(pq-1))``; equals ``(n-2 sigma)/(2(1-sigma))`` on the curve."""
    p, q = sys.p_star, sys.q_star
    return (1 + q) / ((1 - sys.sigma) * (p * q - 1))


class ExponentKind(str, enum.Enum):
    EQUAL = "Equal"
    UNEQUAL = "Unequal"


@dataclass(frozen=True)
class LifespanModel:
    R0: float = 10.0
    C_scale: float = 1.0
    exponent_kind: ExponentKind = ExponentKind.EQUAL
    alpha_life: float = 1.0

    def __post_init__(self):
        if not self.R0 > 0 or not self.C_scale > 0:
            raise DomainError("R0 and C_scale must be positive")
        if not self.alpha_life > 0:
            raise DomainError("lifespan exponent must be positive")

    @classmethod
    def for_system(cls, sys: SystemParams, R0: float = 10.0, C_scale: float = 1.0) -> "LifespanModel":
        p, q = sys.p_star, sys.q_star
        if sys.equal_exponents:
            return cls(R0, C_scale, ExponentKind.EQUAL, p - 1)
        return cls(R0, C_scale, ExponentKind.UNEQUAL, q * (p * q - 1) / (q + 1))

    def to_dict(self):
        return {"R0": self.R0, "C_scale": self.C_scale, "exponent_kind": self.exponent_kind.value,
                "alpha_life": self.alpha_life}


def _log_integral(mu1: Modulus, mu2: Modulus, q_star: float, C: float, rate: float,
                  u0: float, u1: float) -> float:
    """``int_{u0}^{u1} G(C exp(-rate u)) du`` with ``G = mu1**(q/(q+1)) mu2**(1/(q+1))``."""
    if u1 == u0:
        return 0.0
    if u1 < u0:
        return -_log_integral(mu1, mu2, q_star, C, rate, u1, u0)
    a = q_star / (q_star + 1)
    b = 1 / (q_star + 1)
    s1, s2 = mu1.signature(), mu2.signature()
    fast = (
        s1 is not None and s2 is not None
        and s1.power == 0 and s2.power == 0
        and len(s1.logs) <= 1 and len(s2.logs) <= 1
    )
    if fast:
        return _log_integral_closed(mu1, mu2, s1.mix(s2, a, b), a, b, C, rate, u0, u1)
    g = mixed_modulus(mu1, mu2, q_star)
    # argument crosses each cutoff at u = log(C/c)/rate
    breaks = {math.log(C / m.cutoff) / rate for m in (mu1, mu2)}
    for m in (mu1, mu2):  # tabulated moduli have a kink at every sample
        if isinstance(m, Tabulated):
            breaks.update(math.log(C / x) / rate for x in m.points)
    breaks = sorted(breaks)
    knots = [u0] + [x for x in breaks if u0 < x < u1] + [u1]
    total = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        val, _ = integrate.quad(lambda u: float(g(C * math.exp(-rate * u), )), lo, hi,
                                limit=400, epsabs=0.0, epsrel=1e-13)
        total += val
    return total


def _log_integral_closed(mu1, mu2, sig: LogSignature, a, b, C, rate, u0, u1) -> float:
    # Constant/PowerLog pairs: below both cutoffs G = coef*L^-w with L = rate*u - log C.
    cut = min(mu1.cutoff, mu2.cutoff)
    other = max(mu1.cutoff, mu2.cutoff)
    u_cut = math.log(C / cut) / rate       # argument <= cut  for u >= u_cut
    u_other = math.log(C / other) / rate   # argument <= other for u >= u_other
    g = mixed_modulus(mu1, mu2, 1 / b - 1)
    total = 0.0
    # region u < u_other: both moduli frozen at their cutoff values
    lo, hi = u0, min(u1, u_other)
    if hi > lo:
        total += float(g(other * 2)) * (hi - lo)
    # region u_other <= u < u_cut: one modulus on its formula, the other frozen
    lo, hi = max(u0, u_other), min(u1, u_cut)
    if hi > lo:
        val, _ = integrate.quad(lambda u: float(g(C * math.exp(-rate * u))), lo, hi,
                                epsabs=0.0, epsrel=1e-13)
        total += val
    lo, hi = max(u0, u_cut), u1
    if hi > lo:
        w = sig.logs[0] if sig.logs else 0.0
        logC = math.log(C)

        def F(u):
            L = rate * u - logC
            if abs(w - 1) <= EXPONENT_TOL:
                return sig.coef * math.log(L) / rate
            return sig.coef * L ** (1 - w) / (rate * (1 - w))

        total += F(hi) - F(lo)
    return total


def psi(R: float, model: LifespanModel, sys: SystemParams, mu1: Modulus, mu2: Modulus) -> float:
    """``int_{R0}^{R} r**-1 G(C r**(sigma - n/2)) dr`` (signed when ``R < R0``)."""
    if not R > 0:
        raise DomainError("R must be positive")
    return _log_integral(mu1, mu2, sys.q_star, model.C_scale, sys.kappa, math.log(model.R0),
                         math.log(R))


def psi_inverse(y: float, model: LifespanModel, sys: SystemParams, mu1: Modulus, mu2: Modulus, *,
                rtol: float = 1e-10, R_max: float = 1e300) -> float:
    """Invert :func:`psi` on ``[R0, inf)`` by bracketing and Brent's method in ``log R``.

    The upper bracket starts at ``2 R0`` and doubles ``log(R/R0)`` until it
    covers ``y``.
    """
    if not y >= 0:
        raise DomainError("psi_inverse needs y >= 0")
    if y == 0:
        return model.R0
    lo = math.log(model.R0)
    step = math.log(2.0)
    hi = lo + step
    log_max = math.log(R_max)
    while psi(math.exp(hi), model, sys, mu1, mu2) < y:
        lo = hi
        step *= 2
        hi = math.log(model.R0) + step
        if hi > log_max:
            raise ConvergenceError(f"psi_inverse bracket exceeded {R_max:.0e} for y={y:.6g}")
    root = optimize.brentq(lambda L: psi(math.exp(L), model, sys, mu1, mu2) - y, lo, hi,
                           xtol=rtol, rtol=4 * np.finfo(float).eps)
    return math.exp(root)


def lifespan_bound(eps: float, model: LifespanModel, sys: SystemParams, mu1: Modulus,
                   mu2: Modulus, C: float = 1.0) -> float:
    """``(psi_inverse(C eps**-alpha_life))**(1 - sigma)``."""
    if not 0 < eps <= 1:
        raise DomainError("eps must lie in (0, 1]")
    if C < 0:
        raise DomainError("C must be >= 0")
    return psi_inverse(C * eps ** (-model.alpha_life), model, sys, mu1, mu2) ** (1 - sys.sigma)


def Psi_accumulated(t: float, sys: SystemParams, mu1: Modulus, mu2: Modulus, *,
                    gamma: float | None = None, C1: float = 1.0) -> float:
    """``int_0^t (1+tau)**-1 G(C1 (1+tau)**-gamma) dtau``; ``gamma=None`` is the refined rate."""
    if not t >= 0:
        raise DomainError("t must be >= 0")
    rate = sys.kappa / (1 - sys.sigma) if gamma is None else gamma
    return _log_integral(mu1, mu2, sys.q_star, C1, rate, 0.0, math.log1p(t))


def psi_shift_constant(sys: SystemParams, model: LifespanModel, C1: float = 1.0) -> float:
    """``C4`` with ``Psi(t) = (1-sigma) (psi(C4 (1+t)**(1/(1-sigma))) - psi(C4))`` (refined rate)."""
    return (model.C_scale / C1) ** (1 / sys.kappa)
