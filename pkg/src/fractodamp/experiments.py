"""Experiment suites with reproducible, hash-addressed outputs.

Every suite returns an :class:`ExperimentResult`; :func:`persist` writes it to
``out/<experiment>/<manifest-hash>/{manifest.json, data.csv, log.txt}``.
"""
from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import math
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .errors import ConfigError, FractodampError
from .fitting import FitResult, PowerLawFit
from .grid import GridSpec
from .moduli import (Constant, LifespanModel, Modulus, SystemParams, classify_system,
                     lifespan_bound)
from .solver import (DataKind, InitialData, RunStatus, SolverControls, make_initial_data, run)

log = logging.getLogger(__name__)

__all__ = ["FitResult", "PowerLawFit", "ExperimentManifest", "ExperimentResult", "persist",
           "decay_sweep", "curve_sweep", "lifespan_sweep", "DecayCase", "decay_theory",
           "default_decay_case", "code_version", "blowup_dichotomy", "NonlinearSetup",
           "check_ladder", "box_half_length", "region"]

FINITE_HORIZON_CAVEAT = ("a run that decays up to Tmax is evidence of global existence, not proof")
LIFESPAN_CAVEAT = ("the exponential lifespan law is not reproducible at desk scale; "
                   "censored runs give lower bounds and only the shape of log T against "
                   "eps^-alpha is tested")


def code_version() -> str:
    try:
        from importlib.metadata import version
        base = version("artifact")
    except Exception:  # not installed (running from a source tree)
        base = "0.1.0"
    try:
        described = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=Path(__file__).parent,
                                   capture_output=True, text=True, timeout=5)
        if described.returncode == 0 and described.stdout.strip():
            return f"{base}+{described.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return _jsonable(obj.to_dict())
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):  # enums
        return obj.value
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


@dataclass(frozen=True)
class ExperimentManifest:
    experiment: str
    params: dict[str, Any]
    version: str = field(default_factory=code_version)
    seed: int = 0
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())

    @property
    def hash(self) -> str:
        """Digest of everything that determines the rows (not the timestamp)."""
        doc = {"experiment": self.experiment, "params": _jsonable(self.params),
               "version": self.version, "seed": self.seed}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self):
        return {"experiment": self.experiment, "hash": self.hash, "version": self.version,
                "seed": self.seed, "timestamp": self.timestamp, "params": _jsonable(self.params)}


@dataclass
class ExperimentResult:
    manifest: ExperimentManifest
    rows: list[dict[str, Any]]
    summary: dict[str, Any] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    log_lines: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


@dataclass
class PersistResult:
    directory: Path
    reused: bool
    files: dict[str, Path]


def persist(result: ExperimentResult, out_dir: str | Path, on_exists: str = "reuse") -> PersistResult:
    """Write manifest, data and log once per manifest hash.

    ``on_exists``: ``"reuse"`` leaves an existing directory untouched,
    ``"refuse"`` raises FileExistsError, ``"overwrite"`` rewrites it.
    """
    if on_exists not in ("reuse", "refuse", "overwrite"):
        raise ValueError("on_exists must be reuse, refuse or overwrite")
    man = result.manifest
    directory = Path(out_dir) / man.experiment / man.hash
    files = {"manifest": directory / "manifest.json", "data": directory / "data.csv",
             "log": directory / "log.txt"}
    if files["manifest"].exists():
        if on_exists == "refuse":
            raise FileExistsError(f"manifest {man.hash} already persisted in {directory}")
        if on_exists == "reuse":
            return PersistResult(directory, True, files)
    directory.mkdir(parents=True, exist_ok=True)
    doc = {**man.to_dict(), "summary": _jsonable(result.summary), "failures": result.failures,
           "rows": len(result.rows)}
    files["manifest"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    columns: list[str] = ["manifest"]
    for row in result.rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with files["data"].open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, restval="")
        writer.writeheader()
        for row in result.rows:
            writer.writerow({"manifest": man.hash, **{k: _cell(v) for k, v in row.items()}})
    files["log"].write_text("\n".join(result.log_lines) + ("\n" if result.log_lines else ""))
    return PersistResult(directory, False, files)


def _cell(v):
    v = _jsonable(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v)
    if v is None:
        return ""
    return v


def _map_ordered(fn: Callable, items: Sequence, threads: int) -> list:
    """Apply ``fn`` to ``items`` concurrently; results keep the input order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# linear decay


def decay_theory(n: int, sigma: float, kind: DataKind | str = DataKind.VELOCITY) -> dict[str, float]:
    """Predicted exponents of ``t`` for the L2, gradient-L2 and sup norms."""
    kind = DataKind(kind)
    base = -n / (4 * (1 - sigma))
    shift = sigma / (1 - sigma) if kind is DataKind.VELOCITY else 0.0
    grad = -(1 - 2 * sigma) / (2 * (1 - sigma)) if kind is DataKind.VELOCITY else -1 / (2 * (1 - sigma))
    return {"L2": base + shift, "H1": base + grad, "Linf": 2 * base + shift}


def box_half_length(Tmax: float, sigma: float, width: float) -> float:
    """Heuristic smallest box for ``Tmax``: ``4 Tmax**(1/(2-2 sigma)) + 10 width``.

    Low frequencies spread like ``t**(1/(2-2 sigma))``; for sigma = 0 this is
    the usual diffusive ``t**(1/2)``.
    """
    return 4 * Tmax ** (1 / (2 - 2 * sigma)) + 10 * width


@dataclass(frozen=True)
class DecayCase:
    n: int
    sigma: float
    kind: str = DataKind.VELOCITY.value
    L: float = 256.0
    N: int = 512
    width: float = 2.0

    def __post_init__(self):
        if not (self.n > 4 * self.sigma or self.sigma == 0.5):
            raise ConfigError(f"decay case (n={self.n}, sigma={self.sigma}) violates n > 4 sigma")
        DataKind(self.kind)

    def to_dict(self):
        return dict(self.__dict__)


_DECAY_PRESETS = {
    (1, 0.0): (256.0, 512, 2.0),
    (2, 0.0): (128.0, 256, 2.0),
    (2, 0.25): (1024.0, 256, 16.0),
    (2, 0.5): (2048.0, 256, 32.0),
}


def default_decay_case(n: int, sigma: float, kind: str = DataKind.VELOCITY.value) -> DecayCase:
    """Tuned box/resolution for the four reference cases at ``Tmax = 500``."""
    if (n, float(sigma)) in _DECAY_PRESETS:
        L, N, w = _DECAY_PRESETS[(n, float(sigma))]
    else:
        w = 2.0 * (1 + 30 * sigma)
        L = float(2 ** math.ceil(math.log2(box_half_length(500.0, sigma, w))))
        N = 512 if n == 1 else 256
    return DecayCase(n, float(sigma), kind, L, N, w)


def _decay_one(case: DecayCase, Tmax: float, samples: int, l2_tol: float, linf_tol: float):
    grid = GridSpec(case.n, case.L, case.N)
    ic = make_initial_data(InitialData(case.kind, 1.0, case.width), 1.0, grid)
    times = np.geomspace(Tmax / 10, Tmax, samples)
    controls = SolverControls(drop_mean=case.sigma > 0)
    out = run(ic, None, None, None, grid, Tmax, controls, linear=True, sigma=case.sigma,
              sample_times=times)
    h = out.history
    theory = decay_theory(case.n, case.sigma, case.kind)
    row: dict[str, Any] = {**case.to_dict(), "Tmax": Tmax}
    flags = []
    for key in ("L2", "H1", "Linf"):
        fit = PowerLawFit("log1p", window=(Tmax / 10, Tmax)).fit(h["t"], h[f"{key}_u"]).result_
        row[f"slope_{key}"] = fit.slope
        row[f"stderr_{key}"] = fit.slope_stderr
        row[f"theory_{key}"] = theory[key]
        tol = {"L2": l2_tol, "H1": l2_tol, "Linf": linf_tol}[key]
        ok = abs(fit.slope - theory[key]) <= tol
        row[f"pass_{key}"] = ok
        if key != "H1":
            flags.append(ok)
    row["points"] = int(times.size)
    row["L_heuristic"] = box_half_length(Tmax, case.sigma, case.width)
    row["box_ok"] = case.L >= row["L_heuristic"]
    row["passed"] = all(flags)
    return row


def decay_sweep(cases: Sequence[DecayCase], Tmax: float = 500.0, samples: int = 12,
                l2_tol: float = 0.1, linf_tol: float = 0.15, threads: int = 1) -> ExperimentResult:
    """Linear decay exponents fitted on ``[Tmax/10, Tmax]`` against ``log(1+t)``.

    For sigma > 0 the zero Fourier mode is excluded from the norms: on a torus
    it carries the whole mass ``t * mean(u1)`` in a single mode, which has no
    whole-space counterpart.
    """
    if samples < 5:
        raise ConfigError("decay fits need at least 5 samples")
    manifest = ExperimentManifest("decay", {"cases": [c.to_dict() for c in cases], "Tmax": Tmax,
                                            "samples": samples, "l2_tol": l2_tol, "linf_tol": linf_tol})

    def one(case):
        try:
            return _decay_one(case, Tmax, samples, l2_tol, linf_tol)
        except FractodampError as exc:
            return {**case.to_dict(), "passed": False, "error": str(exc)}

    rows = _map_ordered(one, list(cases), threads)
    failures = [f"decay n={r['n']} sigma={r['sigma']}: " + (r.get("error") or
                f"L2 slope {r['slope_L2']:.3f} vs {r['theory_L2']:.3f}, "
                f"Linf slope {r['slope_Linf']:.3f} vs {r['theory_Linf']:.3f}")
                for r in rows if not r["passed"]]
    return ExperimentResult(manifest, rows, {"cases": len(rows), "failed": len(failures)}, failures)


# ---------------------------------------------------------------------------
# nonlinear runs


@dataclass(frozen=True)
class NonlinearSetup:
    """Grid, data and controls shared by the nonlinear suites."""

    grid: GridSpec = GridSpec(1, 128.0, 512)
    data: InitialData = InitialData(DataKind.VELOCITY, 1.0, 4.0)
    controls: SolverControls = SolverControls(rtol=1e-5, samples=200)
    Tmax: float = 2000.0

    def to_dict(self):
        return {"grid": self.grid.to_dict(), "data": self.data.to_dict(),
                "controls": self.controls.to_dict(), "Tmax": self.Tmax}


def _label(mu: Modulus) -> str:
    d = mu.to_dict()
    return d.pop("family") + "(" + ",".join(f"{k}={v}" for k, v in d.items() if k != "cutoff") + ")"


def region(sys: SystemParams) -> str:
    """Position of ``(p*, q*)`` relative to the critical curve."""
    if sys.on_critical_curve:
        return "critical"
    return "supercritical" if sys.curve_lhs < sys.kappa else "subcritical"


def _run_status(sys, mu1, mu2, eps, setup: NonlinearSetup, controls=None):
    ic = make_initial_data(setup.data, eps, setup.grid)
    return run(ic, sys, mu1, mu2, setup.grid, setup.Tmax, controls or setup.controls)


def final_decade_decreasing(outcome) -> bool:
    h = outcome.history
    t = h["t"]
    sel = t >= t[-1] / 10
    linf = np.maximum(h["Linf_u"][sel], h["Linf_v"][sel])
    return bool(linf.size >= 2 and np.all(np.diff(linf) < 0))


def curve_sweep(n: int, sigma: float, points: Sequence[tuple[float, float]],
                moduli: Sequence[tuple[Modulus, Modulus]], eps: float,
                setup: NonlinearSetup | None = None, threads: int = 1) -> ExperimentResult:
    """Nonlinear runs at ``(p*, q*)`` points next to the analytic verdict."""
    setup = setup or NonlinearSetup()
    if setup.grid.n != n:
        raise ConfigError("setup grid dimension differs from n")
    jobs = [(p, q, m1, m2) for (p, q) in points for (m1, m2) in moduli]
    manifest = ExperimentManifest("curve", {
        "n": n, "sigma": sigma, "points": [list(x) for x in points], "eps": eps,
        "moduli": [[m1.to_dict(), m2.to_dict()] for m1, m2 in moduli], "setup": setup.to_dict()})

    def one(job):
        p, q, m1, m2 = job
        sys = SystemParams(sigma, n, p, q)
        row: dict[str, Any] = {"p_star": p, "q_star": q, "mu1": _label(m1), "mu2": _label(m2),
                               "region": region(sys), "eps": eps}
        if sys.on_critical_curve:
            try:
                row["analytic"] = classify_system(sys, m1, m2).verdict.value
            except FractodampError as exc:
                row["analytic"] = f"unavailable: {exc}"
        else:
            row["analytic"] = "BlowUp" if row["region"] == "subcritical" else "GlobalExistence(small data)"
        if eps == 0:
            row.update(status=RunStatus.REACHED_TMAX.value, T_detect=None, final_Linf=0.0,
                       decayed=True)
            return row
        out = _run_status(sys, m1, m2, eps, setup)
        row["status"] = out.status.value
        row["T_detect"] = out.T_detect
        row["t_end"] = out.t_end
        row["final_Linf"] = float(max(out.history["Linf_u"][-1], out.history["Linf_v"][-1]))
        row["decayed"] = out.status is RunStatus.REACHED_TMAX and final_decade_decreasing(out)
        return row

    rows = _map_ordered(one, jobs, threads)
    failures = []
    for r in rows:
        if r["analytic"] == "BlowUp" and r["eps"] > 0 and r["status"] != RunStatus.BLOW_UP.value:
            failures.append(f"p={r['p_star']} q={r['q_star']} {r['mu1']}: expected blow-up, got {r['status']}")
    return ExperimentResult(manifest, rows, {"caveat": FINITE_HORIZON_CAVEAT}, failures)


# ---------------------------------------------------------------------------
# lifespan


def check_ladder(eps: Sequence[float]) -> np.ndarray:
    e = np.asarray(eps, float)
    if e.size < 4:
        raise ConfigError(f"eps ladder needs at least 4 points, got {e.size}")
    if np.any(e <= 0) or np.any(e > 1):
        raise ConfigError("eps values must lie in (0, 1]")
    ratios = e[1:] / e[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-6) or ratios[0] == 1:
        raise ConfigError("eps ladder must be geometric")
    return e


def lifespan_sweep(sys: SystemParams, mu1: Modulus, mu2: Modulus, eps: Sequence[float],
                   setup: NonlinearSetup | None = None, model: LifespanModel | None = None,
                   C: float = 1.0, threshold_check: bool = True, min_r2: float = 0.9,
                   threads: int = 1) -> ExperimentResult:
    """Detected blow-up times along an eps ladder, with a shape fit.

    The fit regresses ``log T_detect / (1 - sigma)`` on ``eps**-alpha_life``
    over the uncensored runs; the analytic ``lifespan_bound`` is tabulated
    alongside for comparison only (its constants are not calibrated).
    """
    e = check_ladder(eps)
    setup = setup or NonlinearSetup()
    model = model or LifespanModel.for_system(sys)
    manifest = ExperimentManifest("lifespan", {
        "system": sys.to_dict(), "mu1": mu1.to_dict(), "mu2": mu2.to_dict(), "eps": e.tolist(),
        "setup": setup.to_dict(), "model": model.to_dict(), "C": C,
        "threshold_check": threshold_check, "min_r2": min_r2})

    def one(x):
        out = _run_status(sys, mu1, mu2, float(x), setup)
        return {"eps": float(x), "status": out.status.value, "T_detect": out.T_detect,
                "t_end": out.t_end, "censored": out.status is not RunStatus.BLOW_UP,
                "analytic_bound": lifespan_bound(float(x), model, sys, mu1, mu2, C),
                "steps": out.diagnostics.get("steps")}, out.diagnostics.get("wall_time")

    done = _map_ordered(one, list(e), threads)
    rows = [r for r, _ in done]
    failures: list[str] = []
    lines = [LIFESPAN_CAVEAT]
    lines += [f"eps={r['eps']:.6g} wall_time={w:.2f}s" for r, w in done]
    good = [r for r in rows if not r["censored"]]
    summary: dict[str, Any] = {"caveat": LIFESPAN_CAVEAT, "alpha_life": model.alpha_life,
                               "uncensored": len(good)}
    T = np.array([r["T_detect"] for r in good], float)
    order = np.argsort([r["eps"] for r in good])[::-1]  # decreasing eps
    monotone = bool(len(good) >= 2 and np.all(np.diff(T[order]) > 0))
    summary["monotone"] = monotone
    if not monotone:
        failures.append("T_detect is not strictly increasing as eps decreases")
    if len(good) >= 3:
        x = np.array([r["eps"] for r in good]) ** (-model.alpha_life)
        y = np.log(T) / (1 - sys.sigma)
        fit = PowerLawFit("identity", min_points=3, log_y=False).fit(x, y).result_
        summary["fit"] = fit.to_dict()
        if not fit.slope > 0:
            failures.append(f"lifespan shape fit has non-positive slope {fit.slope:.3g}")
        if not fit.r2 > min_r2:
            failures.append(f"lifespan shape fit R^2 = {fit.r2:.4f} <= {min_r2}")
    else:
        failures.append("fewer than 3 uncensored runs: no shape fit")
    if threshold_check and good:
        first = good[0]
        c10 = dataclasses.replace(setup.controls, blow_factor=setup.controls.blow_factor * 10,
                                  blow_threshold=None if setup.controls.blow_threshold is None
                                  else setup.controls.blow_threshold * 10)
        out = _run_status(sys, mu1, mu2, first["eps"], setup, c10)
        if out.T_detect is None:
            failures.append("threshold x10 rerun did not detect blow-up")
        else:
            shift = abs(out.T_detect - first["T_detect"]) / first["T_detect"]
            summary["threshold_shift"] = shift
            if shift >= 0.05:
                failures.append(f"T_detect moved {shift:.1%} under a 10x threshold")
    lines += [f"eps={r['eps']:.6g} status={r['status']} T={r['T_detect']}" for r in rows]
    return ExperimentResult(manifest, rows, summary, failures, lines)


def blowup_dichotomy(setup: NonlinearSetup | None = None, critical_eps: float = 0.5,
                     super_eps: float = 0.01, super_p: float = 5.0, super_Tmax: float = 100.0,
                     threshold_factor: float = 10.0) -> ExperimentResult:
    """Critical blow-up (with threshold robustness) next to a supercritical decaying run."""
    setup = setup or NonlinearSetup()
    n = setup.grid.n
    crit = SystemParams.on_curve(n, 0.0, 1 + 2 / n)
    sup = SystemParams(0.0, n, super_p, super_p)
    one = Constant()
    manifest = ExperimentManifest("dichotomy", {"setup": setup.to_dict(), "critical_eps": critical_eps,
                                                "super_eps": super_eps, "super_p": super_p,
                                                "super_Tmax": super_Tmax,
                                                "threshold_factor": threshold_factor})
    a = _run_status(crit, one, one, critical_eps, setup)
    c10 = dataclasses.replace(setup.controls, blow_factor=setup.controls.blow_factor * threshold_factor)
    b = _run_status(crit, one, one, critical_eps, setup, c10)
    s = _run_status(sup, one, one, super_eps, dataclasses.replace(setup, Tmax=super_Tmax))
    rows = [
        {"case": "critical", "p_star": crit.p_star, "eps": critical_eps, "status": a.status.value,
         "T_detect": a.T_detect, "threshold": a.diagnostics["blow_threshold"]},
        {"case": "critical_threshold_x", "p_star": crit.p_star, "eps": critical_eps,
         "status": b.status.value, "T_detect": b.T_detect, "threshold": b.diagnostics["blow_threshold"]},
        {"case": "supercritical", "p_star": super_p, "eps": super_eps, "status": s.status.value,
         "T_detect": s.T_detect, "final_Linf": float(s.history["Linf_u"][-1]),
         "final_decade_decreasing": final_decade_decreasing(s)},
    ]
    failures = []
    shift = None
    if a.status is not RunStatus.BLOW_UP or b.status is not RunStatus.BLOW_UP:
        failures.append("critical run did not blow up")
    else:
        shift = abs(b.T_detect - a.T_detect) / a.T_detect
        if shift >= 0.05:
            failures.append(f"T_detect shift {shift:.2%} under {threshold_factor}x threshold")
    if s.status is not RunStatus.REACHED_TMAX or not rows[2]["final_decade_decreasing"]:
        failures.append("supercritical run did not decay to Tmax")
    return ExperimentResult(manifest, rows, {"threshold_shift": shift, "caveat": FINITE_HORIZON_CAVEAT},
                            failures)
