"""Command-line front end.

Science parameters come from TOML documents; flags only cover operational
concerns (output directory, threads, verbosity, seed).  Every subcommand
persists its rows under ``<out>/<experiment>/<manifest-hash>/``.

Exit codes: 0 ok, 1 config error, 2 numerical failure or inconclusive
verdict, 3 an acceptance threshold inside the suite failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import experiments as ex
from .config import build_dataclass, check_keys, load_document, table, thread_budget
from .errors import ConfigError, FractodampError, InconclusiveError, PreconditionError
from .grid import GridSpec
from .kernels import branch_point, check_sigma, kernel_table
from .moduli import (LifespanModel, SystemParams, classify_system, curve_q_from_p,
                     lifespan_bound, modulus_from_dict)
from .solver import InitialData, RunStatus, SolverControls, make_initial_data, run
from . import testfunctions as tf

log = logging.getLogger("fractodamp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3


@dataclass
class CliConfig:
    subcommand: str
    config: str | None
    out: str
    verbosity: int
    threads: int
    seed: int
    dry_run: bool
    on_exists: str


class ExitCode(Exception):
    def __init__(self, code: int, message: str = ""):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# config sections


def _system(doc) -> SystemParams:
    t = table(doc, "system")
    check_keys(t, {"sigma", "n", "p_star", "q_star"}, "system")
    try:
        sigma, n, p = float(t["sigma"]), int(t["n"]), float(t["p_star"])
    except KeyError as exc:
        raise ConfigError(f"[system] is missing {exc.args[0]!r}") from None
    try:
        q = float(t["q_star"]) if "q_star" in t else curve_q_from_p(p, n, sigma)
        return SystemParams(sigma, n, p, q)
    except FractodampError as exc:
        raise ConfigError(f"[system]: {exc}") from None


def _moduli(doc):
    out = []
    for name in ("mu1", "mu2"):
        t = table(doc, name, required=False) or {"family": "constant"}
        try:
            out.append(modulus_from_dict(t))
        except ConfigError as exc:
            raise ConfigError(f"[{name}]: {exc}") from None
        except (FractodampError, TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from None
    return out


def _grid(doc, default: GridSpec | None = None) -> GridSpec:
    t = table(doc, "grid", required=default is None)
    if not t and default is not None:
        return default
    return build_dataclass(GridSpec, t, "grid")


def _data(doc, default: InitialData | None = None) -> InitialData:
    t = table(doc, "data", required=default is None)
    if not t and default is not None:
        return default
    return build_dataclass(InitialData, t, "data")


def _controls(doc, default: SolverControls | None = None) -> SolverControls:
    t = table(doc, "controls", required=False)
    if not t:
        return default or SolverControls()
    base = (default or SolverControls()).to_dict()
    check_keys(t, set(base), "controls")
    return build_dataclass(SolverControls, {**base, **t}, "controls")


def _section(doc, name, defaults: dict[str, Any]) -> dict[str, Any]:
    t = table(doc, name, required=False)
    check_keys(t, set(defaults), name)
    return {**defaults, **t}


def _top_level(doc, allowed):
    check_keys(doc, allowed, "top level")


# ---------------------------------------------------------------------------
# subcommands; each returns a plan (resolved parameters) and a runner


def plan_classify(doc, cfg):
    _top_level(doc, {"system", "mu1", "mu2", "classify"})
    sys_ = _system(doc)
    mu1, mu2 = _moduli(doc)
    opts = _section(doc, "classify", {"c": None, "method": "auto", "eps": [], "R0": 10.0,
                                      "C_scale": 1.0, "C": 1.0})
    if opts["method"] not in ("auto", "numeric"):
        raise ConfigError("[classify] method must be 'auto' or 'numeric'")
    if not sys_.on_critical_curve:
        raise ConfigError(f"[system] (p*, q*) = ({sys_.p_star}, {sys_.q_star}) is off the critical "
                          f"curve (residual {sys_.curve_residual:.3g})")
    params = {"system": sys_.to_dict(), "mu1": mu1.to_dict(), "mu2": mu2.to_dict(), **opts}

    def go():
        try:
            cls = classify_system(sys_, mu1, mu2, opts["c"], opts["method"])
        except (PreconditionError, InconclusiveError) as exc:
            raise ExitCode(EXIT_NUMERICAL, f"inconclusive: {exc}") from None
        rows = [{"quantity": "verdict", "value": cls.verdict.value},
                {"quantity": "integral", "value": cls.integral.to_dict()}]
        rows += [{"quantity": f"regularity_mu{i + 1}", "value": r.to_dict()}
                 for i, r in enumerate(cls.regularity)]
        lines = [f"verdict: {cls.verdict.value}", f"rationale: {cls.rationale}",
                 "integral: " + json.dumps(ex._jsonable(cls.integral.to_dict()))]
        lines += ["regularity: " + json.dumps(ex._jsonable(r.to_dict())) for r in cls.regularity]
        if opts["eps"]:
            model = LifespanModel.for_system(sys_, R0=opts["R0"], C_scale=opts["C_scale"])
            for e in opts["eps"]:
                T = lifespan_bound(float(e), model, sys_, mu1, mu2, opts["C"])
                rows.append({"quantity": f"lifespan_bound[eps={e}]", "value": T})
                lines.append(f"lifespan_bound(eps={e}) = {T:.6g}")
        return ex.ExperimentResult(_manifest("classify", params, cfg), rows,
                                   {"verdict": cls.verdict.value}, [], lines)

    return params, go


def plan_kernels(doc, cfg):
    _top_level(doc, {"kernels"})
    opts = _section(doc, "kernels", {"sigma": 0.25, "times": [0.0, 0.5, 1.0, 5.0],
                                     "xi_min": 1e-3, "xi_max": 1e2, "points": 200})
    try:
        check_sigma(float(opts["sigma"]))
    except FractodampError as exc:
        raise ConfigError(f"[kernels]: {exc}") from None
    if not 0 < opts["xi_min"] < opts["xi_max"] or opts["points"] < 2:
        raise ConfigError("[kernels] needs 0 < xi_min < xi_max and points >= 2")
    if any(t < 0 for t in opts["times"]):
        raise ConfigError("[kernels] times must be >= 0")
    params = dict(opts, branch_point=branch_point(float(opts["sigma"])))

    def go():
        rows = kernel_table(float(opts["sigma"]), opts["times"], opts["xi_min"], opts["xi_max"],
                            int(opts["points"]))
        return ex.ExperimentResult(_manifest("kernels", params, cfg), rows,
                                   {"rows": len(rows)}, [], [f"{len(rows)} kernel samples"])

    return params, go


def plan_simulate(doc, cfg):
    _top_level(doc, {"system", "mu1", "mu2", "grid", "data", "controls", "run"})
    sys_ = _system(doc)
    mu1, mu2 = _moduli(doc)
    grid = _grid(doc)
    data = _data(doc)
    controls = _controls(doc)
    opts = _section(doc, "run", {"eps": 0.1, "Tmax": 10.0, "linear": False})
    if grid.n != sys_.n:
        raise ConfigError(f"[grid] n={grid.n} differs from [system] n={sys_.n}")
    if not opts["Tmax"] > 0:
        raise ConfigError("[run] Tmax must be positive")
    ic = make_initial_data(data, float(opts["eps"]), grid)  # validates width against the box
    params = {"system": sys_.to_dict(), "mu1": mu1.to_dict(), "mu2": mu2.to_dict(),
              "grid": grid.to_dict(), "data": data.to_dict(), "controls": controls.to_dict(), **opts}

    def go():
        out = run(ic, sys_, mu1, mu2, grid, float(opts["Tmax"]), controls, linear=bool(opts["linear"]))
        summary = out.summary()
        lines = [f"status: {out.status.value}", f"t_end: {out.t_end:.6g}",
                 f"T_detect: {out.T_detect}"]
        res = ex.ExperimentResult(_manifest("simulate", params, cfg), out.rows(), summary, [], lines)
        if out.status is RunStatus.STEP_UNDERFLOW:
            res.failures.append("step size underflow without a growth signature")
            res.summary["numerical_failure"] = True
        return res

    return params, go


def plan_decay(doc, cfg):
    _top_level(doc, {"decay"})
    opts = _section(doc, "decay", {"Tmax": 500.0, "samples": 12, "l2_tol": 0.1, "linf_tol": 0.15,
                                   "cases": None})
    raw = opts.pop("cases")
    if raw is None:
        cases = [ex.default_decay_case(n, s) for n, s in ((1, 0.0), (2, 0.0), (2, 0.25), (2, 0.5))]
    else:
        cases = []
        for i, c in enumerate(raw):
            if not isinstance(c, dict):
                raise ConfigError("[[decay.cases]] entries must be tables")
            check_keys(c, {"n", "sigma", "kind", "L", "N", "width"}, f"decay.cases[{i}]")
            try:
                base = ex.default_decay_case(int(c["n"]), float(c["sigma"]), c.get("kind", "zero_displacement_positive_velocity"))
            except KeyError as exc:
                raise ConfigError(f"[decay.cases[{i}]] is missing {exc.args[0]!r}") from None
            cases.append(build_dataclass(ex.DecayCase, {**base.to_dict(), **c}, f"decay.cases[{i}]"))
    for c in cases:
        GridSpec(c.n, c.L, c.N)  # grid validation up front
        if c.width > c.L / 4:
            raise ConfigError(f"decay case n={c.n} sigma={c.sigma}: width exceeds L/4")
    if opts["samples"] < 5:
        raise ConfigError("[decay] samples must be >= 5")
    params = {**opts, "cases": [c.to_dict() for c in cases]}

    def go():
        res = ex.decay_sweep(cases, float(opts["Tmax"]), int(opts["samples"]), opts["l2_tol"],
                             opts["linf_tol"], threads=cfg.threads)
        res.manifest = _manifest("decay", params, cfg)
        res.log_lines += [f"n={r['n']} sigma={r['sigma']}: L2 {r.get('slope_L2', float('nan')):.4f} "
                          f"(theory {r.get('theory_L2', float('nan')):.4f}), Linf "
                          f"{r.get('slope_Linf', float('nan')):.4f} "
                          f"(theory {r.get('theory_Linf', float('nan')):.4f})" for r in res.rows]
        return res

    return params, go


def plan_lifespan(doc, cfg):
    _top_level(doc, {"system", "mu1", "mu2", "grid", "data", "controls", "lifespan"})
    sys_ = _system(doc)
    mu1, mu2 = _moduli(doc)
    base = ex.NonlinearSetup()
    grid = _grid(doc, base.grid)
    data = _data(doc, base.data)
    controls = _controls(doc, base.controls)
    opts = _section(doc, "lifespan", {"eps": [0.5 * 0.8**k for k in range(4)], "Tmax": base.Tmax,
                                      "C": 1.0, "R0": 10.0, "C_scale": 1.0,
                                      "threshold_check": True, "min_r2": 0.9})
    eps = ex.check_ladder(opts["eps"])
    if not sys_.on_critical_curve:
        raise ConfigError("[system] must lie on the critical curve for a lifespan sweep")
    if grid.n != sys_.n:
        raise ConfigError(f"[grid] n={grid.n} differs from [system] n={sys_.n}")
    make_initial_data(data, 1.0, grid)
    setup = ex.NonlinearSetup(grid, data, controls, float(opts["Tmax"]))
    model = LifespanModel.for_system(sys_, R0=opts["R0"], C_scale=opts["C_scale"])
    params = {"system": sys_.to_dict(), "mu1": mu1.to_dict(), "mu2": mu2.to_dict(),
              "setup": setup.to_dict(), **dict(opts, eps=eps.tolist())}

    def go():
        res = ex.lifespan_sweep(sys_, mu1, mu2, eps, setup, model, opts["C"],
                                bool(opts["threshold_check"]), opts["min_r2"], threads=cfg.threads)
        res.manifest = _manifest("lifespan", params, cfg)
        return res

    return params, go


_TESTFN_DEFAULTS = {
    "fraclap_bound": [[1, 0.25], [1, 0.5]],
    "fraclap_points": 200,
    "derivative_bound": [[4, 1], [4, 2], [2, 1], [2, 2], [0.5, 1], [0.5, 2]],
    "scaling_n": [1, 2],
    "scaling_count": 5,
    "moments": [[1, 0.25], [2, 0.25], [2, 0.5]],
    "envelopes": [[1, 0.25], [1, 0.5]],
}


def plan_testfn(doc, cfg):
    _top_level(doc, {"testfn"})
    opts = _section(doc, "testfn", _TESTFN_DEFAULTS)
    for n, s in opts["fraclap_bound"]:
        if n not in (1, 2) or not 0 < s <= 0.5:
            raise ConfigError(f"[testfn] fraclap_bound case ({n}, {s}) needs n in (1, 2) and 0 < sigma <= 1/2")
    for n, s in opts["moments"] + opts["envelopes"]:
        if n not in (1, 2) or not 0 <= s <= 0.5:
            raise ConfigError(f"[testfn] case ({n}, {s}) needs n in (1, 2) and 0 <= sigma <= 1/2")
    for q, order in opts["derivative_bound"]:
        if not q > 0 or order not in (1, 2):
            raise ConfigError(f"[testfn] derivative_bound case ({q}, {order}) needs q > 0 and order 1 or 2")
    params = dict(opts, eta=tf.ETA_DESCRIPTION)

    def go():
        rows, failures = [], []

        def add(kind, case, passed, value, details):
            rows.append({"check": kind, "case": json.dumps(case), "passed": bool(passed),
                         "value": value, "details": details})
            if not passed:
                failures.append(f"{kind} {case}: value {value}")

        for n, s in opts["fraclap_bound"]:
            r = tf.verify_lemma_bound_9(s, int(n), points=int(opts["fraclap_points"]))
            add("lemma_fraclap_power", [n, s], r.passed, r.C_max, r.details)
        for q, order in opts["derivative_bound"]:
            r = tf.verify_lemma_bound_8(q, int(order))
            add("lemma_derivative_power", [q, order], r.passed, r.C_max, r.details)
        if opts["scaling_count"] > 0:
            r = tf.verify_scaling_identity(tuple(opts["scaling_n"]), int(opts["scaling_count"]),
                                           seed=cfg.seed)
            add("scaling_identity", opts["scaling_n"], r.passed, r.C_max, r.details)
        for n, s in opts["moments"]:
            m = tf.moment_asymptotics(int(n), float(s))
            add("moment_asymptotics", [n, s], m["passed"], m["Phi1"]["slope"],
                {"target": m["target"], "Phi2_slope": (m["Phi2"] or {}).get("slope"),
                 "delta": m["delta"], "nu": m["nu"]})
        for n, s in opts["envelopes"]:
            e = tf.envelope_ladder(int(n), float(s))
            add("derivative_envelopes", [n, s], e["passed"], e["combined_growth"],
                {"combined": [r["combined"] for r in e["rows"]], "spread": e["combined_spread"]})
        lines = [f"{r['check']} {r['case']}: {'pass' if r['passed'] else 'FAIL'} ({r['value']})"
                 for r in rows]
        return ex.ExperimentResult(_manifest("testfn", params, cfg), rows,
                                   {"checks": len(rows), "failed": len(failures)}, failures, lines)

    return params, go


PLANNERS: dict[str, Callable] = {
    "classify": plan_classify,
    "kernels": plan_kernels,
    "simulate": plan_simulate,
    "decay": plan_decay,
    "lifespan": plan_lifespan,
    "testfn": plan_testfn,
}
CONFIG_REQUIRED = {"classify", "simulate"}


def _manifest(name, params, cfg) -> ex.ExperimentManifest:
    return ex.ExperimentManifest(name, params, seed=cfg.seed)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: out)")
    common.add_argument("--dry-run", action="store_true", default=argparse.SUPPRESS,
                        help="validate the config, print the resolved parameters and stop")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="thread budget (default: $FRACTODAMP_THREADS or 1)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--on-exists", choices=("reuse", "refuse", "overwrite"),
                        default=argparse.SUPPRESS, help="what to do when the manifest was already persisted")
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="fractodamp", parents=[common],
                                     description="Numerical lab for weakly coupled structurally "
                                                 "damped wave systems.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "classify": "global existence or blow-up verdict on the critical curve",
        "kernels": "tabulate the linear propagator kernels",
        "simulate": "one pseudospectral run",
        "decay": "linear decay exponents against theory",
        "lifespan": "blow-up times along an eps ladder",
        "testfn": "numerical checks of the test-function lemmas",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("config", nargs="?", help="TOML config document")
    return parser


def resolve(args: argparse.Namespace) -> CliConfig:
    ns = vars(args)
    return CliConfig(subcommand=ns["subcommand"], config=ns.get("config"), out=ns.get("out", "out"),
                     verbosity=ns.get("verbose", 0), threads=thread_budget(ns.get("threads")),
                     seed=ns.get("seed", 0), dry_run=ns.get("dry_run", False),
                     on_exists=ns.get("on_exists", "reuse"))


def execute(cfg: CliConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout

    def say(msg=""):
        print(msg, file=stdout)

    if cfg.config is None and cfg.subcommand in CONFIG_REQUIRED:
        raise ConfigError(f"{cfg.subcommand} needs a config document")
    doc = load_document(cfg.config) if cfg.config else {}
    params, go = PLANNERS[cfg.subcommand](doc, cfg)
    if cfg.dry_run:
        say(json.dumps({"subcommand": cfg.subcommand, "threads": cfg.threads, "seed": cfg.seed,
                        "out": cfg.out, "params": ex._jsonable(params)}, indent=2, sort_keys=True))
        return EXIT_OK
    np.random.seed(cfg.seed)
    result = go()
    saved = ex.persist(result, cfg.out, cfg.on_exists)
    for line in result.log_lines:
        say(line)
    say(f"{'reused' if saved.reused else 'wrote'} {saved.directory}")
    if result.summary.get("numerical_failure"):
        for f in result.failures:
            say(f"FAIL: {f}")
        return EXIT_NUMERICAL
    if result.failures:
        for f in result.failures:
            say(f"FAIL: {f}")
        return EXIT_ACCEPTANCE
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(getattr(args, "verbose", 0), logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return execute(resolve(args))
    except ExitCode as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FractodampError as exc:  # numerical: quadrature, convergence, domain at run time
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileExistsError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
