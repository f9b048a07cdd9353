"""Command-line entry point.

    selfdual solve --config problem.ini [--out-traj traj.csv] [--out-report report.json]
    selfdual suite [--trials 200] [--seed 0]

Exit status of ``solve``: 0 when the solver converged and the certificate
passes, 2 when it did not (outputs are still written), 1 on configuration
errors (nothing is written).  ``SELFDUAL_THREADS`` caps the BLAS thread
pool.

Config schema (INI, ``#`` starts a comment; vectors are space or comma
separated, matrix rows are separated by ``;``)::

    [problem]   kind = gradient_flow | hamiltonian_j1 | hamiltonian_j2 | second_order
                T, N, d, beta (second_order only)
    [potential] kind = quadratic (A, b, c) | norm_squared (scale, center) | zero | l1 (scale)
    [forcing]   kind = none | constant (value) | sinusoid (amplitude, frequency, phase)
                | table (times, values)
    [boundary]  kind = initial_value (x0) | periodic | anti_periodic | skew_periodic
                | convex_set_gap (set = point|box|ball|affine and its data)
                second_order: psi1, psi2 = periodic | free | quadratic
    [growth]    beta, alpha_bar, gamma_bar
    [solver]    max_iterations, gradient_tolerance, objective_tolerance, method,
                epsilon_start, epsilon_ratio, epsilon_floor, lambda_start, lambda_ratio,
                lambda_floor
    [output]    trajectory, report, figure, certificate_tolerance, rk4_check, oracle_check
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
import tempfile
import time
from contextlib import nullcontext
from dataclasses import dataclass, field

import numpy as np

from . import convex as cx
from .errors import ConfigError, ContractError, OracleError
from .lagrangians import (FlowKind, Problem, boundary_relation_residual, make_boundary,
                          second_order_reduce)
from .paths import PathGrid, write_csv
from .solver import Method, Schedule, SolverOptions, certify, minimize, resonance_guard

log = logging.getLogger("selfdual")

POTENTIAL_KINDS = ("quadratic", "norm_squared", "zero", "l1")
FORCING_KINDS = ("none", "constant", "sinusoid", "table")
BOUNDARY_KINDS = ("initial_value", "periodic", "anti_periodic", "skew_periodic",
                  "convex_set_gap")
PHASE_BOUNDARY = ("periodic", "free", "quadratic")


# -- config parsing --------------------------------------------------------

def _vector(text, name):
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{name}: expected numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{name}: empty value")
    return np.array(vals)


def _matrix(text, name, d):
    rows = [r for r in text.split(";") if r.strip()]
    if len(rows) == 1:
        v = _vector(rows[0], name)
        if v.size == 1:
            return v[0] * np.eye(d)
        if v.size == d:
            return np.diag(v)
        if v.size == d * d:
            return v.reshape(d, d)
        raise ConfigError(f"{name}: {v.size} entries do not fit a {d}x{d} matrix")
    vals = [_vector(r, name) for r in rows]
    if len({v.size for v in vals}) != 1:
        raise ConfigError(f"{name}: matrix rows have different lengths")
    M = np.array(vals)
    if M.shape != (d, d):
        raise ConfigError(f"{name}: matrix has shape {M.shape}, expected ({d}, {d})")
    return M


def _sized(v, d, name):
    if v.size == 1 and d > 1:
        return np.full(d, v[0])
    if v.size != d:
        raise ConfigError(f"{name}: length {v.size} does not match d={d}")
    return v


@dataclass
class RunConfig:
    problem: Problem
    options: SolverOptions
    trajectory: str = None
    report: str = None
    figure: str = None
    certificate_tolerance: float = 1e-6
    rk4_check: bool = True
    oracle_check: bool = True
    linear: tuple = None          # (A, forcing callable or vector, flow kind) for the oracle
    echo: dict = field(default_factory=dict)


def _get(section, key, default=None, required=False):
    if key in section:
        return section[key].strip()
    if required:
        raise ConfigError(f"[{section.name}] missing required key {key!r}")
    return default


def _float(section, key, default=None, required=False):
    v = _get(section, key, None, required)
    if v is None:
        return default
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: not a number: {v!r}") from None


def _bool(section, key, default):
    v = _get(section, key)
    if v is None:
        return default
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section.name}] {key}: not a boolean: {v!r}")


def _potential(sec, d):
    kind = _get(sec, "kind", required=True)
    if kind == "quadratic":
        A = _matrix(_get(sec, "A", "1"), "potential.A", d)
        b = _sized(_vector(_get(sec, "b", "0"), "potential.b"), d, "potential.b")
        f = cx.Quadratic(A, b, _float(sec, "c", 0.0))
        return f, (A, b)
    if kind == "norm_squared":
        scale = _float(sec, "scale", 1.0)
        center = _sized(_vector(_get(sec, "center", "0"), "potential.center"), d,
                        "potential.center")
        return cx.NormSquared(d, scale, center), (scale * np.eye(d), -scale * center)
    if kind == "zero":
        return cx.Zero(d), (np.zeros((d, d)), np.zeros(d))
    if kind == "l1":
        return cx.L1Norm(d, _float(sec, "scale", 1.0)), None
    raise ConfigError(f"unknown potential kind {kind!r}; supported: {', '.join(POTENTIAL_KINDS)}")


def _forcing(sec, d):
    if sec is None:
        return None
    kind = _get(sec, "kind", "none")
    if kind == "none":
        return None
    if kind == "constant":
        return cx.ConstantForcing(_sized(_vector(_get(sec, "value", required=True),
                                                 "forcing.value"), d, "forcing.value"))
    if kind == "sinusoid":
        amp = _sized(_vector(_get(sec, "amplitude", required=True), "forcing.amplitude"), d,
                     "forcing.amplitude")
        freq = _sized(_vector(_get(sec, "frequency", "1"), "forcing.frequency"), d,
                      "forcing.frequency")
        phase = _sized(_vector(_get(sec, "phase", "0"), "forcing.phase"), d, "forcing.phase")
        return cx.SinusoidForcing(amp, freq, phase)
    if kind == "table":
        times = _vector(_get(sec, "times", required=True), "forcing.times")
        rows = [r for r in _get(sec, "values", required=True).split(";") if r.strip()]
        values = np.array([_sized(_vector(r, "forcing.values"), d, "forcing.values")
                           for r in rows])
        return cx.TableForcing(times, values)
    raise ConfigError(f"unknown forcing kind {kind!r}; supported: {', '.join(FORCING_KINDS)}")


def _boundary(sec, d):
    kind = _get(sec, "kind", required=True)
    if kind not in BOUNDARY_KINDS:
        raise ConfigError(f"unknown boundary kind {kind!r}; supported: {', '.join(BOUNDARY_KINDS)}")
    if kind == "initial_value":
        x0 = _sized(_vector(_get(sec, "x0", required=True), "boundary.x0"), d, "boundary.x0")
        return make_boundary(kind, d, x0=x0)
    if kind == "convex_set_gap":
        s = _get(sec, "set", required=True)
        if s == "point":
            K = {"kind": "point", "point": _sized(_vector(_get(sec, "point", required=True),
                                                          "boundary.point"), d, "boundary.point")}
        elif s == "box":
            K = {"kind": "box",
                 "lower": _sized(_vector(_get(sec, "lower", required=True), "boundary.lower"),
                                 d, "boundary.lower"),
                 "upper": _sized(_vector(_get(sec, "upper", required=True), "boundary.upper"),
                                 d, "boundary.upper")}
        elif s == "ball":
            K = {"kind": "ball", "radius": _float(sec, "radius", required=True),
                 "center": _sized(_vector(_get(sec, "center", "0"), "boundary.center"), d,
                                  "boundary.center")}
        elif s == "affine":
            rows = [r for r in _get(sec, "M", required=True).split(";") if r.strip()]
            K = {"kind": "affine", "M": np.array([_vector(r, "boundary.M") for r in rows]),
                 "r": _vector(_get(sec, "r", required=True), "boundary.r")}
        else:
            raise ConfigError(f"unsupported convex set {s!r}; supported sets: point, box, "
                              f"ball, affine")
        return make_boundary(kind, d, K=K)
    return make_boundary(kind, d)


def _phase_psi(name, d):
    if name == "periodic":
        return cx.PointIndicator(np.zeros(d))
    if name == "free":
        return cx.Zero(d)
    if name == "quadratic":
        return cx.NormSquared(d)
    raise ConfigError(f"unknown phase boundary {name!r}; supported: {', '.join(PHASE_BOUNDARY)}")


def _schedule(sec, prefix):
    if sec is None:
        return Schedule()
    default = Schedule()
    return Schedule(_float(sec, f"{prefix}_start", default.start),
                    _float(sec, f"{prefix}_ratio", default.ratio),
                    _float(sec, f"{prefix}_floor", default.floor))


def load_config(filename) -> RunConfig:
    """Parse and validate a config file; raises ConfigError before any numerics."""
    if not os.path.isfile(filename):
        raise ConfigError(f"config file not found: {filename}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read(filename)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {filename}: {exc}") from None
    for name in ("problem", "potential", "boundary"):
        if name not in cp:
            raise ConfigError(f"missing section [{name}]")
    sec = cp["problem"]
    try:
        kind = FlowKind(_get(sec, "kind", required=True))
    except ValueError:
        raise ConfigError(f"unknown problem kind {sec['kind']!r}; supported: "
                          f"{', '.join(k.value for k in FlowKind)}") from None
    T = _float(sec, "T", required=True)
    N = int(_float(sec, "N", required=True))
    d = int(_float(sec, "d", 1))
    try:
        grid = PathGrid(T, N, d)
        base, linear = _potential(cp["potential"], d)
        forcing = _forcing(cp["forcing"] if "forcing" in cp else None, d)
        phi = cx.Forced(base, forcing, T) if forcing is not None else cx.Static(base, T)
        growth = None
        if "growth" in cp:
            g = cp["growth"]
            growth = cx.GrowthBounds(_float(g, "beta", required=True),
                                     _float(g, "alpha_bar", 0.0), _float(g, "gamma_bar", 0.0))
        if kind is FlowKind.SECOND_ORDER:
            beta = _float(sec, "beta", required=True)
            b = cp["boundary"]
            psi1 = _phase_psi(_get(b, "psi1", "periodic"), d)
            psi2 = _phase_psi(_get(b, "psi2", "periodic"), d)
            functional = _get(b, "functional", "hamiltonian_j1")
            prob = second_order_reduce(phi, psi1, psi2, beta, grid, functional)
            linear = None
        else:
            prob = Problem(kind, phi, _boundary(cp["boundary"], d), grid, growth)
    except ContractError as exc:
        raise ConfigError(str(exc)) from None

    sv = cp["solver"] if "solver" in cp else None
    try:
        opts = SolverOptions(
            max_iterations=int(_float(sv, "max_iterations", 5000)) if sv else 5000,
            gradient_tolerance=_float(sv, "gradient_tolerance", 1e-9) if sv else 1e-9,
            objective_tolerance=_float(sv, "objective_tolerance", 1e-8) if sv else 1e-8,
            epsilon_schedule=_schedule(sv, "epsilon"),
            lambda_schedule=_schedule(sv, "lambda"),
            method=Method(_get(sv, "method", "auto")) if sv else Method.AUTO)
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from None

    out = cp["output"] if "output" in cp else None
    cfg = RunConfig(prob, opts)
    if out is not None:
        cfg.trajectory = _get(out, "trajectory")
        cfg.report = _get(out, "report")
        cfg.figure = _get(out, "figure")
        cfg.certificate_tolerance = _float(out, "certificate_tolerance", 1e-6)
        cfg.rk4_check = _bool(out, "rk4_check", True)
        cfg.oracle_check = _bool(out, "oracle_check", True)
    if linear is not None:
        A, b = linear
        if forcing is None:
            f = b
        elif isinstance(forcing, cx.ConstantForcing):
            f = b + forcing.value
        else:
            f = lambda ts, b=b, F=forcing: b + F(ts)  # noqa: E731
        cfg.linear = (A, f, "hamiltonian" if prob.hamiltonian else "gradient")
    cfg.echo = {s: dict(cp[s]) for s in cp.sections()}
    return cfg


# -- running ---------------------------------------------------------------

def _check_writable(*paths):
    for p in paths:
        if p is None:
            continue
        directory = os.path.dirname(os.path.abspath(p)) or "."
        if not os.path.isdir(directory) or not os.access(directory, os.W_OK):
            raise ConfigError(f"output location not writable: {p}")


def _write_json(payload, filename):
    directory = os.path.dirname(os.path.abspath(filename))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".report-", suffix=".json")
    with os.fdopen(fd, "w") as fh:
        json.dump(payload, fh, indent=2, default=_jsonable)
    os.replace(tmp, filename)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return str(obj)


def _finite(x):
    # JSON has no inf or nan; keep them as string tags, recursing into containers
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, np.ndarray):
        return _finite(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def run(cfg: RunConfig, out_traj=None, out_report=None) -> int:
    traj = out_traj or cfg.trajectory
    report_path = out_report or cfg.report
    _check_writable(traj, report_path, cfg.figure)
    prob = cfg.problem

    advisory = resonance_guard(prob)
    started = time.perf_counter()
    rep = minimize(prob, cfg.options)
    elapsed = time.perf_counter() - started
    cert = certify(prob, rep.path, cfg.certificate_tolerance)

    verification = {"boundary_relation_residual": boundary_relation_residual(prob, rep.path)}
    if cfg.rk4_check and prob.phi.smooth:
        from .verify import rk4_crosscheck
        try:
            verification["rk4_max_deviation"] = rk4_crosscheck(prob, rep)
        except OracleError as exc:
            verification["rk4_error"] = str(exc)
    oracle_path = None
    if cfg.oracle_check and cfg.linear is not None:
        from .verify import linear_flow_oracle
        A, f, kind = cfg.linear
        try:
            oracle = linear_flow_oracle(A, f, prob.boundary, prob.grid, kind, prob.kind)
            oracle_path = oracle.path
            verification["oracle_max_deviation"] = float(
                np.max(np.abs(oracle.path.nodes - rep.path.nodes)))
        except OracleError as exc:
            verification["oracle_error"] = str(exc)

    ok = rep.converged and cert.passed
    payload = _finite({
        "status": "pass" if ok else "fail",
        "solve": rep.to_dict(),
        "certificate": cert.to_dict(),
        "resonance": advisory._asdict(),
        "boundary_advisories": prob.boundary.advisories(),
        "verification": verification,
        "runtime_seconds": elapsed,
        "config": cfg.echo,
    })
    if traj:
        write_csv(rep.path, traj, rep.interval_residuals)
    if report_path:
        _write_json(payload, report_path)
    if cfg.figure:
        from .plotting import plot_solution
        plot_solution(rep.path, rep.interval_residuals, cfg.figure,
                      title=f"{prob.kind.value}, gap {rep.objective:.3g}", reference=oracle_path)
    print("---- selfdual solve ----")
    print(f"kind            {prob.kind.value}")
    print(f"objective       {rep.objective:.6g}")
    print(f"converged       {rep.converged}")
    print(f"certificate     {'pass' if cert.passed else 'fail'} "
          f"(max interval residual {cert.max_interval_residual:.3g}, "
          f"boundary {cert.boundary_residual:.3g})")
    print(f"resonance       {advisory.status}")
    for key, val in verification.items():
        print(f"{key:<15} {val}")
    print("------------------------")
    return 0 if ok else 2


def run_suite(trials=200, seed=0, out=None) -> int:
    from .verify import symplectic_bound_suite, wirtinger_suite

    reports = [wirtinger_suite(PathGrid(1.0, 2000, 1), trials, seed),
               symplectic_bound_suite(PathGrid(1.0, 2000, 2), trials, seed)]
    print(f"{'suite':<12} {'trials':>6} {'violations':>10} {'worst_slack':>12} "
          f"{'allowance':>10}  result")
    for r in reports:
        print(f"{r.suite:<12} {r.trials:>6} {r.violations:>10} {r.worst_slack:>12.3e} "
              f"{r.allowance:>10.2e}  {'PASS' if r.passed else 'FAIL'}")
    if out:
        with open(out, "w") as fh:
            fh.write("[" + ",\n".join(r.to_json() for r in reports) + "]\n")
    return 0 if all(r.passed for r in reports) else 2


def _thread_limit():
    n = os.environ.get("SELFDUAL_THREADS")
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    try:
        return threadpool_limits(limits=max(1, int(n)))
    except ValueError:
        log.warning("ignoring non-integer SELFDUAL_THREADS=%r", n)
        return nullcontext()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="selfdual",
                                     description="Selfdual variational solver for flows")
    sub = parser.add_subparsers(dest="command", required=True)
    ps = sub.add_parser("solve", help="solve a configured problem")
    ps.add_argument("--config", required=True)
    ps.add_argument("--out-traj")
    ps.add_argument("--out-report")
    pt = sub.add_parser("suite", help="run the inequality property suites")
    pt.add_argument("--trials", type=int, default=200)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--out")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    with _thread_limit():
        if args.command == "suite":
            if args.trials < 1:
                print("error: --trials must be >= 1", file=sys.stderr)
                return 1
            return run_suite(args.trials, args.seed, args.out)
        try:
            cfg = load_config(args.config)
            _check_writable(args.out_traj, args.out_report, cfg.trajectory, cfg.report,
                            cfg.figure)
        except ConfigError as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return 1
        return run(cfg, args.out_traj, args.out_report)


if __name__ == "__main__":
    sys.exit(main())
