"""Command-line driver: ``zkbox {check,run,mms,ineq,compare} --config FILE``.

Exit codes: 0 success, 2 input/configuration error, 3 hypothesis-certificate
failure, 4 physics-check failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as D
from . import grid as G
from . import ineq as I
from . import solver as S
from . import theory as T
from .errors import (CompatibilityError, ConfigError, DivergenceError, SingularSystemError,
                     ValidationError, ZKError)

EXIT_OK, EXIT_INPUT, EXIT_CERT, EXIT_PHYSICS = 0, 2, 3, 4

# key -> parser; list-valued keys are comma separated
_FLOAT = "float"
_INT = "int"
_STR = "str"
_FLOATS = "floats"
_INTS = "ints"
KEYS = {
    "L": _FLOAT, "B_y": _FLOAT, "B_z": _FLOAT, "c_s": _FLOAT,
    "n_x": _INT, "n_y": _INT, "n_z": _INT,
    "dt": _FLOAT, "t_end": _FLOAT, "amplitude": _FLOAT, "record_every": _INT,
    "scenario": _STR, "c1_convention": _STR, "slack": _FLOAT, "seed": _INT,
    # optional extensions
    "nonlinear_mode": _STR, "picard_tol": _FLOAT, "picard_max_iter": _INT,
    "startup_steps": _INT, "ladder": _INTS, "deltas": _FLOATS, "perturbation": _STR,
    "n_samples": _INT, "steklov_slack": _FLOAT, "energy_tol": _FLOAT, "mms_lambda": _FLOAT,
}
SCENARIOS = ("decay", "mms", "ineq", "compare")
_BOX = ("L", "B_y", "B_z")
_GRID = ("n_x", "n_y", "n_z")
REQUIRED = {
    "decay": _BOX + ("c_s",) + _GRID + ("dt", "t_end", "amplitude"),
    "mms": _BOX + ("c_s", "dt", "t_end", "amplitude"),
    "ineq": _BOX + _GRID,
    "compare": _BOX + ("c_s",) + _GRID + ("dt", "t_end", "amplitude"),
}
DEFAULTS = {
    "record_every": 1, "c1_convention": T.THEOREM_STATEMENT, "slack": 0.05, "seed": 0,
    "nonlinear_mode": S.PICARD, "picard_tol": 1e-10, "picard_max_iter": 50,
    "startup_steps": 2, "ladder": [17, 25, 33], "deltas": [1e-2, 1e-3, 1e-4],
    "perturbation": "scale", "n_samples": 100, "steklov_slack": 5.0, "energy_tol": 1e-2,
    "mms_lambda": 1.0,
}
PERTURBATIONS = ("scale", "sine")

H2_RATE_FACTOR = 0.9
H2_R2_MIN = 0.95
E7_FACTOR = 2.0
MMS_MIN_ORDER = 1.8
COMPARE_FACTOR = 2.0


# ------------------------------------------------------------------ config

def _parse_value(kind, raw, key, line):
    def num(text, cast):
        try:
            v = float(text)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {text!r} as a number", line=line, key=key) from None
        if not math.isfinite(v):
            raise ConfigError(f"{key}: value must be finite", line=line, key=key)
        if cast is int:
            if v != int(v):
                raise ConfigError(f"{key}: expected an integer, got {text!r}", line=line, key=key)
            return int(v)
        return v

    if kind == _STR:
        return raw
    if kind in (_FLOAT, _INT):
        return num(raw, int if kind == _INT else float)
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{key}: empty list", line=line, key=key)
    return [num(p, int if kind == _INTS else float) for p in parts]


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", line=lineno, key=key)
        if key in cfg:
            raise ConfigError(f"duplicate key {key!r}", line=lineno, key=key)
        if not value:
            raise ConfigError(f"{key}: missing value", line=lineno, key=key)
        cfg[key] = _parse_value(KEYS[key], value, key, lineno)
    return cfg


def load_config(path, command: str) -> dict:
    """Read, validate and default-fill a config for ``command``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config(text)
    scenario = cfg.get("scenario")
    if scenario is not None and scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; use one of {SCENARIOS}", key="scenario")
    wanted = {"run": "decay", "mms": "mms", "ineq": "ineq", "compare": "compare"}.get(command)
    if wanted is not None:
        if scenario not in (None, wanted):
            raise ConfigError(f"'{command}' needs scenario = {wanted}, got {scenario!r}", key="scenario")
        scenario = wanted
    required = set(REQUIRED[scenario]) if scenario else set(_BOX)
    if command == "check":
        required.add("c_s")
        if cfg.get("amplitude", 0.0) != 0.0:
            required.update(_GRID)
    missing = sorted(required - cfg.keys())
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}", key=missing[0])
    if cfg.get("c1_convention", T.THEOREM_STATEMENT) not in T.C1_CONVENTIONS:
        raise ConfigError(f"c1_convention must be one of {T.C1_CONVENTIONS}", key="c1_convention")
    if cfg.get("perturbation", "scale") not in PERTURBATIONS:
        raise ConfigError(f"perturbation must be one of {PERTURBATIONS}", key="perturbation")
    out = dict(DEFAULTS)
    out.update(cfg)
    out["scenario"] = scenario
    return out


def _params(cfg) -> T.PhysParams:
    return T.PhysParams(cfg["c_s"], cfg["L"], cfg["B_y"], cfg["B_z"])


def _grid(cfg, n=None) -> G.Grid3:
    nx, ny, nz = (n, n, n) if n is not None else (cfg["n_x"], cfg["n_y"], cfg["n_z"])
    return G.make_grid(cfg["L"], cfg["B_y"], cfg["B_z"], nx, ny, nz)


def _solver_config(cfg, grid, **over) -> S.SolverConfig:
    kw = dict(params=_params(cfg), grid=grid, dt=cfg["dt"], t_end=cfg["t_end"],
              nonlinear_mode=cfg["nonlinear_mode"], picard_max_iter=cfg["picard_max_iter"],
              picard_tol=cfg["picard_tol"], record_every=cfg["record_every"],
              startup_steps=cfg["startup_steps"])
    kw.update(over)
    return S.SolverConfig(**kw)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _write_json(path, payload):
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2) + "\n")


# ------------------------------------------------------------------- check

def certify(cfg):
    """Constants, certificate and J0 for the configured bump amplitude."""
    p = _params(cfg)
    amp = cfg.get("amplitude", 0.0)
    if amp:
        u0 = S.make_initial_bump(_grid(cfg), amp)
        u0_l2, J0 = float(G.norm(u0)), T.compute_J0(u0, p)
    else:
        u0, u0_l2, J0 = None, 0.0, 0.0
    consts = T.compute_constants(p, u0_l2, cfg.get("c1_convention", T.THEOREM_STATEMENT))
    cert = T.check_hypotheses(consts, p.c_s, u0_l2, J0)
    return p, u0, u0_l2, J0, consts, cert


def cmd_check(cfg, args) -> int:
    p, _, u0_l2, J0, consts, cert = certify(cfg)
    c1_alt = {conv: T.c1(p.c_s, u0_l2, conv) for conv in T.C1_CONVENTIONS}
    for name in ("K1", "K2", "K3", "K4"):
        print(f"{name:<22s} {getattr(consts, name):.10g}")
    for conv, v in c1_alt.items():
        print(f"{'C1[' + conv + ']':<22s} {v:.10g}")
    print(f"{'chi':<22s} {consts.chi:.10g}")
    print(f"{'||u0||':<22s} {u0_l2:.10g}")
    if "amplitude" in cfg:
        print(f"{'J0':<22s} {J0:.10g}")
    for name in ("cond_K2", "cond_u0", "cond_J0"):
        c = getattr(cert, name)
        print(f"{name:<22s} margin {c.margin:+.6e}  {'pass' if c.passed else 'FAIL'}")
    print(f"certificate: {'pass' if cert.overall else 'FAIL'}")
    if args.summary:
        _write_json(args.summary, {"constants": {**consts.as_dict(), "C1_conventions": c1_alt,
                                                 "u0_l2": u0_l2, "J0": J0},
                                   "certificate": cert.as_dict()})
    return EXIT_OK if cert.overall else EXIT_CERT


# --------------------------------------------------------------------- run

def write_csv(path, series) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(D.CSV_COLUMNS) + "\n")
        for r in series:
            fh.write(",".join(format(v, ".17g") for v in r.row()) + "\n")


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != D.CSV_COLUMNS:
            raise ValidationError(f"unexpected CSV header {reader.fieldnames}")
        return [D.DiagnosticsRecord.from_row(row) for row in reader]


def _fit(series, selector):
    try:
        f = D.fit_decay_rate(series, selector)
    except ValidationError as exc:
        return {"status": "not_applicable", "reason": str(exc)}
    return {"status": "ok", "rate": f.rate, "r_squared": f.r_squared, "window": list(f.window)}


def _check(result: D.CheckResult, applicable=True):
    if not applicable:
        return {"status": "not_applicable"}
    return {"status": "pass" if result.passed else "fail",
            "worst_ratio": result.worst_ratio, "worst_t": result.worst_t}


def summarize(series, constants: dict, certificate_ok: bool) -> tuple[dict, dict]:
    """Checks and fits computed from a series and the summary's constants only.

    Theorem envelopes are marked not applicable when the certificate fails.
    """
    r0 = series[0]
    res, res_n = D.energy_identity_residual(series)
    checks = {
        "energy_identity": {"status": "pass" if res_n <= constants["energy_tol"] else "fail",
                            "residual": res, "normalized": res_n},
        "trace_monotone": {"status": "pass" if D.trace_monotone(series) else "fail"},
        "e2_envelope": _check(D.check_envelope(series, "w_l2_sq", r0.w_l2_sq,
                                               2 * constants["chi"], constants["slack"]),
                              certificate_ok),
        "ut_envelope": _check(D.check_envelope(series, "ut_w_sq", constants["J0"],
                                               constants["chi"], constants["slack"]),
                              certificate_ok),
        "e7_bounded": _check(D.check_boundedness(series, "second_yz",
                                                 E7_FACTOR * r0.second_yz), certificate_ok),
        "eux_bound": _check(D.check_eux_bound(series, constants["C1_estimate_iii"],
                                              constants["L"]), certificate_ok),
    }
    fits = {name: _fit(series, name) for name in ("l2_sq", "w_l2_sq", "ut_w_sq", "h2_sq")}
    h2 = fits["h2_sq"]
    threshold = H2_RATE_FACTOR * constants["chi"]
    if not certificate_ok or h2["status"] != "ok":
        checks["h2_rate"] = {"status": "not_applicable", "threshold": threshold}
    else:
        ok = h2["rate"] >= threshold and h2["r_squared"] >= H2_R2_MIN
        checks["h2_rate"] = {"status": "pass" if ok else "fail", "threshold": threshold,
                             "rate": h2["rate"], "r_squared": h2["r_squared"]}
    return checks, fits


def cmd_run(cfg, args) -> int:
    p, u0, u0_l2, J0, consts, cert = certify(cfg)
    if u0 is None:
        u0 = _grid(cfg).zeros()
    scfg = _solver_config(cfg, u0.grid)
    _, series = S.run(scfg, u0)
    constants = {**consts.as_dict(),
                 "C1_estimate_iii": T.c1(p.c_s, u0_l2, T.ESTIMATE_III),
                 "c_s": p.c_s, "L": p.L, "B_y": p.B_y, "B_z": p.B_z,
                 "u0_l2": u0_l2, "J0": J0, "slack": cfg["slack"], "energy_tol": cfg["energy_tol"]}
    checks, fits = summarize(series, constants, cert.overall)
    try:
        write_csv(args.csv, series)
        _write_json(args.summary, {"constants": constants, "certificate": cert.as_dict(),
                                   "checks": checks, "fits": fits})
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_INPUT
    failed = [k for k, v in checks.items() if v["status"] == "fail"]
    for k, v in checks.items():
        print(f"{k:<16s} {v['status']}")
    if not cert.overall:
        print("certificate failed: theorem envelopes not applicable")
    return EXIT_PHYSICS if failed else EXIT_OK


# --------------------------------------------------------------------- mms

def mms_study(cfg) -> dict:
    """Manufactured-solution errors at t_end over the ladder; dt shrinks with h."""
    ladder = cfg["ladder"]
    if len(ladder) < 2:
        raise ConfigError("ladder needs at least two resolutions", key="ladder")
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError("ladder must be strictly increasing", key="ladder")
    t_end, dt0 = cfg["t_end"], cfg["dt"]
    steps0 = t_end / dt0
    if t_end <= 0 or abs(steps0 - round(steps0)) > 1e-9 * max(1.0, steps0):
        raise ConfigError("t_end must be a positive multiple of dt", key="dt")
    m = S.ManufacturedSolution(cfg["amplitude"], cfg["mms_lambda"])
    rows = []
    for n in ladder:
        g = _grid(cfg, n)
        steps = max(1, round(round(steps0) * (n - 1) / (ladder[0] - 1)))
        scfg = _solver_config(cfg, g, dt=t_end / steps, forcing=m, record_every=steps)
        final, _ = S.run(scfg, m.field(g, 0.0))
        err = float(G.norm(G.Field3(g, final.u.values - m.values(g, t_end))))
        rows.append({"n": n, "h": g.h_x, "dt": t_end / steps, "error": err})
    orders = []
    for a, b in zip(rows, rows[1:]):
        if a["error"] == 0 and b["error"] == 0:
            orders.append(None)
        elif a["error"] == 0 or b["error"] == 0:
            orders.append(math.inf if b["error"] == 0 else -math.inf)
        else:
            orders.append(math.log(a["error"] / b["error"]) / math.log(a["h"] / b["h"]))
    exact = all(r["error"] == 0 for r in rows)
    monotone = all(b["error"] < a["error"] for a, b in zip(rows, rows[1:]))
    passed = exact or (orders[-1] is not None and orders[-1] >= MMS_MIN_ORDER)
    return {"rows": rows, "orders": orders, "exact": exact, "monotone": monotone,
            "passed": passed}


def cmd_mms(cfg, args) -> int:
    study = mms_study(cfg)
    print(f"{'n':>5s} {'h':>12s} {'dt':>12s} {'L2 error':>14s} {'order':>8s}")
    for i, r in enumerate(study["rows"]):
        o = "" if i == 0 else study["orders"][i - 1]
        o = o if isinstance(o, str) else ("exact" if o is None else f"{o:.3f}")
        print(f"{r['n']:5d} {r['h']:12.5e} {r['dt']:12.5e} {r['error']:14.6e} {o:>8s}")
    print("errors monotone decreasing:", "yes" if study["monotone"] else "no")
    print("mms:", "exact" if study["exact"] else ("pass" if study["passed"] else "FAIL"))
    if args.summary:
        _write_json(args.summary, study)
    return EXIT_OK if study["passed"] else EXIT_PHYSICS


# -------------------------------------------------------------------- ineq

def cmd_ineq(cfg, args) -> int:
    g = _grid(cfg)
    stek = I.steklov_suite(g, cfg["n_samples"], cfg["seed"], cfg["steklov_slack"])
    interp = I.interpolation_suite(g, cfg["n_samples"], cfg["seed"])
    for axis, rep in stek.items():
        print(f"steklov {axis}: worst {rep.worst_ratio:.12g} (sample {rep.worst_sample_id}) "
              f"{'pass' if rep.passed else 'FAIL'}")
    for q, rep in interp.items():
        print(f"interp q={q}: worst {rep.worst_ratio:.12g} (sample {rep.worst_sample_id}) "
              f"{'pass' if rep.passed else 'FAIL'}")
    ok = all(r.passed for r in stek.values()) and all(r.passed for r in interp.values())
    if args.summary:
        _write_json(args.summary, {"steklov": {k: v.as_dict() for k, v in stek.items()},
                                   "interpolation": {str(k): v.as_dict() for k, v in interp.items()},
                                   "passed": ok})
    return EXIT_OK if ok else EXIT_PHYSICS


# ----------------------------------------------------------------- compare

def perturbed(u0: G.Field3, delta: float, kind: str) -> G.Field3:
    """``(1+delta) u0`` or ``u0 + delta * amp * sin(pi x/L) sin(pi y/B_y) sin(pi z/B_z)``.

    The sine variant violates ``u_x(L) = 0`` and is rejected downstream.
    """
    if kind == "scale":
        return G.Field3(u0.grid, (1 + delta) * u0.values, G.DIRICHLET)
    amp = float(np.max(np.abs(u0.values)))
    return G.Field3(u0.grid, u0.values + delta * amp * I.sine_mode(u0.grid, 1, 1, 1).values,
                    G.DIRICHLET)


def compare_study(cfg) -> dict:
    g = _grid(cfg)
    u0 = S.make_initial_bump(g, cfg["amplitude"])
    deltas = cfg["deltas"]
    others = [perturbed(u0, d, cfg["perturbation"]) for d in deltas]
    for b in others:
        T.check_compatible(b)
    ratios = D.amplification_ratios(_solver_config(cfg, g), u0, others)
    nonzero = [r for d, r in zip(deltas, ratios) if d != 0]
    if not nonzero:
        spread, passed = 1.0, all(r == 0 for r in ratios)
    elif min(nonzero) <= 0 or not all(math.isfinite(r) for r in nonzero):
        spread, passed = math.inf, False
    else:
        spread = max(nonzero) / min(nonzero)
        passed = spread <= COMPARE_FACTOR and all(r == 0 for d, r in zip(deltas, ratios) if d == 0)
    return {"deltas": deltas, "ratios": ratios, "spread": spread, "passed": passed}


def cmd_compare(cfg, args) -> int:
    study = compare_study(cfg)
    print(f"{'delta':>10s} {'amplification':>16s}")
    for d, r in zip(study["deltas"], study["ratios"]):
        print(f"{d:10.3e} {r:16.10g}")
    print(f"spread {study['spread']:.6g} (limit {COMPARE_FACTOR:g}):",
          "pass" if study["passed"] else "FAIL")
    if args.summary:
        _write_json(args.summary, study)
    return EXIT_OK if study["passed"] else EXIT_PHYSICS


# -------------------------------------------------------------------- main

COMMANDS = {"check": cmd_check, "run": cmd_run, "mms": cmd_mms, "ineq": cmd_ineq,
            "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zkbox", description="3D Zakharov-Kuznetsov box simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("check", "evaluate constants and the hypothesis certificate"),
                        ("run", "simulate a decay run and check the estimates"),
                        ("mms", "manufactured-solution convergence study"),
                        ("ineq", "Steklov and interpolation inequality suites"),
                        ("compare", "continuous-dependence experiment")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="key = value config file")
        if name == "run":
            p.add_argument("--csv", required=True, help="diagnostics time series output")
            p.add_argument("--summary", required=True, help="JSON summary output")
        else:
            p.add_argument("--summary", help="optional JSON report")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except CompatibilityError as exc:
        print(f"incompatible initial data: {exc}", file=sys.stderr)
    except (DivergenceError, SingularSystemError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except (ValidationError, ZKError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
