"""Command-line interface: simulate, verify, sweep and mvt.

Exit codes partition outcomes: 0 pass, 1 inequality violation, 2 usage or
configuration error. Output formats are deterministic byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from typing import Optional

import numpy as np

from .bounds import norm_trace, psi_summary
from .expr import EvaluationError, ExpressionSyntaxError, evaluate, parse
from .harness import ScenarioDiscard, run_verification, sweep, sweep_summary
from .integrator import BlowUpError, DomainError, integrate
from .model import REGIME_RETARDED, Problem, ValidationError, validate
from .mvt import MvtError, locate_mvt_batch, locate_mvt_points

CONFIG_KEYS = ("m1", "m2", "m3", "delay", "history", "t0", "tf", "step")
CSV_HEADER = "t,y,dy,d2y,d3y,norm,u,psi,env_lo,env_hi"

_CONFIG_ERRORS = (
    ValidationError,
    ExpressionSyntaxError,
    EvaluationError,
    BlowUpError,
    DomainError,
    MvtError,
    ScenarioDiscard,
)


class ConfigError(ValueError):
    pass


def load_config(path: str) -> Problem:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    missing = [k for k in CONFIG_KEYS if k not in data]
    if missing:
        raise ConfigError(f"config missing key(s): {', '.join(missing)}")

    def text(key: str):
        value = data[key]
        if not isinstance(value, str):
            raise ConfigError(f"config key '{key}' must be expression text")
        try:
            return parse(value)
        except ExpressionSyntaxError as exc:
            raise ConfigError(f"config key '{key}': {exc}") from exc

    def number(key: str) -> float:
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key '{key}' must be a number")
        if not math.isfinite(float(value)):
            raise ConfigError(f"config key '{key}' must be finite")
        return float(value)

    return Problem(
        m1=text("m1"),
        m2=text("m2"),
        m3=text("m3"),
        delay=text("delay"),
        history=text("history"),
        t0=number("t0"),
        tf=number("tf"),
        step=number("step"),
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    return obj


def _write_json(path: Optional[str], payload: dict) -> None:
    text = json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    problem = load_config(args.config)
    if args.step is not None:
        problem = replace(problem, step=float(args.step))
    problem = validate(problem)
    tr = integrate(problem)
    trace = norm_trace(tr)
    batch = locate_mvt_batch(tr, tr.grid) if problem.regime == REGIME_RETARDED else None
    psi = psi_summary(problem, tr, batch)
    shift = trace.times - problem.t0
    env_lo = trace.norm[0] * np.exp(-psi.psi_star * shift)
    with np.errstate(over="ignore"):
        env_hi = trace.norm[0] * np.exp(psi.psi_star * shift)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for i in range(len(trace.times)):
            row = (
                trace.times[i], trace.y[i], trace.y1[i], trace.y2[i], trace.y3[i],
                trace.norm[i], trace.u[i], psi.psi[i], env_lo[i], env_hi[i],
            )
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return 0


def cmd_verify(args) -> int:
    problem = validate(load_config(args.config))
    report = run_verification(problem, psi_override=args.psi_override)
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{check.name}: {status} (worst margin {check.worst_margin:.6g}, {check.points} points)")
    print(f"overall: {'PASS' if report.overall_pass else 'FAIL'} (psi_star {report.psi_star:.17g})")
    if args.report:
        _write_json(args.report, report.to_dict())
    return 0 if report.overall_pass else 1


def cmd_sweep(args) -> int:
    results = sweep(args.seed, args.count)
    summary = sweep_summary(results)
    for rec in summary["scenarios"]:
        if rec["discarded"]:
            print(f"seed {rec['seed']}: DISCARDED")
        else:
            print(f"seed {rec['seed']}: {'PASS' if rec['pass'] else 'FAIL'}")
    print(
        f"overall: {'PASS' if summary['overall_pass'] else 'FAIL'} "
        f"({summary['checked']} checked, {summary['discarded']} discarded)"
    )
    if args.report:
        _write_json(args.report, summary)
    return 0 if summary["overall_pass"] else 1


def cmd_mvt(args) -> int:
    problem = validate(load_config(args.config))
    t_k = float(args.time)
    if not problem.t0 <= t_k <= problem.tf:
        raise ConfigError(f"time {t_k} outside interval [{problem.t0}, {problem.tf}]")
    if evaluate(problem.delay, t_k) <= 0.0:
        raise ConfigError(f"delay vanishes at time {t_k}; mean-value points undefined")
    tr = integrate(problem)
    mv = locate_mvt_points(tr, t_k)
    _write_json(
        None,
        {
            "t_k": mv.t_k,
            "delay": mv.delay,
            "points": list(mv.points),
            "residuals": list(mv.residuals),
            "magnitudes": list(mv.derivative_magnitudes),
        },
    )
    return 0


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delaybound",
        description="Integrate the retarded third-order equation and verify its envelope bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate and write the trajectory CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--step", type=float, default=None, help="override the config step")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run every inequality check")
    p.add_argument("--config", required=True)
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.add_argument(
        "--psi-override",
        type=float,
        default=None,
        help="replace the envelope rate (debug; proves the checker can reject)",
    )
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="verify a batch of generated scenarios")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=_positive_int, required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mvt", help="print the mean-value points at one time")
    p.add_argument("--config", required=True)
    p.add_argument("--time", type=float, required=True)
    p.set_defaults(func=cmd_mvt)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, *_CONFIG_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(main())
