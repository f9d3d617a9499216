"""Randomized admissible scenarios, the verification pipeline, and studies.

Scenario generation is a pure function of the seed: bounded sinusoidal
coefficients, a sinusoidal delay kept inside [2h, 1] (identically zero for a
fifth of the seeds), a cubic history, and a horizon of 2 to 5 time units.
Runs whose norm exceeds the growth limit are discarded rather than failed,
since slacks lose meaning at that magnitude.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .bounds import (
    VerificationReport,
    check_envelope,
    delay_bound_records,
    derivative_bound_record,
    differential_inequality_record,
    norm_trace,
    psi_summary,
)
from .expr import parse
from .integrator import BlowUpError, integrate, samples
from .model import REGIME_RETARDED, Problem, sup_coefficients, validate
from .mvt import locate_mvt_batch

STEP = 1e-3
AMPLITUDE_BOUND = 2.0
FREQUENCY_RANGE = (0.5, 3.0)
HORIZON_RANGE = (2.0, 5.0)
ZERO_DELAY_FRACTION = 0.2
GROWTH_LIMIT = 1e12


class ScenarioDiscard(Exception):
    """Run aborted because the solution outgrew the verification range."""

    def __init__(self, reason: str, psi_star: Optional[float] = None) -> None:
        super().__init__(reason)
        self.reason = reason
        self.psi_star = psi_star


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    problem: Problem
    params: dict


@dataclass(frozen=True)
class ScenarioResult:
    seed: int
    report: Optional[VerificationReport]
    discarded: bool = False
    discard_reason: Optional[str] = None
    psi_star: Optional[float] = None

    @property
    def passed(self) -> Optional[bool]:
        return None if self.discarded else self.report.overall_pass

    def to_record(self) -> dict:
        return {
            "seed": self.seed,
            "pass": self.passed,
            "worst_margins": {} if self.discarded else self.report.worst_margins,
            "psi_star": self.psi_star,
            "discarded": self.discarded,
        }


def generate_scenario(seed: int) -> ScenarioSpec:
    """Deterministic admissible scenario for the given seed."""
    rng = random.Random(seed)
    zero_delay = rng.random() < ZERO_DELAY_FRACTION

    def sinusoid() -> str:
        a = rng.uniform(-AMPLITUDE_BOUND, AMPLITUDE_BOUND)
        b = rng.uniform(-(AMPLITUDE_BOUND - abs(a)), AMPLITUDE_BOUND - abs(a))
        c = rng.uniform(*FREQUENCY_RANGE)
        return f"{a!r} + {b!r}*sin({c!r}*t)"

    m1, m2, m3 = sinusoid(), sinusoid(), sinusoid()
    if zero_delay:
        delay = "0"
    else:
        d0 = rng.uniform(2.0 * STEP, 1.0)
        # 0.999 keeps the band strictly inside [2h, 1] against rounding
        amp = 0.999 * min(d0 - 2.0 * STEP, 1.0 - d0)
        d1 = rng.uniform(-amp, amp)
        d2 = rng.uniform(*FREQUENCY_RANGE)
        delay = f"{d0!r} + {d1!r}*sin({d2!r}*t)"
    coeffs = [rng.uniform(-1.0, 1.0) for _ in range(4)]
    history = f"{coeffs[0]!r} + {coeffs[1]!r}*t + {coeffs[2]!r}*t^2 + {coeffs[3]!r}*t^3"
    horizon = rng.uniform(*HORIZON_RANGE)

    problem = validate(
        Problem(
            m1=parse(m1),
            m2=parse(m2),
            m3=parse(m3),
            delay=parse(delay),
            history=parse(history),
            t0=0.0,
            tf=horizon,
            step=STEP,
        )
    )
    params = {
        "zero_delay": zero_delay,
        "m1": m1,
        "m2": m2,
        "m3": m3,
        "delay": delay,
        "history": history,
        "horizon": horizon,
        "step": STEP,
    }
    return ScenarioSpec(seed=seed, problem=problem, params=params)


def run_verification(problem: Problem, psi_override: Optional[float] = None) -> VerificationReport:
    """Integrate and evaluate every inequality check over the grid.

    Raises ScenarioDiscard on blow-up or when the norm outruns GROWTH_LIMIT.
    """
    p = problem if problem.validated else validate(problem)
    try:
        tr = integrate(p)
    except BlowUpError as exc:
        raise ScenarioDiscard(str(exc)) from exc
    trace = norm_trace(tr)
    if float(trace.norm.max()) > GROWTH_LIMIT:
        from .bounds import psi_global

        raise ScenarioDiscard(
            f"norm grew beyond {GROWTH_LIMIT:g}", psi_star=psi_global(p, tr)
        )

    sup = sup_coefficients(p)
    if p.regime == REGIME_RETARDED:
        batch = locate_mvt_batch(tr, tr.grid)
        # the delayed-value and third-derivative bounds need the mean-value
        # interval inside [t0, tf]: across the history splice w''' jumps, so
        # for intervals reaching below t0 the i=2 quotient point can fail to
        # exist and the bounds genuinely do not apply
        inside = batch.t_ks - batch.delays >= p.t0 - 1e-12
        checked = batch.subset(inside)
        records = delay_bound_records(checked)
        records.append(derivative_bound_record(checked, trace.y3[inside], sup))
    else:
        batch = None
        records = []
    psi = psi_summary(p, tr, batch)
    records.append(differential_inequality_record(trace, psi.psi))
    envelope_rate = psi.psi_star if psi_override is None else float(psi_override)
    records.append(check_envelope(trace, envelope_rate))
    return VerificationReport(psi_star=envelope_rate, checks=tuple(records))


def run_scenario(spec: ScenarioSpec) -> ScenarioResult:
    try:
        report = run_verification(spec.problem)
    except ScenarioDiscard as exc:
        return ScenarioResult(
            seed=spec.seed,
            report=None,
            discarded=True,
            discard_reason=exc.reason,
            psi_star=exc.psi_star,
        )
    return ScenarioResult(seed=spec.seed, report=report, psi_star=report.psi_star)


def sweep(seed: int, count: int) -> list[ScenarioResult]:
    """Run seeds [seed, seed + count), merged in seed order."""
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    return [run_scenario(generate_scenario(s)) for s in range(seed, seed + count)]


def sweep_summary(results: Sequence[ScenarioResult]) -> dict:
    checked = [r for r in results if not r.discarded]
    return {
        "count": len(results),
        "checked": len(checked),
        "discarded": len(results) - len(checked),
        "overall_pass": all(r.passed for r in checked),
        "scenarios": [r.to_record() for r in results],
    }


@dataclass(frozen=True)
class ConvergenceStudy:
    steps: tuple[float, ...]
    errors: tuple[float, ...]
    orders: tuple[float, ...]  # observed order per consecutive step pair


def convergence_study(
    problem: Problem,
    steps: Sequence[float],
    reference: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> ConvergenceStudy:
    """Max-error study against a closed form or the finest-step run."""
    hs = sorted(set(float(h) for h in steps), reverse=True)
    ts = np.linspace(problem.t0, problem.tf, 2049)
    if reference is None:
        from dataclasses import replace

        ref_problem = validate(replace(problem, step=hs[-1] / 2.0, regime=None, delay_max=None))
        ref_tr = integrate(ref_problem)
        ref_vals = samples(ref_tr, ts)[0]
    else:
        ref_vals = np.asarray(reference(ts), dtype=float)

    errors = []
    for h in hs:
        from dataclasses import replace

        p_h = validate(replace(problem, step=h, regime=None, delay_max=None))
        tr = integrate(p_h)
        errors.append(float(np.max(np.abs(samples(tr, ts)[0] - ref_vals))))
    orders = []
    for (h_coarse, e_coarse), (h_fine, e_fine) in zip(
        zip(hs, errors), zip(hs[1:], errors[1:])
    ):
        if e_fine == 0.0 or e_coarse == 0.0:
            orders.append(math.inf)
        else:
            orders.append(math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine))
    return ConvergenceStudy(steps=tuple(hs), errors=tuple(errors), orders=tuple(orders))
