"""Problem instances of the retarded third-order equation and derived constants.

A problem bundles the three coefficients, the delay, the history function,
the interval and the step. Validation classifies the delay regime and pins
the history span; the sup coefficients and the delay maximum are computed by
grid sampling plus golden-section refinement around the best sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .expr import EvaluationError, Expression, differentiate, evaluate, evaluate_on

REGIME_ZERO = "zero"
REGIME_RETARDED = "strictly-retarded"

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_SPAN_SLACK = 1e-12


class ValidationError(ValueError):
    """Problem instance violates the model constraints."""


@dataclass(frozen=True)
class Problem:
    m1: Expression
    m2: Expression
    m3: Expression
    delay: Expression
    history: Expression
    t0: float
    tf: float
    step: float
    # filled in by validate()
    regime: str | None = None
    delay_max: float | None = None

    @property
    def validated(self) -> bool:
        return self.regime is not None


@dataclass(frozen=True)
class SupCoefficients:
    m01: float
    m02: float
    m03: float


def _interval_grid(t0: float, tf: float, dt: float) -> np.ndarray:
    n = max(1, int(math.ceil((tf - t0) / dt)))
    return np.linspace(t0, tf, n + 1)


def _golden_max(f: Callable[[float], float], a: float, b: float, iters: int = 80) -> float:
    """Golden-section maximization of f over [a, b]."""
    x1 = b - _INV_GOLDEN * (b - a)
    x2 = a + _INV_GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_GOLDEN * (b - a)
            f1 = f(x1)
        if b - a <= 1e-14 * (1.0 + abs(a)):
            break
    return max(f1, f2)


def _refined_max(f: Callable[[float], float], ts: np.ndarray, vals: np.ndarray) -> float:
    """Max of sampled values, polished by golden section around the best sample."""
    i = int(np.argmax(vals))
    a = float(ts[max(0, i - 1)])
    b = float(ts[min(len(ts) - 1, i + 1)])
    best = float(vals[i])
    if b > a:
        best = max(best, _golden_max(f, a, b))
    return best


def validate(problem: Problem) -> Problem:
    """Check the interval, step and delay constraints; classify the delay regime."""
    t0, tf, h = problem.t0, problem.tf, problem.step
    for name, v in (("t0", t0), ("tf", tf), ("step", h)):
        if not math.isfinite(v):
            raise ValidationError(f"{name} must be finite")
    if not t0 < tf:
        raise ValidationError(f"degenerate interval [{t0}, {tf}]")
    if h <= 0.0:
        raise ValidationError("step must be positive")
    if h > (tf - t0) / 10.0:
        raise ValidationError(
            f"step {h} too large for interval (at most {(tf - t0) / 10.0})"
        )

    # integration grid plus 10x oversampling for the delay range check
    ts = _interval_grid(t0, tf, h / 10.0)
    try:
        dvals = evaluate_on(problem.delay, ts)
    except EvaluationError as exc:
        raise ValidationError(f"delay not evaluable on the interval: {exc}") from exc
    if (dvals < 0.0).any():
        i = int(np.argmax(dvals < 0.0))
        raise ValidationError(f"delay negative at t={ts[i]}: {dvals[i]}")
    if (dvals > 1.0).any():
        i = int(np.argmax(dvals > 1.0))
        raise ValidationError(f"delay exceeds 1 at t={ts[i]}: {dvals[i]}")
    if np.all(dvals == 0.0):
        return replace(problem, regime=REGIME_ZERO, delay_max=0.0)
    if np.all(dvals >= 2.0 * h):
        dmax = _refined_max(lambda s: evaluate(problem.delay, s), ts, dvals)
        return replace(problem, regime=REGIME_RETARDED, delay_max=dmax)
    raise ValidationError(
        "delay must be identically zero or at least 2*step everywhere on the interval"
    )


def sup_abs_coefficient(problem: Problem, j: int) -> float:
    """Supremum of |M_j| over the interval, j in {1, 2, 3}."""
    if not problem.validated:
        raise ValidationError("problem must be validated first")
    if j not in (1, 2, 3):
        raise ValueError(f"coefficient index must be 1, 2 or 3, got {j}")
    expr = (problem.m1, problem.m2, problem.m3)[j - 1]
    ts = _interval_grid(problem.t0, problem.tf, problem.step)
    try:
        vals = np.abs(evaluate_on(expr, ts))
    except EvaluationError as exc:
        raise ValidationError(f"coefficient m{j} non-finite on the interval: {exc}") from exc
    return _refined_max(lambda s: abs(evaluate(expr, s)), ts, vals)


@lru_cache(maxsize=128)
def sup_coefficients(problem: Problem) -> SupCoefficients:
    return SupCoefficients(
        m01=sup_abs_coefficient(problem, 1),
        m02=sup_abs_coefficient(problem, 2),
        m03=sup_abs_coefficient(problem, 3),
    )


@lru_cache(maxsize=256)
def _history_chain(history: Expression) -> tuple[Expression, Expression, Expression, Expression]:
    d1 = differentiate(history)
    d2 = differentiate(d1)
    d3 = differentiate(d2)
    return history, d1, d2, d3


def history_state(problem: Problem, t: float) -> tuple[float, float, float, float]:
    """Exact (y, y', y'', y''') of the history function at t in [t0 - delay_max, t0]."""
    if not problem.validated:
        raise ValidationError("problem must be validated first")
    dmax = problem.delay_max or 0.0
    if t > problem.t0 + _SPAN_SLACK or t < problem.t0 - dmax - _SPAN_SLACK:
        raise ValidationError(
            f"history time {t} outside span [{problem.t0 - dmax}, {problem.t0}]"
        )
    return tuple(evaluate(d, t) for d in _history_chain(problem.history))


def history_values(problem: Problem, ts: np.ndarray) -> tuple[np.ndarray, ...]:
    """Vectorized history derivatives of orders 0..3; no span check."""
    return tuple(evaluate_on(d, ts) for d in _history_chain(problem.history))


def history_component(problem: Problem, ts: np.ndarray, order: int) -> np.ndarray:
    """Single history derivative of the given order; no span check."""
    return evaluate_on(_history_chain(problem.history)[order], ts)
