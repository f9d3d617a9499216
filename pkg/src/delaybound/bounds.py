"""The solution norm, the growth rate ψ, and machine checks of the bound chain.

Checked inequalities, each with slack eps_rel*(1 + right side) + eps_abs:
  delayed-value bounds   |w^(i)(t_k - Δ)| <= |w^(i)(t_k)| + |w^(i+1)(t_ki)|
  third-derivative bound |w'''(t_k)| <= Σ_j M0j (paired magnitudes)
  differential inequality |u'(t_k)| <= 2 ψ(t_k) u(t_k)
  envelope                ‖w(s)‖ e^{-ψ* d} - slack <= ‖w(t)‖ <= ‖w(s)‖ e^{ψ* d} + slack

The envelope runs over every ordered grid pair. The fast path checks the
equivalent log-space Lipschitz condition with prefix extrema (sufficient for
the native condition when all norms are positive); only if that fails does
the exhaustive chunked pair sweep decide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .integrator import Trajectory, component_values, samples
from .model import (
    REGIME_ZERO,
    Problem,
    SupCoefficients,
    _refined_max,
    sup_coefficients,
)
from .mvt import MvtBatch, locate_mvt_batch

EPS_REL = 1e-6
EPS_ABS = 1e-12


@dataclass(frozen=True)
class NormTrace:
    times: np.ndarray
    y: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    y3: np.ndarray
    norm: np.ndarray
    u: np.ndarray
    du: np.ndarray  # analytic u' = 2(w w' + w' w'' + w'' w''')


@dataclass(frozen=True)
class PsiSummary:
    m01: float
    m02: float
    m03: float
    times: np.ndarray
    psi: np.ndarray
    psi_star: float


@dataclass(frozen=True)
class CheckRecord:
    name: str
    passed: bool
    points: int
    violations: int
    worst_margin: float
    witness: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pass": self.passed,
            "points": self.points,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "witness": dict(self.witness),
        }


@dataclass(frozen=True)
class VerificationReport:
    psi_star: float
    checks: tuple[CheckRecord, ...]

    @property
    def overall_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def worst_margins(self) -> dict[str, float]:
        return {c.name: c.worst_margin for c in self.checks}

    def to_dict(self) -> dict:
        return {
            "overall_pass": self.overall_pass,
            "psi_star": self.psi_star,
            "worst_margins": self.worst_margins,
            "checks": [c.to_dict() for c in self.checks],
        }


def norm_state(y: float, y1: float, y2: float) -> float:
    """sqrt(y^2 + y1^2 + y2^2)."""
    for v in (y, y1, y2):
        if not math.isfinite(v):
            raise ValueError(f"non-finite state component {v!r}")
    return math.sqrt(y * y + y1 * y1 + y2 * y2)


def norm_trace(tr: Trajectory) -> NormTrace:
    """Norm, energy u = ‖w‖^2 and analytic u' at every grid point."""
    y, y1, y2, y3 = samples(tr, tr.grid)
    # states can be finite yet overflow when squared; such runs are discarded
    # by the harness growth cap right after the trace is built
    with np.errstate(over="ignore", invalid="ignore"):
        u = y * y + y1 * y1 + y2 * y2
        du = 2.0 * (y * y1 + y1 * y2 + y2 * y3)
    return NormTrace(
        times=tr.grid.copy(),
        y=y,
        y1=y1,
        y2=y2,
        y3=y3,
        norm=np.sqrt(u),
        u=u,
        du=du,
    )


def _slack(rhs):
    return EPS_REL * (1.0 + rhs) + EPS_ABS


def psi_values(sup: SupCoefficients, magnitudes: Optional[np.ndarray], n: int) -> np.ndarray:
    """Pointwise ψ; magnitudes is the MVT (n, 3) array, or None in the zero regime."""
    if magnitudes is None:
        return np.full(n, 1.0 + sup.m01 + sup.m02 + sup.m03)
    return (
        1.0
        + sup.m01 * (1.0 + magnitudes[:, 2])
        + sup.m02 * (1.0 + magnitudes[:, 1])
        + sup.m03 * (1.0 + magnitudes[:, 0])
    )


def psi_pointwise(problem: Problem, tr: Trajectory, t_k: float) -> float:
    """ψ at one grid time; MVT magnitudes where Δ(t_k) > 0, dropped when Δ ≡ 0."""
    sup = sup_coefficients(problem)
    if problem.regime == REGIME_ZERO:
        return 1.0 + sup.m01 + sup.m02 + sup.m03
    batch = locate_mvt_batch(tr, np.array([float(t_k)]))
    return float(psi_values(sup, batch.magnitudes, 1)[0])


def psi_global(problem: Problem, tr: Trajectory) -> float:
    """Dominating rate ψ* built from sups of |w'|, |w''|, |w'''| over the domain."""
    sup = sup_coefficients(problem)
    lo, hi = tr.domain
    count = max(64, 2 * (len(tr.grid) - 1), int(math.ceil((hi - lo) / (problem.step / 2.0))))
    ts = np.union1d(tr.grid, np.linspace(lo, hi, count + 1))
    sups = []
    for comp in (1, 2, 3):
        vals = np.abs(component_values(tr, ts, comp))
        f = lambda s, c=comp: abs(float(component_values(tr, np.array([s]), c)[0]))
        sups.append(_refined_max(f, ts, vals))
    return 1.0 + sup.m01 * (1.0 + sups[2]) + sup.m02 * (1.0 + sups[1]) + sup.m03 * (1.0 + sups[0])


def psi_summary(problem: Problem, tr: Trajectory, batch: Optional[MvtBatch]) -> PsiSummary:
    sup = sup_coefficients(problem)
    mags = batch.magnitudes if batch is not None else None
    return PsiSummary(
        m01=sup.m01,
        m02=sup.m02,
        m03=sup.m03,
        times=tr.grid.copy(),
        psi=psi_values(sup, mags, len(tr.grid)),
        psi_star=psi_global(problem, tr),
    )


_DELAY_BOUND_NAMES = ("delay_bound_y", "delay_bound_dy", "delay_bound_d2y")


def _pointwise_record(name, times, lhs, rhs, extra=None) -> CheckRecord:
    slack = _slack(rhs)
    margin = rhs + slack - lhs
    if len(margin) == 0:
        return CheckRecord(name, True, 0, 0, math.inf)
    worst = int(np.argmin(margin))
    witness = {
        "t": float(times[worst]),
        "left": float(lhs[worst]),
        "right": float(rhs[worst]),
        "slack": float(slack[worst]),
    }
    if extra:
        witness.update({k: float(v[worst]) for k, v in extra.items()})
    violations = int(np.count_nonzero(margin < 0.0))
    return CheckRecord(
        name=name,
        passed=violations == 0,
        points=len(margin),
        violations=violations,
        worst_margin=float(margin[worst]),
        witness=witness,
    )


def delay_bound_records(batch: MvtBatch) -> list[CheckRecord]:
    """Inequality chain for the delayed values, one record per order i."""
    records = []
    for i in range(3):
        lhs = np.abs(batch.w_at_start[:, i])
        rhs = np.abs(batch.w_at_end[:, i]) + batch.magnitudes[:, i]
        records.append(
            _pointwise_record(
                _DELAY_BOUND_NAMES[i],
                batch.t_ks,
                lhs,
                rhs,
                extra={"residual": np.abs(batch.residuals[:, i])},
            )
        )
    return records


def check_delay_bounds(tr: Trajectory, t_k: float, mv) -> list[CheckRecord]:
    """Per-point form of the three delayed-value bounds (mv from locate_mvt_points)."""
    w_end = np.array([[component_values(tr, np.array([t_k]), c)[0] for c in range(3)]])
    start = t_k - mv.delay
    w_start = np.array([[component_values(tr, np.array([start]), c)[0] for c in range(3)]])
    batch = MvtBatch(
        t_ks=np.array([t_k]),
        delays=np.array([mv.delay]),
        points=np.array([mv.points]),
        residuals=np.array([mv.residuals]),
        magnitudes=np.array([mv.derivative_magnitudes]),
        w_at_start=w_start,
        w_at_end=w_end,
    )
    return delay_bound_records(batch)


def derivative_bound_record(batch: MvtBatch, y3_at_tk: np.ndarray, sup: SupCoefficients) -> CheckRecord:
    lhs = np.abs(y3_at_tk)
    rhs = (
        sup.m01 * (np.abs(batch.w_at_end[:, 2]) + batch.magnitudes[:, 2])
        + sup.m02 * (np.abs(batch.w_at_end[:, 1]) + batch.magnitudes[:, 1])
        + sup.m03 * (np.abs(batch.w_at_end[:, 0]) + batch.magnitudes[:, 0])
    )
    return _pointwise_record("third_deriv_bound", batch.t_ks, lhs, rhs)


def check_derivative_bound(tr: Trajectory, t_k: float, mv, sup: SupCoefficients) -> CheckRecord:
    w_end = np.array([[component_values(tr, np.array([t_k]), c)[0] for c in range(3)]])
    y3 = component_values(tr, np.array([t_k]), 3)
    batch = MvtBatch(
        t_ks=np.array([t_k]),
        delays=np.array([mv.delay]),
        points=np.array([mv.points]),
        residuals=np.array([mv.residuals]),
        magnitudes=np.array([mv.derivative_magnitudes]),
        w_at_start=w_end * np.nan,
        w_at_end=w_end,
    )
    return derivative_bound_record(batch, y3, sup)


def differential_inequality_record(trace: NormTrace, psi: np.ndarray) -> CheckRecord:
    lhs = np.abs(trace.du)
    rhs = 2.0 * psi * trace.u
    return _pointwise_record("diff_inequality", trace.times, lhs, rhs)


def check_differential_inequality(trace: NormTrace, psi: PsiSummary, t_k: float) -> CheckRecord:
    i = int(np.argmin(np.abs(trace.times - t_k)))
    lhs = np.abs(trace.du[i : i + 1])
    rhs = 2.0 * psi.psi[i : i + 1] * trace.u[i : i + 1]
    return _pointwise_record("diff_inequality", trace.times[i : i + 1], lhs, rhs)


def check_envelope(trace: NormTrace, psi_star: float) -> CheckRecord:
    """Two-sided ψ*-envelope over every ordered grid pair."""
    times = trace.times
    norms = trace.norm
    n = len(times)
    pairs = n * n
    if (norms == 0.0).any():
        # the lower bound is vacuous from a zero anchor; the upper bound forces
        # every other norm below the absolute slack
        worst = int(np.argmax(norms))
        margin = float(EPS_ABS - norms[worst])
        return CheckRecord(
            name="envelope",
            passed=margin >= 0.0,
            points=pairs,
            violations=0 if margin >= 0.0 else int(np.count_nonzero(norms > EPS_ABS)) * int(np.count_nonzero(norms == 0.0)),
            worst_margin=margin,
            witness={"t": float(times[worst]), "norm": float(norms[worst]), "slack": EPS_ABS},
        )

    # log-space sufficient condition: |log N_t - log N_s| <= ψ* |t - s| + log1p(eps_rel)
    c = math.log1p(EPS_REL)
    logs = np.log(norms)
    a = logs - psi_star * times
    b = logs + psi_star * times
    pref_min_a = np.minimum.accumulate(a)
    pref_max_b = np.maximum.accumulate(b)
    fwd = a - pref_min_a   # growth faster than e^{ψ* d}
    bwd = pref_max_b - b   # decay faster than e^{-ψ* d}
    worst_fwd = int(np.argmax(fwd))
    worst_bwd = int(np.argmax(bwd))
    log_excess = max(float(fwd[worst_fwd]), float(bwd[worst_bwd]))
    if log_excess <= c:
        if fwd[worst_fwd] >= bwd[worst_bwd]:
            j = worst_fwd
            i = int(np.argmin(a[: j + 1]))
        else:
            j = worst_bwd
            i = int(np.argmax(b[: j + 1]))
        d = abs(float(times[j] - times[i]))
        with np.errstate(over="ignore"):
            growth = math.exp(min(psi_star * d, 745.0)) if psi_star * d < 745.0 else math.inf
        witness = {
            "s": float(times[i]),
            "t": float(times[j]),
            "norm_s": float(norms[i]),
            "norm_t": float(norms[j]),
            "upper": float(norms[i]) * growth,
            "lower": float(norms[i]) / growth if math.isfinite(growth) else 0.0,
        }
        return CheckRecord(
            name="envelope",
            passed=True,
            points=pairs,
            violations=0,
            worst_margin=c - log_excess,
            witness=witness,
        )
    return _envelope_exhaustive(times, norms, psi_star, pairs)


def _envelope_exhaustive(times, norms, psi_star, pairs) -> CheckRecord:
    """Chunked native-metric sweep over all ordered pairs (decides failures)."""
    n = len(times)
    worst_margin = math.inf
    worst = (0, 0)
    violations = 0
    chunk = max(1, (1 << 21) // n)
    with np.errstate(over="ignore", invalid="ignore"):
        for begin in range(0, n, chunk):
            rows = slice(begin, min(begin + chunk, n))
            d = np.abs(times[None, :] - times[rows, None])
            e = np.exp(psi_star * d)
            base = norms[rows, None]
            slack = EPS_REL * base * e + EPS_ABS
            upper = base * e + slack - norms[None, :]
            lower = norms[None, :] - base / e + slack
            margin = np.minimum(upper, lower)
            violations += int(np.count_nonzero(margin < 0.0))
            k = int(np.argmin(margin))
            if float(margin.flat[k]) < worst_margin:
                worst_margin = float(margin.flat[k])
                worst = (begin + k // n, k % n)
    i, j = worst
    d = abs(float(times[j] - times[i]))
    with np.errstate(over="ignore"):
        growth = np.exp(psi_star * d)
    witness = {
        "s": float(times[i]),
        "t": float(times[j]),
        "norm_s": float(norms[i]),
        "norm_t": float(norms[j]),
        "upper": float(norms[i] * growth),
        "lower": float(norms[i] / growth),
        "slack": float(EPS_REL * norms[i] * growth + EPS_ABS),
    }
    return CheckRecord(
        name="envelope",
        passed=violations == 0,
        points=pairs,
        violations=violations,
        worst_margin=worst_margin,
        witness=witness,
    )
