"""Method-of-steps integration with fourth-order stepping and dense output.

The first-order system x = (y, y', y'') advances with classical RK4 on a
fixed step that is shortened to land on every breaking point and on tf.
In the strictly-retarded regime the delayed argument trails the current
step by at least one full step, so every delayed read hits the history or
already-completed dense output. The third derivative is never interpolated:
it is always recomputed from the equation on delayed data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import evaluate, evaluate_on
from .model import (
    REGIME_ZERO,
    Problem,
    ValidationError,
    history_component,
    history_state,
    history_values,
)

_ROOT_TOL = 1e-12
_TRACK_DEPTH = 3
_MERGE_TOL = 1e-9
_DOMAIN_SLACK = 1e-12


class DomainError(ValueError):
    """Requested time lies outside the trajectory's sampling domain."""


class BlowUpError(RuntimeError):
    """The integrated state became non-finite."""

    def __init__(self, time: float) -> None:
        super().__init__(f"non-finite state at t={time}")
        self.time = time


@dataclass(frozen=True)
class StateSample:
    t: float
    y: float
    y1: float
    y2: float
    y3: float


@dataclass(frozen=True)
class Trajectory:
    problem: Problem
    breaking: np.ndarray  # breaking points in [t0, tf]
    grid: np.ndarray      # step endpoints; grid[0] = t0, grid[-1] = tf
    y: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    y3: np.ndarray        # equation right side at the grid points

    @property
    def domain(self) -> tuple[float, float]:
        p = self.problem
        return p.t0 - (p.delay_max or 0.0), p.tf


def _require_validated(problem: Problem) -> None:
    if not problem.validated:
        raise ValidationError("problem must be validated first")


def breaking_points(problem: Problem) -> np.ndarray:
    """Times where ξ - Δ(ξ) maps onto an earlier breaking point, to depth 3."""
    _require_validated(problem)
    t0, tf = problem.t0, problem.tf
    if problem.regime == REGIME_ZERO:
        return np.array([t0])
    n = max(1024, int(round((tf - t0) / problem.step)))
    ts = np.linspace(t0, tf, n + 1)
    lag = ts - evaluate_on(problem.delay, ts)
    found = [t0]
    frontier = [t0]
    for _ in range(_TRACK_DEPTH):
        level: list[float] = []
        for target in frontier:
            for root in _lag_roots(problem, ts, lag, target):
                if root <= t0 + _MERGE_TOL:
                    continue
                if all(abs(root - q) > _MERGE_TOL for q in found + level):
                    level.append(root)
        if not level:
            break
        level.sort()
        found.extend(level)
        frontier = level
    return np.array(sorted(found))


def _lag_roots(problem: Problem, ts: np.ndarray, lag: np.ndarray, target: float) -> list[float]:
    """All roots of ξ - Δ(ξ) = target found by sign-change scan plus bisection."""
    g = lag - target
    roots = [float(ts[i]) for i in np.nonzero(g == 0.0)[0]]
    for i in np.nonzero(g[:-1] * g[1:] < 0.0)[0]:
        a, b = float(ts[i]), float(ts[i + 1])
        fa = float(g[i])
        for _ in range(60):
            m = 0.5 * (a + b)
            fm = m - evaluate(problem.delay, m) - target
            if fa * fm <= 0.0:
                b = m
            else:
                a, fa = m, fm
            if b - a <= _ROOT_TOL:
                break
        roots.append(0.5 * (a + b))
    return roots


def _build_grid(problem: Problem, breaking: np.ndarray) -> np.ndarray:
    t0, tf, h = problem.t0, problem.tf, problem.step
    specials = sorted(float(b) for b in breaking if t0 < b < tf)
    specials.append(tf)
    times = [t0]
    cur = t0
    anchor, k = t0, 1  # steps counted from the last alignment point
    si = 0
    while cur < tf - _DOMAIN_SLACK:
        nxt = anchor + k * h
        while si < len(specials) and specials[si] <= cur + _MERGE_TOL:
            si += 1
        if si < len(specials) and specials[si] <= nxt + _MERGE_TOL:
            nxt = specials[si]
            si += 1
            anchor, k = nxt, 1
        else:
            k += 1
        if nxt > tf:
            nxt = tf
        times.append(nxt)
        cur = nxt
    times[-1] = tf
    return np.array(times)


def _kahan(value: float, increment: float, carry: float) -> tuple[float, float]:
    d = increment + carry
    out = value + d
    return out, d - (out - value)


def _hermite(theta: np.ndarray, h: np.ndarray, v0, v1, m0, m1):
    t2 = theta * theta
    t3 = t2 * theta
    return (
        (2.0 * t3 - 3.0 * t2 + 1.0) * v0
        + (t3 - 2.0 * t2 + theta) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * v1
        + (t3 - t2) * h * m1
    )


def integrate(problem: Problem) -> Trajectory:
    """Integrate over [t0, tf]; initial state spliced from the history (C^2)."""
    _require_validated(problem)
    breaking = breaking_points(problem)
    grid = _build_grid(problem, breaking)
    n = len(grid) - 1
    hs = np.diff(grid)
    mids = grid[:-1] + 0.5 * hs

    m1g = evaluate_on(problem.m1, grid)
    m2g = evaluate_on(problem.m2, grid)
    m3g = evaluate_on(problem.m3, grid)
    m1m = evaluate_on(problem.m1, mids)
    m2m = evaluate_on(problem.m2, mids)
    m3m = evaluate_on(problem.m3, mids)

    y = np.empty(n + 1)
    y1 = np.empty(n + 1)
    y2 = np.empty(n + 1)
    y3 = np.empty(n + 1)
    y[0], y1[0], y2[0], _ = history_state(problem, float(grid[0]))

    if problem.regime == REGIME_ZERO:
        _step_ode(grid, hs, (m1g, m2g, m3g), (m1m, m2m, m3m), y, y1, y2, y3)
    else:
        _step_retarded(problem, grid, hs, mids, (m1g, m2g, m3g), (m1m, m2m, m3m), y, y1, y2, y3)

    for arr in (y, y1, y2, y3, grid, breaking, hs):
        arr.flags.writeable = False
    return Trajectory(problem=problem, breaking=breaking, grid=grid, y=y, y1=y1, y2=y2, y3=y3)


def _step_ode(grid, hs, mg, mm, y, y1, y2, y3) -> None:
    """Zero-delay regime: the equation is an ODE in the current state."""
    # the step loop is scalar work; plain floats are much faster than
    # numpy scalars and overflow silently to inf for the blow-up check
    m1g, m2g, m3g = (arr.tolist() for arr in mg)
    m1m, m2m, m3m = (arr.tolist() for arr in mm)
    hsl = hs.tolist()
    n = len(hsl)
    a, b, c = float(y[0]), float(y1[0]), float(y2[0])
    ea = eb = ec = 0.0  # compensated-summation carry
    for i in range(n):
        h = hsl[i]
        g0 = -(m1g[i] * c + m2g[i] * b + m3g[i] * a)
        y3[i] = g0
        # k1
        k1a, k1b, k1c = b, c, g0
        # k2 at the midpoint
        xa, xb, xc = a + 0.5 * h * k1a, b + 0.5 * h * k1b, c + 0.5 * h * k1c
        k2a, k2b, k2c = xb, xc, -(m1m[i] * xc + m2m[i] * xb + m3m[i] * xa)
        # k3 at the midpoint
        xa, xb, xc = a + 0.5 * h * k2a, b + 0.5 * h * k2b, c + 0.5 * h * k2c
        k3a, k3b, k3c = xb, xc, -(m1m[i] * xc + m2m[i] * xb + m3m[i] * xa)
        # k4 at the right endpoint
        xa, xb, xc = a + h * k3a, b + h * k3b, c + h * k3c
        k4a, k4b, k4c = xb, xc, -(m1g[i + 1] * xc + m2g[i + 1] * xb + m3g[i + 1] * xa)
        a, ea = _kahan(a, h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a), ea)
        b, eb = _kahan(b, h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b), eb)
        c, ec = _kahan(c, h / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c), ec)
        if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(c)):
            raise BlowUpError(float(grid[i + 1]))
        y[i + 1], y1[i + 1], y2[i + 1] = a, b, c
    y3[n] = -(m1g[n] * c + m2g[n] * b + m3g[n] * a)


def _step_retarded(problem, grid, hs, mids, mg, mm, y, y1, y2, y3) -> None:
    """Strictly-retarded regime: y''' depends only on delayed (known) data."""
    n = len(hs)
    t0 = problem.t0
    floor = t0 - (problem.delay_max or 0.0)

    dg = grid - evaluate_on(problem.delay, grid)
    dm = mids - evaluate_on(problem.delay, mids)
    for d in (dg, dm):
        if (d < floor - _DOMAIN_SLACK).any():
            i = int(np.argmax(d < floor - _DOMAIN_SLACK))
            raise DomainError(f"delayed time {d[i]} below history span start {floor}")
        np.clip(d, floor, None, out=d)
    # delayed reads that land in the history are known up front
    hist_g = dg <= t0
    hist_m = dm <= t0
    wg = np.zeros((n + 1, 3))
    wm = np.zeros((n, 3))
    if hist_g.any():
        hv = history_values(problem, dg[hist_g])
        for c in range(3):
            wg[hist_g, c] = hv[c]
    if hist_m.any():
        hv = history_values(problem, dm[hist_m])
        for c in range(3):
            wm[hist_m, c] = hv[c]
    jg = (np.searchsorted(grid, dg, side="right") - 1).tolist()
    jm = (np.searchsorted(grid, dm, side="right") - 1).tolist()

    # the step loop is scalar work; plain floats are much faster than
    # numpy scalars and overflow silently to inf for the blow-up check
    m1g, m2g, m3g = (arr.tolist() for arr in mg)
    m1m, m2m, m3m = (arr.tolist() for arr in mm)
    gridl = grid.tolist()
    hsl = hs.tolist()
    dgl, dml = dg.tolist(), dm.tolist()
    hist_gl, hist_ml = hist_g.tolist(), hist_m.tolist()
    wgl, wml = wg.tolist(), wm.tolist()
    ys = [float(y[0])]
    y1s = [float(y1[0])]
    y2s = [float(y2[0])]
    y3s: list[float] = []

    def dense3(j: int, t: float) -> tuple[float, float, float]:
        ta = gridl[j]
        hj = gridl[j + 1] - ta
        th = (t - ta) / hj
        t2 = th * th
        t3 = t2 * th
        h00 = 2.0 * t3 - 3.0 * t2 + 1.0
        h10 = (t3 - 2.0 * t2 + th) * hj
        h01 = -2.0 * t3 + 3.0 * t2
        h11 = (t3 - t2) * hj
        return (
            h00 * ys[j] + h10 * y1s[j] + h01 * ys[j + 1] + h11 * y1s[j + 1],
            h00 * y1s[j] + h10 * y2s[j] + h01 * y1s[j + 1] + h11 * y2s[j + 1],
            h00 * y2s[j] + h10 * y3s[j] + h01 * y2s[j + 1] + h11 * y3s[j + 1],
        )

    # g at t0 reads pure history
    w0, w1, w2 = wgl[0]
    g_end = -(m1g[0] * w2 + m2g[0] * w1 + m3g[0] * w0)
    a, b, c = ys[0], y1s[0], y2s[0]
    ea = eb = ec = 0.0  # compensated-summation carry
    for i in range(n):
        h = hsl[i]
        g0 = g_end
        y3s.append(g0)
        if hist_ml[i]:
            w0, w1, w2 = wml[i]
        else:
            w0, w1, w2 = dense3(jm[i], dml[i])
        g1 = -(m1m[i] * w2 + m2m[i] * w1 + m3m[i] * w0)
        if hist_gl[i + 1]:
            w0, w1, w2 = wgl[i + 1]
        else:
            w0, w1, w2 = dense3(jg[i + 1], dgl[i + 1])
        g2 = -(m1g[i + 1] * w2 + m2g[i + 1] * w1 + m3g[i + 1] * w0)

        k1a, k1b, k1c = b, c, g0
        xa, xb, xc = a + 0.5 * h * k1a, b + 0.5 * h * k1b, c + 0.5 * h * k1c
        k2a, k2b, k2c = xb, xc, g1
        xa, xb, xc = a + 0.5 * h * k2a, b + 0.5 * h * k2b, c + 0.5 * h * k2c
        k3a, k3b, k3c = xb, xc, g1
        xa, xb, xc = a + h * k3a, b + h * k3b, c + h * k3c
        k4a, k4b, k4c = xb, xc, g2
        a, ea = _kahan(a, h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a), ea)
        b, eb = _kahan(b, h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b), eb)
        c, ec = _kahan(c, h / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c), ec)
        if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(c)):
            raise BlowUpError(float(grid[i + 1]))
        ys.append(a)
        y1s.append(b)
        y2s.append(c)
        g_end = g2
    y3s.append(g_end)
    y[:] = ys
    y1[:] = y1s
    y2[:] = y2s
    y3[:] = y3s


def _clamped(tr: Trajectory, ts: np.ndarray) -> np.ndarray:
    lo, hi = tr.domain
    ts = np.asarray(ts, dtype=float)
    if (ts < lo - _DOMAIN_SLACK).any() or (ts > hi + _DOMAIN_SLACK).any():
        bad = ts[(ts < lo - _DOMAIN_SLACK) | (ts > hi + _DOMAIN_SLACK)][0]
        raise DomainError(f"time {bad} outside sampling domain [{lo}, {hi}]")
    return np.clip(ts, lo, hi)


def _dense_component(tr: Trajectory, ts: np.ndarray, order: int) -> np.ndarray:
    """Hermite dense output of y^(order), order in {0, 1, 2}, for ts >= t0."""
    grid = tr.grid
    vals = (tr.y, tr.y1, tr.y2)[order]
    slopes = (tr.y1, tr.y2, tr.y3)[order]
    idx = np.clip(np.searchsorted(grid, ts, side="right") - 1, 0, len(grid) - 2)
    a = grid[idx]
    h = grid[idx + 1] - a
    theta = (ts - a) / h
    return _hermite(theta, h, vals[idx], vals[idx + 1], slopes[idx], slopes[idx + 1])


def component_values(tr: Trajectory, ts: np.ndarray, order: int) -> np.ndarray:
    """w^(order) at arbitrary times, order in {0, 1, 2, 3}.

    Orders 0..2 read history or dense output; order 3 is recomputed from the
    equation on delayed data for t >= t0 and from the history derivative below.
    """
    ts = _clamped(tr, ts)
    p = tr.problem
    out = np.empty_like(ts)
    hist = ts < p.t0
    sol = ~hist
    if order <= 2:
        if hist.any():
            out[hist] = history_component(p, ts[hist], order)
        if sol.any():
            out[sol] = _dense_component(tr, ts[sol], order)
        return out
    if hist.any():
        out[hist] = history_component(p, ts[hist], 3)
    if sol.any():
        s = ts[sol]
        mv1 = evaluate_on(p.m1, s)
        mv2 = evaluate_on(p.m2, s)
        mv3 = evaluate_on(p.m3, s)
        if p.regime == REGIME_ZERO:
            w0 = _dense_component(tr, s, 0)
            w1 = _dense_component(tr, s, 1)
            w2 = _dense_component(tr, s, 2)
        else:
            d = _clamped(tr, s - evaluate_on(p.delay, s))
            w0 = component_values(tr, d, 0)
            w1 = component_values(tr, d, 1)
            w2 = component_values(tr, d, 2)
        # finite states can still overflow here; surviving scenarios are capped
        # well below that by the harness growth limit
        with np.errstate(over="ignore", invalid="ignore"):
            out[sol] = -(mv1 * w2 + mv2 * w1 + mv3 * w0)
    return out


def samples(tr: Trajectory, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (w, w', w'', w''') over the domain [t0 - delay_max, tf]."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    return tuple(component_values(tr, ts, order) for order in range(4))


def sample(tr: Trajectory, t: float) -> StateSample:
    """State at a single time; see samples() for the array form."""
    arr = np.array([float(t)])
    vals = samples(tr, arr)
    return StateSample(float(t), *(float(v[0]) for v in vals))
