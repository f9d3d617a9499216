"""Mean-value points of the three difference quotients over [t_k - Δ(t_k), t_k].

For each order i in {0, 1, 2} the located point t_ki satisfies
w^(i+1)(t_ki) = (w^(i)(t_k) - w^(i)(t_k - Δ(t_k))) / Δ(t_k), up to a reported
residual. A fixed 256-sample scan takes the leftmost sign change and bisects;
when no sign change is visible (possible when the interval spans a breaking
point and w''' jumps) the sample with the smallest residual is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import evaluate, evaluate_on
from .integrator import Trajectory, component_values

_SCAN = 256
_BISECT_ITERS = 40  # bracket width <= delay/255 <= 0.004; 0.004 / 2^40 < 1e-12
_MAX_BRACKETS = 8   # sign-change brackets tried per row before falling back
_CHUNK = 512
_DOMAIN_SLACK = 1e-12


class MvtError(ValueError):
    """Mean-value point location is not applicable at the requested time."""


@dataclass(frozen=True)
class MvtPoints:
    t_k: float
    delay: float
    points: tuple[float, float, float]
    residuals: tuple[float, float, float]
    derivative_magnitudes: tuple[float, float, float]


@dataclass(frozen=True)
class MvtBatch:
    """Vectorized results for many base times (arrays of shape (n,) or (n, 3))."""

    t_ks: np.ndarray
    delays: np.ndarray
    points: np.ndarray
    residuals: np.ndarray
    magnitudes: np.ndarray
    w_at_start: np.ndarray  # w^(i)(t_k - Δ(t_k)), i = 0..2
    w_at_end: np.ndarray    # w^(i)(t_k), i = 0..2

    def subset(self, mask: np.ndarray) -> "MvtBatch":
        return MvtBatch(
            t_ks=self.t_ks[mask],
            delays=self.delays[mask],
            points=self.points[mask],
            residuals=self.residuals[mask],
            magnitudes=self.magnitudes[mask],
            w_at_start=self.w_at_start[mask],
            w_at_end=self.w_at_end[mask],
        )


def locate_mvt_points(tr: Trajectory, t_k: float) -> MvtPoints:
    """Locate (t_k0, t_k1, t_k2) for one base time with Δ(t_k) > 0."""
    d = evaluate(tr.problem.delay, float(t_k))
    if d <= 0.0:
        raise MvtError(f"delay must be positive at t_k={t_k}, got {d}")
    lo, hi = tr.domain
    if t_k > hi + _DOMAIN_SLACK or t_k - d < lo - _DOMAIN_SLACK:
        raise MvtError(f"interval [{t_k - d}, {t_k}] outside domain [{lo}, {hi}]")
    batch = locate_mvt_batch(tr, np.array([float(t_k)]))
    return MvtPoints(
        t_k=float(t_k),
        delay=float(batch.delays[0]),
        points=tuple(float(v) for v in batch.points[0]),
        residuals=tuple(float(v) for v in batch.residuals[0]),
        derivative_magnitudes=tuple(float(v) for v in batch.magnitudes[0]),
    )


def locate_mvt_batch(tr: Trajectory, t_ks: np.ndarray) -> MvtBatch:
    t_ks = np.asarray(t_ks, dtype=float)
    delays = evaluate_on(tr.problem.delay, t_ks)
    if (delays <= 0.0).any():
        i = int(np.argmax(delays <= 0.0))
        raise MvtError(f"delay must be positive at t_k={t_ks[i]}, got {delays[i]}")
    n = len(t_ks)
    start = t_ks - delays
    w_start = np.empty((n, 3))
    w_end = np.empty((n, 3))
    for c in range(3):
        w_start[:, c] = component_values(tr, start, c)
        w_end[:, c] = component_values(tr, t_ks, c)

    points = np.empty((n, 3))
    residuals = np.empty((n, 3))
    magnitudes = np.empty((n, 3))
    offsets = np.linspace(0.0, 1.0, _SCAN)
    for i in range(3):
        slopes = (w_end[:, i] - w_start[:, i]) / delays
        comp = i + 1
        for begin in range(0, n, _CHUNK):
            rows = slice(begin, min(begin + _CHUNK, n))
            pts = _scan_and_bisect(
                tr, start[rows], delays[rows], slopes[rows], comp, offsets
            )
            points[rows, i] = pts
        vals = component_values(tr, points[:, i], comp)
        residuals[:, i] = vals - slopes
        magnitudes[:, i] = np.abs(vals)
    return MvtBatch(
        t_ks=t_ks,
        delays=delays,
        points=points,
        residuals=residuals,
        magnitudes=magnitudes,
        w_at_start=w_start,
        w_at_end=w_end,
    )


def _scan_and_bisect(tr, start, widths, slopes, comp, offsets) -> np.ndarray:
    """Leftmost root of w^(comp) - slope on each row's interval.

    Sign-change brackets are consumed left to right; a bisected point only
    counts as the root when its residual is small, since a sign change may
    also be a jump of w''' at a breaking point, which bisection homes in on
    without ever crossing zero. Rows with no accepted root fall back to the
    candidate with the smallest residual.
    """
    m = len(start)
    grid = start[:, None] + widths[:, None] * offsets[None, :]
    g = component_values(tr, grid.ravel(), comp).reshape(m, _SCAN) - slopes[:, None]
    remaining = g[:, :-1] * g[:, 1:] <= 0.0
    accept = 1e-8 * (1.0 + np.abs(slopes))

    rows_all = np.arange(m)
    jmin = np.argmin(np.abs(g), axis=1)
    best_pts = grid[rows_all, jmin]
    best_res = np.abs(g[rows_all, jmin])
    result = np.empty(m)
    done = np.zeros(m, bool)
    for _ in range(_MAX_BRACKETS):
        active = ~done & remaining.any(axis=1)
        if not active.any():
            break
        rows = np.nonzero(active)[0]
        first = np.argmax(remaining[rows], axis=1)
        remaining[rows, first] = False
        lo = grid[rows, first]
        hi = grid[rows, first + 1]
        glo = g[rows, first]
        sl = slopes[rows]
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            gm = component_values(tr, mid, comp) - sl
            left = glo * gm <= 0.0
            hi = np.where(left, mid, hi)
            glo_new = np.where(left, glo, gm)
            lo = np.where(left, lo, mid)
            glo = glo_new
        pts = 0.5 * (lo + hi)
        res = np.abs(component_values(tr, pts, comp) - sl)
        ok = res <= accept[rows]
        result[rows[ok]] = pts[ok]
        done[rows[ok]] = True
        improve = ~ok & (res < best_res[rows])
        best_pts[rows[improve]] = pts[improve]
        best_res[rows[improve]] = res[improve]
    result[~done] = best_pts[~done]
    return result
