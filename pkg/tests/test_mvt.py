import math

import numpy as np
import pytest

from delaybound import MvtError, integrate, locate_mvt_batch, locate_mvt_points
from delaybound.integrator import component_values
from conftest import make_problem
from test_integrator import bisect_oracle


class TestCubicScenario:
    """y = 1 - t^3/6 on [0,1]: the quotient points solve by hand."""

    def test_first_order_point(self, cubic_problem):
        tr = integrate(cubic_problem)
        mv = locate_mvt_points(tr, 1.0)
        # slope (5/6 - 1)/1 = -1/6; -s^2/2 = -1/6 at s = 1/sqrt(3)
        oracle = bisect_oracle(lambda s: -s * s / 2.0 + 1.0 / 6.0, 0.0, 1.0)
        assert oracle == pytest.approx(1.0 / math.sqrt(3.0), abs=1e-9)
        assert mv.points[0] == pytest.approx(oracle, abs=1e-8)
        assert abs(mv.residuals[0]) <= 1e-8

    def test_second_order_point(self, cubic_problem):
        tr = integrate(cubic_problem)
        mv = locate_mvt_points(tr, 1.0)
        # slope -1/2; -s = -1/2 at s = 1/2
        assert mv.points[1] == pytest.approx(0.5, abs=1e-8)
        assert abs(mv.residuals[1]) <= 1e-8

    def test_third_order_degenerate(self, cubic_problem):
        tr = integrate(cubic_problem)
        mv = locate_mvt_points(tr, 1.0)
        # w''' is identically -1 on (0,1): any point works, residual vanishes
        assert 0.0 <= mv.points[2] <= 1.0
        assert abs(mv.residuals[2]) <= 1e-10

    def test_derivative_magnitudes_feed_psi(self, cubic_problem):
        tr = integrate(cubic_problem)
        mv = locate_mvt_points(tr, 1.0)
        assert mv.derivative_magnitudes[0] == pytest.approx(1.0 / 6.0, abs=1e-8)
        assert mv.derivative_magnitudes[1] == pytest.approx(0.5, abs=1e-8)
        assert mv.derivative_magnitudes[2] == pytest.approx(1.0, abs=1e-10)


class TestProperties:
    def test_points_inside_interval(self):
        p = make_problem(
            m1="0.4*sin(t)", m2="-0.6", m3="0.9 + 0.3*sin(2*t)",
            delay="0.4 + 0.15*sin(1.5*t)", history="1 - 0.5*t + 0.25*t^3", tf=2.5,
        )
        tr = integrate(p)
        batch = locate_mvt_batch(tr, tr.grid)
        lo = batch.t_ks - batch.delays
        for i in range(3):
            assert np.all(batch.points[:, i] >= lo - 1e-12)
            assert np.all(batch.points[:, i] <= batch.t_ks + 1e-12)

    def test_residuals_small_on_smooth_intervals(self):
        p = make_problem(
            m1="0.4*sin(t)", m2="-0.6", m3="0.9 + 0.3*sin(2*t)",
            delay="0.4 + 0.15*sin(1.5*t)", history="1 - 0.5*t + 0.25*t^3", tf=2.5,
        )
        tr = integrate(p)
        batch = locate_mvt_batch(tr, tr.grid)
        start = batch.t_ks - batch.delays
        # smooth segment: interval inside I and free of interior breaking points
        smooth = start >= p.t0
        for xi in tr.breaking[1:]:
            smooth &= ~((start < xi - 1e-9) & (batch.t_ks > xi + 1e-9))
        assert np.count_nonzero(smooth) > 100
        slopes = (batch.w_at_end - batch.w_at_start) / batch.delays[:, None]
        for i in range(3):
            bound = 1e-8 * (1.0 + np.abs(slopes[smooth, i]))
            assert np.all(np.abs(batch.residuals[smooth, i]) <= bound)

    def test_affine_segment_zero_residual_at_every_sample(self):
        # zero coefficients, linear history: w(t) = 1 + t is affine everywhere
        p = make_problem(history="1 + t", delay="0.5", tf=1.0)
        tr = integrate(p)
        t_k = 0.8
        mv = locate_mvt_points(tr, t_k)
        ss = np.linspace(t_k - mv.delay, t_k, 256)
        g = component_values(tr, ss, 1) - 1.0  # slope of an affine segment is w' = 1
        scale = 1.0 + np.max(np.abs(tr.y))
        assert np.max(np.abs(g)) <= 1e-12 * scale
        assert abs(mv.residuals[0]) <= 1e-12 * scale

    def test_scalar_matches_batch(self, cubic_problem):
        tr = integrate(cubic_problem)
        mv = locate_mvt_points(tr, 0.7)
        batch = locate_mvt_batch(tr, np.array([0.7]))
        assert mv.points == pytest.approx(tuple(batch.points[0]))
        assert mv.residuals == pytest.approx(tuple(batch.residuals[0]))


class TestErrors:
    def test_zero_delay_rejected(self):
        p = make_problem(delay="0", history="exp(-t)", m3="1")
        tr = integrate(p)
        with pytest.raises(MvtError, match="positive"):
            locate_mvt_points(tr, 0.5)

    def test_domain_underrun_rejected(self, cubic_problem):
        tr = integrate(cubic_problem)
        with pytest.raises(MvtError, match="domain"):
            locate_mvt_points(tr, 1.5)
