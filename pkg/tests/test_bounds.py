import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delaybound import (
    SupCoefficients,
    check_delay_bounds,
    check_derivative_bound,
    check_differential_inequality,
    check_envelope,
    integrate,
    locate_mvt_points,
    norm_state,
    norm_trace,
    psi_global,
    psi_pointwise,
    psi_summary,
    samples,
    sup_coefficients,
)
from delaybound.bounds import differential_inequality_record, psi_values
from delaybound.mvt import locate_mvt_batch
from conftest import make_problem


class TestNorm:
    def test_unit_axis(self):
        assert norm_state(1.0, 0.0, 0.0) == 1.0

    def test_three_four_five(self):
        assert norm_state(1.0, 2.0, 2.0) == 3.0

    def test_zero(self):
        assert norm_state(0.0, 0.0, 0.0) == 0.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            norm_state(float("nan"), 0.0, 0.0)

    def test_trace_energy_identity(self, cubic_problem):
        tr = integrate(cubic_problem)
        trace = norm_trace(tr)
        assert np.all(trace.u >= 0.0)
        assert trace.u == pytest.approx(trace.norm**2)
        assert trace.du == pytest.approx(
            2.0 * (trace.y * trace.y1 + trace.y1 * trace.y2 + trace.y2 * trace.y3)
        )

    def test_norm_zero_iff_state_zero(self):
        tr = integrate(make_problem(history="0", delay="0", m3="1"))
        trace = norm_trace(tr)
        assert np.all(trace.norm == 0.0)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_two_fg_bounded_by_squares(f, g):
    assert 2.0 * abs(f) * abs(g) <= f * f + g * g + 1e-9 * (f * f + g * g + 1.0)


def test_triangle_bound_on_du(cubic_problem):
    # |u'| <= 2(|w||w'| + |w'||w''| + |w''||w'''|) identically
    tr = integrate(cubic_problem)
    trace = norm_trace(tr)
    rhs = 2.0 * (
        np.abs(trace.y) * np.abs(trace.y1)
        + np.abs(trace.y1) * np.abs(trace.y2)
        + np.abs(trace.y2) * np.abs(trace.y3)
    )
    scale = 1.0 + np.max(rhs)
    assert np.all(np.abs(trace.du) <= rhs + 1e-12 * scale)


def test_du_matches_finite_difference_of_u():
    p = make_problem(
        m1="0.3*sin(t)", m2="0.4", m3="0.8 - 0.2*sin(2*t)",
        delay="0.3 + 0.1*sin(t)", history="1 + 0.5*t - 0.25*t^2", tf=2.0,
    )
    tr = integrate(p)
    trace = norm_trace(tr)
    rng = np.random.default_rng(9)
    # smooth segment times: away from every breaking point
    candidates = trace.times[(trace.times > 0.05) & (trace.times < p.tf - 0.05)]
    keep = np.ones(len(candidates), bool)
    for xi in tr.breaking:
        keep &= np.abs(candidates - xi) > 5e-3
    picks = rng.choice(candidates[keep], size=100, replace=False)
    delta = 1e-5
    for t in picks:
        i = int(np.argmin(np.abs(trace.times - t)))
        u = lambda s: sum(v[0] ** 2 for v in samples(tr, np.array([s]))[:3])
        fd = (u(t + delta) - u(t - delta)) / (2.0 * delta)
        assert fd == pytest.approx(trace.du[i], rel=1e-4, abs=1e-8)


class TestPsi:
    def test_zero_coefficients(self, cubic_problem):
        p = make_problem(delay="1", history="1")
        tr = integrate(p)
        assert psi_pointwise(p, tr, 0.5) == 1.0
        assert psi_global(p, tr) == 1.0

    def test_direct_formula_substitution(self):
        sup = SupCoefficients(m01=1.0, m02=0.0, m03=0.0)
        mags = np.array([[0.0, 0.0, 2.0]])
        assert psi_values(sup, mags, 1)[0] == 4.0

    def test_zero_delay_convention(self):
        p = make_problem(m1="1", m2="1", m3="1", delay="0", history="exp(-t)")
        tr = integrate(p)
        assert psi_pointwise(p, tr, 0.3) == 4.0

    def test_cubic_global_rate(self, cubic_problem):
        tr = integrate(cubic_problem)
        # grid-maximization oracle for sup |w'| over history plus solution
        ts = np.linspace(-1.0, 1.0, 20001)
        sup_w1 = np.max(np.abs(samples(tr, ts)[1]))
        assert sup_w1 == pytest.approx(0.5, abs=1e-6)
        assert psi_global(cubic_problem, tr) == pytest.approx(2.5, abs=1e-9)

    def test_psi_at_least_one_and_star_dominates(self):
        p = make_problem(
            m1="0.8*sin(t)", m2="-0.5", m3="1.1 + 0.4*sin(2*t)",
            delay="0.35 + 0.1*sin(1.2*t)", history="0.5 + t - 0.5*t^3", tf=2.0,
        )
        tr = integrate(p)
        batch = locate_mvt_batch(tr, tr.grid)
        summary = psi_summary(p, tr, batch)
        assert np.all(summary.psi >= 1.0)
        assert summary.psi_star >= np.max(summary.psi)


class TestDelayAndDerivativeBounds:
    def test_constant_solution_equality_case(self):
        p = make_problem(delay="1", history="1")
        tr = integrate(p)
        mv = locate_mvt_points(tr, 1.0)
        for rec in check_delay_bounds(tr, 1.0, mv):
            assert rec.passed
        # |w(t-1)| = 1 = |w(t)| + 0: equality survives inside the slack
        assert check_delay_bounds(tr, 1.0, mv)[0].worst_margin >= 0.0

    def test_cubic_equality_case(self, cubic_problem):
        tr = integrate(cubic_problem)
        mv = locate_mvt_points(tr, 1.0)
        recs = check_delay_bounds(tr, 1.0, mv)
        # |w(0)| = 1 vs |w(1)| + |w'(t_k0)| = 5/6 + 1/6: equality by construction
        assert recs[0].witness["left"] == pytest.approx(1.0, abs=1e-9)
        assert recs[0].witness["right"] == pytest.approx(1.0, abs=1e-9)
        for rec in recs:
            assert rec.passed

    def test_cubic_third_derivative_equality(self, cubic_problem):
        tr = integrate(cubic_problem)
        mv = locate_mvt_points(tr, 1.0)
        sup = sup_coefficients(cubic_problem)
        rec = check_derivative_bound(tr, 1.0, mv, sup)
        assert rec.passed
        assert rec.witness["left"] == pytest.approx(1.0, abs=1e-9)
        assert rec.witness["right"] == pytest.approx(1.0, abs=1e-9)


class TestDifferentialInequality:
    def test_constant_solution(self):
        p = make_problem(delay="1", history="1")
        tr = integrate(p)
        trace = norm_trace(tr)
        summary = psi_summary(p, tr, locate_mvt_batch(tr, tr.grid))
        rec = check_differential_inequality(trace, summary, 0.5)
        assert rec.passed

    def test_exp_decay_closed_form(self, exp_decay_problem):
        # u = 3 e^{-2t}, u' = -6 e^{-2t}, psi = 2: |u'| = 2u <= 4u
        tr = integrate(exp_decay_problem)
        trace = norm_trace(tr)
        assert trace.u == pytest.approx(3.0 * np.exp(-2.0 * trace.times), rel=1e-6)
        summary = psi_summary(exp_decay_problem, tr, None)
        rec = differential_inequality_record(trace, summary.psi)
        assert rec.passed
        assert rec.points == len(trace.times)

    def test_zero_solution(self):
        p = make_problem(history="0", delay="0", m3="1")
        tr = integrate(p)
        trace = norm_trace(tr)
        rec = differential_inequality_record(trace, psi_summary(p, tr, None).psi)
        assert rec.passed


class TestEnvelope:
    def test_constant_solution_unit_rate(self):
        p = make_problem(delay="1", history="1")
        tr = integrate(p)
        trace = norm_trace(tr)
        rec = check_envelope(trace, 1.0)
        assert rec.passed
        assert rec.points == len(trace.times) ** 2

    def test_zero_solution_trivial_pass(self):
        p = make_problem(history="0", delay="0", m3="1")
        trace = norm_trace(integrate(p))
        assert check_envelope(trace, 1.0).passed

    def test_cubic_all_pairs(self, cubic_problem):
        tr = integrate(cubic_problem)
        trace = norm_trace(tr)
        rec = check_envelope(trace, psi_global(cubic_problem, tr))
        assert rec.passed
        assert rec.violations == 0

    def test_undersized_rate_rejected(self):
        # growing solution e^t cannot satisfy an e^{0.5 t} envelope
        p = make_problem(m3="-1", delay="0", history="exp(t)", tf=3.0)
        trace = norm_trace(integrate(p))
        rec = check_envelope(trace, 0.5)
        assert not rec.passed
        assert rec.violations > 0
        assert rec.worst_margin < 0.0

    def test_fast_path_agrees_with_exhaustive(self, cubic_problem):
        from delaybound.bounds import _envelope_exhaustive

        tr = integrate(cubic_problem)
        trace = norm_trace(tr)
        fast = check_envelope(trace, 2.5)
        slow = _envelope_exhaustive(trace.times, trace.norm, 2.5, len(trace.times) ** 2)
        assert fast.passed and slow.passed


def test_scaling_covariance():
    from dataclasses import replace

    from delaybound import validate
    from delaybound.expr import Bin, Const

    p = make_problem(
        m1="0.6*sin(t)", m2="0.2", m3="-0.9",
        delay="0.45 + 0.2*sin(t)", history="0.8 - 0.4*t + 0.2*t^2", tf=2.0,
    )
    scaled = validate(
        replace(p, history=Bin("*", Const(3.0), p.history), regime=None, delay_max=None)
    )
    base = norm_trace(integrate(p))
    big = norm_trace(integrate(scaled))
    assert np.allclose(big.norm, 3.0 * base.norm, rtol=1e-9, atol=1e-12)
