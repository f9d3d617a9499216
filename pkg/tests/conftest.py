"""Shared fixtures: canonical problems and a seeded random expression sampler."""

from __future__ import annotations

import random

import pytest

from delaybound import Problem, parse, validate
from delaybound.expr import Bin, Const, Expression, Fun, Neg, Var, differentiate, evaluate


def make_problem(
    m1="0", m2="0", m3="0", delay="0", history="1", t0=0.0, tf=1.0, step=1e-3
) -> Problem:
    return validate(
        Problem(
            m1=parse(m1),
            m2=parse(m2),
            m3=parse(m3),
            delay=parse(delay),
            history=parse(history),
            t0=t0,
            tf=tf,
            step=step,
        )
    )


@pytest.fixture
def cubic_problem() -> Problem:
    """Unit delay, unit history, M3 = 1: y(t) = 1 - t^3/6 on [0, 1]."""
    return make_problem(m3="1", delay="1", history="1")


@pytest.fixture
def exp_decay_problem() -> Problem:
    """Zero delay, y''' = -y with spliced ICs (1, -1, 1): y = exp(-t)."""
    return make_problem(m3="1", delay="0", history="exp(-t)")


def random_expression(rng: random.Random, depth: int) -> Expression:
    """Sample the expression grammar; exponents stay small non-negative integers."""
    if depth <= 0:
        if rng.random() < 0.4:
            return Const(round(rng.uniform(-3.0, 3.0), 6))
        return Var()
    r = rng.random()
    if r < 0.12:
        return Neg(random_expression(rng, depth - 1))
    if r < 0.62:
        op = rng.choice(["+", "+", "-", "*", "*", "/"])
        return Bin(op, random_expression(rng, depth - 1), random_expression(rng, depth - 1))
    if r < 0.75:
        return Bin("^", random_expression(rng, depth - 1), Const(float(rng.randint(0, 3))))
    return Fun(rng.choice(["sin", "cos", "exp"]), random_expression(rng, depth - 1))


def sample_derivative_case(rng: random.Random) -> tuple[Expression, float]:
    """An (expression, t) pair tame enough for a central finite difference."""
    while True:
        e = random_expression(rng, rng.randint(1, 4))
        t = rng.uniform(-2.0, 2.0)
        try:
            d1 = differentiate(e)
            d2 = differentiate(d1)
            d3 = differentiate(d2)
            values = [
                evaluate(e, t - 1e-6),
                evaluate(e, t),
                evaluate(e, t + 1e-6),
                evaluate(d1, t),
                evaluate(d2, t),
                evaluate(d3, t),
            ]
        except ValueError:
            continue
        if all(abs(v) <= 1e4 for v in values):
            return e, t
