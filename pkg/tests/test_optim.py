from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import gradient_descent_rosenbrock, rosenbrock
from pdvoice.errors import NonFiniteObjective
from pdvoice.optim import (
    GRADIENT_TOLERANCE,
    ITERATION_LIMIT,
    LbfgsOptions,
    lbfgs_minimize,
    strong_wolfe,
)


def sphere(x):
    return float(x @ x), 2.0 * x


def test_quadratic_bowl_converges_fast():
    x, trace = lbfgs_minimize(sphere, [3.0, 4.0], LbfgsOptions(gtol=1e-9, first_step=0.5))
    assert np.max(np.abs(x)) <= 1e-8
    assert len(trace) <= 5
    assert trace.reason == GRADIENT_TOLERANCE


def test_stationary_start_takes_no_iterations():
    x, trace = lbfgs_minimize(sphere, [0.0, 0.0])
    assert len(trace) == 0
    assert trace.reason == GRADIENT_TOLERANCE
    assert x.tolist() == [0.0, 0.0]


def test_rosenbrock_matches_long_gradient_descent():
    x, trace = lbfgs_minimize(rosenbrock, [-1.2, 1.0], LbfgsOptions(max_iterations=200, gtol=1e-10))
    ref = np.array(gradient_descent_rosenbrock(iters=100_000))
    assert np.max(np.abs(x - ref)) <= 1e-6
    assert len(trace) <= 200


def test_iteration_limit_is_reported():
    _, trace = lbfgs_minimize(rosenbrock, [-1.2, 1.0], LbfgsOptions(max_iterations=3))
    assert trace.reason == ITERATION_LIMIT
    assert len(trace) == 3


def test_non_finite_start_raises():
    with pytest.raises(NonFiniteObjective):
        lbfgs_minimize(lambda x: (math.nan, x), [1.0])


def test_trace_dict_has_one_entry_per_iteration():
    _, trace = lbfgs_minimize(rosenbrock, [0.0, 0.0], LbfgsOptions(max_iterations=10))
    d = trace.to_dict()
    assert len(d["values"]) == len(d["grad_norms"]) == len(d["steps"]) == len(trace)


def test_strong_wolfe_conditions_hold_on_a_cubic():
    # phi(a) = (a - 2)^2 (a + 1) along a descent direction at 0
    def phi(a):
        f = (a - 2.0) ** 2 * (a + 1.0)
        d = 2.0 * (a - 2.0) * (a + 1.0) + (a - 2.0) ** 2
        return f, d, np.array([d])

    f0, d0, _ = phi(0.0)
    alpha, fa, _, ok = strong_wolfe(phi, f0, d0, 0.1)
    assert ok
    assert fa <= f0 + 1e-4 * alpha * d0
    assert abs(phi(alpha)[1]) <= 0.9 * abs(d0)


@given(
    st.lists(st.floats(0.5, 20.0), min_size=2, max_size=6),
    st.lists(st.floats(-5.0, 5.0), min_size=6, max_size=6),
)
def test_accepted_values_never_increase(diag, start):
    D = np.array(diag)
    x0 = np.array(start[:len(D)])

    def quad(x):
        return float(0.5 * x @ (D * x) + np.sin(x).sum()), D * x + np.cos(x)

    _, trace = lbfgs_minimize(quad, x0, LbfgsOptions(max_iterations=50))
    assert all(b <= a for a, b in zip(trace.values, trace.values[1:]))
    assert all(np.isfinite(trace.values))
