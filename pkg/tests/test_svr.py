from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import svr_dual_qp, svr_oracle_model
from pdvoice.errors import NonFiniteInput, ShapeMismatch
from pdvoice.svr import (
    SvrConfig,
    SvrModel,
    dual_objective,
    rbf_kernel,
    rbf_matrix,
    resolve_auto,
    svr_predict,
    train_smo,
)


def _toy(seed, n=25):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 2))
    y = np.sin(3.0 * X[:, 0]) + 0.3 * X[:, 1] + 0.05 * rng.normal(size=n)
    return X, y


# --------------------------------------------------------------------------
# kernel


def test_kernel_examples():
    assert rbf_kernel([1.0, 2.0], [1.0, 2.0], 0.7) == 1.0
    assert rbf_kernel([0.0, 0.0], [3.0, 4.0], 5.0) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert rbf_kernel([0.0, 0.0], [1.0, 1.0], 2.0) == pytest.approx(0.606530660, abs=1e-9)


def test_kernel_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        rbf_kernel([0.0], [0.0, 1.0], 1.0)


def test_kernel_matrix_agrees_with_scalar_kernel():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
    K = rbf_matrix(A, B, 1.3)
    for i in range(4):
        for j in range(5):
            assert K[i, j] == pytest.approx(rbf_kernel(A[i], B[j], 1.3), abs=1e-14)


def test_non_positive_scale_rejected():
    with pytest.raises(ValueError):
        SvrConfig(kernel_scale=0.0)


# --------------------------------------------------------------------------
# automatic C and epsilon


def test_auto_values_for_uniform_targets():
    y = np.random.default_rng(0).uniform(0.0, 1.0, size=100_000)
    C, eps = resolve_auto(y, SvrConfig())
    assert C == pytest.approx(0.5 / 1.349, rel=0.01)
    assert eps == pytest.approx(0.05 / 1.349, rel=0.01)


def test_constant_targets_use_the_fallback():
    with pytest.warns(RuntimeWarning, match="IQR is zero"):
        C, eps = resolve_auto(np.full(10, 3.0), SvrConfig())
    assert C == 1.0 and eps == 0.0


def test_explicit_values_override():
    C, eps = resolve_auto(np.arange(10.0), SvrConfig(C=7, epsilon=0.25))
    assert C == 7.0 and eps == 0.25


# --------------------------------------------------------------------------
# training


def test_wide_tube_gives_a_constant_model():
    y = np.array([1.0, 1.2, 0.9, 1.1, 1.05])
    X = np.arange(5.0)[:, None]
    model = train_smo(X, y, SvrConfig(C=1.0, epsilon=1.0))
    assert len(model.dual_coef) == 0
    pred = svr_predict(model, X)
    assert np.all(pred == model.bias)
    assert np.all(np.abs(y - model.bias) <= 1.0)


def test_two_identical_points():
    model = train_smo(np.zeros((2, 1)), np.array([4.0, 4.0]), SvrConfig(C=1.0, epsilon=0.1))
    assert abs(svr_predict(model, np.zeros(1)) - 4.0) <= 0.1


def test_training_input_checks():
    with pytest.raises(ValueError):
        train_smo(np.zeros((1, 2)), np.zeros(1))
    with pytest.raises(ShapeMismatch):
        train_smo(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(NonFiniteInput):
        train_smo(np.array([[0.0], [np.inf]]), np.zeros(2))


@pytest.mark.parametrize("seed", range(5))
def test_dual_and_predictions_match_the_oracle(seed):
    X, y = _toy(seed, n=20 + 2 * seed)
    model = train_smo(X, y, SvrConfig(kernel_scale=1.0, tol=1e-6))
    K = rbf_matrix(X, X, 1.0)
    a, value = svr_dual_qp(K, y, model.C, model.epsilon)
    assert abs(model.diagnostics["dual_objective"] - value) <= 1e-4
    beta, b = svr_oracle_model(K, y, model.C, model.epsilon, a)
    grid = np.stack(np.meshgrid(np.linspace(-1, 1, 11), np.linspace(-1, 1, 11)), -1).reshape(-1, 2)
    oracle_pred = rbf_matrix(grid, X, 1.0) @ beta + b
    assert np.max(np.abs(svr_predict(model, grid) - oracle_pred)) <= 1e-3


@given(st.integers(0, 10_000), st.floats(0.3, 3.0))
def test_dual_feasibility_and_kkt(seed, scale):
    X, y = _toy(seed, n=15)
    model = train_smo(X, y, SvrConfig(kernel_scale=scale))
    assert np.all(np.abs(model.dual_coef) <= model.C + 1e-12)
    assert abs(model.dual_coef.sum()) <= 1e-8
    assert np.all(np.abs(model.dual_coef) > 1e-12)
    assert model.diagnostics["max_kkt_violation"] <= 1e-3


def test_kkt_conditions_from_the_model_alone():
    X, y = _toy(7, n=30)
    cfg = SvrConfig(kernel_scale=1.0, tol=1e-3)
    model = train_smo(X, y, cfg)
    beta = np.zeros(len(y))
    for sv, coef in zip(model.support_vectors, model.dual_coef):
        beta[np.flatnonzero(np.all(X == sv, axis=1))[0]] = coef
    resid = y - svr_predict(model, X)
    C, eps, tol = model.C, model.epsilon, cfg.tol
    for r, b in zip(resid, beta):
        if b == 0:
            assert abs(r) <= eps + tol
        elif abs(b) < C - 1e-9:
            assert abs(abs(r) - eps) <= tol
            assert np.sign(r) == np.sign(b)
        else:
            assert abs(r) >= eps - tol
            assert np.sign(r) == np.sign(b) or abs(r) <= eps + tol


def test_objective_history_is_monotone():
    X, y = _toy(3, n=30)
    model = train_smo(X, y, SvrConfig(kernel_scale=1.0, record_objective=True))
    hist = model.diagnostics["objective_history"]
    assert len(hist) > 1
    assert all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))
    K = rbf_matrix(X, X, 1.0)
    beta = np.zeros(len(y))
    for sv, coef in zip(model.support_vectors, model.dual_coef):
        beta[np.flatnonzero(np.all(X == sv, axis=1))[0]] = coef
    assert dual_objective(beta, K, y, model.epsilon) == pytest.approx(model.diagnostics["dual_objective"], abs=1e-9)


def test_empty_model_predicts_the_bias():
    model = SvrModel(np.zeros((0, 2)), np.zeros(0), 2.5, 1.0, 1.0, 0.1)
    assert svr_predict(model, np.ones((3, 2))).tolist() == [2.5, 2.5, 2.5]


def test_far_support_vector_locality():
    model = SvrModel(np.array([[0.0], [100.0]]), np.array([0.7, -0.7]), 0.2, 0.5, 1.0, 0.1)
    assert svr_predict(model, np.array([0.0])) == pytest.approx(0.9, abs=1e-12)


def test_json_round_trip_is_bit_exact():
    X, y = _toy(1)
    model = train_smo(X, y, SvrConfig(kernel_scale=1.0))
    back = SvrModel.from_json(model.to_json())
    assert svr_predict(back, X).tobytes() == svr_predict(model, X).tobytes()
    assert back.diagnostics["status"] == model.diagnostics["status"]


def test_streamed_kernel_path_matches_cached(monkeypatch):
    import pdvoice.svr as svr_mod

    X, y = _toy(2, n=30)
    cfg = SvrConfig(kernel_scale=1.0, tol=1e-8)
    cached = train_smo(X, y, cfg)
    monkeypatch.setattr(svr_mod, "FULL_KERNEL_LIMIT", 10)
    streamed = train_smo(X, y, cfg)
    assert streamed.diagnostics["status"] == "converged"
    assert np.allclose(svr_predict(streamed, X), svr_predict(cached, X), atol=1e-6)
