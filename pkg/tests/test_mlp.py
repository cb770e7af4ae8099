from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import central_difference
from pdvoice.errors import NonFiniteInput, ShapeMismatch
from pdvoice.mlp import (
    MlpModel,
    MlpTrainConfig,
    forward,
    init_mlp,
    loss_and_grad,
    predict,
    train_mlp,
    unpack,
)
from pdvoice.preprocess import NormalizerParams


def test_init_is_seeded():
    a, b = init_mlp(6, seed=11), init_mlp(6, seed=11)
    assert a.flat().tobytes() == b.flat().tobytes()
    assert init_mlp(6, seed=12).flat().tobytes() != a.flat().tobytes()


def test_first_layer_shape():
    model = init_mlp(10)
    assert model.weights[0].shape == (25, 10)
    assert model.layer_dims == [10, 25, 25, 25, 1]
    assert model.activations == ["relu", "relu", "relu", "identity"]


@given(st.integers(0, 2**31), st.integers(1, 12))
def test_glorot_bound(seed, d_in):
    model = init_mlp(d_in, seed)
    for W in model.weights:
        fan_out, fan_in = W.shape
        assert np.all(np.abs(W) < np.sqrt(6.0 / (fan_in + fan_out)))
    assert all(np.all(b == 0) for b in model.biases)


def test_zero_network_outputs_zero():
    model = init_mlp(4)
    model = model.with_flat(np.zeros(model.n_params))
    assert np.all(predict(model, np.random.default_rng(0).normal(size=(5, 4))) == 0.0)


def test_hand_evaluated_one_unit_net():
    model = MlpModel([1, 1, 1], [np.array([[2.0]]), np.array([[3.0]])], [np.array([-1.0]), np.array([0.5])])
    assert forward(model, [1.0]) == 3.5


def test_negative_preactivation_is_cut():
    W1 = np.array([[1.0], [-1.0]])
    model = MlpModel([1, 2, 1], [W1, np.array([[1.0, 100.0]])], [np.zeros(2), np.zeros(1)])
    assert forward(model, [2.0]) == 2.0  # the second unit sees -2 and contributes nothing


def test_predict_input_checks():
    model = init_mlp(3)
    with pytest.raises(ShapeMismatch):
        predict(model, np.zeros((2, 4)))
    with pytest.raises(NonFiniteInput):
        predict(model, np.array([[0.0, np.nan, 1.0]]))
    with pytest.raises(ShapeMismatch):
        forward(model, np.zeros((1, 3)))


def test_unpack_rejects_wrong_length():
    with pytest.raises(ShapeMismatch):
        unpack(np.zeros(5), [2, 2, 1])


def test_loss_at_the_optimum_is_zero():
    rng = np.random.default_rng(1)
    model = init_mlp(3, seed=1, hidden=(4, 4, 4))
    X = rng.normal(size=(6, 3))
    loss, grad = loss_and_grad(model, X, predict(model, X))
    assert loss == 0.0
    assert np.all(grad == 0.0)


def test_penalty_is_isolated_when_data_error_is_zero():
    rng = np.random.default_rng(2)
    model = init_mlp(3, seed=2, hidden=(4, 4, 4))
    X = rng.normal(size=(5, 3))
    loss, _ = loss_and_grad(model, X, predict(model, X), lam=0.3)
    assert loss == pytest.approx(0.3 * sum(float(np.sum(W * W)) for W in model.weights), rel=1e-15)


@given(st.integers(0, 10_000))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(1, 9)), int(rng.integers(1, 7))
    model = init_mlp(d, seed, (3, 4, 3))
    model = model.with_flat(model.flat() + 0.1 * rng.normal(size=model.n_params))
    X, y = rng.normal(size=(n, d)), rng.normal(size=n)
    _, g = loss_and_grad(model, X, y, 0.01)
    fd = central_difference(lambda t: loss_and_grad(model.with_flat(t), X, y, 0.01)[0], model.flat())
    assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), np.linalg.norm(fd))


def test_linear_target_is_learned():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, size=(200, 1))
    y = 3.0 * x[:, 0] + 1.0
    model, trace = train_mlp(x, y, MlpTrainConfig(max_iterations=300, seed=0))
    assert np.mean((predict(model, x) - y) ** 2) <= 1e-3
    assert trace.extras["train_mse"] <= 1e-3


def test_small_dataset_is_interpolated():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(12, 3))
    y = rng.normal(size=12)
    _, trace = train_mlp(X, y, MlpTrainConfig(max_iterations=1000, seed=4))
    assert trace.extras["train_mse"] <= 1e-2 * np.var(y)
    assert all(b <= a for a, b in zip(trace.values, trace.values[1:]))


def test_zero_iterations_returns_the_initial_model():
    X = np.random.default_rng(0).normal(size=(5, 2))
    model, trace = train_mlp(X, np.arange(5.0), MlpTrainConfig(max_iterations=0, seed=9))
    assert model.flat().tobytes() == init_mlp(2, 9).flat().tobytes()
    assert len(trace) == 0


def test_config_validation():
    with pytest.raises(ValueError):
        MlpTrainConfig(lam=-1.0)
    with pytest.raises(ValueError):
        MlpTrainConfig(max_iterations=-1)


def test_json_round_trip_is_bit_exact():
    rng = np.random.default_rng(6)
    model = init_mlp(4, seed=6)
    model.normalizer = NormalizerParams("minmax", {"a": (0.0, 1.0)})
    model.feature_names = ["a", "b", "c", "d"]
    back = MlpModel.from_json(model.to_json())
    X = rng.normal(size=(20, 4))
    assert predict(back, X).tobytes() == predict(model, X).tobytes()
    assert back.feature_names == model.feature_names
    assert back.normalizer.stats == model.normalizer.stats
