"""Feed-forward ReLU regression network trained with L-BFGS."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteInput, ShapeMismatch
from .optim import OptimTrace, lbfgs_minimize
from .preprocess import NormalizerParams

HIDDEN = (25, 25, 25)


@dataclass
class MlpTrainConfig:
    lam: float = 0.0
    max_iterations: int = 1000
    gtol: float = 1e-6
    memory: int = 10
    learning_rate: float = 0.1
    seed: int = 0
    hidden: tuple[int, ...] = HIDDEN

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str] = field(default_factory=list)
    normalizer: NormalizerParams | None = None
    feature_names: list[str] | None = None

    def __post_init__(self):
        if not self.activations:
            self.activations = ["relu"] * (len(self.weights) - 1) + ["identity"]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def with_flat(self, theta: np.ndarray) -> "MlpModel":
        weights, biases = unpack(theta, self.layer_dims)
        return MlpModel(list(self.layer_dims), weights, biases, list(self.activations),
                        self.normalizer, self.feature_names)

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activations": list(self.activations),
            "normalizer": self.normalizer.to_dict() if self.normalizer else None,
            "feature_names": self.feature_names,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        norm = d.get("normalizer")
        return cls(
            [int(v) for v in d["layer_dims"]],
            [np.array(w, dtype=float) for w in d["weights"]],
            [np.array(b, dtype=float) for b in d["biases"]],
            list(d["activations"]),
            NormalizerParams.from_dict(norm) if norm else None,
            d.get("feature_names"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        return cls.from_dict(json.loads(text))


def unpack(theta: np.ndarray, dims) -> tuple[list[np.ndarray], list[np.ndarray]]:
    need = sum((fan_in + 1) * fan_out for fan_in, fan_out in zip(dims[:-1], dims[1:]))
    if theta.size != need:
        raise ShapeMismatch(f"parameter vector has {theta.size} entries, layout needs {need}")
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        size = fan_in * fan_out
        weights.append(theta[pos:pos + size].reshape(fan_out, fan_in))
        pos += size
        biases.append(theta[pos:pos + fan_out])
        pos += fan_out
    return weights, biases


def init_mlp(d_in: int, seed: int = 0, hidden=HIDDEN) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    if d_in < 1:
        raise ValueError("d_in must be at least 1")
    rng = np.random.default_rng(seed)
    dims = [d_in, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases)


def predict(model: MlpModel, X) -> np.ndarray:
    """Batch forward pass; rows of ``X`` are already-normalised feature vectors."""
    A = np.asarray(X, dtype=float)
    if A.ndim != 2 or A.shape[1] != model.layer_dims[0]:
        raise ShapeMismatch(f"expected (n, {model.layer_dims[0]}) inputs, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteInput("non-finite network input")
    last = len(model.weights) - 1
    for layer, (W, b) in enumerate(zip(model.weights, model.biases)):
        A = A @ W.T + b
        if layer < last:
            A = np.maximum(A, 0.0)
    return A[:, 0]


def forward(model: MlpModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeMismatch("forward takes a single feature vector")
    return float(predict(model, x[None, :])[0])


def loss_and_grad(model: MlpModel, X, y, lam: float = 0.0) -> tuple[float, np.ndarray]:
    """Mean squared error plus ``lam * sum(W**2)`` and its exact gradient.

    Biases are not penalised; the ReLU slope at exactly zero is taken as 0.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[1] != model.layer_dims[0] or len(y) == 0:
        raise ShapeMismatch(f"X {X.shape} and y {y.shape} do not fit layer_dims {model.layer_dims}")
    n = len(y)
    acts = [X]
    pre = []
    last = len(model.weights) - 1
    for layer, (W, b) in enumerate(zip(model.weights, model.biases)):
        Z = acts[-1] @ W.T + b
        pre.append(Z)
        acts.append(np.maximum(Z, 0.0) if layer < last else Z)
    resid = acts[-1][:, 0] - y
    loss = float(resid @ resid / n)
    if lam:
        loss += lam * sum(float(np.sum(W * W)) for W in model.weights)
    delta = (2.0 / n) * resid[:, None]
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.weights)
    for layer in range(last, -1, -1):
        W = model.weights[layer]
        grads_w[layer] = delta.T @ acts[layer] + 2.0 * lam * W
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ W) * (pre[layer - 1] > 0)
    grad = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in zip(grads_w, grads_b)])
    return loss, grad


def train_mlp(X, y, cfg: MlpTrainConfig | None = None) -> tuple[MlpModel, OptimTrace]:
    """Initialise with ``cfg.seed`` and minimise the training loss with L-BFGS."""
    cfg = cfg or MlpTrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise ValueError("need at least two training rows")
    model = init_mlp(X.shape[1], cfg.seed, cfg.hidden)
    if cfg.max_iterations == 0:
        return model, OptimTrace(reason="iteration limit")
    dims = model.layer_dims

    def objective(theta):
        w, b = unpack(theta, dims)
        return loss_and_grad(MlpModel(dims, w, b), X, y, cfg.lam)

    theta, trace = lbfgs_minimize(objective, model.flat(), cfg)
    model = model.with_flat(theta)
    pred = predict(model, X)
    mse = float(np.mean((pred - y) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    trace.extras["train_mse"] = mse
    trace.extras["train_r_squared"] = 1.0 - mse * len(y) / sst if sst > 0 else float("nan")
    return model, trace
