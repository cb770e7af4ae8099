"""Univariate LSTM forecaster of motor-UPDRS, trained by BPTT and Adam.

Gate blocks are stacked in the order input, forget, cell candidate, output
(``i, f, g, o``) along the first axis of ``W``, ``U`` and ``b``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .dataset import RecordTable, StageConfig, atomic_write_text, stage_labels
from .errors import EmptyWindow, NoEligibleSubjects, ShapeMismatch, WindowTooLong


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmModel:
    W: np.ndarray  # (4H,) input weights, input is scalar
    U: np.ndarray  # (4H, H) recurrent weights
    b: np.ndarray  # (4H,)
    head_w: np.ndarray  # (H,)
    head_b: float
    mean: float = 0.0
    sd: float = 1.0

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def flat_size(self) -> int:
        H = self.hidden
        return 4 * H * (H + 2) + H + 1

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W, self.U.ravel(), self.b, self.head_w, [self.head_b]])

    def with_flat(self, theta) -> "LstmModel":
        return self.view(np.array(theta, dtype=float))

    def view(self, theta: np.ndarray) -> "LstmModel":
        """Model whose arrays alias ``theta`` (``head_b`` is copied as a float)."""
        W, U, b, head_w = _split_flat(theta, self.hidden)
        return LstmModel(W, U, b, head_w, float(theta[-1]), self.mean, self.sd)

    def to_dict(self) -> dict:
        H = self.hidden
        out = {"hidden": H}
        for k, gate in enumerate("ifgo"):
            sl = slice(k * H, (k + 1) * H)
            out[f"W_{gate}"] = self.W[sl].tolist()
            out[f"U_{gate}"] = self.U[sl].tolist()
            out[f"b_{gate}"] = self.b[sl].tolist()
        out["head_w"] = self.head_w.tolist()
        out["head_b"] = self.head_b
        out["scaler"] = {"mean": self.mean, "sd": self.sd}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LstmModel":
        W = np.concatenate([np.array(d[f"W_{g}"], dtype=float) for g in "ifgo"])
        U = np.vstack([np.array(d[f"U_{g}"], dtype=float).reshape(-1, d["hidden"]) for g in "ifgo"])
        b = np.concatenate([np.array(d[f"b_{g}"], dtype=float) for g in "ifgo"])
        return cls(W, U, b, np.array(d["head_w"], dtype=float), float(d["head_b"]),
                   float(d["scaler"]["mean"]), float(d["scaler"]["sd"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "LstmModel":
        return cls.from_dict(json.loads(text))


def _split_flat(theta, H):
    G = 4 * H
    W = theta[:G]
    U = theta[G:G + G * H].reshape(G, H)
    b = theta[G + G * H:2 * G + G * H]
    head_w = theta[2 * G + G * H:2 * G + G * H + H]
    return W, U, b, head_w


def init_lstm(hidden: int = 150, seed: int = 0, forget_bias: float = 1.0) -> LstmModel:
    rng = np.random.default_rng(seed)
    G = 4 * hidden
    bw = np.sqrt(6.0 / (1 + hidden))
    bu = np.sqrt(6.0 / (2 * hidden))
    bh = np.sqrt(6.0 / (hidden + 1))
    W = rng.uniform(-bw, bw, size=G)
    U = rng.uniform(-bu, bu, size=(G, hidden))
    b = np.zeros(G)
    b[hidden:2 * hidden] = forget_bias
    head_w = rng.uniform(-bh, bh, size=hidden)
    return LstmModel(W, U, b, head_w, 0.0)


def zero_lstm(hidden: int) -> LstmModel:
    G = 4 * hidden
    return LstmModel(np.zeros(G), np.zeros((G, hidden)), np.zeros(G), np.zeros(hidden), 0.0)


# --------------------------------------------------------------------------
# sequences


@dataclass
class SeriesSample:
    window: np.ndarray
    target: float
    subject_id: int
    stage: int
    raw_target: float = float("nan")


@dataclass
class SequenceSet:
    train: list[SeriesSample]
    validation: list[SeriesSample]
    mean: float
    sd: float
    window: int
    meta: dict = field(default_factory=dict)

    @staticmethod
    def stack(samples: Sequence[SeriesSample]) -> tuple[np.ndarray, np.ndarray]:
        if not samples:
            return np.zeros((0, 0)), np.zeros(0)
        return np.vstack([s.window for s in samples]), np.array([s.target for s in samples])


def subject_series(table: RecordTable):
    """Yield (subject_id, row indices ordered by test_time) per subject."""
    subjects = table.column("subject#")
    times = table.column("test_time")
    for sid in np.unique(subjects):
        rows = np.flatnonzero(subjects == sid)
        rows = rows[np.argsort(times[rows], kind="stable")]
        yield int(sid), rows


def make_sequences(
    table: RecordTable,
    cfg: StageConfig,
    source_stages,
    target_stage: int,
    window: int = 4,
) -> SequenceSet:
    """Sliding-window samples of each subject's motor-UPDRS series.

    Training windows (inputs and target) lie entirely in ``source_stages``;
    validation windows are those whose target row is in ``target_stage``.
    Values are standardised by the mean and sd of the rows that appear in
    training samples.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    source = set(int(s) for s in source_stages)
    y_all = table.y
    labels = stage_labels(y_all, cfg)
    series = [(sid, rows) for sid, rows in subject_series(table) if not table.synthetic[rows].any()]
    longest = max((len(rows) for _, rows in series), default=0)
    if window >= longest:
        raise WindowTooLong(f"window {window} needs series longer than the longest ({longest})")
    train_raw, val_raw, used = [], [], set()
    for sid, rows in series:
        vals = y_all[rows]
        st = labels[rows]
        in_src = np.isin(st, list(source))
        for t in range(window, len(rows)):
            seg = slice(t - window, t + 1)
            if in_src[seg].all():
                train_raw.append((vals[t - window:t], vals[t], sid, int(st[t])))
                used.update(rows[seg].tolist())
            if st[t] == target_stage:
                val_raw.append((vals[t - window:t], vals[t], sid, int(st[t])))
    if not train_raw or not val_raw:
        raise NoEligibleSubjects(
            f"no {'training' if not train_raw else 'validation'} windows for "
            f"source stages {sorted(source)} -> stage {target_stage}"
        )
    ref = y_all[sorted(used)]
    mean = float(ref.mean())
    sd = float(ref.std()) or 1.0

    def build(raw):
        return [SeriesSample((w - mean) / sd, (t - mean) / sd, sid, st, float(t)) for w, t, sid, st in raw]

    return SequenceSet(
        build(train_raw), build(val_raw), mean, sd, window,
        {"n_train": len(train_raw), "n_validation": len(val_raw), "subjects": len(series)},
    )


# --------------------------------------------------------------------------
# forward / backward


def lstm_step(model: LstmModel, x_t, h_prev, c_prev):
    """One cell update; works on a single state (H,) or a batch (B, H)."""
    H = model.hidden
    h_prev = np.asarray(h_prev, dtype=float)
    c_prev = np.asarray(c_prev, dtype=float)
    if h_prev.shape[-1] != H or c_prev.shape != h_prev.shape:
        raise ShapeMismatch(f"state must have {H} units")
    x_t = np.asarray(x_t, dtype=float)
    A = np.multiply.outer(x_t, model.W) + h_prev @ model.U.T + model.b
    i = _sigmoid(A[..., :H])
    f = _sigmoid(A[..., H:2 * H])
    g = np.tanh(A[..., 2 * H:3 * H])
    o = _sigmoid(A[..., 3 * H:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def predict_std(model: LstmModel, X) -> np.ndarray:
    """Standardised predictions for a (B, T) batch of standardised windows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] == 0:
        raise EmptyWindow("window is empty")
    B = X.shape[0]
    h = np.zeros((B, model.hidden))
    c = np.zeros((B, model.hidden))
    for t in range(X.shape[1]):
        h, c = lstm_step(model, X[:, t], h, c)
    return h @ model.head_w + model.head_b


def lstm_forward(model: LstmModel, window) -> float:
    window = np.asarray(window, dtype=float).ravel()
    if window.size == 0:
        raise EmptyWindow("window is empty")
    return float(predict_std(model, window[None, :])[0])


def bptt_grad(model: LstmModel, X, y, clip_norm: float | None = None, backend=None) -> tuple[float, np.ndarray]:
    """Batch MSE (standardised units) and its exact gradient through time.

    The flat gradient follows :meth:`LstmModel.flat`. With ``clip_norm`` the
    gradient is rescaled to that global norm when it exceeds it.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ShapeMismatch(f"{X.shape[0]} windows but {y.shape[0]} targets")
    B, T = X.shape
    H = model.hidden
    hs = np.zeros((T + 1, B, H))
    cs = np.zeros((T + 1, B, H))
    gates = np.empty((T, B, 5 * H))
    for t in range(T):
        A = np.multiply.outer(X[:, t], model.W) + hs[t] @ model.U.T + model.b
        kernels.lstm_cell_forward(A, cs[t], gates[t], cs[t + 1], hs[t + 1], backend=backend)
    pred = hs[T] @ model.head_w + model.head_b
    resid = pred - y
    loss = float(resid @ resid / B)
    dpred = 2.0 * resid / B
    grad = np.empty(model.flat_size)
    dW, dU, db, d_head_w = _split_flat(grad, H)
    dW[:] = 0.0
    dU[:] = 0.0
    db[:] = 0.0
    d_head_w[:] = hs[T].T @ dpred
    grad[-1] = dpred.sum()
    dh = np.outer(dpred, model.head_w)
    dc = np.zeros((B, H))
    dA = np.empty((B, 4 * H))
    for t in range(T - 1, -1, -1):
        kernels.lstm_cell_backward(dh, dc, gates[t], cs[t], dA, backend=backend)
        dW += X[:, t] @ dA
        dU += dA.T @ hs[t]
        db += dA.sum(axis=0)
        dh = dA @ model.U
    if clip_norm is not None:
        norm = float(np.sqrt(grad @ grad))
        if norm > clip_norm:
            grad *= clip_norm / norm
    return loss, grad


# --------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_update(params, grads, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam step; returns new (params, state)."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ShapeMismatch("params, grads and optimiser state must share a shape")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, t)


# --------------------------------------------------------------------------
# training


@dataclass
class LstmTrainConfig:
    hidden: int = 150
    learning_rate: float = 1e-3
    max_epochs: int = 1000
    validation_frequency: int = 50
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.validation_frequency < 1:
            raise ValueError("learning rate, batch size and validation frequency must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")


@dataclass
class EpochTrace:
    rows: list[dict] = field(default_factory=list)

    COLUMNS = ("epoch", "val_rmse", "val_mse", "val_half_mse", "train_loss")

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r["epoch"]] + [repr(float(r[c])) for c in self.COLUMNS[1:]])
        return buf.getvalue()

    def write(self, path) -> None:
        atomic_write_text(path, self.to_csv())


def _validation_row(model, Xv, yv, sd):
    pred = predict_std(model, Xv)
    mse = float(np.mean((pred - yv) ** 2)) * sd * sd
    return {"val_rmse": float(np.sqrt(mse)), "val_mse": mse, "val_half_mse": 0.5 * mse}


def train_lstm(
    train: Sequence[SeriesSample],
    validation: Sequence[SeriesSample],
    cfg: LstmTrainConfig | None = None,
    mean: float = 0.0,
    sd: float = 1.0,
    backend: str | None = None,
) -> tuple[LstmModel, EpochTrace]:
    """Mini-batch Adam over shuffled training windows.

    Validation metrics are in raw UPDRS units (``sd`` rescales them) and are
    logged after epoch 1 and every ``validation_frequency`` epochs.
    """
    cfg = cfg or LstmTrainConfig()
    if not train or not validation:
        raise ValueError("training and validation sets must be non-empty")
    model = init_lstm(cfg.hidden, cfg.seed)
    model.mean, model.sd = mean, sd
    trace = EpochTrace()
    if cfg.max_epochs == 0:
        return model, trace
    X, y = SequenceSet.stack(train)
    Xv, yv = SequenceSet.stack(validation)
    rng = np.random.default_rng(cfg.seed + 1)
    theta = model.flat()
    model = model.view(theta)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    step = 0
    n = len(y)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grad = bptt_grad(model, X[idx], y[idx], cfg.clip_norm, backend=backend)
            total += loss * len(idx)
            step += 1
            kernels.adam_inplace(theta, grad, m, v, step, cfg.learning_rate, cfg.beta1, cfg.beta2,
                                 cfg.eps, backend=backend)
            model.head_b = float(theta[-1])
        if epoch == 1 or epoch % cfg.validation_frequency == 0:
            row = {"epoch": epoch, **_validation_row(model, Xv, yv, sd), "train_loss": total / n * sd * sd}
            trace.rows.append(row)
    return model.with_flat(theta), trace


def forecast(model: LstmModel, seed_window, horizon: int) -> list[float]:
    """Recursive multi-step forecast in raw UPDRS units from a raw seed window."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    window = (np.asarray(seed_window, dtype=float).ravel() - model.mean) / model.sd
    if window.size == 0:
        raise EmptyWindow("seed window is empty")
    out = []
    for _ in range(horizon):
        nxt = lstm_forward(model, window)
        out.append(nxt * model.sd + model.mean)
        window = np.append(window[1:], nxt)
    return out
