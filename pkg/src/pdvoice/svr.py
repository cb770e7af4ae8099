"""Epsilon-insensitive support vector regression with a Gaussian kernel."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NonFiniteInput, ShapeMismatch
from .preprocess import NormalizerParams

FULL_KERNEL_LIMIT = 8000


@dataclass
class SvrConfig:
    kernel_scale: float = 2.0
    C: float | str = "auto"
    epsilon: float | str = "auto"
    tol: float = 1e-3
    max_iter: int | None = None
    patience: int | None = None
    record_objective: bool = False
    backend: str | None = None

    def __post_init__(self):
        if self.kernel_scale <= 0:
            raise ValueError("kernel_scale must be positive")


@dataclass
class SvrModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    kernel_scale: float
    C: float
    epsilon: float
    diagnostics: dict = field(default_factory=dict)
    normalizer: NormalizerParams | None = None
    feature_names: list[str] | None = None

    def to_dict(self) -> dict:
        return {
            "kernel_scale": self.kernel_scale,
            "epsilon": self.epsilon,
            "C": self.C,
            "bias": self.bias,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coefficients": self.dual_coef.tolist(),
            "diagnostics": {k: v for k, v in self.diagnostics.items() if k != "objective_history"},
            "normalizer": self.normalizer.to_dict() if self.normalizer else None,
            "feature_names": self.feature_names,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvrModel":
        sv = np.array(d["support_vectors"], dtype=float)
        norm = d.get("normalizer")
        return cls(
            sv.reshape(len(d["dual_coefficients"]), -1) if sv.size == 0 else sv,
            np.array(d["dual_coefficients"], dtype=float),
            float(d["bias"]),
            float(d["kernel_scale"]),
            float(d["C"]),
            float(d["epsilon"]),
            dict(d.get("diagnostics", {})),
            NormalizerParams.from_dict(norm) if norm else None,
            d.get("feature_names"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SvrModel":
        return cls.from_dict(json.loads(text))


def rbf_kernel(x, z, s: float) -> float:
    """exp(-||x - z||^2 / s^2)."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != z.shape:
        raise ShapeMismatch(f"kernel arguments differ in shape: {x.shape} vs {z.shape}")
    diff = x - z
    return float(np.exp(-(diff @ diff) / (s * s)))


def rbf_matrix(A, B, s: float) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[1] != B.shape[1]:
        raise ShapeMismatch(f"feature dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-d2 / (s * s))


def resolve_auto(y, cfg: SvrConfig) -> tuple[float, float]:
    """Box constraint and tube width; "auto" uses IQR(y)/1.349 and IQR(y)/13.49."""
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise ValueError("need at least two targets")
    if cfg.C != "auto" and cfg.epsilon != "auto":
        return float(cfg.C), float(cfg.epsilon)
    q1, q3 = np.percentile(y, [25, 75])
    iqr = float(q3 - q1)
    if iqr > 0:
        C, eps = iqr / 1.349, iqr / 13.49
    else:
        warnings.warn("target IQR is zero; falling back to C=1, epsilon=0.1*sd(y)", RuntimeWarning, stacklevel=2)
        C, eps = 1.0, 0.1 * float(np.std(y, ddof=1))
    if cfg.C != "auto":
        C = float(cfg.C)
    if cfg.epsilon != "auto":
        eps = float(cfg.epsilon)
    return C, eps


def bias_from_gradient(a, G, C) -> float:
    """Intercept from free multipliers, else the midpoint of the feasible interval."""
    n = len(a) // 2
    z = np.concatenate([np.ones(n), -np.ones(n)])
    zg = z * G
    at_upper = a >= C
    at_lower = a <= 0
    free = ~at_upper & ~at_lower
    if free.any():
        rho = float(zg[free].mean())
    else:
        pos = z > 0
        ub_mask = (at_upper & ~pos) | (at_lower & pos)
        lb_mask = (at_upper & pos) | (at_lower & ~pos)
        ub = float(zg[ub_mask].min()) if ub_mask.any() else np.inf
        lb = float(zg[lb_mask].max()) if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb)
    return -rho


def max_violation(a, G, C) -> float:
    n = len(a) // 2
    z = np.concatenate([np.ones(n), -np.ones(n)])
    v = -z * G
    pos = z > 0
    up = np.where(pos, a < C, a > 0)
    low = np.where(pos, a > 0, a < C)
    if not up.any() or not low.any():
        return 0.0
    return float(max(0.0, v[up].max() - v[low].min()))


def dual_objective(beta, K, y, eps) -> float:
    """SVR dual (to be maximised) in terms of beta = alpha - alpha*."""
    return float(-0.5 * beta @ K @ beta - eps * np.abs(beta).sum() + y @ beta)


def train_smo(X, y, cfg: SvrConfig | None = None) -> SvrModel:
    """Fit an epsilon-SVR by SMO on the (alpha, alpha*) dual.

    The kernel matrix is cached for up to 8000 rows; larger problems stream
    kernel columns (pure-Python backend only).
    """
    cfg = cfg or SvrConfig()
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeMismatch(f"X {X.shape} does not match y {y.shape}")
    if len(y) < 2:
        raise ValueError("need at least two training rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteInput("non-finite training data")
    n = len(y)
    C, eps = resolve_auto(y, cfg)
    s = cfg.kernel_scale
    if n <= FULL_KERNEL_LIMIT:
        K = np.ascontiguousarray(rbf_matrix(X, X, s))
    else:
        def K(i):
            return rbf_matrix(X, X[i:i + 1], s)[:, 0]
    max_iter = cfg.max_iter if cfg.max_iter is not None else max(10_000_000, 100 * n)
    patience = cfg.patience if cfg.patience is not None else 10 * n
    a, G, iters, status, history = kernels.smo_solve(
        K, y, C, eps, cfg.tol, max_iter, patience, cfg.record_objective, backend=cfg.backend
    )
    a = np.asarray(a)
    G = np.asarray(G)
    beta = a[:n] - a[n:]
    b = bias_from_gradient(a, G, C)
    keep = np.abs(beta) > 1e-12
    diagnostics = {
        "iterations": int(iters),
        "status": {0: "converged", 1: "iteration limit", 2: "no progress"}[status],
        "max_kkt_violation": max_violation(a, G, C),
        "dual_objective": float(-0.5 * np.sum(a * (G + np.concatenate([eps - y, eps + y])))),
        "n_support": int(keep.sum()),
        "backend": "python" if kernels.get_backend(cfg.backend) is kernels._pykernels else "cython",
    }
    if cfg.record_objective:
        diagnostics["objective_history"] = list(history)
    return SvrModel(X[keep].copy(), beta[keep].copy(), float(b), s, C, eps, diagnostics)


def svr_predict(model: SvrModel, X) -> np.ndarray:
    """f(x) = sum_i beta_i k(sv_i, x) + b, for one vector or a batch."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if len(model.dual_coef) == 0:
        out = np.full(len(X), model.bias)
    else:
        if X.shape[1] != model.support_vectors.shape[1]:
            raise ShapeMismatch(f"expected {model.support_vectors.shape[1]} features, got {X.shape[1]}")
        out = rbf_matrix(X, model.support_vectors, model.kernel_scale) @ model.dual_coef + model.bias
    return out[0] if single else out
