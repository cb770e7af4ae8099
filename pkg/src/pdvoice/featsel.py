"""Relief-F feature ranking and sequential forward selection (SFS)."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .dataset import atomic_write_text, kfold
from .errors import DegenerateTarget, EmptyCandidates, KTooLarge, SingleClass


@dataclass
class FeatureRanking:
    entries: list[tuple[str, float]]
    params: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    def top(self, count: int) -> list[str]:
        return self.names[:count]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "feature", "weight"])
        for rank, (name, weight) in enumerate(self.entries, start=1):
            w.writerow([rank, name, repr(float(weight))])
        return buf.getvalue()

    def write(self, path) -> None:
        atomic_write_text(path, self.to_csv())


def range_normalize(X: np.ndarray) -> np.ndarray:
    """Scale every column to [0, 1]; constant columns become 0."""
    X = np.asarray(X, dtype=float)
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (X - lo) / safe, 0.0)


def relief_f(
    X,
    labels,
    k: int = 10,
    sample_count: int | None = None,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
    backend: str | None = None,
) -> FeatureRanking:
    """Multi-class Relief-F weights, sorted descending.

    Distances are Euclidean on range-normalised features, so the ranking is
    unaffected by per-feature affine rescaling. ``sample_count=None`` visits
    every instance in order; otherwise a seeded sample without replacement.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    n, d = X.shape
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(d)]
    classes, codes, counts = np.unique(labels, return_inverse=True, return_counts=True)
    if len(classes) < 2:
        raise SingleClass("Relief-F needs at least two classes")
    if k < 1 or k >= counts.min():
        raise KTooLarge(f"k={k} must lie in [1, {counts.min() - 1}] (smallest class has {counts.min()})")
    if sample_count is None or sample_count >= n:
        samples = np.arange(n)
    else:
        samples = np.sort(np.random.default_rng(seed).choice(n, size=sample_count, replace=False))
    priors = counts / n
    Z = np.ascontiguousarray(range_normalize(X))
    W = kernels.relief_weights(
        Z, codes.astype(np.int64), samples.astype(np.int64), int(k), priors.astype(float), backend=backend
    )
    order = sorted(range(d), key=lambda j: (-W[j], j))
    return FeatureRanking(
        [(names[j], float(W[j])) for j in order],
        {"k": int(k), "sample_count": int(len(samples)), "seed": seed, "tie_break": "lowest column index"},
    )


# --------------------------------------------------------------------------
# sequential forward selection


@dataclass
class SfsTrace:
    steps: list[tuple[str, float]]
    baseline_cv_mse: float
    params: dict = field(default_factory=dict)

    @property
    def selected(self) -> list[str]:
        return [name for name, _ in self.steps]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "feature", "cv_mse"])
        for step, (name, score) in enumerate(self.steps, start=1):
            w.writerow([step, name, repr(float(score))])
        return buf.getvalue()

    def write(self, path) -> None:
        atomic_write_text(path, self.to_csv())


def ols_fit_predict(Xtr, ytr, Xte, ridge: float = 1e-8):
    """Least squares with intercept; ``ridge`` damps the centred normal equations."""
    mx, my = Xtr.mean(axis=0), ytr.mean()
    A = Xtr - mx
    gram = A.T @ A + ridge * np.eye(A.shape[1])
    w = np.linalg.solve(gram, A.T @ (ytr - my))
    return (Xte - mx) @ w + my


def cv_mse(X, y, folds, fit_predict) -> float:
    errs = []
    for tr, va in folds:
        pred = fit_predict(X[tr], y[tr], X[va])
        errs.append(np.mean((pred - y[va]) ** 2))
    return float(np.mean(errs))


def sfs(
    X,
    y,
    candidates: Sequence[str],
    max_features: int,
    folds: int = 5,
    seed: int = 0,
    tol_improve: float | None = 1e-6,
    fit_predict: Callable | None = None,
) -> SfsTrace:
    """Greedy forward selection minimising k-fold CV MSE.

    ``X`` columns are ordered as ``candidates``. The first feature is always
    taken; later steps stop early when the best candidate improves CV MSE by
    no more than ``tol_improve`` (``None`` always runs to ``max_features``).
    Ties go to the lowest column index.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidates("no candidate features")
    if max_features > len(candidates):
        raise ValueError(f"max_features={max_features} exceeds {len(candidates)} candidates")
    if np.var(y) == 0:
        raise DegenerateTarget("target has zero variance")
    fit_predict = fit_predict or ols_fit_predict
    split = kfold(np.arange(len(y)), folds, seed)
    baseline = cv_mse(np.zeros((len(y), 0)), y, split, lambda a, b, c: np.full(len(c), b.mean()))
    chosen: list[int] = []
    steps: list[tuple[str, float]] = []
    current = baseline
    while len(chosen) < max_features:
        scores = []
        for j in range(len(candidates)):
            if j in chosen:
                continue
            cols = chosen + [j]
            scores.append((cv_mse(X[:, cols], y, split, fit_predict), j))
        best_score, best_j = min(scores)
        if chosen and tol_improve is not None and current - best_score <= tol_improve:
            break
        chosen.append(best_j)
        steps.append((candidates[best_j], best_score))
        current = best_score
    return SfsTrace(
        steps,
        baseline,
        {"folds": folds, "seed": seed, "tol_improve": tol_improve, "max_features": max_features},
    )
