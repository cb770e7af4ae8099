"""Normalisation, invalid-row removal and SMOTE oversampling."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import VOICE_FEATURES, RecordTable
from .errors import EmptyTable, KTooLarge, TooFewMinoritySamples, UnknownColumn

# --------------------------------------------------------------------------
# normalisation


@dataclass
class NormalizerParams:
    """Per-column statistics. ``stats[name]`` is (min, max) or (mean, sd)."""

    kind: str
    stats: dict[str, tuple[float, float]]
    fitted_on: int = 0

    @property
    def columns(self) -> list[str]:
        return list(self.stats)

    @property
    def degenerate(self) -> list[str]:
        if self.kind == "minmax":
            return [c for c, (lo, hi) in self.stats.items() if hi == lo]
        return [c for c, (_, sd) in self.stats.items() if sd == 0]

    def transform(self, X: np.ndarray, columns=None) -> np.ndarray:
        """Normalise the columns of ``X`` (ordered as ``columns``)."""
        columns = self.columns if columns is None else list(columns)
        X = np.asarray(X, dtype=float)
        out = np.empty_like(X)
        for j, name in enumerate(columns):
            if name not in self.stats:
                raise UnknownColumn(name)
            a, b = self.stats[name]
            if self.kind == "minmax":
                span = b - a
                out[:, j] = (X[:, j] - a) / span if span > 0 else 0.0
            else:
                out[:, j] = (X[:, j] - a) / b if b > 0 else 0.0
        return out

    def inverse_transform(self, Z: np.ndarray, columns=None) -> np.ndarray:
        columns = self.columns if columns is None else list(columns)
        Z = np.asarray(Z, dtype=float)
        out = np.empty_like(Z)
        for j, name in enumerate(columns):
            a, b = self.stats[name]
            scale = (b - a) if self.kind == "minmax" else b
            out[:, j] = Z[:, j] * scale + a
        return out

    def to_dict(self) -> dict:
        keys = ("min", "max") if self.kind == "minmax" else ("mean", "sd")
        return {
            "kind": self.kind,
            "fitted_on": self.fitted_on,
            "columns": {c: dict(zip(keys, map(float, v))) for c, v in self.stats.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizerParams":
        keys = ("min", "max") if d["kind"] == "minmax" else ("mean", "sd")
        stats = {c: (float(v[keys[0]]), float(v[keys[1]])) for c, v in d["columns"].items()}
        return cls(d["kind"], stats, int(d.get("fitted_on", 0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "NormalizerParams":
        return cls.from_dict(json.loads(text))


def fit_normalizer(table: RecordTable, columns, kind: str = "minmax") -> NormalizerParams:
    if kind not in ("minmax", "zscore"):
        raise ValueError(f"unknown normalisation {kind!r}")
    if len(table) == 0:
        raise EmptyTable("cannot fit a normaliser on zero rows")
    stats = {}
    for name in columns:
        col = table.column(name)
        if kind == "minmax":
            stats[name] = (float(col.min()), float(col.max()))
        else:
            sd = float(col.std(ddof=1)) if len(col) > 1 else 0.0
            stats[name] = (float(col.mean()), sd)
    return NormalizerParams(kind, stats, len(table))


def apply_normalizer(params: NormalizerParams, table: RecordTable) -> RecordTable:
    """Return a copy of ``table`` with the fitted columns normalised (no clipping)."""
    idx = [table.index_of(c) for c in params.columns]
    values = table.values.copy()
    values[:, idx] = params.transform(values[:, idx])
    return table.with_values(values)


# --------------------------------------------------------------------------
# invalid rows


@dataclass
class RemovedRow:
    index: int
    reason: str
    column: str | None = None


def remove_invalid(
    table: RecordTable, iqr_factor: float | None = 6.0, columns=VOICE_FEATURES
) -> tuple[RecordTable, list[RemovedRow]]:
    """Drop non-finite rows and gross outliers; report every removal.

    A voice feature is an outlier when it falls more than ``iqr_factor``
    interquartile ranges below Q1 or above Q3. Columns with zero IQR are
    exempt. ``iqr_factor=None`` disables the outlier rule.
    """
    values = table.values
    report: list[RemovedRow] = []
    finite = np.isfinite(values).all(axis=1)
    for i in np.flatnonzero(~finite):
        report.append(RemovedRow(int(i), "non-finite"))
    keep = finite.copy()
    if iqr_factor is not None and finite.any():
        flagged: dict[int, str] = {}
        for name in columns:
            col = table.column(name)[finite]
            q1, q3 = np.percentile(col, [25, 75])
            iqr = q3 - q1
            if iqr <= 0:
                continue
            lo, hi = q1 - iqr_factor * iqr, q3 + iqr_factor * iqr
            full = table.column(name)
            bad = finite & ((full < lo) | (full > hi))
            for i in np.flatnonzero(bad):
                flagged.setdefault(int(i), name)
        for i in sorted(flagged):
            report.append(RemovedRow(i, "outlier", flagged[i]))
            keep[i] = False
    report.sort(key=lambda r: r.index)
    return table.take(np.flatnonzero(keep)), report


# --------------------------------------------------------------------------
# SMOTE


@dataclass
class SmoteConfig:
    k: int = 5
    target_count: int = 0
    seed: int = 0
    scope: str = "train_only"


@dataclass
class SmoteResult:
    synthetic: np.ndarray
    parents: np.ndarray
    neighbors: np.ndarray
    gaps: np.ndarray
    flags: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.flags is None:
            self.flags = np.ones(len(self.synthetic), dtype=bool)

    def __len__(self):
        return len(self.synthetic)


def nearest_neighbors(X: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other rows (min-max scaled Euclidean).

    Ties resolve to the lower row index.
    """
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    Z = (X - lo) / span
    out = np.empty((len(Z), k), dtype=int)
    step = max(1, 2_000_000 // max(1, Z.size))
    for start in range(0, len(Z), step):
        block = Z[start:start + step]
        d2 = ((block[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
        rows = np.arange(len(block))
        d2[rows, start + rows] = np.inf
        out[start:start + step] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def smote(minority_rows, cfg: SmoteConfig, copy_columns=()) -> SmoteResult:
    """Generate ``cfg.target_count - len(minority_rows)`` synthetic rows.

    Each row is ``x + u * (nn - x)`` for a seeded parent ``x``, one of its
    ``k`` nearest minority neighbours ``nn`` and ``u ~ U[0, 1)``. Columns in
    ``copy_columns`` (positional indices) are copied from the parent instead
    of interpolated, which keeps identifiers and binary codes valid.
    """
    X = np.asarray(minority_rows, dtype=float)
    if X.ndim != 2:
        X = X.reshape(len(X), -1)
    m = len(X)
    if cfg.k < 1:
        raise ValueError("k must be at least 1")
    if m < 2:
        raise TooFewMinoritySamples(f"need at least 2 minority rows, got {m}")
    if cfg.k >= m:
        raise KTooLarge(f"k={cfg.k} must be smaller than the minority count {m}")
    if cfg.target_count < m:
        raise ValueError(f"target_count {cfg.target_count} is below the minority count {m}")
    n_new = cfg.target_count - m
    d = X.shape[1]
    if n_new == 0:
        empty_i = np.zeros(0, dtype=int)
        return SmoteResult(np.zeros((0, d)), empty_i, empty_i, np.zeros(0))
    knn = nearest_neighbors(X, cfg.k)
    rng = np.random.default_rng(cfg.seed)
    parents = rng.integers(0, m, size=n_new)
    pick = rng.integers(0, cfg.k, size=n_new)
    gaps = rng.random(n_new)
    nbrs = knn[parents, pick]
    base, other = X[parents], X[nbrs]
    S = base + gaps[:, None] * (other - base)
    # rounding must not push a coordinate off its parent-neighbour segment
    S = np.clip(S, np.minimum(base, other), np.maximum(base, other))
    for j in copy_columns:
        S[:, j] = base[:, j]
    return SmoteResult(S, parents, nbrs, gaps)


def oversample_minority(
    table: RecordTable, labels: np.ndarray, cfg: SmoteConfig, copy_columns=("subject#", "age", "sex")
) -> tuple[RecordTable, int, SmoteResult]:
    """Append SMOTE rows for the smallest label group of ``table``.

    Returns the grown table, the minority label and the raw SMOTE result.
    """
    stages, counts = np.unique(labels, return_counts=True)
    minority = int(stages[np.argmin(counts)])
    rows = table.values[labels == minority]
    copy_idx = [table.index_of(c) for c in copy_columns if c in table.columns]
    res = smote(rows, cfg, copy_columns=copy_idx)
    return table.append(res.synthetic, synthetic=True), minority, res
