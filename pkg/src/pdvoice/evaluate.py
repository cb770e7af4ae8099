"""Regression metrics, stage confusion matrices and the k-fold harness."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataset import RecordTable, StageConfig, atomic_write_text, kfold, stage_labels
from .errors import EmptyInput, FoldFailed, LengthMismatch, ZeroVariance

SCHEMA_VERSION = 1


def _pair(y, yhat, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise LengthMismatch(f"{len(y)} targets vs {len(yhat)} predictions")
    if len(y) < min_len:
        raise EmptyInput(f"need at least {min_len} pairs, got {len(y)}")
    return y, yhat


def mse(y, yhat) -> float:
    """Mean squared error."""
    y, yhat = _pair(y, yhat)
    r = y - yhat
    return float(r @ r / len(r))


def rmse(y, yhat) -> float:
    return float(np.sqrt(mse(y, yhat)))


def r_squared(y, yhat) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``.

    Raises:
        ZeroVariance: ``y`` is constant, so the ratio is undefined.
    """
    y, yhat = _pair(y, yhat, min_len=2)
    centred = y - y.mean()
    ss_tot = float(centred @ centred)
    if ss_tot == 0.0:
        raise ZeroVariance("target has zero variance; R-squared is undefined")
    r = y - yhat
    return 1.0 - float(r @ r) / ss_tot


# --------------------------------------------------------------------------
# stage confusion


@dataclass
class ConfusionMatrix:
    """Rows are true stages, columns predicted stages (both 1-based labels)."""

    counts: np.ndarray
    labels: tuple[int, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def errors(self) -> int:
        return self.total - int(np.trace(self.counts))

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred"] + [f"stage_{s}" for s in self.labels])
        for s, row in zip(self.labels, self.counts):
            w.writerow([f"stage_{s}"] + [int(v) for v in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "counts": self.counts.astype(int).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfusionMatrix":
        return cls(np.array(d["counts"], dtype=np.int64), tuple(d["labels"]))


def stage_confusion(y_true, y_pred, cfg: StageConfig) -> ConfusionMatrix:
    """Bin both score vectors into stages and tally (true, predicted) pairs."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{len(y_true)} true scores vs {len(y_pred)} predictions")
    n = cfg.n_stages
    t = stage_labels(y_true, cfg) - 1
    p = stage_labels(y_pred, cfg) - 1
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts, tuple(range(1, n + 1)))


def forecast_stage_accuracy(forecasts, truths, cfg: StageConfig) -> tuple[float, float]:
    """Fractions of forecasts landing in the true stage and exactly one stage off."""
    f = np.asarray(forecasts, dtype=float).ravel()
    t = np.asarray(truths, dtype=float).ravel()
    if f.shape != t.shape:
        raise LengthMismatch(f"{len(f)} forecasts vs {len(t)} truths")
    if len(f) == 0:
        raise EmptyInput("no forecasts to score")
    gap = np.abs(stage_labels(f, cfg) - stage_labels(t, cfg))
    return float(np.mean(gap == 0)), float(np.mean(gap == 1))


# --------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    mse: float
    rmse: float
    r_squared: float
    confusion: ConfusionMatrix
    n: int
    model: str = ""
    features: str = ""
    seed: int = 0
    partition: str = "test"

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model,
            "features": self.features,
            "partition": self.partition,
            "seed": self.seed,
            "n": self.n,
            "mse": self.mse,
            "rmse": self.rmse,
            "r_squared": self.r_squared,
            "accuracy": self.accuracy,
            "confusion": self.confusion.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
        return cls(
            float(d["mse"]), float(d["rmse"]), float(d["r_squared"]),
            ConfusionMatrix.from_dict(d["confusion"]), int(d["n"]),
            d.get("model", ""), d.get("features", ""), int(d.get("seed", 0)), d.get("partition", "test"),
        )


def evaluate(y, yhat, cfg: StageConfig, model: str = "", features: str = "", seed: int = 0,
             partition: str = "test") -> EvalReport:
    """All metrics for one (truth, prediction) pairing."""
    y, yhat = _pair(y, yhat, min_len=2)
    m = mse(y, yhat)
    return EvalReport(m, float(np.sqrt(m)), r_squared(y, yhat), stage_confusion(y, yhat, cfg),
                      len(y), model, features, seed, partition)


def pairs_csv(y, yhat) -> str:
    """``y_true,y_pred`` rows for scatter plots."""
    y, yhat = _pair(y, yhat)
    lines = ["y_true,y_pred"] + [f"{a!r},{b!r}" for a, b in zip(y.tolist(), yhat.tolist())]
    return "\n".join(lines) + "\n"


def write_pairs(path, y, yhat) -> None:
    atomic_write_text(path, pairs_csv(y, yhat))


# --------------------------------------------------------------------------
# cross-validation

Trainer = Callable[[RecordTable, int], Callable[[RecordTable], np.ndarray]]
METRICS = ("mse", "rmse", "r_squared", "accuracy")


@dataclass
class CvResult:
    reports: list[EvalReport]
    aggregate: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "folds": [r.to_dict() for r in self.reports],
            "aggregate": self.aggregate,
        }


def aggregate(reports: Sequence[EvalReport]) -> dict[str, dict[str, float]]:
    """Mean and unbiased sd of every metric across folds."""
    out = {}
    for name in METRICS:
        vals = np.array([getattr(r, name) for r in reports], dtype=float)
        sd = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out[name] = {"mean": float(vals.mean()), "sd": sd}
    return out


def cross_validate(trainer: Trainer, table: RecordTable, k: int = 10, seed: int = 0,
                   cfg: StageConfig | None = None, model: str = "", features: str = "") -> CvResult:
    """Seeded k-fold evaluation.

    ``trainer(train_table, fold_seed)`` must fit every data-dependent step
    (normaliser, oversampling, model) on ``train_table`` alone and return a
    function mapping a table to predictions. Fold ``i`` is seeded with
    ``seed + i`` so folds are independent of execution order.
    """
    cfg = cfg or StageConfig()
    reports = []
    for fold, (tr, va) in enumerate(kfold(np.arange(len(table)), k, seed)):
        try:
            predict = trainer(table.take(tr), seed + fold)
            held = table.take(va)
            reports.append(evaluate(held.y, predict(held), cfg, model, features, seed + fold,
                                    partition=f"fold_{fold}"))
        except Exception as exc:  # noqa: BLE001 - re-raised with the fold index
            raise FoldFailed(fold, exc) from exc
    return CvResult(reports, aggregate(reports))
