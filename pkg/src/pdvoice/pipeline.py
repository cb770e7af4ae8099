"""End-to-end experiment recipes shared by the command-line front end.

``reproduce`` runs the full study: the six regression cells (MLP and SVR,
each with all features, Relief-F features and SFS features), the stage
confusion matrix of the MLP+SFS cell and the two LSTM stage forecasts.
All outputs are written atomically and are byte-identical for a fixed
configuration.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ExperimentConfig, require_dataset
from .dataset import (
    COLUMNS,
    TARGET,
    RecordTable,
    SplitSpec,
    atomic_write_text,
    load_csv,
    stage_labels,
    stratified_split,
    write_csv,
)
from .evaluate import (
    CvResult,
    cross_validate,
    evaluate,
    forecast_stage_accuracy,
    mse,
    r_squared,
    stage_confusion,
    write_pairs,
)
from .featsel import FeatureRanking, SfsTrace, relief_f, sfs
from .lstm import LstmModel, LstmTrainConfig, SequenceSet, make_sequences, predict_std, train_lstm
from .mlp import MlpModel, MlpTrainConfig, predict, train_mlp
from .preprocess import (
    NormalizerParams,
    RemovedRow,
    SmoteConfig,
    SmoteResult,
    fit_normalizer,
    oversample_minority,
    remove_invalid,
)
from .svr import SvrConfig, svr_predict, train_smo

log = logging.getLogger("pdvoice")

SUMMARY_SCHEMA = 1
LEAKY_COLUMNS = ("total_UPDRS", "subject#")
TABLE4_COLUMNS = (
    "model", "features", "n_features", "feature_list",
    "train_mse", "train_r_squared", "test_mse", "test_r_squared", "test_accuracy",
)


def candidate_columns(no_leakage: bool = False) -> list[str]:
    """Every column except the target, optionally minus the leaky ones."""
    out = [c for c in COLUMNS if c != TARGET]
    if no_leakage:
        out = [c for c in out if c not in LEAKY_COLUMNS]
    return out


def smote_target(labels: np.ndarray, target) -> int:
    """``"auto"`` grows the smallest stage group to the size of the largest."""
    _, counts = np.unique(labels, return_counts=True)
    if target == "auto":
        return int(counts.max())
    return int(target)


def dataset_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --------------------------------------------------------------------------
# preprocessing


@dataclass
class Prepared:
    """Everything downstream of the split, with features normalised."""

    clean: RecordTable
    removed: list[RemovedRow]
    split: SplitSpec
    train: RecordTable
    test: RecordTable
    normalizer: NormalizerParams
    candidates: list[str]
    smote: SmoteResult | None = None
    minority_stage: int | None = None
    minority_before: int = 0

    def file_split(self) -> SplitSpec:
        """The split with indices into the input file rather than the cleaned table.

        Rows dropped as invalid appear in neither list; synthetic rows (whole-dataset
        oversampling) have no file row and are left out as well.
        """
        dropped = {r.index for r in self.removed}
        kept = np.array([i for i in range(len(self.clean) + len(dropped)) if i not in dropped], dtype=int)

        def to_file(idx):
            return [int(kept[i]) for i in idx if i < len(kept)]

        s = self.split
        return SplitSpec(to_file(s.train_indices), to_file(s.test_indices), s.seed, s.ratio, s.by, dict(s.meta))

    def X(self, part: str, names) -> np.ndarray:
        table = self.train if part == "train" else self.test
        return table.matrix(names)

    @property
    def real_train(self) -> RecordTable:
        return self.train.take(np.flatnonzero(~self.train.synthetic))


def _oversample(table: RecordTable, cfg: ExperimentConfig, seed: int):
    labels = stage_labels(table.y, cfg.stage_config)
    target = smote_target(labels, cfg.smote.target)
    minority_count = int(np.unique(labels, return_counts=True)[1].min())
    scfg = SmoteConfig(k=cfg.smote.k, target_count=target, seed=seed, scope=cfg.smote.scope)
    grown, minority, result = oversample_minority(table, labels, scfg)
    return grown, minority, result, minority_count


def normalise(table: RecordTable, params: NormalizerParams) -> RecordTable:
    idx = [table.index_of(c) for c in params.columns]
    values = table.values.copy()
    values[:, idx] = params.transform(values[:, idx], params.columns)
    return table.with_values(values)


def preprocess_train(train_raw: RecordTable, cfg: ExperimentConfig, candidates, seed: int, oversample: bool = True):
    """Oversample (train-only scope) and fit the normaliser on real training rows.

    Returns ``(normalised_train, normalizer, smote_result, minority, before)``.
    """
    smote_res, minority, before = None, None, 0
    grown = train_raw
    if oversample:
        grown, minority, smote_res, before = _oversample(train_raw, cfg, seed)
    real = grown.take(np.flatnonzero(~grown.synthetic))
    params = fit_normalizer(real, candidates, cfg.preprocess.normalization)
    return normalise(grown, params), params, smote_res, minority, before


def prepare(table: RecordTable, cfg: ExperimentConfig) -> Prepared:
    seed = cfg.experiment.seed
    factor = cfg.preprocess.outlier_iqr_factor
    clean, removed = remove_invalid(table, factor if factor > 0 else None)
    candidates = candidate_columns(cfg.features.no_leakage)
    smote_res, minority, before = None, None, 0
    base = clean
    if cfg.smote.scope == "whole_dataset":
        base, minority, smote_res, before = _oversample(clean, cfg, seed)
    split = stratified_split(base, cfg.stage_config, cfg.split.ratio, seed, cfg.split.by)
    train, params, res, mino, bef = preprocess_train(
        base.take(split.train_indices), cfg, candidates, seed, oversample=cfg.smote.scope == "train_only"
    )
    if res is not None:
        smote_res, minority, before = res, mino, bef
    test = normalise(base.take(split.test_indices), params)
    return Prepared(clean, removed, split, train, test, params, candidates, smote_res, minority, before)


# --------------------------------------------------------------------------
# feature selection and model fitting


def run_relief(X, y, names, cfg: ExperimentConfig) -> FeatureRanking:
    """Relief-F over normalised ``X`` with stage labels binned from ``y``."""
    labels = stage_labels(y, cfg.stage_config)
    return relief_f(X, labels, k=cfg.features.relief_k, seed=cfg.experiment.seed, feature_names=names)


def run_sfs(X, y, names, cfg: ExperimentConfig) -> SfsTrace:
    """SFS to ``features.count`` features, stopping early only when configured."""
    f = cfg.features
    tol = f.sfs_tol_improve if f.sfs_stop_early else None
    return sfs(X, y, names, max_features=min(f.count, len(names)), folds=f.sfs_folds,
               seed=cfg.experiment.seed, tol_improve=tol)


def mlp_config(cfg: ExperimentConfig, seed: int) -> MlpTrainConfig:
    m = cfg.mlp
    return MlpTrainConfig(m.lam, m.max_iterations, m.gtol, m.memory, m.learning_rate, seed, tuple(m.hidden))


def svr_config(cfg: ExperimentConfig) -> SvrConfig:
    s = cfg.svr
    return SvrConfig(kernel_scale=s.kernel_scale, C=s.C, epsilon=s.epsilon, tol=s.tol)


def restrict(params: NormalizerParams, names) -> NormalizerParams:
    return NormalizerParams(params.kind, {n: params.stats[n] for n in names}, params.fitted_on)


def fit_regressor(kind: str, X, y, cfg: ExperimentConfig, seed: int):
    """Train an MLP or SVR on normalised features; returns (model, predict_fn)."""
    if kind == "mlp":
        model, _ = train_mlp(X, y, mlp_config(cfg, seed))
        return model, lambda Z: predict(model, Z)
    if kind == "svr":
        model = train_smo(X, y, svr_config(cfg))
        return model, lambda Z: svr_predict(model, Z)
    raise ValueError(f"unknown regressor {kind!r}")


def predict_table(model, table: RecordTable) -> np.ndarray:
    """Predict raw rows with a model that carries its normaliser and feature names."""
    names = model.feature_names
    X = model.normalizer.transform(table.matrix(names), names)
    return predict(model, X) if isinstance(model, MlpModel) else svr_predict(model, X)


@dataclass
class CellResult:
    model: str
    features: str
    names: list[str]
    fitted: object
    train_pred: np.ndarray
    test_pred: np.ndarray
    row: dict = field(default_factory=dict)


def run_cell(prep: Prepared, kind: str, label: str, names, cfg: ExperimentConfig) -> CellResult:
    names = list(names)
    t0 = time.perf_counter()
    model, fn = fit_regressor(kind, prep.X("train", names), prep.train.y, cfg, cfg.experiment.seed)
    model.normalizer = restrict(prep.normalizer, names)
    model.feature_names = names
    real = prep.real_train
    train_pred = fn(real.matrix(names))
    test_pred = fn(prep.X("test", names))
    y_tr, y_te = real.y, prep.test.y
    row = {
        "model": kind,
        "features": label,
        "n_features": len(names),
        "feature_list": ";".join(names),
        "train_mse": mse(y_tr, train_pred),
        "train_r_squared": r_squared(y_tr, train_pred),
        "test_mse": mse(y_te, test_pred),
        "test_r_squared": r_squared(y_te, test_pred),
        "test_accuracy": stage_confusion(y_te, test_pred, cfg.stage_config).accuracy,
    }
    log.info("%s+%s: test mse %.4f r2 %.4f (%.1fs)", kind, label, row["test_mse"], row["test_r_squared"],
             time.perf_counter() - t0)
    return CellResult(kind, label, names, model, train_pred, test_pred, row)


def table4_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE4_COLUMNS)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], (str, int)) else repr(float(r[c])) for c in TABLE4_COLUMNS])
    return buf.getvalue()


def cv_trainer(kind: str, names, cfg: ExperimentConfig) -> Callable:
    """Fold trainer that redoes oversampling and normalisation on each fold's rows."""
    candidates = candidate_columns(cfg.features.no_leakage)

    def trainer(train_raw: RecordTable, seed: int):
        train, params, *_ = preprocess_train(train_raw, cfg, candidates, seed,
                                             oversample=cfg.smote.scope == "train_only")
        _, fn = fit_regressor(kind, train.matrix(names), train.y, cfg, seed)
        return lambda table: fn(params.transform(table.matrix(names), names))

    return trainer


# --------------------------------------------------------------------------
# LSTM forecasts


def lstm_config(cfg: ExperimentConfig) -> LstmTrainConfig:
    s = cfg.lstm
    return LstmTrainConfig(
        hidden=s.hidden, learning_rate=s.learning_rate, max_epochs=s.max_epochs,
        validation_frequency=s.validation_frequency, batch_size=s.batch_size,
        seed=cfg.experiment.seed, clip_norm=s.clip_norm if s.clip_norm > 0 else None,
    )


@dataclass
class ForecastRun:
    target_stage: int
    sequences: SequenceSet
    model: LstmModel
    trace: object
    summary: dict


def run_forecast(table: RecordTable, cfg: ExperimentConfig, source, target_stage: int) -> ForecastRun:
    t0 = time.perf_counter()
    seqs = make_sequences(table, cfg.stage_config, source, target_stage, cfg.lstm.window)
    model, trace = train_lstm(seqs.train, seqs.validation, lstm_config(cfg), seqs.mean, seqs.sd)
    Xv, yv = SequenceSet.stack(seqs.validation)
    pred = predict_std(model, Xv) * seqs.sd + seqs.mean
    truth = np.array([s.raw_target for s in seqs.validation])
    in_range, near_range = forecast_stage_accuracy(pred, truth, cfg.stage_config)
    rmse_col = trace.column("val_rmse")
    summary = {
        "source_stages": sorted(int(s) for s in source),
        "target_stage": target_stage,
        "n_train": len(seqs.train),
        "n_validation": len(seqs.validation),
        "epoch1_val_rmse": rmse_col[0] if rmse_col else None,
        "final_val_rmse": rmse_col[-1] if rmse_col else None,
        "final_val_mse": trace.column("val_mse")[-1] if rmse_col else None,
        "in_range": in_range,
        "near_range": near_range,
        "in_range_count": int(round(in_range * len(truth))),
        "near_range_count": int(round(near_range * len(truth))),
    }
    log.info("lstm stage %d: final rmse %s (%.1fs)", target_stage, summary["final_val_rmse"],
             time.perf_counter() - t0)
    return ForecastRun(target_stage, seqs, model, trace, summary)


# --------------------------------------------------------------------------
# reproduce


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def removed_csv(removed) -> str:
    lines = ["index,reason,column"] + [f"{r.index},{r.reason},{r.column or ''}" for r in removed]
    return "\n".join(lines) + "\n"


def reproduce(cfg: ExperimentConfig, out: Path | None = None) -> dict:
    """Run the full study and write every report under ``out``."""
    path = require_dataset(cfg)
    out = Path(out or cfg.experiment.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.toml")
    table = load_csv(path)
    prep = prepare(table, cfg)
    atomic_write_text(out / "split.json", prep.file_split().to_json() + "\n")
    atomic_write_text(out / "removed_rows.csv", removed_csv(prep.removed))
    if prep.smote is not None:
        # oversampling runs on raw values, so these rows are in source units
        synth = RecordTable(prep.smote.synthetic, COLUMNS, TARGET, np.ones(len(prep.smote), dtype=bool))
        write_csv(synth, out / "smote_synthetic.csv", with_synthetic_flag=True)
    log.info("rows %d, removed %d, train %d (+%d synthetic), test %d", len(table), len(prep.removed),
             len(prep.real_train), int(prep.train.synthetic.sum()), len(prep.test))

    X_all = prep.X("train", prep.candidates)
    ranking = run_relief(X_all, prep.train.y, prep.candidates, cfg)
    ranking.write(out / "relief.csv")
    trace = run_sfs(X_all, prep.train.y, prep.candidates, cfg)
    trace.write(out / "sfs.csv")
    subsets = {
        "none": prep.candidates,
        "relief": ranking.top(cfg.features.count),
        "sfs": trace.selected,
    }
    models_dir = out / "models"
    cells = {}
    for kind in ("mlp", "svr"):
        for label, names in subsets.items():
            cell = run_cell(prep, kind, label, names, cfg)
            cells[(kind, label)] = cell
            atomic_write_text(models_dir / f"{kind}_{label}.json", cell.fitted.to_json() + "\n")
    rows = [cells[(k, lab)].row for k in ("mlp", "svr") for lab in subsets]
    atomic_write_text(out / "table4.csv", table4_csv(rows))

    best = cells[("mlp", "sfs")]
    y_test = prep.test.y
    confusion = stage_confusion(y_test, best.test_pred, cfg.stage_config)
    atomic_write_text(out / "confusion.csv", confusion.to_csv())
    write_pairs(out / "scatter_mlp_sfs.csv", y_test, best.test_pred)
    report = evaluate(y_test, best.test_pred, cfg.stage_config, "mlp", "sfs", cfg.experiment.seed)
    atomic_write_text(out / "report_mlp_sfs.json", report.to_json())

    cv_summary = None
    if cfg.cv.folds:
        cv_summary = {}
        for kind in ("mlp", "svr"):
            res: CvResult = cross_validate(cv_trainer(kind, trace.selected, cfg), prep.clean, cfg.cv.folds,
                                           cfg.experiment.seed, cfg.stage_config, kind, "sfs")
            cv_summary[kind] = res.aggregate
            atomic_write_text(out / f"cv_{kind}_sfs.json", _json(res.to_dict()))

    forecasts = {}
    for source, target_stage in (({1}, 2), ({1, 2}, 3)):
        run = run_forecast(prep.clean, cfg, source, target_stage)
        run.trace.write(out / f"table5_stage{target_stage}.csv")
        atomic_write_text(models_dir / f"lstm_stage{target_stage}.json", run.model.to_json() + "\n")
        forecasts[f"stage{target_stage}"] = run.summary

    summary = {
        "schema_version": SUMMARY_SCHEMA,
        "dataset": {"path": str(path), "sha256": dataset_digest(path), "rows": len(table),
                    "removed": len(prep.removed)},
        "split": {"train": len(prep.split.train_indices), "test": len(prep.split.test_indices),
                  "ratio": cfg.split.ratio, "by": cfg.split.by},
        "smote": {
            "scope": cfg.smote.scope,
            "minority_stage": prep.minority_stage,
            "before": prep.minority_before,
            "synthetic": len(prep.smote) if prep.smote is not None else 0,
        },
        "features": {"relief": subsets["relief"], "sfs": subsets["sfs"]},
        "table4": rows,
        "confusion": {**confusion.to_dict(), "accuracy": confusion.accuracy, "errors": confusion.errors,
                      "total": confusion.total},
        "svr_diagnostics": {lab: {k: v for k, v in cells[("svr", lab)].fitted.diagnostics.items()}
                            for lab in subsets},
        "forecast": forecasts,
        "cv": cv_summary,
    }
    atomic_write_text(out / "summary.json", _json(summary))
    return summary
