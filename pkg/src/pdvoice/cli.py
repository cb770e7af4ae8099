"""``pdvoice`` command-line interface.

Every subcommand prints a single JSON line on success. Failures print a
JSON object with an ``error`` key on standard error and exit with 2 for
usage or configuration problems and 1 for runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config, require_dataset
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
from .errors import ConfigError, PdVoiceError
from .evaluate import evaluate, pairs_csv
from .featsel import FeatureRanking
from .lstm import LstmModel, forecast
from .mlp import MlpModel
from .pipeline import (
    candidate_columns,
    fit_regressor,
    predict_table,
    prepare,
    reproduce,
    restrict,
    run_forecast,
    run_relief,
    run_sfs,
    smote_target,
)
from .preprocess import SmoteConfig, fit_normalizer, oversample_minority
from .svr import SvrModel

log = logging.getLogger("pdvoice")


class UsageError(Exception):
    """Raised instead of argparse's own exit so the message stays JSON."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _fail(code: int, message: str, **extra) -> int:
    print(json.dumps({"error": message, **extra}, sort_keys=True), file=sys.stderr)
    return code


def _config(args) -> ExperimentConfig:
    return load_config(args.config, args.dataset, args.seed, args.out)


def _load_split(path) -> SplitSpec:
    try:
        return SplitSpec.from_json(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("--split", f"file not found: {path}") from None


def _load_table(cfg: ExperimentConfig) -> RecordTable:
    return load_csv(require_dataset(cfg))


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.experiment.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# subcommands


def cmd_reproduce(args) -> dict:
    cfg = _config(args)
    if args.epochs is not None:
        cfg.lstm.max_epochs = args.epochs
    summary = reproduce(cfg)
    return {
        "command": "reproduce",
        "out": cfg.experiment.out,
        "table4": [
            {k: r[k] for k in ("model", "features", "test_mse", "test_r_squared")} for r in summary["table4"]
        ],
        "stage_accuracy": summary["confusion"]["accuracy"],
        "forecast_in_range": {k: v["in_range"] for k, v in summary["forecast"].items()},
    }


def cmd_split(args) -> dict:
    cfg = _config(args)
    if args.ratio is not None:
        cfg.split.ratio = args.ratio
    if args.by is not None:
        cfg.split.by = args.by
    table = _load_table(cfg)
    spec = stratified_split(table, cfg.stage_config, cfg.split.ratio, cfg.experiment.seed, cfg.split.by)
    path = _out_dir(cfg) / "split.json"
    atomic_write_text(path, spec.to_json() + "\n")
    return {"command": "split", "path": str(path), "train": len(spec.train_indices), "test": len(spec.test_indices)}


def cmd_smote(args) -> dict:
    cfg = _config(args)
    if args.k is not None:
        cfg.smote.k = args.k
    table = _load_table(cfg)
    if args.split:
        table = table.take(_load_split(args.split).train_indices)
    labels = stage_labels(table.y, cfg.stage_config)
    target = args.target if args.target is not None else cfg.smote.target
    target = smote_target(labels, target if target == "auto" else int(target))
    scfg = SmoteConfig(k=cfg.smote.k, target_count=target, seed=cfg.experiment.seed, scope=cfg.smote.scope)
    _, minority, res = oversample_minority(table, labels, scfg)
    synth = RecordTable(res.synthetic, COLUMNS, TARGET, np.ones(len(res), dtype=bool))
    path = _out_dir(cfg) / "smote_synthetic.csv"
    write_csv(synth, path, with_synthetic_flag=True)
    return {"command": "smote", "path": str(path), "minority_stage": minority, "synthetic": len(res),
            "target_count": target}


def cmd_select(args) -> dict:
    cfg = _config(args)
    if args.count is not None:
        cfg.features.count = args.count
    if args.no_leakage:
        cfg.features.no_leakage = True
    table = _load_table(cfg)
    if args.split:
        table = table.take(_load_split(args.split).train_indices)
    candidates = candidate_columns(cfg.features.no_leakage)
    if cfg.features.count > len(candidates):
        raise ConfigError("--count", f"at most {len(candidates)} candidate features are available")
    params = fit_normalizer(table, candidates, cfg.preprocess.normalization)
    X = params.transform(table.matrix(candidates), candidates)
    out = _out_dir(cfg)
    if args.method == "relief":
        ranking = run_relief(X, table.y, candidates, cfg)
        top = FeatureRanking(ranking.entries[:cfg.features.count], ranking.params)
        path = out / "relief.csv"
        top.write(path)
        names = top.names
    else:
        trace = run_sfs(X, table.y, candidates, cfg)
        path = out / "sfs.csv"
        trace.write(path)
        names = trace.selected
    return {"command": "select", "method": args.method, "path": str(path), "features": names}


def _feature_subset(args, cfg, prep) -> tuple[str, list[str]]:
    if args.feature_list:
        names = [n.strip() for n in args.feature_list.split(",") if n.strip()]
        unknown = [n for n in names if n not in prep.candidates]
        if unknown:
            raise ConfigError("--feature-list", f"not candidate features: {', '.join(unknown)}")
        return "custom", names
    method = args.features or cfg.features.method
    if method == "none":
        return method, list(prep.candidates)
    X = prep.X("train", prep.candidates)
    if method == "relief":
        return method, run_relief(X, prep.train.y, prep.candidates, cfg).top(cfg.features.count)
    return method, run_sfs(X, prep.train.y, prep.candidates, cfg).selected


def cmd_train(args) -> dict:
    cfg = _config(args)
    kind = args.model or cfg.model.kind
    if args.count is not None:
        cfg.features.count = args.count
    table = _load_table(cfg)
    out = _out_dir(cfg)
    if kind == "lstm":
        source = [int(s) for s in args.source_stages.split(",")]
        run = run_forecast(table, cfg, source, args.target_stage)
        atomic_write_text(out / "model.json", run.model.to_json() + "\n")
        run.trace.write(out / "trace.csv")
        return {"command": "train", "model": "lstm", "path": str(out / "model.json"), **run.summary}
    prep = prepare(table, cfg)
    label, names = _feature_subset(args, cfg, prep)
    model, fn = fit_regressor(kind, prep.X("train", names), prep.train.y, cfg, cfg.experiment.seed)
    model.normalizer = restrict(prep.normalizer, names)
    model.feature_names = names
    atomic_write_text(out / "model.json", model.to_json() + "\n")
    atomic_write_text(out / "split.json", prep.file_split().to_json() + "\n")
    report = evaluate(prep.test.y, fn(prep.X("test", names)), cfg.stage_config, kind, label, cfg.experiment.seed)
    atomic_write_text(out / "report.json", report.to_json())
    return {"command": "train", "model": kind, "features": names, "path": str(out / "model.json"),
            "test_mse": report.mse, "test_r_squared": report.r_squared}


def _read_column(path) -> np.ndarray:
    """One number per line; a non-numeric first line is taken as a header."""
    try:
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    except FileNotFoundError:
        raise ConfigError(str(path), "file not found") from None
    values = []
    for i, ln in enumerate(lines):
        cell = ln.split(",")[-1]
        try:
            values.append(float(cell))
        except ValueError:
            if i == 0:
                continue
            raise ConfigError(str(path), f"line {i + 1} is not a number: {ln!r}") from None
    return np.array(values)


def _load_model(path):
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("--model", f"file not found: {path}") from None
    if "layer_dims" in data:
        return MlpModel.from_dict(data)
    if "support_vectors" in data:
        return SvrModel.from_dict(data)
    if "W_i" in data:
        return LstmModel.from_dict(data)
    raise ConfigError("--model", "unrecognised model file")


def cmd_evaluate(args) -> dict:
    cfg = _config(args)
    if args.y_true or args.y_pred:
        if not (args.y_true and args.y_pred):
            raise UsageError("--y-true and --y-pred go together")
        y, yhat = _read_column(args.y_true), _read_column(args.y_pred)
        name, features = "external", ""
    else:
        if not args.model:
            raise UsageError("give --y-true/--y-pred or --model")
        model = _load_model(args.model)
        if isinstance(model, LstmModel):
            raise UsageError("use the forecast subcommand for LSTM models")
        table = _load_table(cfg)
        if args.split:
            table = table.take(_load_split(args.split).test_indices)
        y, yhat = table.y, predict_table(model, table)
        name = "mlp" if isinstance(model, MlpModel) else "svr"
        features = ";".join(model.feature_names or [])
    report = evaluate(y, yhat, cfg.stage_config, name, features, cfg.experiment.seed)
    out = _out_dir(cfg)
    atomic_write_text(out / "report.json", report.to_json())
    atomic_write_text(out / "confusion.csv", report.confusion.to_csv())
    atomic_write_text(out / "pairs.csv", pairs_csv(y, yhat))
    return {"command": "evaluate", "n": report.n, "mse": report.mse, "rmse": report.rmse,
            "r_squared": report.r_squared, "accuracy": report.accuracy, "path": str(out / "report.json")}


def cmd_forecast(args) -> dict:
    cfg = _config(args)
    model = _load_model(args.model)
    if not isinstance(model, LstmModel):
        raise UsageError("forecast needs an LSTM model file")
    try:
        window = [float(v) for v in args.window.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--window must be comma-separated numbers, got {args.window!r}") from None
    values = forecast(model, window, args.horizon)
    lines = ["step,motor_UPDRS"] + [f"{i},{v!r}" for i, v in enumerate(values, start=1)]
    path = _out_dir(cfg) / "forecast.csv"
    atomic_write_text(path, "\n".join(lines) + "\n")
    return {"command": "forecast", "forecast": values, "path": str(path)}


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML experiment configuration")
    common.add_argument("--dataset", help="telemonitoring CSV (default: $PDVOICE_DATASET)")
    common.add_argument("--seed", type=int, help="override experiment.seed")
    common.add_argument("--out", help="output directory (default: experiment.out)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="pdvoice", description="Parkinson's voice telemonitoring experiments.")
    parser.add_argument("--version", action="version", version=f"pdvoice {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("reproduce", parents=[common], help="run the full study and write all reports")
    p.add_argument("--epochs", type=int, help="override lstm.max_epochs")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("split", parents=[common], help="stratified train/test split")
    p.add_argument("--ratio", type=float)
    p.add_argument("--by", choices=("stage", "subject"))
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("smote", parents=[common], help="oversample the minority stage")
    p.add_argument("--split", help="split JSON; oversample its training rows only")
    p.add_argument("--k", type=int)
    p.add_argument("--target", help='final minority size or "auto"')
    p.set_defaults(func=cmd_smote)

    p = sub.add_parser("select", parents=[common], help="rank or select features")
    p.add_argument("--method", choices=("relief", "sfs"), required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--split", help="split JSON; select on its training rows only")
    p.add_argument("--no-leakage", action="store_true", help="drop total_UPDRS and subject# from candidates")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", parents=[common], help="train one model")
    p.add_argument("--model", choices=("mlp", "svr", "lstm"))
    p.add_argument("--features", choices=("none", "relief", "sfs"))
    p.add_argument("--feature-list", help="comma-separated feature names (overrides --features)")
    p.add_argument("--count", type=int)
    p.add_argument("--source-stages", default="1", help="LSTM training stages, e.g. 1,2")
    p.add_argument("--target-stage", type=int, default=2, help="LSTM validation stage")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions or a saved model")
    p.add_argument("--y-true")
    p.add_argument("--y-pred")
    p.add_argument("--model")
    p.add_argument("--split", help="split JSON; evaluate on its test rows")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("forecast", parents=[common], help="recursive LSTM forecast")
    p.add_argument("--model", required=True)
    p.add_argument("--window", required=True, help="comma-separated raw motor-UPDRS values")
    p.add_argument("--horizon", type=int, default=1)
    p.set_defaults(func=cmd_forecast)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(2, str(exc), kind="usage")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s",
                        stream=sys.stderr)
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            _emit(args.func(args))
    except UsageError as exc:
        return _fail(2, str(exc), kind="usage")
    except ConfigError as exc:
        return _fail(2, str(exc), kind="config", field=exc.field)
    except (PdVoiceError, OSError, ValueError) as exc:
        return _fail(1, str(exc), kind=type(exc).__name__)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
