"""Experiment configuration: TOML sections mapped onto nested dataclasses.

Every field has a default, so an empty file (or none at all) is a valid
configuration once a dataset path is supplied.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import toml

from .dataset import StageConfig
from .errors import ConfigError

DATASET_ENV = "PDVOICE_DATASET"


@dataclass
class ExperimentSection:
    dataset: str = ""
    seed: int = 42
    out: str = "results"


@dataclass
class StagesSection:
    t1: float = 15.0
    t2: float = 25.0
    t3: float = 35.0
    merge_upper_stages: bool = True


@dataclass
class SplitSection:
    ratio: float = 0.7
    by: str = "stage"


@dataclass
class PreprocessSection:
    normalization: str = "minmax"
    outlier_iqr_factor: float = 6.0


@dataclass
class SmoteSection:
    k: int = 5
    target: str | int = "auto"
    scope: str = "train_only"


@dataclass
class FeaturesSection:
    method: str = "sfs"
    count: int = 10
    relief_k: int = 10
    sfs_folds: int = 5
    sfs_tol_improve: float = 1e-6
    sfs_stop_early: bool = False
    no_leakage: bool = False


@dataclass
class MlpSection:
    lam: float = 0.0
    max_iterations: int = 1000
    gtol: float = 1e-6
    memory: int = 10
    learning_rate: float = 0.1
    hidden: list = field(default_factory=lambda: [25, 25, 25])


@dataclass
class SvrSection:
    kernel_scale: float = 2.0
    C: str | float = "auto"
    epsilon: str | float = "auto"
    tol: float = 1e-3


@dataclass
class LstmSection:
    hidden: int = 150
    learning_rate: float = 1e-3
    max_epochs: int = 1000
    validation_frequency: int = 50
    batch_size: int = 32
    window: int = 4
    clip_norm: float = 1.0


@dataclass
class ModelSection:
    kind: str = "mlp"


@dataclass
class CvSection:
    folds: int = 0


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    stages: StagesSection = field(default_factory=StagesSection)
    split: SplitSection = field(default_factory=SplitSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    smote: SmoteSection = field(default_factory=SmoteSection)
    features: FeaturesSection = field(default_factory=FeaturesSection)
    model: ModelSection = field(default_factory=ModelSection)
    mlp: MlpSection = field(default_factory=MlpSection)
    svr: SvrSection = field(default_factory=SvrSection)
    lstm: LstmSection = field(default_factory=LstmSection)
    cv: CvSection = field(default_factory=CvSection)

    @property
    def stage_config(self) -> StageConfig:
        s = self.stages
        return StageConfig(s.t1, s.t2, s.t3, s.merge_upper_stages)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_toml(self) -> str:
        return toml.dumps(self.to_dict())

    def write(self, path) -> None:
        from .dataset import atomic_write_text

        atomic_write_text(path, self.to_toml())


_AUTO_OR_NUMBER = {("smote", "target"): int, ("svr", "C"): float, ("svr", "epsilon"): float}
_CHOICES = {
    ("split", "by"): ("stage", "subject"),
    ("preprocess", "normalization"): ("minmax", "zscore"),
    ("smote", "scope"): ("train_only", "whole_dataset"),
    ("features", "method"): ("none", "relief", "sfs"),
    ("model", "kind"): ("mlp", "svr", "lstm"),
}


def _coerce(section: str, name: str, default, value):
    where = f"{section}.{name}"
    if (section, name) in _AUTO_OR_NUMBER:
        if value == "auto":
            return value
        kind = _AUTO_OR_NUMBER[(section, name)]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, f"expected \"auto\" or a number, got {value!r}")
        if kind is int and float(value) != int(value):
            raise ConfigError(where, f"expected an integer, got {value!r}")
        return kind(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(where, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(where, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, int) and v > 0 for v in value):
            raise ConfigError(where, f"expected a list of positive integers, got {value!r}")
        return list(value)
    if not isinstance(value, str):
        raise ConfigError(where, f"expected a string, got {value!r}")
    choices = _CHOICES.get((section, name))
    if choices and value not in choices:
        raise ConfigError(where, f"must be one of {', '.join(choices)}; got {value!r}")
    return value


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config, rejecting unknown sections, unknown keys and bad types."""
    cfg = ExperimentConfig()
    for section, values in data.items():
        if section not in {f.name for f in fields(cfg)}:
            raise ConfigError(section, "unknown section")
        if not isinstance(values, dict):
            raise ConfigError(section, "expected a table of settings")
        target = getattr(cfg, section)
        known = {f.name for f in fields(target)}
        for name, value in values.items():
            if name not in known:
                raise ConfigError(f"{section}.{name}", "unknown setting")
            setattr(target, name, _coerce(section, name, getattr(target, name), value))
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    s = cfg.stages
    if not 0 < s.t1 < s.t2 < s.t3:
        raise ConfigError("stages", f"thresholds must satisfy 0 < t1 < t2 < t3, got {s.t1}, {s.t2}, {s.t3}")
    if not 0 < cfg.split.ratio < 1:
        raise ConfigError("split.ratio", "must lie strictly between 0 and 1")
    positive = {
        "smote.k": cfg.smote.k,
        "features.count": cfg.features.count,
        "features.relief_k": cfg.features.relief_k,
        "mlp.memory": cfg.mlp.memory,
        "svr.kernel_scale": cfg.svr.kernel_scale,
        "svr.tol": cfg.svr.tol,
        "lstm.hidden": cfg.lstm.hidden,
        "lstm.learning_rate": cfg.lstm.learning_rate,
        "lstm.validation_frequency": cfg.lstm.validation_frequency,
        "lstm.batch_size": cfg.lstm.batch_size,
        "lstm.window": cfg.lstm.window,
    }
    for name, value in positive.items():
        if value <= 0:
            raise ConfigError(name, f"must be positive, got {value}")
    if cfg.features.sfs_folds < 2:
        raise ConfigError("features.sfs_folds", "needs at least 2 folds")
    if cfg.cv.folds == 1 or cfg.cv.folds < 0:
        raise ConfigError("cv.folds", "use 0 to disable or at least 2 folds")
    if cfg.mlp.max_iterations < 0 or cfg.lstm.max_epochs < 0:
        raise ConfigError("mlp.max_iterations" if cfg.mlp.max_iterations < 0 else "lstm.max_epochs",
                          "must be non-negative")


def load_config(path=None, dataset: str | None = None, seed: int | None = None,
                out: str | None = None) -> ExperimentConfig:
    """Read ``path`` (optional) and apply command-line overrides.

    The dataset path falls back to the ``PDVOICE_DATASET`` environment
    variable when neither the file nor ``dataset`` provides one.
    """
    data = {}
    if path is not None:
        try:
            data = toml.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {path}") from None
        except toml.TomlDecodeError as exc:
            raise ConfigError("config", f"invalid TOML: {exc}") from None
    cfg = config_from_dict(data)
    if dataset is not None:
        cfg.experiment.dataset = dataset
    if seed is not None:
        cfg.experiment.seed = seed
    if out is not None:
        cfg.experiment.out = out
    if not cfg.experiment.dataset:
        cfg.experiment.dataset = os.environ.get(DATASET_ENV, "")
    return cfg


def require_dataset(cfg: ExperimentConfig) -> Path:
    path = cfg.experiment.dataset
    if not path:
        raise ConfigError("experiment.dataset", f"no dataset path (set it, pass --dataset or export {DATASET_ENV})")
    if not Path(path).is_file():
        raise ConfigError("experiment.dataset", f"file not found: {path}")
    return Path(path)
