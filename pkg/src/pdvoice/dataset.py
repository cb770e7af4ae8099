"""Loading, validating and splitting the UCI Parkinson's telemonitoring table.

Rows are kept in file order; a row's position is its identity for every
split, fold and report produced downstream.
"""
from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyGroup,
    HeaderMismatch,
    InvalidStageConfig,
    KTooLarge,
    MissingFile,
    NonFiniteValue,
    RowParseError,
    UnknownColumn,
)

COLUMNS: tuple[str, ...] = (
    "subject#", "age", "sex", "test_time", "motor_UPDRS", "total_UPDRS",
    "Jitter(%)", "Jitter(Abs)", "Jitter:RAP", "Jitter:PPQ5", "Jitter:DDP",
    "Shimmer", "Shimmer(dB)", "Shimmer:APQ3", "Shimmer:APQ5", "Shimmer:APQ11",
    "Shimmer:DDA", "NHR", "HNR", "RPDE", "DFA", "PPE",
)
TARGET = "motor_UPDRS"
VOICE_FEATURES: tuple[str, ...] = COLUMNS[6:]
INTEGER_COLUMNS = frozenset({"subject#", "age", "sex"})
CATEGORICAL_COLUMNS = ("subject#", "age", "sex")
NONNEGATIVE_COLUMNS = frozenset(COLUMNS[6:17])


class DataWarning(UserWarning):
    """Suspicious but admissible values in the source data."""


@dataclass(frozen=True)
class VoiceRecord:
    subject_id: int
    age: float
    sex: int
    test_time: float
    motor_updrs: float
    total_updrs: float
    jitter_pct: float
    jitter_abs: float
    jitter_rap: float
    jitter_ppq5: float
    jitter_ddp: float
    shimmer: float
    shimmer_db: float
    shimmer_apq3: float
    shimmer_apq5: float
    shimmer_apq11: float
    shimmer_dda: float
    nhr: float
    hnr: float
    rpde: float
    dfa: float
    ppe: float

    def as_row(self) -> list[float]:
        return [float(getattr(self, f.name)) for f in fields(self)]


_RECORD_FIELDS = [f.name for f in fields(VoiceRecord)]


@dataclass(frozen=True, eq=False)
class RecordTable:
    """Rows of the telemonitoring table as a float matrix in schema order.

    ``synthetic`` marks rows produced by SMOTE; it is all-False for loaded data.
    """

    values: np.ndarray
    columns: tuple[str, ...] = COLUMNS
    target: str = TARGET
    synthetic: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.columns):
            values = values.reshape(-1, len(self.columns))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.synthetic is None:
            object.__setattr__(self, "synthetic", np.zeros(len(values), dtype=bool))
        if self.target not in self.columns:
            raise UnknownColumn(self.target)

    def __len__(self) -> int:
        return self.values.shape[0]

    def index_of(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise UnknownColumn(name) from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index_of(name)]

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        return self.values[:, [self.index_of(n) for n in names]]

    @property
    def y(self) -> np.ndarray:
        return self.column(self.target)

    def take(self, indices) -> "RecordTable":
        idx = np.asarray(indices, dtype=int)
        return RecordTable(self.values[idx], self.columns, self.target, self.synthetic[idx])

    def with_values(self, values: np.ndarray) -> "RecordTable":
        return RecordTable(values, self.columns, self.target, self.synthetic.copy())

    def append(self, rows: np.ndarray, synthetic: bool = True) -> "RecordTable":
        rows = np.asarray(rows, dtype=float).reshape(-1, len(self.columns))
        flags = np.concatenate([self.synthetic, np.full(len(rows), synthetic)])
        return RecordTable(np.vstack([self.values, rows]), self.columns, self.target, flags)

    @property
    def records(self) -> list[VoiceRecord]:
        if self.columns != COLUMNS:
            raise UnknownColumn("records are only defined for the full telemonitoring schema")
        out = []
        for row in self.values:
            kw = dict(zip(_RECORD_FIELDS, row.tolist()))
            kw["subject_id"] = int(kw["subject_id"])
            kw["sex"] = int(kw["sex"])
            out.append(VoiceRecord(**kw))
        return out

    @classmethod
    def from_records(cls, records: Iterable[VoiceRecord], target: str = TARGET) -> "RecordTable":
        rows = [r.as_row() for r in records]
        return cls(np.array(rows, dtype=float).reshape(-1, len(COLUMNS)), COLUMNS, target)


def _check_row(values: Sequence[float], lineno: int, issues: dict[str, list]) -> None:
    """Record suspicious-but-legal values of one row under a short issue key."""

    def note(key, detail):
        issues.setdefault(key, []).append((lineno, detail))

    for name, v in zip(COLUMNS, values):
        if (name in NONNEGATIVE_COLUMNS or name in ("motor_UPDRS", "total_UPDRS")) and v < 0:
            note(f"negative {name}", v)
    test_time, rpde, dfa = values[3], values[19], values[20]
    if test_time < 0:
        note("negative test_time", test_time)
    if not 0.0 <= rpde <= 1.0:
        note("RPDE outside [0, 1]", rpde)
    if not 0.0 < dfa < 1.5:
        note("DFA outside (0, 1.5)", dfa)


def load_csv(path, target: str = TARGET) -> RecordTable:
    """Read the 22-column telemonitoring CSV into a :class:`RecordTable`.

    Raises MissingFile, HeaderMismatch, RowParseError or NonFiniteValue.
    Suspicious-but-legal values (negative test_time, RPDE/DFA out of their
    usual range) only emit a :class:`DataWarning`, one per kind of issue.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"dataset not found: {path}")
    rows: list[list[float]] = []
    issues: dict[str, list] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        header = [h.strip() for h in header] if header else []
        if tuple(header) != COLUMNS:
            raise HeaderMismatch(COLUMNS, header)
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not tok.strip() for tok in raw):
                continue
            if len(raw) != len(COLUMNS):
                col = COLUMNS[min(len(raw), len(COLUMNS) - 1)]
                raise RowParseError(lineno, col, ",".join(raw))
            parsed = []
            for name, tok in zip(COLUMNS, raw):
                try:
                    v = float(tok)
                except ValueError:
                    raise RowParseError(lineno, name, tok) from None
                if not math.isfinite(v):
                    raise NonFiniteValue(lineno, name)
                parsed.append(v)
            _check_row(parsed, lineno, issues)
            rows.append(parsed)
    for key, hits in issues.items():
        first_line, first_value = hits[0]
        warnings.warn(f"{key} in {len(hits)} row(s), first at line {first_line} ({first_value!r})",
                      DataWarning, stacklevel=2)
    values = np.array(rows, dtype=float).reshape(-1, len(COLUMNS))
    return RecordTable(values, COLUMNS, target)


def format_value(name: str, v: float) -> str:
    if name in INTEGER_COLUMNS and float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def write_csv(table: RecordTable, path, with_synthetic_flag: bool = False) -> None:
    """Write ``table`` with shortest round-trip float formatting.

    ``with_synthetic_flag`` appends the ``synthetic`` provenance column.
    """
    header = list(table.columns) + (["synthetic"] if with_synthetic_flag else [])
    lines = [",".join(header)]
    for row, syn in zip(table.values, table.synthetic):
        cells = [format_value(n, v) for n, v in zip(table.columns, row)]
        if with_synthetic_flag:
            cells.append("1" if syn else "0")
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# stages


@dataclass(frozen=True)
class StageConfig:
    """Motor-UPDRS cut points between stages 1-4 (left-closed upper bins)."""

    t1: float = 15.0
    t2: float = 25.0
    t3: float = 35.0
    merge_upper_stages: bool = True

    def __post_init__(self):
        if not (0 < self.t1 < self.t2 < self.t3):
            raise InvalidStageConfig(
                f"thresholds must satisfy 0 < t1 < t2 < t3, got ({self.t1}, {self.t2}, {self.t3})"
            )

    @property
    def n_stages(self) -> int:
        return 3 if self.merge_upper_stages else 4

    @property
    def thresholds(self) -> tuple[float, float, float]:
        return (self.t1, self.t2, self.t3)


def stage_of(motor_updrs: float, cfg: StageConfig) -> int:
    """Unmerged stage (1-4) of a single motor-UPDRS score."""
    if not (0 < cfg.t1 < cfg.t2 < cfg.t3):
        raise InvalidStageConfig("thresholds not strictly ascending")
    if motor_updrs < cfg.t1:
        return 1
    if motor_updrs < cfg.t2:
        return 2
    if motor_updrs < cfg.t3:
        return 3
    return 4


def stage_labels(values, cfg: StageConfig, merge: bool | None = None) -> np.ndarray:
    """Vectorised stage labels; stage 4 folds into 3 when merging is on."""
    merge = cfg.merge_upper_stages if merge is None else merge
    labels = 1 + np.searchsorted(np.asarray(cfg.thresholds), np.asarray(values, dtype=float), side="right")
    if merge:
        labels = np.minimum(labels, 3)
    return labels.astype(int)


# --------------------------------------------------------------------------
# splits


@dataclass
class SplitSpec:
    train_indices: list[int]
    test_indices: list[int]
    seed: int
    ratio: float
    by: str = "stage"
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "ratio": self.ratio,
                "by": self.by,
                "train_indices": self.train_indices,
                "test_indices": self.test_indices,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitSpec":
        d = json.loads(text)
        return cls(
            [int(i) for i in d["train_indices"]],
            [int(i) for i in d["test_indices"]],
            int(d["seed"]),
            float(d["ratio"]),
            d.get("by", "stage"),
        )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def largest_remainder(sizes: Sequence[int], ratio: float) -> list[int]:
    """Per-group train counts summing to round(ratio * total).

    Groups with the largest fractional quota get the leftover units; ties
    go to the earlier group.
    """
    quotas = [ratio * n for n in sizes]
    base = [min(n, int(math.floor(q + 1e-9))) for q, n in zip(quotas, sizes)]
    want = _round_half_up(ratio * sum(sizes))
    order = sorted(range(len(sizes)), key=lambda g: (-(quotas[g] - base[g]), g))
    extra = want - sum(base)
    for g in order:
        if extra <= 0:
            break
        if base[g] < sizes[g]:
            base[g] += 1
            extra -= 1
    return base


def stratified_split(
    table: RecordTable,
    cfg: StageConfig,
    ratio: float = 0.7,
    seed: int = 0,
    by: str = "stage",
    allow_empty: bool = False,
) -> SplitSpec:
    """Seeded train/test split that keeps each group's share at ``ratio``.

    ``by="stage"`` groups rows by stage label; ``by="subject"`` instead
    assigns whole subjects to one side. A stage without rows raises
    :class:`EmptyGroup` unless ``allow_empty`` is set, in which case only
    the populated stages are split.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    if by == "subject":
        subjects = np.unique(table.column("subject#"))
        perm = rng.permutation(subjects)
        n_train = _round_half_up(ratio * len(subjects))
        chosen = np.isin(table.column("subject#"), perm[:n_train])
        train = np.flatnonzero(chosen)
        test = np.flatnonzero(~chosen)
        return SplitSpec(train.tolist(), test.tolist(), seed, ratio, by)
    if by != "stage":
        raise ValueError(f"unknown grouping {by!r}")
    labels = stage_labels(table.y, cfg)
    groups = []
    for stage in range(1, cfg.n_stages + 1):
        members = np.flatnonzero(labels == stage)
        if members.size == 0:
            if allow_empty:
                continue
            raise EmptyGroup(f"stage {stage} has no rows")
        groups.append(members)
    counts = largest_remainder([len(g) for g in groups], ratio)
    train, test = [], []
    for members, n_train in zip(groups, counts):
        perm = rng.permutation(members)
        train.append(perm[:n_train])
        test.append(perm[n_train:])
    train_idx = np.sort(np.concatenate(train))
    test_idx = np.sort(np.concatenate(test))
    return SplitSpec(
        train_idx.tolist(),
        test_idx.tolist(),
        seed,
        ratio,
        by,
        {"group_sizes": [len(g) for g in groups], "train_counts": counts},
    )


def kfold(indices: Sequence[int], k: int, seed: int = 0) -> list[tuple[list[int], list[int]]]:
    """Seeded k-fold partition; earlier folds take the extra rows."""
    indices = np.asarray(indices, dtype=int)
    n = len(indices)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the number of indices ({n})")
    perm = np.random.default_rng(seed).permutation(indices)
    sizes = [n // k + (1 if f < n % k else 0) for f in range(k)]
    folds = []
    start = 0
    for size in sizes:
        val = perm[start:start + size]
        rest = np.concatenate([perm[:start], perm[start + size:]])
        folds.append((np.sort(rest).tolist(), np.sort(val).tolist()))
        start += size
    return folds
