"""The twelve acceptance criteria, each at its stated tolerance.

Criteria 1, 2, 3, 10 and 11 are statements about the UCI telemonitoring
file and skip when it is not available. Run ``pytest tests/test_acceptance.py``
to get the per-criterion PASS/FAIL/SKIP summary at the end of the output.
"""
from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import pytest

from oracles import brute_force_relief, central_difference, gradient_descent_rosenbrock, rosenbrock, svr_dual_qp
from pdvoice import evaluate as ev
from pdvoice.config import load_config
from pdvoice.dataset import COLUMNS, RecordTable, load_csv, stage_labels
from pdvoice.featsel import relief_f
from pdvoice.lstm import bptt_grad, init_lstm
from pdvoice.mlp import init_mlp, loss_and_grad
from pdvoice.optim import LbfgsOptions, lbfgs_minimize
from pdvoice.pipeline import prepare, reproduce, run_cell, run_sfs
from pdvoice.preprocess import SmoteConfig, oversample_minority, smote
from pdvoice.svr import SvrConfig, rbf_matrix, train_smo
from surrogate import surrogate_table

criterion = pytest.mark.criterion


# --------------------------------------------------------------------------
# real-data reproduce run (criteria 1, 2, 3, 10, 11)


@pytest.fixture(scope="module")
def real_run(real_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("reproduce")
    cfg = load_config(None, dataset=str(real_dataset), seed=42, out=str(out))
    t0 = time.perf_counter()
    summary = reproduce(cfg)
    return {"summary": summary, "cfg": cfg, "out": out, "seconds": time.perf_counter() - t0}


def _cell(summary, model, features):
    return next(r for r in summary["table4"] if r["model"] == model and r["features"] == features)


@criterion(1, "MLP+SFS test R2 >= 0.95, MSE <= 2.5, runtime <= 5 min")
@pytest.mark.dataset
def test_c1_mlp_sfs(real_run):
    row = _cell(real_run["summary"], "mlp", "sfs")
    assert row["test_r_squared"] >= 0.95
    assert row["test_mse"] <= 2.5


@criterion(1, "MLP+SFS test R2 >= 0.95, MSE <= 2.5, runtime <= 5 min")
@pytest.mark.dataset
def test_c1_mlp_sfs_runtime(real_dataset):
    cfg = load_config(None, dataset=str(real_dataset), seed=42)
    t0 = time.perf_counter()
    prep = prepare(load_csv(real_dataset), cfg)
    trace = run_sfs(prep.X("train", prep.candidates), prep.train.y, prep.candidates, cfg)
    run_cell(prep, "mlp", "sfs", trace.selected, cfg)
    assert time.perf_counter() - t0 <= 300.0


@criterion(2, "SVR+SFS test R2 >= 0.88, MSE <= 5.0; selection beats no selection")
@pytest.mark.dataset
def test_c2_svr_sfs_and_ordering(real_run):
    summary = real_run["summary"]
    row = _cell(summary, "svr", "sfs")
    assert row["test_r_squared"] >= 0.88
    assert row["test_mse"] <= 5.0
    for model in ("mlp", "svr"):
        assert _cell(summary, model, "sfs")["test_mse"] < _cell(summary, model, "none")["test_mse"]


@criterion(3, "MLP+SFS stage accuracy >= 0.90, accuracy = 1 - errors/total")
@pytest.mark.dataset
def test_c3_stage_accuracy(real_run):
    conf = real_run["summary"]["confusion"]
    assert conf["accuracy"] >= 0.90
    assert conf["accuracy"] == pytest.approx(1.0 - conf["errors"] / conf["total"], abs=1e-12)
    assert conf["total"] == real_run["summary"]["split"]["test"]
    assert 1700 <= conf["total"] <= 1800


@criterion(10, "LSTM stage-2 RMSE drops 10x and ends <= 2.0; stage-3 ends <= 4.0")
@pytest.mark.dataset
@pytest.mark.slow
def test_c10_lstm_trend(real_run):
    f2 = real_run["summary"]["forecast"]["stage2"]
    f3 = real_run["summary"]["forecast"]["stage3"]
    assert f2["final_val_rmse"] <= 0.1 * f2["epoch1_val_rmse"]
    assert f2["final_val_rmse"] <= 2.0
    assert f3["final_val_rmse"] <= 4.0


@criterion(11, "forecast stage-2 in-range fraction >= 0.80")
@pytest.mark.dataset
@pytest.mark.slow
def test_c11_forecast_in_range(real_run):
    assert real_run["summary"]["forecast"]["stage2"]["in_range"] >= 0.80


# --------------------------------------------------------------------------
# criterion 4: SMOTE 41 -> 341


def _minority_table(n_minority=41, seed=0):
    """Surrogate rows trimmed so the merged upper stage has exactly 41 rows."""
    table = surrogate_table(seed=seed, n_subjects=20, rows_per_subject=(40, 60))
    labels = stage_labels(table.y, load_config().stage_config)
    rng = np.random.default_rng(seed)
    upper = np.flatnonzero(labels == 3)
    assert len(upper) >= n_minority
    keep = np.sort(np.concatenate([np.flatnonzero(labels != 3), rng.choice(upper, n_minority, replace=False)]))
    return table.take(keep)


@criterion(4, "SMOTE 41 -> 341 gives exactly 300 rows inside parent-neighbour segments")
def test_c4_smote_41_to_341():
    table = _minority_table()
    stage_cfg = load_config().stage_config
    labels = stage_labels(table.y, stage_cfg)
    assert np.sum(labels == 3) == 41
    grown, minority, res = oversample_minority(table, labels, SmoteConfig(k=5, target_count=341, seed=7))
    assert minority == 3
    assert len(res) == 300
    assert len(grown) == len(table) + 300
    assert int(grown.synthetic.sum()) == 300
    parents = table.values[labels == 3]
    base, other = parents[res.parents], parents[res.neighbors]
    lo, hi = np.minimum(base, other), np.maximum(base, other)
    assert np.all(res.synthetic >= lo) and np.all(res.synthetic <= hi)
    for name in ("subject#", "age", "sex"):
        j = COLUMNS.index(name)
        assert np.array_equal(res.synthetic[:, j], base[:, j])


@criterion(4, "SMOTE 41 -> 341 gives exactly 300 rows inside parent-neighbour segments")
@pytest.mark.parametrize("target", [41, 42, 100, 341, 1000])
def test_c4_exact_count_always_honoured(target):
    X = np.random.default_rng(target).normal(size=(41, 5))
    res = smote(X, SmoteConfig(k=5, target_count=target, seed=1))
    assert len(res) == target - 41


# --------------------------------------------------------------------------
# criterion 5: Relief-F oracle


def _relief_instances(count=50):
    rng = np.random.default_rng(2024)
    for _ in range(count):
        n = int(rng.integers(12, 201))
        d = int(rng.integers(1, 7))
        n_classes = int(rng.integers(2, 4))
        labels = np.concatenate([np.arange(n_classes), rng.integers(0, n_classes, n - n_classes)])
        rng.shuffle(labels)
        X = rng.normal(size=(n, d)) * rng.uniform(0.1, 50.0, size=d) + labels[:, None] * rng.normal(size=d)
        if rng.random() < 0.3:
            X = np.round(X, 1)  # duplicated distances exercise the tie-break
        smallest = np.bincount(labels).min()
        k = int(rng.integers(1, min(10, smallest - 1) + 1)) if smallest > 1 else None
        if k is None:
            continue
        yield X, labels, k


@criterion(5, "Relief-F equals the brute-force oracle to 1e-12 on 50 instances")
def test_c5_relief_oracle():
    checked = 0
    for X, labels, k in _relief_instances(60):
        if checked == 50:
            break
        ranking = relief_f(X, labels, k=k, feature_names=[f"f{j}" for j in range(X.shape[1])])
        got = np.array([dict(ranking.entries)[f"f{j}"] for j in range(X.shape[1])])
        want = brute_force_relief(X, labels, k)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)
        checked += 1
    assert checked == 50


# --------------------------------------------------------------------------
# criterion 6: SMO vs QP oracle


def _svr_problems(count=25):
    rng = np.random.default_rng(11)
    for _ in range(count):
        n = int(rng.integers(20, 31))
        X = rng.uniform(-1.0, 1.0, size=(n, 2))
        y = np.sin(3.0 * X[:, 0]) + 0.3 * X[:, 1] + 0.05 * rng.normal(size=n)
        yield X, y


@criterion(6, "SMO dual within 1e-4 of the projected-gradient QP oracle; KKT <= 1e-3")
def test_c6_smo_matches_qp_oracle():
    problems = list(_svr_problems())
    assert len(problems) == 25
    for X, y in problems:
        model = train_smo(X, y, SvrConfig(kernel_scale=1.0))
        _, oracle_value = svr_dual_qp(rbf_matrix(X, X, 1.0), y, model.C, model.epsilon)
        assert abs(model.diagnostics["dual_objective"] - oracle_value) <= 1e-4
        assert model.diagnostics["max_kkt_violation"] <= 1e-3
        assert model.diagnostics["status"] == "converged"


@criterion(6, "SMO dual within 1e-4 of the projected-gradient QP oracle; KKT <= 1e-3")
def test_c6_kkt_on_larger_training_run():
    table = surrogate_table(seed=5, n_subjects=8, rows_per_subject=(60, 80))
    X = table.matrix(COLUMNS[6:])
    X = (X - X.min(0)) / (X.max(0) - X.min(0))
    model = train_smo(X, table.y, SvrConfig(kernel_scale=2.0))
    assert model.diagnostics["max_kkt_violation"] <= 1e-3


# --------------------------------------------------------------------------
# criterion 7: gradient checks


def _relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300))


@criterion(7, "MLP and LSTM gradients within 1e-5 relative of central differences")
@pytest.mark.parametrize("seed", range(20))
def test_c7_mlp_gradient(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(1, 9)), int(rng.integers(1, 7))
    hidden = tuple(int(h) for h in rng.integers(2, 6, size=3))
    model = init_mlp(d, seed, hidden)
    model = model.with_flat(model.flat() + 0.1 * rng.normal(size=model.n_params))
    X, y = rng.normal(size=(n, d)), rng.normal(size=n)
    lam = float(rng.choice([0.0, 1e-3]))
    _, grad = loss_and_grad(model, X, y, lam)
    fd = central_difference(lambda t: loss_and_grad(model.with_flat(t), X, y, lam)[0], model.flat())
    assert _relative_error(grad, fd) <= 1e-5


@criterion(7, "MLP and LSTM gradients within 1e-5 relative of central differences")
@pytest.mark.parametrize("seed", range(20))
def test_c7_lstm_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    hidden, window, batch = int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
    model = init_lstm(hidden, seed)
    model = model.with_flat(model.flat() + 0.3 * rng.normal(size=model.flat_size))
    X, y = rng.normal(size=(batch, window)), rng.normal(size=batch)
    _, grad = bptt_grad(model, X, y)
    fd = central_difference(lambda t: bptt_grad(model.with_flat(t), X, y)[0], model.flat())
    assert _relative_error(grad, fd) <= 1e-5


# --------------------------------------------------------------------------
# criterion 8: L-BFGS on Rosenbrock


@criterion(8, "L-BFGS reaches (1, 1) from (-1.2, 1) within 1e-6 in <= 200 iterations, monotone")
def test_c8_lbfgs_rosenbrock():
    x, trace = lbfgs_minimize(rosenbrock, [-1.2, 1.0], LbfgsOptions(max_iterations=200, gtol=1e-10))
    assert len(trace) <= 200
    assert np.max(np.abs(x - 1.0)) <= 1e-6
    assert all(b <= a for a, b in zip(trace.values, trace.values[1:]))
    reference = np.array(gradient_descent_rosenbrock(iters=100_000))
    assert np.max(np.abs(x - reference)) <= 1e-6


# --------------------------------------------------------------------------
# criterion 9: metric oracles


@criterion(9, "metric hand cases exact; rmse^2 = mse; mean predictor R2 = 0")
def test_c9_metrics():
    assert abs(ev.mse([1, 2, 3], [1, 2, 4]) - 1.0 / 3.0) <= 1e-12
    assert abs(ev.r_squared([1, 2, 3], [1, 2, 4]) - 0.5) <= 1e-12
    rng = np.random.default_rng(9)
    for _ in range(20):
        y, yhat = rng.normal(size=30), rng.normal(size=30)
        assert ev.rmse(y, yhat) ** 2 == pytest.approx(ev.mse(y, yhat), rel=1e-12)
        assert abs(ev.r_squared(y, np.full_like(y, y.mean()))) <= 1e-12


# --------------------------------------------------------------------------
# criterion 12: determinism


def _snapshot(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@criterion(12, "identical config and seed give byte-identical reports, models and samples")
@pytest.mark.filterwarnings("ignore::pdvoice.dataset.DataWarning")
def test_c12_reproduce_is_byte_identical(surrogate_csv, small_config, tmp_path):
    cfg_text = small_config.read_text() + "\n[cv]\nfolds = 3\n"
    small_config.write_text(cfg_text)
    out = tmp_path / "run"
    reproduce(load_config(small_config, dataset=str(surrogate_csv), seed=13, out=str(out)))
    first = _snapshot(out)
    reproduce(load_config(small_config, dataset=str(surrogate_csv), seed=13, out=str(out)))
    second = _snapshot(out)
    assert first.keys() == second.keys()
    expected = {"table4.csv", "confusion.csv", "summary.json", "smote_synthetic.csv", "split.json",
                "models/mlp_sfs.json", "models/svr_sfs.json", "models/lstm_stage2.json", "table5_stage3.csv",
                "cv_mlp_sfs.json"}
    assert expected <= set(first)
    for name in first:
        assert first[name] == second[name], name


@criterion(12, "identical config and seed give byte-identical reports, models and samples")
@pytest.mark.filterwarnings("ignore::pdvoice.dataset.DataWarning")
def test_c12_different_seed_changes_outputs(surrogate_csv, small_config, tmp_path):
    a = reproduce(load_config(small_config, dataset=str(surrogate_csv), seed=1, out=str(tmp_path / "a")))
    b = reproduce(load_config(small_config, dataset=str(surrogate_csv), seed=2, out=str(tmp_path / "b")))
    assert (tmp_path / "a" / "smote_synthetic.csv").read_bytes() != (tmp_path / "b" / "smote_synthetic.csv").read_bytes()
    assert a["table4"] != b["table4"]


def test_surrogate_loads_like_the_real_file(surrogate_csv):
    with pytest.warns(UserWarning):
        table = load_csv(surrogate_csv)
    assert isinstance(table, RecordTable) and len(table) > 500
