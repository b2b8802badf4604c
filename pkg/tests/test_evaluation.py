import csv
import io

import numpy as np
import pytest

from qkmar.errors import ConfigError, NumericalError
from qkmar.evaluation import (
    LOG_GRID,
    Cell,
    HyperGrid,
    grid_search,
    metrics,
    stratified_kfold,
)


def test_kfold_thousand_samples():
    labels = np.repeat([1, -1], 500)
    folds = stratified_kfold(labels, 10, seed=0)
    assert [len(f) for f in folds] == [100] * 10
    assert all(np.sum(labels[f] == 1) == 50 for f in folds)
    assert sorted(i for f in folds for i in f) == list(range(1000))


def test_kfold_small_and_deterministic():
    labels = [1, -1, 1, -1]
    folds = stratified_kfold(labels, 2, seed=5)
    assert all(len(f) == 2 and {labels[i] for i in f} == {1, -1} for f in folds)
    assert stratified_kfold(labels, 2, seed=5) == folds


def test_kfold_unbalanced_counts_within_one():
    labels = np.r_[np.ones(23), -np.ones(17)]
    folds = stratified_kfold(labels, 4, seed=1)
    for cls in (1, -1):
        counts = [np.sum(labels[f] == cls) for f in folds]
        assert max(counts) - min(counts) <= 1
    assert max(map(len, folds)) - min(map(len, folds)) <= 1


def test_kfold_errors():
    with pytest.raises(ConfigError):
        stratified_kfold([1, 1, -1], 2, 0)
    with pytest.raises(ConfigError):
        stratified_kfold([1, -1], 1, 0)


def test_metrics_perfect():
    m = metrics([1, -1, 1, -1], [1, -1, 1, -1])
    assert m.accuracy == 1.0
    for cls in ("true", "false"):
        assert m.per_class[cls]["precision"] == m.per_class[cls]["recall"] == m.per_class[cls]["f1"] == 1.0


def test_metrics_hand_confusion():
    m = metrics([1, 1, -1, -1], [1, -1, 1, -1])
    assert m.accuracy == 0.5
    assert (m.precision, m.recall, m.f1) == (0.5, 0.5, 0.5)
    assert (m.tp, m.fp, m.tn, m.fn) == (1, 1, 1, 1)


def test_metrics_averages_and_zero_division():
    y = np.array([1, 1, 1, -1])
    p = np.array([1, -1, -1, -1])
    m = metrics(y, p)
    # true: P=1, R=1/3, F1=0.5 ; false: P=1/3, R=1, F1=0.5
    assert m.f1 == pytest.approx(0.5)
    assert m.macro_avg["f1"] == pytest.approx((m.per_class["true"]["f1"] + m.per_class["false"]["f1"]) / 2)
    assert m.weighted_avg["recall"] == pytest.approx((3 * (1 / 3) + 1 * 1) / 4)
    assert m.per_class["true"]["support"] + m.per_class["false"]["support"] == 4
    none_pos = metrics([-1, -1], [-1, -1])
    assert none_pos.precision == 0.0 and none_pos.f1 == 0.0
    with pytest.raises(ConfigError):
        metrics([1], [1, -1])


def test_report_schema_has_table_fields():
    d = metrics([1, -1], [1, 1]).to_dict()
    assert {"accuracy", "precision", "recall", "f1"} <= set(d)


def test_default_grid_sizes():
    assert len(HyperGrid.default("svc", "Ry1DSt").cells("Ry1DSt")) == 17 * 12 * 10 * 3
    assert len(HyperGrid.default("krc", "rbf").cells("rbf")) == 17 * 12 * 17
    assert len(HyperGrid.default("svc", "linear").cells("linear")) == 17 * 12


def test_grid_validation():
    grid = HyperGrid("svc", [1.0], [2], gamma_values=None)
    with pytest.raises(ConfigError):
        grid.cells("rbf")
    with pytest.raises(ConfigError):
        HyperGrid("svc", [-1.0], [2]).cells("linear")
    with pytest.raises(ConfigError):
        HyperGrid("svc", [1.0], [0]).cells("linear")
    with pytest.raises(ConfigError):
        HyperGrid("bogus", [1.0], [2]).cells("linear")


def test_cells_canonical_order():
    grid = HyperGrid("krc", [10.0, 0.1], [4, 2], bandwidth_values=[0.6, 0.3], layer_values=[2])
    cells = grid.cells("Ry1DSt")
    assert cells == sorted(cells)
    assert cells[0] == Cell(2, 0.1, None, 0.3, 2)


def separable(seed=0, m=40, d=6):
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
    X = rng.normal(size=(m, d))
    X[:, 0] += 6 * y
    return X, y


def test_grid_search_single_cell_and_separable():
    X, y = separable()
    res = grid_search(X, y, "svc", "linear", HyperGrid("svc", [0.1, 1.0, 10.0], [2]), k=4, seed=0)
    assert all(r.mean_accuracy == 1.0 for r in res.records)
    # ties resolve to the first cell in canonical order
    assert res.best_cell == Cell(2, 0.1)
    res = grid_search(X, y, "krc", "rbf", HyperGrid("krc", [1.0], [3], gamma_values=[0.5]), k=4)
    assert res.best_cell == Cell(3, 1.0, 0.5)
    assert res.final.cell == res.best_cell
    _, pred = res.final.decision(X)
    assert np.mean(pred == y) == 1.0


def test_grid_search_selection_and_determinism():
    X, y = separable(1)
    X[:, 0] = np.random.default_rng(3).normal(size=len(y)) + 0.5 * y
    grid = HyperGrid("krc", LOG_GRID[::4], [1, 3], gamma_values=[0.01, 1.0])
    a = grid_search(X, y, "krc", "rbf", grid, k=5, seed=7)
    b = grid_search(X, y, "krc", "rbf", grid, k=5, seed=7)
    assert a.to_dict() == b.to_dict() and a.to_csv() == b.to_csv()
    best = a.best_record.mean_accuracy
    assert all(r.mean_accuracy <= best for r in a.records)
    first_best = next(r for r in a.records if r.mean_accuracy == best)
    assert first_best.cell == a.best_cell


def test_grid_search_parallel_matches_serial():
    X, y = separable(2, m=30)
    grid = HyperGrid("svc", [0.1, 1.0], [1, 2], bandwidth_values=[0.5], layer_values=[1, 2])
    a = grid_search(X, y, "svc", "RyRz1DAlt", grid, k=3, seed=1, workers=1)
    b = grid_search(X, y, "svc", "RyRz1DAlt", grid, k=3, seed=1, workers=2)
    assert a.to_dict() == b.to_dict()


def test_grid_search_failed_cells_are_recorded(monkeypatch):
    import qkmar.evaluation as ev

    X, y = separable(3, m=20)
    orig = ev._train_quiet

    def flaky(algorithm, K, yy, reg, tol):
        if reg > 5:
            raise NumericalError("forced")
        return orig(algorithm, K, yy, reg, tol)

    monkeypatch.setattr(ev, "_train_quiet", flaky)
    res = grid_search(X, y, "svc", "rbf", HyperGrid("svc", [1.0, 10.0], [2], gamma_values=[1.0]), k=2)
    failed = [r for r in res.records if r.failed]
    assert len(failed) == 1 and failed[0].cell.reg == 10.0 and "forced" in failed[0].error
    assert res.best_cell.reg == 1.0


def test_grid_search_rejects_oversized_components():
    X, y = separable(4, m=20, d=3)
    with pytest.raises(ConfigError):
        grid_search(X, y, "krc", "linear", HyperGrid("krc", [1.0], [4]), k=2)


def test_cv_csv_one_row_per_cell():
    X, y = separable(5, m=20)
    res = grid_search(X, y, "krc", "laplacian", HyperGrid("krc", [0.1, 1.0], [1, 2], gamma_values=[0.1]), k=2)
    rows = list(csv.DictReader(io.StringIO(res.to_csv())))
    assert len(rows) == 4
    assert rows[0]["components"] == "1" and rows[0]["gamma"] == "0.1"
    assert float(rows[0]["mean_accuracy"]) == res.records[0].mean_accuracy
