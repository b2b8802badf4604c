"""Stratified k-fold cross-validation, hyperparameter grid search and metrics."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import learn
from .errors import ConfigError, DataError, QkmarError
from .kernels import KernelSpec, cross_gram, gram
from .preprocess import PcaModel, pca_fit, pca_transform
from .qsim import Family
from .rng import stream

log = logging.getLogger(__name__)

QUANTUM_FAMILIES = tuple(f.value for f in Family)
KERNEL_FAMILIES = ("linear", "rbf", "laplacian") + QUANTUM_FAMILIES
ALGORITHMS = ("svc", "krc")

# 10^-4, 10^-3.5, ..., 10^4
LOG_GRID = [10.0 ** (k / 2) for k in range(-8, 9)]
DEFAULT_COMPONENTS = list(range(1, 13))
DEFAULT_BANDWIDTHS = [round(0.1 * k, 1) for k in range(1, 11)]
DEFAULT_LAYERS = [2, 3, 4]


def check_family(family: str) -> str:
    if family not in KERNEL_FAMILIES:
        raise ConfigError(f"unknown kernel family {family!r}; expected one of {KERNEL_FAMILIES}")
    return family


@dataclass
class HyperGrid:
    algorithm: str
    reg_values: list
    component_values: list
    gamma_values: Optional[list] = None
    bandwidth_values: Optional[list] = None
    layer_values: Optional[list] = None

    @classmethod
    def default(cls, algorithm: str, family: str) -> "HyperGrid":
        """The cross-validated grid used for each kernel in the reference experiments."""
        check_family(family)
        grid = cls(algorithm, list(LOG_GRID), list(DEFAULT_COMPONENTS))
        if family in ("rbf", "laplacian"):
            grid.gamma_values = list(LOG_GRID)
        elif family in QUANTUM_FAMILIES:
            grid.bandwidth_values = list(DEFAULT_BANDWIDTHS)
            grid.layer_values = list(DEFAULT_LAYERS)
        return grid

    def validate(self, family: str) -> None:
        check_family(family)
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")

        def need(name, values, positive_int=False):
            if not values:
                raise ConfigError(f"{name} must be a non-empty list for the {family} kernel")
            for v in values:
                if positive_int and (int(v) != v or v < 1):
                    raise ConfigError(f"{name} entries must be positive integers, got {v}")
                if not positive_int and not (np.isfinite(v) and v > 0):
                    raise ConfigError(f"{name} entries must be finite and > 0, got {v}")

        need("reg_values", self.reg_values)
        need("component_values", self.component_values, positive_int=True)
        if family in ("rbf", "laplacian"):
            need("gamma_values", self.gamma_values)
        if family in QUANTUM_FAMILIES:
            need("bandwidth_values", self.bandwidth_values)
            need("layer_values", self.layer_values, positive_int=True)

    def cells(self, family: str) -> list["Cell"]:
        """All grid cells in canonical order (components, reg, gamma, beta, layers ascending)."""
        self.validate(family)
        gammas = sorted(set(self.gamma_values)) if family in ("rbf", "laplacian") else [None]
        quantum = family in QUANTUM_FAMILIES
        betas = sorted(set(self.bandwidth_values)) if quantum else [None]
        layers = sorted(set(int(v) for v in self.layer_values)) if quantum else [None]
        return [
            Cell(int(c), float(r), g, b, l)
            for c, r, g, b, l in itertools.product(
                sorted(set(int(v) for v in self.component_values)),
                sorted(set(float(v) for v in self.reg_values)),
                gammas,
                betas,
                layers,
            )
        ]

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "reg_values": list(self.reg_values),
            "component_values": list(self.component_values),
            "gamma_values": self.gamma_values,
            "bandwidth_values": self.bandwidth_values,
            "layer_values": self.layer_values,
        }


@dataclass(frozen=True, order=True)
class Cell:
    components: int
    reg: float
    gamma: Optional[float] = None
    bandwidth: Optional[float] = None
    layers: Optional[int] = None

    def kernel(self, family: str) -> KernelSpec:
        if family == "linear":
            return KernelSpec.linear()
        if family == "rbf":
            return KernelSpec.rbf(self.gamma)
        if family == "laplacian":
            return KernelSpec.laplacian(self.gamma)
        return KernelSpec.quantum(family, self.components, self.layers, self.bandwidth)

    def kernel_key(self) -> tuple:
        return (self.gamma, self.bandwidth, self.layers)

    def to_dict(self) -> dict:
        return {
            "components": self.components,
            "reg": self.reg,
            "gamma": self.gamma,
            "bandwidth": self.bandwidth,
            "layers": self.layers,
        }


# --- folds -------------------------------------------------------------------


def stratified_kfold(labels, k: int, seed: int) -> list[list[int]]:
    """Partition indices into ``k`` validation folds with per-class balance.

    Each class is shuffled with the ``folds`` stream and dealt round-robin;
    the dealing position carries over between classes so fold sizes differ
    by at most one.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < k:
        raise ConfigError(f"smallest class has {counts.min()} members, fewer than {k} folds")
    rng = stream(seed, "folds")
    folds: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for c in classes:
        idx = np.flatnonzero(labels == c)
        for i in idx[rng.permutation(len(idx))]:
            folds[pos % k].append(int(i))
            pos += 1
    return [sorted(f) for f in folds]


# --- metrics -----------------------------------------------------------------


def _prf(tp: int, fp: int, fn: int) -> dict:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return {"precision": p, "recall": r, "f1": f1, "support": tp + fn}


@dataclass
class MetricsReport:
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int
    per_class: dict
    macro_avg: dict
    weighted_avg: dict

    @property
    def precision(self) -> float:
        return self.per_class["true"]["precision"]

    @property
    def recall(self) -> float:
        return self.per_class["true"]["recall"]

    @property
    def f1(self) -> float:
        return self.per_class["true"]["f1"]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "per_class": self.per_class,
            "macro_avg": self.macro_avg,
            "weighted_avg": self.weighted_avg,
        }


def metrics(y_true, y_pred) -> MetricsReport:
    """Binary classification report; the positive (``true``) class is label +1."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ConfigError(f"label arrays differ in shape: {y_true.shape} vs {y_pred.shape}")
    if len(y_true) == 0:
        raise ConfigError("metrics need at least one sample")
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true != 1) & (y_pred == 1)))
    tn = int(np.sum((y_true != 1) & (y_pred != 1)))
    fn = int(np.sum((y_true == 1) & (y_pred != 1)))
    per_class = {"true": _prf(tp, fp, fn), "false": _prf(tn, fn, fp)}
    n = len(y_true)
    keys = ("precision", "recall", "f1")
    macro = {k: (per_class["true"][k] + per_class["false"][k]) / 2 for k in keys}
    weighted = {
        k: (per_class["true"][k] * per_class["true"]["support"] + per_class["false"][k] * per_class["false"]["support"]) / n
        for k in keys
    }
    return MetricsReport((tp + tn) / n, tp, fp, tn, fn, per_class, macro, weighted)


# --- grid search -------------------------------------------------------------


@dataclass
class CellRecord:
    cell: Cell
    fold_accuracies: list
    converged: list
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def mean_accuracy(self) -> Optional[float]:
        return None if self.failed else float(np.mean(self.fold_accuracies))


@dataclass
class FittedPipeline:
    cell: Cell
    pca: PcaModel
    kernel: KernelSpec
    model: object
    train_features: np.ndarray

    def features(self, X) -> np.ndarray:
        return pca_transform(self.pca, X)

    def decision(self, X) -> tuple[np.ndarray, np.ndarray]:
        cross = cross_gram(self.kernel, self.features(X), self.train_features)
        return learn.decision(self.model, cross)


@dataclass
class CvResult:
    records: list
    best_cell: Optional[Cell]
    folds: int
    final: Optional[FittedPipeline] = field(default=None, repr=False)

    @property
    def best_record(self) -> Optional[CellRecord]:
        for r in self.records:
            if r.cell == self.best_cell:
                return r
        return None

    def to_dict(self) -> dict:
        return {
            "folds": self.folds,
            "best_cell": None if self.best_cell is None else self.best_cell.to_dict(),
            "best_mean_accuracy": None if self.best_record is None else self.best_record.mean_accuracy,
            "cells": [
                {
                    **r.cell.to_dict(),
                    "mean_accuracy": r.mean_accuracy,
                    "fold_accuracies": r.fold_accuracies,
                    "converged": r.converged,
                    "error": r.error,
                }
                for r in self.records
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["components", "reg", "gamma", "bandwidth", "layers", "mean_accuracy", "fold_accuracies", "all_converged", "error"]
        )
        for r in self.records:
            c = r.cell
            writer.writerow(
                [
                    c.components,
                    repr(c.reg),
                    "" if c.gamma is None else repr(c.gamma),
                    "" if c.bandwidth is None else repr(c.bandwidth),
                    "" if c.layers is None else c.layers,
                    "" if r.failed else repr(r.mean_accuracy),
                    ";".join(repr(a) for a in r.fold_accuracies),
                    str(all(r.converged)).lower(),
                    r.error or "",
                ]
            )
        return buf.getvalue()


def _train_quiet(algorithm: str, K, y, reg: float, svc_tol: float):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", learn.ConvergenceWarning)
        kwargs = {"tol": svc_tol} if algorithm == "svc" else {}
        return learn.train(algorithm, K, y, reg, **kwargs)


def _evaluate_fold(args) -> dict:
    X, y, train_idx, val_idx, algorithm, family, cells, svc_tol = args
    k_max = max(c.components for c in cells)
    pca = pca_fit(X[train_idx], k_max)
    Z_train_full = pca_transform(pca, X[train_idx])
    Z_val_full = pca_transform(pca, X[val_idx])
    y_train, y_val = y[train_idx], y[val_idx]
    out: dict = {}
    # cells are ordered so all regs for one (components, kernel) share one Gram
    for (comp, kkey), group in itertools.groupby(
        sorted(cells, key=lambda c: (c.components, c.kernel_key(), c.reg)),
        key=lambda c: (c.components, c.kernel_key()),
    ):
        group = list(group)
        Z_train, Z_val = Z_train_full[:, :comp], Z_val_full[:, :comp]
        try:
            spec = group[0].kernel(family)
            K = gram(spec, Z_train)
            K_val = cross_gram(spec, Z_val, Z_train)
        except QkmarError as exc:
            for c in group:
                out[c] = (None, False, f"{type(exc).__name__}: {exc}")
            continue
        for c in group:
            try:
                model = _train_quiet(algorithm, K, y_train, c.reg, svc_tol)
                _, pred = learn.decision(model, K_val)
                out[c] = (float(np.mean(pred == y_val)), bool(model.converged), None)
            except QkmarError as exc:
                out[c] = (None, False, f"{type(exc).__name__}: {exc}")
    return out


def fit_cell(X, y, algorithm: str, family: str, cell: Cell, svc_tol: float = 1e-3) -> FittedPipeline:
    """Fit PCA, kernel and learner for one cell on the full training set."""
    X, y = np.asarray(X), np.asarray(y, dtype=float)
    pca = pca_fit(X, cell.components)
    Z = pca_transform(pca, X)
    spec = cell.kernel(family)
    K = gram(spec, Z)
    model = _train_quiet(algorithm, K, y, cell.reg, svc_tol)
    return FittedPipeline(cell=cell, pca=pca, kernel=spec, model=model, train_features=Z)


def grid_search(
    X,
    y,
    algorithm: str,
    family: str,
    grid: HyperGrid,
    k: int = 10,
    seed: int = 0,
    workers: int = 1,
    svc_tol: float = 1e-3,
    refit: bool = True,
) -> CvResult:
    """Cross-validated grid search, then refit of the best cell on all of ``X``.

    ``X`` holds flattened, transformed training chips (PCA happens inside,
    refit on each fold's training part). Cells raising an error are recorded
    as failed and excluded from selection. Ties on mean validation accuracy
    go to the first cell in canonical order.
    """
    X, y = np.asarray(X), np.asarray(y, dtype=float)
    if grid.algorithm != algorithm:
        raise ConfigError(f"grid is for {grid.algorithm}, not {algorithm}")
    cells = grid.cells(family)
    folds = stratified_kfold(y, k, seed)
    all_idx = np.arange(len(y))
    min_train = min(len(y) - len(f) for f in folds)
    too_big = [c for c in cells if c.components > min(X.shape[1], min_train)]
    if too_big:
        raise ConfigError(f"{too_big[0].components} components exceed the data dimension or fold size")
    tasks = [
        (X, y, np.setdiff1d(all_idx, f), np.asarray(f), algorithm, family, cells, svc_tol)
        for f in folds
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fold_results = list(pool.map(_evaluate_fold, tasks))
    else:
        fold_results = [_evaluate_fold(t) for t in tasks]

    records = []
    for c in cells:
        accs, conv, err = [], [], None
        for res in fold_results:
            acc, ok, e = res[c]
            if e is not None:
                err = err or e
            else:
                accs.append(acc)
                conv.append(ok)
        records.append(CellRecord(c, accs if err is None else [], conv if err is None else [], err))

    best = None
    for r in records:
        if not r.failed and (best is None or r.mean_accuracy > best.mean_accuracy):
            best = r
    if best is None:
        raise DataError("every grid cell failed during cross-validation")
    result = CvResult(records=records, best_cell=best.cell, folds=k)
    log.info("best cell %s (mean validation accuracy %.4f)", best.cell, best.mean_accuracy)
    if refit:
        result.final = fit_cell(X, y, algorithm, family, best.cell, svc_tol)
    return result
