"""End-to-end experiment: ingest, preprocess, grid search, refit, test, report."""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .data import CHIP_VARIANTS, LABEL_FIELDS, balanced_sample, filter_high_confidence, read_chip, read_manifest
from .errors import ConfigError, QkmarError
from .evaluation import (
    ALGORITHMS,
    QUANTUM_FAMILIES,
    Cell,
    HyperGrid,
    check_family,
    grid_search,
    metrics,
)
from .kernels import gram, write_gram
from .preprocess import flatten, h_transform, pca_fit, pca_transform, stratified_split

log = logging.getLogger(__name__)

# Best cells reported for the SARFish experiments, keyed by (task, chip variant, kernel).
BEST_CELLS = {
    ("is_vessel", "grd16", "linear"): ("krc", Cell(10, 1e-4)),
    ("is_vessel", "grd16", "laplacian"): ("krc", Cell(9, 1e-1, gamma=1e-1)),
    ("is_vessel", "grd16", "rbf"): ("svc", Cell(12, 1.0, gamma=10**-1.5)),
    ("is_vessel", "grd16", "Ry1DSt"): ("svc", Cell(12, 10**0.5, bandwidth=0.3, layers=3)),
    ("is_vessel", "grd16", "RyRz1DAlt"): ("krc", Cell(12, 1.0, bandwidth=0.2, layers=3)),
    ("is_vessel", "slc16", "CRyRz1DSt"): ("svc", Cell(9, 1e-4, bandwidth=0.4, layers=4)),
    ("is_vessel", "slc70x12", "CRyRz1DSt"): ("svc", Cell(10, 1e-4, bandwidth=0.5, layers=3)),
    ("is_fishing", "grd16", "linear"): ("svc", Cell(6, 10**-2.5)),
    ("is_fishing", "grd16", "laplacian"): ("krc", Cell(12, 10**-0.5, gamma=1e-1)),
    ("is_fishing", "grd16", "rbf"): ("krc", Cell(12, 1.0, gamma=10**-0.5)),
    ("is_fishing", "grd16", "Ry1DSt"): ("krc", Cell(11, 10**-0.5, bandwidth=0.3, layers=4)),
    ("is_fishing", "grd16", "RyRz1DAlt"): ("svc", Cell(11, 1.0, bandwidth=0.8, layers=3)),
    ("is_fishing", "slc16", "CRyRz1DSt"): ("krc", Cell(11, 10**-0.5, bandwidth=0.2, layers=2)),
    ("is_fishing", "slc70x12", "CRyRz1DSt"): ("krc", Cell(12, 1.0, bandwidth=0.5, layers=4)),
}


def single_cell_grid(algorithm: str, cell: Cell) -> HyperGrid:
    return HyperGrid(
        algorithm=algorithm,
        reg_values=[cell.reg],
        component_values=[cell.components],
        gamma_values=None if cell.gamma is None else [cell.gamma],
        bandwidth_values=None if cell.bandwidth is None else [cell.bandwidth],
        layer_values=None if cell.layers is None else [cell.layers],
    )


@dataclass
class ExperimentConfig:
    dataset: str
    kernel: str
    algorithm: str
    task: str = "is_vessel"
    chip_variant: str = "grd16"
    grid: Optional[dict] = None
    folds: int = 10
    train_fraction: float = 0.8
    per_class: int = 625
    seed: int = 0
    output: str = "out"
    svc_tol: float = 1e-3

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        missing = {"dataset", "kernel", "algorithm"} - set(d)
        if missing:
            raise ConfigError(f"missing config fields {sorted(missing)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def validate(self) -> None:
        check_family(self.kernel)
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.task not in LABEL_FIELDS:
            raise ConfigError(f"task must be one of {LABEL_FIELDS}, got {self.task!r}")
        if self.chip_variant not in CHIP_VARIANTS:
            raise ConfigError(f"chip_variant must be one of {sorted(CHIP_VARIANTS)}, got {self.chip_variant!r}")
        if self.kernel == "CRyRz1DSt":
            if self.chip_variant == "grd16":
                raise ConfigError("CRyRz1DSt needs complex chips (slc16 or slc70x12)")
        elif self.chip_variant != "grd16":
            raise ConfigError(f"the {self.kernel} kernel is only paired with grd16 chips")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.folds < 2 or self.per_class < 1:
            raise ConfigError("folds must be >= 2 and per_class >= 1")
        self.hyper_grid().validate(self.kernel)

    def hyper_grid(self) -> HyperGrid:
        grid = HyperGrid.default(self.algorithm, self.kernel)
        for key, value in (self.grid or {}).items():
            if key not in ("reg_values", "component_values", "gamma_values", "bandwidth_values", "layer_values"):
                raise ConfigError(f"unknown grid field {key!r}")
            setattr(grid, key, list(value))
        return grid

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("output")
        d["grid"] = self.hyper_grid().to_dict()
        return d

    def with_best_cell(self) -> "ExperimentConfig":
        """Copy of this config restricted to the reported best cell for its row."""
        key = (self.task, self.chip_variant, self.kernel)
        if key not in BEST_CELLS:
            raise ConfigError(f"no reported best cell for {key}")
        algorithm, cell = BEST_CELLS[key]
        d = asdict(self)
        d["algorithm"] = algorithm
        d["grid"] = {k: v for k, v in single_cell_grid(algorithm, cell).to_dict().items() if k != "algorithm" and v is not None}
        return ExperimentConfig.from_dict(d)


@dataclass
class Prepared:
    train_X: np.ndarray
    train_y: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray
    train_ids: list
    test_ids: list
    counts: dict = field(default_factory=dict)


class _Timer:
    def __init__(self):
        self.timings: dict = {}
        self.stage = None

    @contextmanager
    def __call__(self, name: str):
        self.stage = name
        start = time.perf_counter()
        try:
            yield
        except QkmarError as exc:
            if getattr(exc, "stage", None) is None:
                exc.stage = name
            raise
        self.timings[name] = round(time.perf_counter() - start, 6)


def prepare(cfg: ExperimentConfig, timer: Optional[_Timer] = None) -> Prepared:
    """Ingest, HIGH filter, balanced sampling, transform, split and flatten."""
    timer = timer or _Timer()
    root = Path(cfg.dataset)
    product, shape = CHIP_VARIANTS[cfg.chip_variant]
    with timer("ingest"):
        records = read_manifest(root / "manifest.csv")
    with timer("filter"):
        high = filter_high_confidence(records)
    with timer("sample"):
        sampled = balanced_sample(high, cfg.task, cfg.per_class, cfg.seed)
    with timer("load"):
        chips = [read_chip(root / r.chip_path) for r in sampled]
        for r, chip in zip(sampled, chips):
            if chip.product != product or chip.shape != shape:
                raise ConfigError(
                    f"{r.chip_path}: {chip.product} {chip.shape[0]}x{chip.shape[1]} chip does not match "
                    f"chip_variant {cfg.chip_variant}"
                )
        y = np.array([1.0 if r.label(cfg.task) else -1.0 for r in sampled])
    with timer("transform"):
        transformed = [h_transform(c.pixels) for c in chips]
    with timer("split"):
        split = stratified_split(y, cfg.train_fraction, cfg.seed)
    with timer("flatten"):
        X = np.stack([flatten(t) for t in transformed])
    ids = [r.chip_path for r in sampled]
    counts = {
        "manifest_records": len(records),
        "high_confidence": len(high),
        "sampled": len(sampled),
        "train": len(split.train),
        "test": len(split.test),
    }
    return Prepared(
        train_X=X[split.train],
        train_y=y[split.train],
        test_X=X[split.test],
        test_y=y[split.test],
        train_ids=[ids[i] for i in split.train],
        test_ids=[ids[i] for i in split.test],
        counts=counts,
    )


def run_experiment(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> dict:
    """Run the full workflow and write ``report.json``, ``cv.csv``, ``model.json`` and ``pca.json``.

    Returns the report dictionary. Everything except the ``timings`` entry is
    a deterministic function of the dataset bytes and the config.
    """
    timer = _Timer()
    data = prepare(cfg, timer)
    grid = cfg.hyper_grid()
    with timer("grid_search"):
        cv = grid_search(
            data.train_X,
            data.train_y,
            cfg.algorithm,
            cfg.kernel,
            grid,
            k=cfg.folds,
            seed=cfg.seed,
            workers=workers,
            svc_tol=cfg.svc_tol,
        )
    final = cv.final
    final.model.sample_ids = list(data.train_ids)
    with timer("evaluate"):
        _, train_pred = final.decision(data.train_X)
        _, test_pred = final.decision(data.test_X)
        train_metrics = metrics(data.train_y, train_pred)
        test_metrics = metrics(data.test_y, test_pred)

    cv_dict = cv.to_dict()
    nonconverged = [r.cell.to_dict() for r in cv.records if not r.failed and not all(r.converged)]
    report = {
        "software": {"name": "qkmar", "version": __version__},
        "config": cfg.echo(),
        "dataset": data.counts,
        "cv": {
            "folds": cv.folds,
            "cells": len(cv.records),
            "failed_cells": sum(r.failed for r in cv.records),
            "best_cell": cv_dict["best_cell"],
            "best_mean_accuracy": cv_dict["best_mean_accuracy"],
        },
        "final_model": {
            "algorithm": cfg.algorithm,
            "kernel": final.kernel.to_dict(),
            "cell": final.cell.to_dict(),
            "explained_variance": final.pca.explained_variance.tolist(),
        },
        "metrics": {"train": train_metrics.to_dict(), "test": test_metrics.to_dict()},
        "convergence": {
            "final_model_converged": bool(final.model.converged),
            "nonconverged_cv_cells": nonconverged,
        },
        "timings": timer.timings,
    }
    out = Path(out_dir if out_dir is not None else cfg.output)
    with timer("write"):
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        (out / "cv.csv").write_text(cv.to_csv())
        (out / "model.json").write_text(json.dumps(final.model.to_dict(), sort_keys=True) + "\n")
        (out / "pca.json").write_text(json.dumps(final.pca.to_dict(), sort_keys=True) + "\n")
    return report


def compute_kernel(cfg: ExperimentConfig, out_file) -> np.ndarray:
    """Training-set Gram matrix for a config whose grid pins a single kernel cell."""
    grid = cfg.hyper_grid()
    cells = grid.cells(cfg.kernel)
    if len({(c.components,) + c.kernel_key() for c in cells}) != 1:
        raise ConfigError(
            "kernel export needs exactly one value each for component_values"
            + (", gamma_values" if cfg.kernel in ("rbf", "laplacian") else "")
            + (", bandwidth_values, layer_values" if cfg.kernel in QUANTUM_FAMILIES else "")
        )
    cell = cells[0]
    data = prepare(cfg)
    pca = pca_fit(data.train_X, cell.components)
    Z = pca_transform(pca, data.train_X)
    spec = cell.kernel(cfg.kernel)
    K = gram(spec, Z, sample_ids=data.train_ids)
    write_gram(out_file, K.matrix, spec)
    return K.matrix
