"""Command-line front end: ``qkmar {synth,kernel,run,report}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Errors are also written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .data import SynthSpec, synth_generate, write_dataset
from .errors import ConfigError, DataError, QkmarError
from .evaluation import ALGORITHMS, KERNEL_FAMILIES, HyperGrid
from .pipeline import ExperimentConfig, compute_kernel, run_experiment


def _load_json(path) -> dict:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return d


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    d = _load_json(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.out is not None:
        d["output"] = args.out
    cfg = ExperimentConfig.from_dict(d)
    if getattr(args, "best_cell", False):
        cfg = cfg.with_best_cell()
    return cfg


def print_grid(args) -> None:
    if args.config:
        cfg = _config(args)
        grids = {f"{cfg.kernel}/{cfg.algorithm}": cfg.hyper_grid().to_dict()}
    else:
        grids = {
            f"{fam}/{alg}": HyperGrid.default(alg, fam).to_dict()
            for fam in KERNEL_FAMILIES
            for alg in ALGORITHMS
        }
    print(json.dumps(grids, indent=2))


def cmd_synth(args) -> None:
    if not args.config:
        raise ConfigError("synth needs --config <spec.json>")
    if not args.out:
        raise ConfigError("synth needs --out <dir>")
    d = _load_json(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    spec = SynthSpec.from_dict(d)
    chips, labels = synth_generate(spec)
    try:
        write_dataset(args.out, chips, labels)
    except OSError as exc:
        raise DataError(f"cannot write dataset to {args.out}: {exc}") from exc
    print(f"wrote {len(chips)} chips to {args.out}")


def cmd_kernel(args) -> None:
    cfg = _config(args)
    out = args.file or (Path(cfg.output) / "kernel.qkgm")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    K = compute_kernel(cfg, out)
    print(f"wrote {K.shape[0]}x{K.shape[1]} Gram matrix to {out}")


def cmd_run(args) -> None:
    cfg = _config(args)
    report = run_experiment(cfg, workers=args.workers)
    test = report["metrics"]["test"]
    print(
        f"best cell {report['cv']['best_cell']} "
        f"(cv accuracy {report['cv']['best_mean_accuracy']:.4f}); "
        f"test accuracy {test['accuracy']:.4f}, precision {test['precision']:.4f}, "
        f"recall {test['recall']:.4f}, F1 {test['f1']:.4f}"
    )
    print(f"report written to {Path(cfg.output) / 'report.json'}")


def format_report(report: dict) -> str:
    cfg = report["config"]
    lines = [
        f"qkmar {report['software']['version']}",
        f"task {cfg['task']}  chips {cfg['chip_variant']}  kernel {cfg['kernel']}  algorithm {cfg['algorithm']}  seed {cfg['seed']}",
        f"dataset: {report['dataset']['train']} train / {report['dataset']['test']} test",
        f"grid: {report['cv']['cells']} cells, {report['cv']['failed_cells']} failed, {report['cv']['folds']} folds",
        f"best cell: " + ", ".join(f"{k}={v}" for k, v in report["cv"]["best_cell"].items() if v is not None),
        f"mean validation accuracy: {report['cv']['best_mean_accuracy']:.4f}",
        "",
        f"{'':10}{'Accuracy':>10}{'Precision':>11}{'Recall':>9}{'F1':>9}",
    ]
    for split in ("train", "test"):
        m = report["metrics"][split]
        lines.append(f"{split:10}{m['accuracy']:>10.4f}{m['precision']:>11.4f}{m['recall']:>9.4f}{m['f1']:>9.4f}")
    if not report["convergence"]["final_model_converged"]:
        lines.append("warning: final SVC did not converge")
    return "\n".join(lines)


def cmd_report(args) -> None:
    path = Path(args.file or (Path(args.out or ".") / "report.json"))
    report = _load_json(path)
    print(format_report(report))


def _common_flags(parser: argparse.ArgumentParser, top: bool) -> None:
    # subcommand copies suppress their defaults so flags given before the
    # subcommand name are not reset
    d = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
    parser.add_argument("--config", default=d(None), help="JSON config (experiment config, or synth spec for `synth`)")
    parser.add_argument("--seed", type=int, default=d(None), help="override the config's root seed")
    parser.add_argument("--workers", type=int, default=d(1), help="parallel worker processes for cross-validation")
    parser.add_argument("--out", default=d(None), help="output directory")
    parser.add_argument(
        "--print-grid", action="store_true", default=d(False), help="print the hyperparameter grid and exit"
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _common_flags(common, top=False)

    parser = argparse.ArgumentParser(prog="qkmar", description=__doc__.splitlines()[0])
    _common_flags(parser, top=True)
    sub = parser.add_subparsers(dest="command")
    p = sub.add_parser("synth", parents=[common], help="generate a synthetic chip dataset")
    p.set_defaults(func=cmd_synth)
    p = sub.add_parser("kernel", parents=[common], help="export a training Gram matrix (QKGM)")
    p.add_argument("file", nargs="?", help="output .qkgm file (default <out>/kernel.qkgm)")
    p.set_defaults(func=cmd_kernel)
    p = sub.add_parser("run", parents=[common], help="run the full experiment")
    p.add_argument("--best-cell", action="store_true", help="restrict the grid to the reported best cell")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("report", parents=[common], help="pretty-print a report.json")
    p.add_argument("file", nargs="?", help="report.json (default <out>/report.json)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("QKMAR_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if level in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL") else "WARNING",
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.print_grid:
            print_grid(args)
            return 0
        if not getattr(args, "func", None):
            parser.print_help()
            return 2
        args.func(args)
    except QkmarError as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "stage", None):
            err["stage"] = exc.stage
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
