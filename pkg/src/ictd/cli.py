"""Command-line front end.

Subcommands ``verify``, ``surface``, ``train``, ``ablate``, ``transfer`` and
``baseline`` each write CSV tables plus a JSON metadata file that embeds the
resolved configuration. Exit status is 0 on success, 1 when ``verify`` finds a
deviation above tolerance, and 2 on configuration errors. Divergent runs are
data (``inf`` cells), not failures.

Output directory precedence: ``--out`` > config ``output_dir`` > ``$ICTD_OUTPUT_DIR`` > ``./ictd_out``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _backend, equivalence, training
from .config import COMMANDS, ConfigError, RunConfig, load_config
from .rng import child_seed

log = logging.getLogger("ictd")

ENV_OUTPUT_DIR = "ICTD_OUTPUT_DIR"

SURFACE_COLUMNS = ("x", "y", "v_pred_raw", "v_true")
LOSS_COLUMNS = ("step", "alpha", "loss")
ABLATION_COLUMNS = ("axis_value", "pearson", "centered_rmse")
CELL_COLUMNS = ("step", "alpha", "loss")
BASELINE_COLUMNS = ("family", "alpha", "pearson", "centered_rmse", "final_loss")


def fmt(value) -> str:
    """Shortest round-trip text for floats; ``inf``/``nan`` spelled literally."""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_artifact(out_dir: Path, kind: str, name: str, cfg: RunConfig, payloads: list[Path], summary: dict) -> Path:
    meta = {
        "kind": kind,
        "payloads": [p.name if p.parent == out_dir else str(p.relative_to(out_dir)) for p in payloads],
        "summary": _jsonable(summary),
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "code_version": __version__,
        "backend": _backend.backend_name(),
    }
    path = out_dir / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def _train_spec(block, cfg: RunConfig, domains, seed: int) -> training.TrainSpec:
    return training.TrainSpec(
        train_domains=tuple(domains), alpha_init=block.alpha_init, optimizer=block.optimizer,
        learning_rate=block.learning_rate, steps=block.steps, batch_size=block.batch_size,
        eval_size=block.eval_size, n_context=block.n_context, layers=block.layers, seed=seed,
        kernel=block.kernel.spec(), grid=training.log_grid(block.grid.low, block.grid.high, block.grid.points),
        max_step=block.max_step)


# -- commands ---------------------------------------------------------------------

def cmd_verify(cfg: RunConfig, out_dir: Path) -> int:
    b = cfg.verify
    seed = child_seed(cfg.seed, "verify", 0)
    tol = b.tolerance
    cases = (equivalence.theorem_suite(b.instances, seed, tol)
             + equivalence.dual_form_suite(seed, min(tol, 1e-10) if tol > 0 else tol)
             + equivalence.lemma_suite(b.lemma_prompts, seed, min(tol, 1e-10) if tol > 0 else tol)
             + equivalence.offset_suite(b.offset_queries, seed, tol)
             + equivalence.path_suite(20, seed, min(tol, 1e-12) if tol > 0 else tol))
    suites = {}
    for c in cases:
        s = suites.setdefault(c.suite, {"cases": 0, "failed": 0, "max_dev": 0.0})
        s["cases"] += 1
        s["failed"] += 0 if c.passed else 1
        s["max_dev"] = max(s["max_dev"], c.max_dev)
    ok = all(c.passed for c in cases)
    report = {"passed": ok, "suites": suites,
              "cases": [c.to_dict(per_layer=cfg.precision_report) for c in cases]}
    path = out_dir / "equivalence_report.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(report), indent=2) + "\n")
    write_artifact(out_dir, "EquivalenceReport", "verify_meta.json", cfg, [path], {"passed": ok, "suites": suites})
    for name, s in suites.items():
        log.info("%-16s cases=%-4d failed=%-3d max_dev=%.3e", name, s["cases"], s["failed"], s["max_dev"])
    return 0 if ok else 1


def cmd_surface(cfg: RunConfig, out_dir: Path) -> int:
    b = cfg.surface
    tune_grid = training.log_grid(b.tune_grid.low, b.tune_grid.high, b.tune_grid.points)
    res = training.surface_eval(cfg.domain(b.domain), b.alpha, b.n_context, b.layers, b.grid_size,
                                cfg.seed, b.kernel.spec(), tune_grid)
    rows = zip(res.xs.ravel(), res.ys.ravel(), res.predicted.ravel(), res.truth.ravel())
    csv_path = write_csv(out_dir / "surface.csv", SURFACE_COLUMNS, rows)
    summary = {"pearson": res.pearson, "centered_rmse": res.centered_rmse,
               "relative_centered_rmse": res.relative_centered_rmse, "alpha": res.alpha,
               "degenerate": res.degenerate}
    write_artifact(out_dir, "SurfaceGrid", "surface_meta.json", cfg, [csv_path], summary)
    log.info("surface: alpha=%g pearson=%.4f centered_rmse=%.4g", res.alpha, res.pearson, res.centered_rmse)
    return 0


def cmd_train(cfg: RunConfig, out_dir: Path) -> int:
    b = cfg.train
    domains = [cfg.domain(d) for d in b.domains]
    spec = _train_spec(b, cfg, domains, cfg.seed)
    alpha, curve = training.fit_alpha(spec)
    ids = list(curve[0].per_domain) if curve else []
    rows = ([r.step, r.alpha, r.mean_sq_td_error, *[r.per_domain[i] for i in ids]] for r in curve)
    csv_path = write_csv(out_dir / "loss_curve.csv", (*LOSS_COLUMNS, *[f"loss[{i}]" for i in ids]), rows)
    summary = {"alpha_star": alpha, "initial_loss": curve[0].mean_sq_td_error,
               "final_loss": curve[-1].mean_sq_td_error, "steps": len(curve)}
    write_artifact(out_dir, "LossCurve", "train_meta.json", cfg, [csv_path], summary)
    log.info("train: alpha*=%g loss %s -> %s", alpha, fmt(summary["initial_loss"]), fmt(summary["final_loss"]))
    return 0


def cmd_ablate(cfg: RunConfig, out_dir: Path) -> int:
    b = cfg.ablate
    seeds = [child_seed(cfg.seed, "ablate", i) for i in range(b.seeds)]
    rows = training.median_ablation(cfg.domain(b.domain), b.axis, [int(v) for v in b.values], b.fixed_other,
                                    b.alpha, seeds, b.grid_size, b.kernel.spec())
    csv_path = write_csv(out_dir / f"ablation_{b.axis}.csv", ABLATION_COLUMNS,
                         ((r.axis_value, r.pearson, r.centered_rmse) for r in rows))
    crmse = [r.centered_rmse for r in rows]
    summary = {"axis": b.axis, "inversions": training.count_inversions(crmse), "seeds": b.seeds}
    write_artifact(out_dir, "AblationTable", f"ablation_{b.axis}_meta.json", cfg, [csv_path], summary)
    return 0


def cmd_transfer(cfg: RunConfig, out_dir: Path) -> int:
    b = cfg.transfer
    train_family = [cfg.domain(d) for d in b.train_domains]
    eval_family = [cfg.domain(d) for d in b.eval_domains]
    spec = _train_spec(b, cfg, train_family[:1], cfg.seed)
    res = training.transfer_matrix(train_family, eval_family, spec)
    paths, cells = [], []
    for row in res.cells:
        for c in row:
            p = write_csv(out_dir / "transfer" / f"cell_r{c.train_index}_c{c.eval_index}.csv", CELL_COLUMNS,
                          zip(c.steps, c.alphas, c.losses))
            paths.append(p)
            cells.append({"train": b.train_domains[c.train_index], "eval": b.eval_domains[c.eval_index],
                          "path": str(p.relative_to(out_dir)), "initial_loss": c.initial,
                          "final_loss": c.final, "normalized_final_loss": c.normalized_final,
                          "mean_sq_reward": c.mean_sq_reward})
    summary = {"train_domains": b.train_domains, "eval_domains": b.eval_domains,
               "fitted_alphas": res.fitted_alphas, "cells": cells}
    write_artifact(out_dir, "TransferMatrix", "transfer_index.json", cfg, paths, summary)
    return 0


def cmd_baseline(cfg: RunConfig, out_dir: Path) -> int:
    b = cfg.baseline
    spec = _train_spec(b, cfg, [cfg.domain(b.domain)], cfg.seed)
    rows = training.linear_baseline(cfg.domain(b.domain), spec, b.grid_size)
    csv_path = write_csv(out_dir / "baseline.csv", BASELINE_COLUMNS,
                         ((r.family, r.alpha, r.pearson, r.centered_rmse, r.final_loss) for r in rows))
    paths = [csv_path]
    for r in rows:
        paths.append(write_csv(out_dir / f"baseline_curve_{r.family}.csv", LOSS_COLUMNS,
                               ((c.step, c.alpha, c.mean_sq_td_error) for c in r.curve)))
    summary = {r.family: {"alpha": r.alpha, "pearson": r.pearson, "centered_rmse": r.centered_rmse} for r in rows}
    write_artifact(out_dir, "BaselineComparison", "baseline_meta.json", cfg, paths, summary)
    return 0


HANDLERS = {"verify": cmd_verify, "surface": cmd_surface, "train": cmd_train,
            "ablate": cmd_ablate, "transfer": cmd_transfer, "baseline": cmd_baseline}

SINGLE_DOMAIN = {"surface", "ablate", "baseline"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ictd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--preset", help="domain preset for this command, e.g. appendixF")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "verify":
            p.add_argument("--tolerance", type=float, help="override verify.tolerance")
    return parser


def resolve(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_dir = str(args.out)
    if args.preset is not None:
        cfg.domain(args.preset)
        if args.command in SINGLE_DOMAIN:
            getattr(cfg, args.command).domain = args.preset
        elif args.command == "train":
            cfg.train.domains = [args.preset]
        elif args.command == "transfer":
            cfg.transfer.train_domains = [args.preset]
    if getattr(args, "tolerance", None) is not None:
        cfg.verify.tolerance = args.tolerance
    out = cfg.output_dir or os.environ.get(ENV_OUTPUT_DIR) or "ictd_out"
    # round-trip through the strict parser so flag overrides are validated too
    cfg = RunConfig.from_dict(cfg.to_dict())
    return cfg, Path(out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg, out_dir = resolve(args)
        return HANDLERS[args.command](cfg, out_dir)
    except (ConfigError, KeyError, FileNotFoundError, ValueError) as exc:
        print(f"ictd {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
