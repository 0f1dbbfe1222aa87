#!/usr/bin/env python3
"""Command-line entry point: simulate, analyze, hypotest, roc, docgen, settings."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from pcsinfer import config_manager as cm
from pcsinfer.core_data import read_csv, write_csv
from pcsinfer.docgen import write_scaffold
from pcsinfer.errors import BadConfig, DataError, PcsError
from pcsinfer.evaluation import (
    DEFAULT_GRID_POINTS,
    METHODS,
    MethodSummary,
    RocCurve,
    average_roc,
    evaluate_replicate,
    run_roc_benchmark,
)
from pcsinfer.pcs_core import pcs_hypothesis_test, run_pcs
from pcsinfer.simgen import GroundTruth, list_settings, simulate

LOG = logging.getLogger("pcsinfer.cli")

COMMANDS = ("simulate", "analyze", "hypotest", "roc", "docgen", "settings")


def _threads_default() -> int:
    raw = os.getenv("PCS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        LOG.warning("Ignoring PCS_THREADS=%r (not an integer)", raw)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m pcsinfer", description="PCS stability inference for sparse linear models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def _common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
        p.add_argument("--config", type=Path, required=needs_config, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--threads", type=int, default=_threads_default(), help="worker processes (default: PCS_THREADS or 1)")

    p = sub.add_parser("simulate", help="generate one simulated dataset and its truth sidecar")
    _common(p, needs_config=False)
    p.add_argument("--setting", default=None, help="simulation setting name (see 'settings')")
    p.add_argument("--n", type=int, default=250, help="rows when no config is given")
    p.add_argument("--p-base", type=int, default=10, help="base features when no config is given")

    for name, text in (
        ("analyze", "stability scores and perturbation intervals for a dataset"),
        ("hypotest", "compare a dataset with data generated under a null"),
        ("roc", "ROC benchmark of PCS against the OLS baseline"),
    ):
        _common(sub.add_parser(name, help=text))

    p = sub.add_parser("docgen", help="write the six-section documentation scaffold")
    _common(p, needs_config=False)
    p.add_argument("path", nargs="?", type=Path, default=None, help="markdown file (default: OUT/analysis.md)")
    p.add_argument("--title", default="Analysis documentation")

    sub.add_parser("settings", help="list the simulation settings")
    return parser


def _load(args: argparse.Namespace, command: str) -> Dict[str, Any]:
    if args.config is None:
        doc: Dict[str, Any] = {}
    else:
        try:
            doc = cm.load_run_config(args.config)
        except FileNotFoundError as exc:
            raise BadConfig(str(exc)) from exc
    doc = cm.apply_overrides(doc, seed=args.seed, setting=getattr(args, "setting", None))
    cm.check_required(doc, command)
    return doc


def _resolve(path: str, config_path: Optional[Path]) -> Path:
    candidate = Path(path)
    if candidate.is_absolute() or config_path is None:
        return candidate
    return config_path.parent / candidate


def _load_data(doc: Dict[str, Any], config_path: Optional[Path]):
    block = doc["data"]
    return read_csv(_resolve(block["path"], config_path), block.get("response", "y"))


def cmd_simulate(args: argparse.Namespace) -> int:
    doc = _load(args, "simulate") if args.config else cm.apply_overrides(
        {"simulation": {"setting": args.setting or "gaussian", "n": args.n, "p_base": args.p_base}}, seed=args.seed
    )
    sim_config = cm.build_sim_config(doc)
    digest = cm.config_digest(doc)
    sim = simulate(sim_config)
    header = cm.provenance_line(digest, doc["master_seed"])
    data_path = write_csv(sim.data, args.out / "data.csv", response="y", header=header)
    sidecar = {
        "config_digest": digest,
        "master_seed": doc["master_seed"],
        "simulation": sim_config.to_dict(),
        "truth": sim.truth.to_dict(),
        "rules": sim.rules.to_dict() if sim.rules is not None else None,
    }
    cm.save_json(sidecar, args.out / "truth.json")
    print(f"Wrote {data_path} ({sim.data.n} rows, {sim.data.p} features) and {args.out / 'truth.json'}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    doc = _load(args, "analyze")
    config = cm.build_pcs_config(doc)
    data = _load_data(doc, args.config)
    report = run_pcs(data, config, n_jobs=args.threads)
    out = cm.save_text(report.to_json(), args.out / "report.json")
    print(f"Wrote {out} ({report.p} scores, digest {config.config_digest[:12]})")
    return 0


def cmd_hypotest(args: argparse.Namespace) -> int:
    doc = _load(args, "hypotest")
    config = cm.build_pcs_config(doc)
    null_spec = cm.build_null_spec(doc)
    data = _load_data(doc, args.config)
    result = pcs_hypothesis_test(data, null_spec, config, n_jobs=args.threads)
    out = cm.save_text(result.to_json(), args.out / "hypotest.json")
    print(f"Wrote {out} (max score difference {float(np.max(result.divergence.score_difference)):.3f})")
    return 0


def _write_curve(curve: RocCurve, path: Path, header: str) -> Path:
    frame = pd.DataFrame({"fpr": curve.fpr, "tpr": curve.tpr})
    text = f"# {header}\n" + frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    return cm.save_text(text, path)


def cmd_roc(args: argparse.Namespace) -> int:
    doc = _load(args, "roc")
    config = cm.build_pcs_config(doc)
    block = doc.get("roc", {})
    methods = tuple(block.get("methods", METHODS))
    positives = block.get("positives", "visible")
    grid_points = int(block.get("grid_points", DEFAULT_GRID_POINTS))
    grid = np.linspace(0.0, 1.0, grid_points)

    if "simulation" in doc:
        replicates = int(block.get("replicates", 20))
        summaries = run_roc_benchmark(
            cm.build_sim_config(doc), config, replicates, methods, positives,
            grid_points=grid_points, n_jobs=args.threads,
        )
    else:
        data = _load_data(doc, args.config)
        truth_path = _resolve(doc["data"]["truth"], args.config)
        try:
            with open(truth_path, "r", encoding="utf-8") as f:
                sidecar = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataError(f"{truth_path}: invalid JSON ({exc})") from exc
        truth = GroundTruth.from_dict(sidecar.get("truth", sidecar))
        curves = evaluate_replicate(data, truth, config, methods, positives, n_jobs=args.threads)
        summaries = {m: MethodSummary(curve=average_roc([c], grid), aucs=(c.auc,)) for m, c in curves.items()}

    header = cm.provenance_line(config.config_digest, config.master_seed)
    for method, summary in summaries.items():
        _write_curve(summary.curve, args.out / f"roc_{method}.csv", header)
    payload = {
        "config_digest": config.config_digest,
        "master_seed": config.master_seed,
        "positives": positives,
        "methods": {m: s.to_dict() for m, s in summaries.items()},
    }
    cm.save_json(payload, args.out / "roc_summary.json")
    for method, summary in summaries.items():
        print(f"{method}: auc_mean={summary.auc_mean:.4f} auc_sd={summary.auc_sd:.4f}")
    return 0


def cmd_docgen(args: argparse.Namespace) -> int:
    doc = _load(args, "docgen")
    title = doc.get("docgen", {}).get("title", args.title)
    header = cm.provenance_line(cm.config_digest(doc), doc["master_seed"])
    path = write_scaffold(args.path or args.out / "analysis.md", title, provenance=header)
    print(f"Wrote {path}")
    return 0


def cmd_settings(args: argparse.Namespace) -> int:
    for name, description in list_settings():
        print(f"{name}\t{description}")
    return 0


HANDLERS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "hypotest": cmd_hypotest,
    "roc": cmd_roc,
    "docgen": cmd_docgen,
    "settings": cmd_settings,
}


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, run one command, map failures to exit codes."""
    raw_level = os.getenv("PCS_LOG", "INFO").upper()
    level = logging.getLevelName(raw_level)
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.INFO,
        format="[%(asctime)s] %(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    if not isinstance(level, int):
        LOG.warning("Ignoring PCS_LOG=%r (unknown level), using INFO", raw_level)
    argv = argv if argv is not None else sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0

    try:
        return HANDLERS[args.command](args)
    except PcsError as exc:
        LOG.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except FileNotFoundError as exc:
        LOG.error("%s", exc)
        return DataError.exit_code
    except OSError as exc:
        LOG.error("I/O error: %s", exc)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
