#!/usr/bin/env python3
"""Run configuration: JSON loading, validation, digests and atomic writes."""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

from pcsinfer.core_data import MAX_SEED, SeedSpec
from pcsinfer.errors import BadConfig, SchemaError
from pcsinfer.pcs_core import EvaluationMode, PcsConfig, ScreeningRule
from pcsinfer.perturb import NullKind, NullSpec
from pcsinfer.simgen import SETTINGS, SimConfig

LOG = logging.getLogger("pcsinfer.config")

# Problem formulation fields every inference run must state explicitly.
PIPELINE_FIELDS = ("target", "perturbations", "split", "metric", "screening")

REQUIRED_FIELDS: Dict[str, Tuple[str, ...]] = {
    "simulate": ("simulation",),
    "analyze": PIPELINE_FIELDS + ("data",),
    "hypotest": PIPELINE_FIELDS + ("data", "null"),
    "roc": PIPELINE_FIELDS,
    "docgen": (),
}


def validate_seed(value: Any) -> Tuple[bool, str]:
    """
    Validate a master seed.

    Example:
        >>> validate_seed(20240101)
        (True, '')
        >>> validate_seed(-1)
        (False, 'master_seed must be an integer in [0, 2**64)')
    """
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < MAX_SEED:
        return (False, "master_seed must be an integer in [0, 2**64)")
    return (True, "")


def validate_fraction(value: Any) -> Tuple[bool, str]:
    """Validate a train/test split fraction."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return (False, "split.fraction must be a number")
    if not 0.0 < float(value) < 1.0:
        return (False, "split.fraction must lie strictly between 0 and 1")
    return (True, "")


def validate_positive_int(name: str, value: Any, minimum: int = 1) -> Tuple[bool, str]:
    if isinstance(value, bool) or not isinstance(value, int):
        return (False, f"{name} must be an integer")
    if value < minimum:
        return (False, f"{name} must be >= {minimum}")
    return (True, "")


def validate_screening(block: Any) -> Tuple[bool, str]:
    """
    Validate the screening block.

    Args:
        block: e.g. ``{"rule": "top_k", "k": 10}`` or ``{"rule": "threshold", "tau": 1.2}``

    Returns:
        Tuple of (valid: bool, error_message: str)
    """
    if not isinstance(block, dict):
        return (False, "screening must be an object")
    rule = block.get("rule")
    if rule == "top_k":
        return validate_positive_int("screening.k", block.get("k"))
    if rule == "threshold":
        tau = block.get("tau")
        if isinstance(tau, bool) or not isinstance(tau, (int, float)):
            return (False, "screening.tau must be a number")
        return (True, "")
    if rule == "relative":
        ratio = block.get("ratio")
        if isinstance(ratio, bool) or not isinstance(ratio, (int, float)) or ratio < 1:
            return (False, "screening.ratio must be a number >= 1")
        return (True, "")
    return (False, "screening.rule must be one of top_k, threshold, relative")


def _check(result: Tuple[bool, str], field: str) -> None:
    ok, message = result
    if not ok:
        raise SchemaError(field, message)


def _block(doc: Dict[str, Any], name: str) -> Dict[str, Any]:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise SchemaError(name, "must be an object")
    return value


def check_required(doc: Dict[str, Any], command: str) -> None:
    """
    Raise :class:`SchemaError` naming the first missing field for ``command``.

    Raises:
        BadConfig: if ``command`` is unknown
        SchemaError: if a required field is absent
    """
    if command not in REQUIRED_FIELDS:
        raise BadConfig(f"unknown command '{command}'")
    missing = iter_missing(doc, REQUIRED_FIELDS[command])
    if missing:
        raise SchemaError(missing[0])
    if command == "roc" and "simulation" not in doc and "data" not in doc:
        raise SchemaError("simulation", "roc needs a simulation block or a data block with a truth sidecar")
    if command == "roc" and "simulation" not in doc and "truth" not in _block(doc, "data"):
        raise SchemaError("data.truth")
    if command in ("analyze", "hypotest", "roc") and "data" in doc:
        if "path" not in _block(doc, "data"):
            raise SchemaError("data.path")


def load_run_config(config_path: str | Path) -> Dict[str, Any]:
    """
    Load a JSON run configuration.

    Raises:
        FileNotFoundError: If the config file doesn't exist
        BadConfig: If the file is not a JSON object
    """
    path = Path(config_path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found at {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise BadConfig(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise BadConfig(f"{path}: top level must be a JSON object")
    LOG.debug("Loaded %d config fields from %s", len(doc), path)
    return doc


def apply_overrides(doc: Dict[str, Any], seed: Optional[int] = None, setting: Optional[str] = None) -> Dict[str, Any]:
    """
    Copy of ``doc`` with command-line overrides applied and ``master_seed`` filled.

    ``--seed`` replaces ``master_seed``; ``--setting`` replaces ``simulation.setting``.
    """
    doc = copy.deepcopy(doc)
    if seed is not None:
        doc["master_seed"] = seed
    doc.setdefault("master_seed", 0)
    _check(validate_seed(doc["master_seed"]), "master_seed")
    if setting is not None:
        simulation = doc.setdefault("simulation", {})
        if not isinstance(simulation, dict):
            raise SchemaError("simulation", "must be an object")
        simulation["setting"] = setting
    return doc


def canonical_json(doc: Any) -> str:
    """Sorted keys, compact separators, no NaN/Infinity."""
    try:
        return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)
    except ValueError as exc:
        raise BadConfig(f"config is not canonical JSON: {exc}") from exc


def config_digest(doc: Dict[str, Any]) -> str:
    """SHA-256 hex digest of the canonical JSON of ``doc``."""
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def build_pcs_config(doc: Dict[str, Any]) -> PcsConfig:
    """
    Validate the pipeline blocks and build a :class:`PcsConfig` carrying the
    document's digest.

    Raises:
        SchemaError: on a missing or mistyped field (named in the message)
        BadConfig: on values outside their domain
    """
    for name in PIPELINE_FIELDS:
        if name not in doc:
            raise SchemaError(name)
    split = _block(doc, "split")
    perturbations = _block(doc, "perturbations")
    screening = _block(doc, "screening")
    reporting = _block(doc, "reporting")

    fraction = split.get("fraction", 0.5)
    _check(validate_fraction(fraction), "split.fraction")
    replicates = perturbations.get("bootstrap_replicates")
    if replicates is None:
        raise SchemaError("perturbations.bootstrap_replicates")
    include_identity = bool(perturbations.get("include_identity", False))
    _check(validate_positive_int("perturbations.bootstrap_replicates", replicates, 0 if include_identity else 1),
           "perturbations.bootstrap_replicates")
    nlambda = perturbations.get("nlambda", 100)
    _check(validate_positive_int("perturbations.nlambda", nlambda), "perturbations.nlambda")
    _check(validate_screening(screening), "screening")
    folds = screening.get("folds", 5)
    _check(validate_positive_int("screening.folds", folds, 2), "screening.folds")

    rule = screening["rule"]
    if rule == "top_k":
        screening_rule = ScreeningRule.top_k(screening["k"])
    elif rule == "threshold":
        screening_rule = ScreeningRule.threshold(screening["tau"])
    else:
        screening_rule = ScreeningRule.relative(screening["ratio"])

    percentiles = reporting.get("percentiles", [10, 90])
    if not isinstance(percentiles, list) or len(percentiles) != 2:
        raise SchemaError("reporting.percentiles", "must be a [lo, hi] pair")
    intervals = reporting.get("intervals", ["model_size"])
    if not isinstance(intervals, list):
        raise SchemaError("reporting.intervals", "must be a list")

    try:
        return PcsConfig(
            master_seed=int(doc.get("master_seed", 0)),
            target=str(doc["target"]),
            metric=str(doc["metric"]),
            split_fraction=float(fraction),
            average_halves=bool(split.get("average_halves", True)),
            bootstrap_replicates=int(replicates),
            include_identity=include_identity,
            nlambda=int(nlambda),
            min_ratio=perturbations.get("min_ratio", "auto"),
            screening=screening_rule,
            evaluation_mode=EvaluationMode(screening.get("evaluation", "holdout")),
            cv_folds=int(folds),
            interval_percentiles=(float(percentiles[0]), float(percentiles[1])),
            interval_targets=tuple(str(t) for t in intervals),
            per_model=bool(reporting.get("per_model", False)),
            config_digest=config_digest(doc),
        )
    except ValueError as exc:
        if isinstance(exc, BadConfig):
            raise
        raise BadConfig(str(exc)) from exc


def simulation_seed(doc: Dict[str, Any]) -> int:
    """``simulation.seed`` when given, otherwise a child of ``master_seed``."""
    simulation = _block(doc, "simulation")
    if "seed" in simulation:
        _check(validate_seed(simulation["seed"]), "simulation.seed")
        return int(simulation["seed"])
    return SeedSpec(int(doc.get("master_seed", 0))).child("simulation").derived_seed


def build_sim_config(doc: Dict[str, Any]) -> SimConfig:
    """
    Build a :class:`SimConfig` from the ``simulation`` block.

    Example block::

        {"setting": "drop_active", "n": 250, "p_base": 10, "misspec": {"k": 3}}
    """
    if "simulation" not in doc:
        raise SchemaError("simulation")
    simulation = _block(doc, "simulation")
    for name in ("setting", "n", "p_base"):
        if name not in simulation:
            raise SchemaError(f"simulation.{name}")
    if simulation["setting"] not in SETTINGS:
        raise SchemaError("simulation.setting", f"must be one of {', '.join(SETTINGS)}")
    _check(validate_positive_int("simulation.n", simulation["n"], 2), "simulation.n")
    _check(validate_positive_int("simulation.p_base", simulation["p_base"], 2), "simulation.p_base")
    overrides: Dict[str, Any] = {}
    for prefix in ("noise", "misspec"):
        block = simulation.get(prefix, {})
        if not isinstance(block, dict):
            raise SchemaError(f"simulation.{prefix}", "must be an object")
        overrides.update({f"{prefix}_{k}": v for k, v in block.items() if k != "kind"})
    return SimConfig.from_setting(
        simulation["setting"],
        n=simulation["n"],
        p_base=simulation["p_base"],
        seed=simulation_seed(doc),
        **overrides,
    )


def build_null_spec(doc: Dict[str, Any]) -> NullSpec:
    if "null" not in doc:
        raise SchemaError("null")
    block = _block(doc, "null")
    kind = block.get("kind")
    if kind not in {k.value for k in NullKind}:
        raise SchemaError("null.kind", f"must be one of {', '.join(k.value for k in NullKind)}")
    return NullSpec(NullKind(kind), mean=float(block.get("mean", 0.0)), sd=float(block.get("sd", 1.0)))


def _atomic_write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = Path(f"{path}.tmp")
    with open(temp_path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(temp_path, path)
    return path


def save_json(payload: Dict[str, Any], json_path: str | Path) -> Path:
    """Write ``payload`` as sorted, indented JSON via temp file + rename."""
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    path = _atomic_write(Path(json_path), text)
    LOG.info("Wrote %s", path)
    return path


def save_text(text: str, text_path: str | Path) -> Path:
    path = _atomic_write(Path(text_path), text)
    LOG.info("Wrote %s", path)
    return path


def provenance_line(digest: str, master_seed: int) -> str:
    return f"config_digest={digest} master_seed={master_seed}"


def iter_missing(doc: Dict[str, Any], fields: Iterable[str]) -> Tuple[str, ...]:
    """Fields of ``fields`` absent from ``doc``, in order."""
    return tuple(name for name in fields if name not in doc)
