"""ROC evaluation of feature rankings, the OLS-on-selected baseline, and the
replicated simulation benchmark that compares the two."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from sklearn.metrics import auc, roc_curve

from pcsinfer.core_data import DataMatrix, SeedSpec
from pcsinfer.errors import BadConfig, DataError, DegenerateTruth
from pcsinfer.lasso import FeatureSet, fit_lasso, selected_features
from pcsinfer.pcs_core import PcsConfig, StabilityReport, run_pcs, split_halves
from pcsinfer.simgen import GroundTruth, SimConfig, simulate

__all__ = [
    "RocCurve",
    "BaselineScores",
    "MethodSummary",
    "roc_from_scores",
    "baseline_ols_pvalues",
    "average_roc",
    "ols_baseline_scores",
    "evaluate_replicate",
    "run_roc_benchmark",
    "METHODS",
]

LOG = logging.getLogger("pcsinfer.evaluation")

METHODS = ("pcs", "ols_baseline")
POSITIVES = ("visible", "all")
DEFAULT_GRID_POINTS = 101


@dataclass(frozen=True)
class RocCurve:
    """(fpr, tpr) points sorted by fpr, from (0, 0) to (1, 1), with trapezoidal AUC."""

    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @classmethod
    def from_points(cls, fpr: Sequence[float], tpr: Sequence[float]) -> "RocCurve":
        fpr = np.asarray(fpr, dtype=float)
        tpr = np.asarray(tpr, dtype=float)
        if fpr.shape != tpr.shape or fpr.size < 2:
            raise BadConfig("ROC curve needs matching fpr/tpr arrays with at least two points")
        if np.any(np.diff(fpr) < 0) or np.any(np.diff(tpr) < 0):
            raise BadConfig("ROC coordinates must be non-decreasing")
        return cls(fpr=fpr, tpr=tpr, auc=float(auc(fpr, tpr)))

    @property
    def points(self) -> List[Tuple[float, float]]:
        return [(float(f), float(t)) for f, t in zip(self.fpr, self.tpr)]


@dataclass(frozen=True)
class BaselineScores:
    """OLS p-values on the lasso-selected columns; unselected features get exactly 1."""

    pvalues: np.ndarray
    method: str = "ols_on_selected"
    dropped: Tuple[int, ...] = ()

    @property
    def scores(self) -> np.ndarray:
        return 1.0 - self.pvalues


@dataclass(frozen=True)
class MethodSummary:
    curve: RocCurve
    aucs: Tuple[float, ...]

    @property
    def auc_mean(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def auc_sd(self) -> float:
        return float(np.std(self.aucs, ddof=1)) if len(self.aucs) > 1 else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "auc_mean": self.auc_mean,
            "auc_sd": self.auc_sd,
            "replicates": len(self.aucs),
            "aucs": list(self.aucs),
            "averaged_curve_auc": self.curve.auc,
        }


def roc_from_scores(scores: Sequence[float], truth: Iterable[int], higher_is_positive: bool = True) -> RocCurve:
    """
    ROC of a feature ranking against the positive index set ``truth``.

    One point per distinct score; tied features move together.

    Raises:
        DegenerateTruth: if truth is empty, covers every feature, or is out of range
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    p = scores.shape[0]
    positives = sorted({int(j) for j in truth})
    if p < 1 or not positives or len(positives) >= p:
        raise DegenerateTruth(f"need 0 < |truth| < p, got |truth|={len(positives)}, p={p}")
    if positives[0] < 0 or positives[-1] >= p:
        raise DegenerateTruth(f"truth indices must lie in [0, {p}), got {positives}")
    labels = np.zeros(p, dtype=int)
    labels[positives] = 1
    ranked = scores if higher_is_positive else -scores
    fpr, tpr, _ = roc_curve(labels, ranked, drop_intermediate=False)
    return RocCurve.from_points(fpr, tpr)


def _sample_curve(curve: RocCurve, grid: np.ndarray) -> np.ndarray:
    # a vertical run at one fpr is entered at its bottom and left at its top
    ufpr, first = np.unique(curve.fpr, return_index=True)
    top = np.maximum.reduceat(curve.tpr, first)
    bottom = np.minimum.reduceat(curve.tpr, first)
    left = np.clip(np.searchsorted(ufpr, grid, side="right") - 1, 0, ufpr.size - 1)
    right = np.minimum(left + 1, ufpr.size - 1)
    width = ufpr[right] - ufpr[left]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(width > 0, (grid - ufpr[left]) / width, 0.0)
    return np.where(grid <= ufpr[left], top[left], top[left] + t * (bottom[right] - top[left]))


def average_roc(curves: Sequence[RocCurve], grid: Optional[Sequence[float]] = None) -> RocCurve:
    """
    Vertical averaging: each curve's tpr is linearly interpolated at every grid
    fpr (a vertical step counts at its top), then averaged. The result is
    anchored at (0, 0) and (1, 1).
    """
    if not curves:
        raise BadConfig("need at least one ROC curve to average")
    grid = np.linspace(0.0, 1.0, DEFAULT_GRID_POINTS) if grid is None else np.asarray(grid, dtype=float)
    sampled = [_sample_curve(curve, grid) for curve in curves]
    mean_tpr = np.mean(np.stack(sampled), axis=0)

    fpr = [0.0] + [float(g) for g in grid] + [1.0]
    tpr = [0.0] + [float(t) for t in mean_tpr] + [1.0]
    points = [(fpr[0], tpr[0])]
    for point in zip(fpr[1:], tpr[1:]):
        if point != points[-1]:
            points.append(point)
    return RocCurve.from_points([f for f, _ in points], [t for _, t in points])


def _independent_columns(xc: np.ndarray, candidates: Sequence[int]) -> Tuple[List[int], List[int]]:
    kept: List[int] = []
    dropped: List[int] = []
    for j in candidates:
        trial = kept + [j]
        if np.linalg.matrix_rank(xc[:, trial]) == len(trial):
            kept.append(j)
        else:
            dropped.append(j)
    return kept, dropped


def baseline_ols_pvalues(train: DataMatrix, selected: FeatureSet) -> BaselineScores:
    """
    Two-sided t-test p-values from OLS (with intercept) on the selected columns.

    Collinear columns are dropped in index order, keeping the smallest index;
    drops are recorded. Degrees of freedom are n - |kept| - 1.
    """
    pvalues = np.ones(train.p)
    candidates = sorted(int(j) for j in selected)
    if not candidates:
        return BaselineScores(pvalues=pvalues)
    xc = train.x - train.x.mean(axis=0)
    yc = train.y - train.y.mean()
    kept, dropped = _independent_columns(xc, candidates)
    if dropped:
        LOG.warning("Dropped collinear baseline columns %s", dropped)
    df = train.n - len(kept) - 1
    if df < 1:
        raise DataError(f"{len(kept)} selected features leave no residual degrees of freedom for n={train.n}")
    design = xc[:, kept]
    coef, *_ = np.linalg.lstsq(design, yc, rcond=None)
    resid = yc - design @ coef
    sigma2 = float(resid @ resid) / df
    se = np.sqrt(sigma2 * np.diag(np.linalg.inv(design.T @ design)))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stat = np.where(se > 0, coef / se, np.where(coef != 0, np.inf, 0.0))
    pvalues[kept] = 2.0 * stats.t.sf(np.abs(t_stat), df)
    return BaselineScores(pvalues=pvalues, dropped=tuple(dropped))


def ols_baseline_scores(data: DataMatrix, report: StabilityReport, config: PcsConfig) -> np.ndarray:
    """
    Baseline ranking on the same halves as ``report``: lasso at each half's most
    accurate lambda, OLS p-values on that half, score 1 - p averaged over halves.
    """
    halves = split_halves(data, config)
    if len(halves) != len(report.halves):
        raise BadConfig("report and config disagree on the number of halves")
    per_half = []
    for (train, _), summary in zip(halves, report.halves):
        fit = fit_lasso(train, summary.best_lambda)
        per_half.append(baseline_ols_pvalues(train, selected_features(fit, config.selection_tol)).scores)
    return np.mean(np.stack(per_half), axis=0)


def _with_removed_positives(scores: np.ndarray, truth: GroundTruth, positives: str) -> Tuple[np.ndarray, Tuple[int, ...]]:
    found = truth.positives()
    if positives == "visible" or not truth.removed_active:
        return scores, found
    floor = float(np.min(scores)) - 1.0
    extra = len(truth.removed_active)
    padded = np.concatenate([scores, np.full(extra, floor)])
    return padded, found + tuple(range(scores.shape[0], scores.shape[0] + extra))


def evaluate_replicate(
    data: DataMatrix,
    truth: GroundTruth,
    config: PcsConfig,
    methods: Sequence[str] = METHODS,
    positives: str = "visible",
    *,
    n_jobs: int = 1,
) -> Dict[str, RocCurve]:
    """ROC per method for one dataset; every method is scored against the same positives."""
    if positives not in POSITIVES:
        raise BadConfig(f"positives must be one of {POSITIVES}, got '{positives}'")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise BadConfig(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
    report = run_pcs(data, config, n_jobs=n_jobs)
    curves: Dict[str, RocCurve] = {}
    for method in methods:
        raw = report.scores if method == "pcs" else ols_baseline_scores(data, report, config)
        scores, truth_idx = _with_removed_positives(np.asarray(raw, dtype=float), truth, positives)
        curves[method] = roc_from_scores(scores, truth_idx)
    return curves


def run_roc_benchmark(
    sim_config: SimConfig,
    pcs_config: PcsConfig,
    replicates: int,
    methods: Sequence[str] = METHODS,
    positives: str = "visible",
    *,
    grid_points: int = DEFAULT_GRID_POINTS,
    n_jobs: int = 1,
) -> Dict[str, MethodSummary]:
    """
    Simulate ``replicates`` datasets, score each method, and average the ROC
    curves vertically. Replicate r uses child seeds ``replicate / r`` of both
    the simulation and the PCS master seeds.
    """
    if replicates < 1:
        raise BadConfig(f"replicates must be >= 1, got {replicates}")
    sim_root = SeedSpec(sim_config.seed)
    pcs_root = SeedSpec(pcs_config.master_seed)
    per_method: Dict[str, List[RocCurve]] = {m: [] for m in methods}
    for r in range(replicates):
        sim = simulate(replace(sim_config, seed=sim_root.child("replicate", r).derived_seed))
        config = replace(pcs_config, master_seed=pcs_root.child("replicate", r).derived_seed)
        curves = evaluate_replicate(sim.data, sim.truth, config, methods, positives, n_jobs=n_jobs)
        for method, curve in curves.items():
            per_method[method].append(curve)
        LOG.info(
            "Replicate %d/%d: %s",
            r + 1, replicates, ", ".join(f"{m} auc={c.auc:.3f}" for m, c in curves.items()),
        )
    grid = np.linspace(0.0, 1.0, grid_points)
    return {
        method: MethodSummary(curve=average_roc(curves, grid), aucs=tuple(c.auc for c in curves))
        for method, curves in per_method.items()
    }
