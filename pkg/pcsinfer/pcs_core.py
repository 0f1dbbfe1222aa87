"""PCS inference engine.

Prediction screening, target perturbation distributions, stability scores,
perturbation intervals, the two-halves pipeline and PCS hypothesis testing.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import KFold
from threadpoolctl import threadpool_limits

from pcsinfer.core_data import DataMatrix, SeedSpec, split, standardize, swap_halves
from pcsinfer.errors import BadConfig, EmptySurvivors
from pcsinfer.lasso import (
    SELECTION_TOL,
    FeatureSet,
    LassoProblem,
    compute_lambda_path,
    fit_path,
    l2_error,
    predict,
    selected_features,
)
from pcsinfer.perturb import (
    DataPerturbation,
    ModelPerturbation,
    NullSpec,
    PerturbationPlan,
    apply_perturbation,
    build_plan,
    make_null_perturbation,
)

__all__ = [
    "ScreeningRuleKind",
    "ScreeningRule",
    "EvaluationMode",
    "ScreeningResult",
    "TargetDistribution",
    "HalfSummary",
    "StabilityReport",
    "PcsConfig",
    "ScoreDivergence",
    "HypothesisTestResult",
    "screen_models",
    "compute_target_distribution",
    "stability_scores",
    "perturbation_interval",
    "split_halves",
    "run_pcs",
    "pcs_hypothesis_test",
]

LOG = logging.getLogger("pcsinfer.pcs_core")

TARGETS = ("lasso_selected_features",)
METRICS = ("l2",)
INTERVAL_TARGETS = ("model_size", "coefficients")

EntryKey = Tuple[str, str]


class ScreeningRuleKind(str, Enum):
    TOP_K = "top_k"
    THRESHOLD = "threshold"
    RELATIVE = "relative"


@dataclass(frozen=True)
class ScreeningRule:
    """
    Which models survive screening.

    ``top_k``: the k most accurate; ``threshold``: error strictly below tau;
    ``relative``: error at most ``ratio`` times the best error.
    """

    kind: ScreeningRuleKind
    k: int = 10
    tau: float = math.inf
    ratio: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScreeningRuleKind(self.kind))
        if self.kind is ScreeningRuleKind.TOP_K and int(self.k) < 1:
            raise BadConfig(f"top_k needs k >= 1, got {self.k}")
        if self.kind is ScreeningRuleKind.RELATIVE and not self.ratio >= 1.0:
            raise BadConfig(f"relative screening needs ratio >= 1, got {self.ratio}")

    @classmethod
    def top_k(cls, k: int) -> "ScreeningRule":
        return cls(ScreeningRuleKind.TOP_K, k=int(k))

    @classmethod
    def threshold(cls, tau: float) -> "ScreeningRule":
        return cls(ScreeningRuleKind.THRESHOLD, tau=float(tau))

    @classmethod
    def relative(cls, ratio: float) -> "ScreeningRule":
        return cls(ScreeningRuleKind.RELATIVE, ratio=float(ratio))

    def to_dict(self) -> Dict[str, Any]:
        if self.kind is ScreeningRuleKind.TOP_K:
            return {"rule": "top_k", "k": self.k}
        if self.kind is ScreeningRuleKind.THRESHOLD:
            return {"rule": "threshold", "tau": self.tau}
        return {"rule": "relative", "ratio": self.ratio}


class EvaluationMode(str, Enum):
    HOLDOUT = "holdout"
    CV = "cv"


@dataclass(frozen=True)
class ScreeningResult:
    """Survivors (descending lambda), every candidate's error, and the error ranking."""

    survivors: Tuple[ModelPerturbation, ...]
    errors: Dict[str, float]
    rule: ScreeningRule
    evaluation_mode: EvaluationMode
    ranking: Tuple[str, ...]
    folds: Optional[int] = None

    @property
    def best(self) -> str:
        return self.ranking[0]


@dataclass(frozen=True)
class TargetDistribution:
    """
    Selected-feature sets keyed by ``(data_perturbation_id, model_id)``.

    Coefficient vectors and non-converged keys are kept alongside so scalar
    targets and the convergence tally can be derived from the same grid.
    """

    entries: Dict[EntryKey, FeatureSet]
    coefficients: Dict[EntryKey, np.ndarray]
    nonconverged: FrozenSet[EntryKey]
    p: int
    data_ids: Tuple[str, ...]
    model_ids: Tuple[str, ...]
    lambdas: Dict[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def model_sizes(self, model_id: Optional[str] = None) -> List[int]:
        return [
            len(self.entries[(d, m)])
            for d in self.data_ids
            for m in self.model_ids
            if model_id is None or m == model_id
        ]


@dataclass(frozen=True)
class HalfSummary:
    """What one half of the data contributed to a report."""

    survivors: Tuple[float, ...]
    best_lambda: float
    screening_errors: Dict[str, float]
    selection_counts: Tuple[int, ...]
    n_fits: int
    convergence_failures: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "survivors": list(self.survivors),
            "best_lambda": self.best_lambda,
            "screening_errors": dict(self.screening_errors),
            "selection_counts": list(self.selection_counts),
            "n_fits": self.n_fits,
            "convergence_failures": self.convergence_failures,
        }


@dataclass(frozen=True)
class StabilityReport:
    """
    Per-feature stability scores plus the scalar perturbation intervals.

    With halves averaged, ``scores`` is the element-wise mean of the halves'
    scores and each half's exact counts live in ``halves``.
    """

    scores: np.ndarray
    selection_counts: Tuple[int, ...]
    n_fits: int
    feature_names: Tuple[str, ...] = ()
    intervals: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    halves_averaged: bool = False
    convergence_failures: int = 0
    config_digest: str = ""
    master_seed: Optional[int] = None
    halves: Tuple[HalfSummary, ...] = ()
    per_model: Tuple[Dict[str, Any], ...] = ()

    @property
    def p(self) -> int:
        return int(self.scores.shape[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config_digest": self.config_digest,
            "master_seed": self.master_seed,
            "feature_names": list(self.feature_names),
            "scores": [float(s) for s in self.scores],
            "intervals": {k: [float(lo), float(hi)] for k, (lo, hi) in self.intervals.items()},
            "halves_averaged": self.halves_averaged,
            "convergence_failures": self.convergence_failures,
            "selection_counts": list(self.selection_counts),
            "n_fits": self.n_fits,
            "halves": [h.to_dict() for h in self.halves],
            "per_model": list(self.per_model),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True)
class PcsConfig:
    """
    Everything a PCS run needs: problem formulation, perturbations, split,
    metric, screening rule and reporting options.
    """

    master_seed: int = 0
    target: str = "lasso_selected_features"
    metric: str = "l2"
    split_fraction: float = 0.5
    average_halves: bool = True
    bootstrap_replicates: int = 100
    include_identity: bool = False
    nlambda: int = 100
    min_ratio: Union[float, str] = "auto"
    screening: ScreeningRule = field(default_factory=lambda: ScreeningRule.top_k(10))
    evaluation_mode: EvaluationMode = EvaluationMode.HOLDOUT
    cv_folds: int = 5
    interval_percentiles: Tuple[float, float] = (10.0, 90.0)
    interval_targets: Tuple[str, ...] = ("model_size",)
    per_model: bool = False
    selection_tol: float = SELECTION_TOL
    config_digest: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "evaluation_mode", EvaluationMode(self.evaluation_mode))
        if self.target not in TARGETS:
            raise BadConfig(f"target must be one of {TARGETS}, got '{self.target}'")
        if self.metric not in METRICS:
            raise BadConfig(f"metric must be one of {METRICS}, got '{self.metric}'")
        if self.bootstrap_replicates < 0 or (self.bootstrap_replicates == 0 and not self.include_identity):
            raise BadConfig("need bootstrap_replicates >= 1 or include_identity")
        if self.evaluation_mode is EvaluationMode.CV and self.cv_folds < 2:
            raise BadConfig(f"cv needs at least 2 folds, got {self.cv_folds}")
        lo, hi = self.interval_percentiles
        if not 0.0 <= lo <= hi <= 100.0:
            raise BadConfig(f"interval percentiles must satisfy 0 <= lo <= hi <= 100, got {lo}, {hi}")
        unknown = set(self.interval_targets) - set(INTERVAL_TARGETS)
        if unknown:
            raise BadConfig(f"unknown interval targets {sorted(unknown)}; choose from {INTERVAL_TARGETS}")


@dataclass(frozen=True)
class ScoreDivergence:
    """Observed-minus-null score per feature and whether each interval pair overlaps."""

    score_difference: np.ndarray
    interval_overlap: Dict[str, bool]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "score_difference": [float(v) for v in self.score_difference],
            "interval_overlap": dict(self.interval_overlap),
        }


@dataclass(frozen=True)
class HypothesisTestResult:
    observed: StabilityReport
    null: StabilityReport
    divergence: ScoreDivergence
    null_spec: NullSpec

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config_digest": self.observed.config_digest,
            "master_seed": self.observed.master_seed,
            "null_spec": {"kind": self.null_spec.kind.value, "mean": self.null_spec.mean, "sd": self.null_spec.sd},
            "observed": self.observed.to_dict(),
            "null": self.null.to_dict(),
            "divergence": self.divergence.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _fold_seed(seed: Optional[SeedSpec]) -> int:
    return (seed or SeedSpec(0)).derived_seed % (2**32)


def _holdout_errors(train: DataMatrix, held: DataMatrix, lambdas: Sequence[float]) -> List[float]:
    fits = fit_path(train, lambdas)
    return [l2_error(predict(fit, held.x), held.y) for fit in fits]


def screen_models(
    candidates: Sequence[ModelPerturbation],
    train: DataMatrix,
    evaluation: Optional[DataMatrix] = None,
    rule: ScreeningRule = ScreeningRule.top_k(10),
    *,
    mode: EvaluationMode = EvaluationMode.HOLDOUT,
    folds: int = 5,
    seed: Optional[SeedSpec] = None,
) -> ScreeningResult:
    """
    Fit every candidate on ``train`` and keep the accurate ones.

    Holdout mode scores each fit on ``evaluation``; CV mode averages the error
    over ``folds`` shuffled folds of ``train``. Ranking is ascending error with
    ties going to the larger (sparser) lambda.

    Raises:
        BadConfig: if CV asks for more folds than training rows
        EmptySurvivors: if a threshold rule excludes every model
    """
    if not candidates:
        raise BadConfig("screening needs at least one candidate model")
    mode = EvaluationMode(mode)
    ordered = sorted(candidates, key=lambda m: -m.lam)
    lambdas = [m.lam for m in ordered]

    with threadpool_limits(limits=1):
        if mode is EvaluationMode.HOLDOUT:
            if evaluation is None:
                raise BadConfig("holdout screening needs an evaluation set")
            errors = _holdout_errors(train, evaluation, lambdas)
        else:
            if not 2 <= folds <= train.n:
                raise BadConfig(f"cv needs 2 <= folds <= {train.n} training rows, got folds={folds}")
            kfold = KFold(n_splits=folds, shuffle=True, random_state=_fold_seed(seed))
            per_fold = [
                _holdout_errors(train.subset(tr), train.subset(te), lambdas)
                for tr, te in kfold.split(np.arange(train.n))
            ]
            errors = list(np.mean(np.array(per_fold), axis=0))

    error_map = {m.model_id: float(e) for m, e in zip(ordered, errors)}
    ranked = sorted(ordered, key=lambda m: (error_map[m.model_id], -m.lam))

    if rule.kind is ScreeningRuleKind.TOP_K:
        keep = {m.model_id for m in ranked[: min(int(rule.k), len(ranked))]}
    elif rule.kind is ScreeningRuleKind.THRESHOLD:
        keep = {m.model_id for m in ordered if error_map[m.model_id] < rule.tau}
        if not keep:
            raise EmptySurvivors(f"no model has prediction error below tau={rule.tau}")
    else:
        bound = rule.ratio * error_map[ranked[0].model_id]
        keep = {m.model_id for m in ordered if error_map[m.model_id] <= bound}

    survivors = tuple(m for m in ordered if m.model_id in keep)
    LOG.info(
        "Screening (%s, %s): %d of %d models survive, best error %.6g",
        rule.kind.value, mode.value, len(survivors), len(ordered), error_map[ranked[0].model_id],
    )
    return ScreeningResult(
        survivors=survivors,
        errors=error_map,
        rule=rule,
        evaluation_mode=mode,
        ranking=tuple(m.model_id for m in ranked),
        folds=folds if mode is EvaluationMode.CV else None,
    )


def _perturbation_task(
    train: DataMatrix, pert: DataPerturbation, lambdas: Sequence[float], tol: float
) -> List[Tuple[FeatureSet, np.ndarray, bool]]:
    with threadpool_limits(limits=1):
        perturbed = apply_perturbation(train, pert)
        fits = fit_path(perturbed, lambdas, LassoProblem(perturbed))
    return [(selected_features(fit, tol), np.array(fit.beta), fit.converged) for fit in fits]


def compute_target_distribution(
    train: DataMatrix,
    survivors: Sequence[ModelPerturbation],
    plan: PerturbationPlan,
    *,
    n_jobs: int = 1,
    selection_tol: float = SELECTION_TOL,
) -> TargetDistribution:
    """
    Refit the lasso at every surviving lambda on every perturbed dataset.

    One task per data perturbation; inside a task the survivors are fitted in
    descending lambda with warm starts. Task boundaries never depend on
    ``n_jobs``, so the grid is identical for any degree of parallelism.
    Non-converged fits keep their selection and are listed in ``nonconverged``.
    """
    if not survivors:
        raise BadConfig("target distribution needs at least one surviving model")
    models = sorted(survivors, key=lambda m: -m.lam)
    lambdas = [m.lam for m in models]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_perturbation_task)(train, pert, lambdas, selection_tol) for pert in plan.data_perturbations
    )

    entries: Dict[EntryKey, FeatureSet] = {}
    coefficients: Dict[EntryKey, np.ndarray] = {}
    nonconverged = set()
    for pert, fits in zip(plan.data_perturbations, results):
        for model, (selected, beta, converged) in zip(models, fits):
            key = (pert.perturbation_id, model.model_id)
            entries[key] = selected
            coefficients[key] = beta
            if not converged:
                nonconverged.add(key)
    if nonconverged:
        LOG.warning("%d of %d fits did not converge; their selections are kept", len(nonconverged), len(entries))
    return TargetDistribution(
        entries=entries,
        coefficients=coefficients,
        nonconverged=frozenset(nonconverged),
        p=train.p,
        data_ids=tuple(pert.perturbation_id for pert in plan.data_perturbations),
        model_ids=tuple(m.model_id for m in models),
        lambdas={m.model_id: m.lam for m in models},
    )


def stability_scores(dist: TargetDistribution) -> StabilityReport:
    """sta(j): the fraction of (data perturbation, surviving lambda) fits selecting j."""
    if not dist.entries:
        raise BadConfig("stability scores need a non-empty target distribution")
    counts = np.zeros(dist.p, dtype=np.int64)
    for selected in dist.entries.values():
        for j in selected:
            counts[j] += 1
    total = len(dist.entries)
    return StabilityReport(
        scores=counts / total,
        selection_counts=tuple(int(c) for c in counts),
        n_fits=total,
        convergence_failures=len(dist.nonconverged),
    )


def perturbation_interval(values: Sequence[float], lo_pct: float = 10.0, hi_pct: float = 90.0) -> Tuple[float, float]:
    """
    Percentile pair of scalar target realizations, linear interpolation
    between order statistics (h = (m - 1) q).

    Example:
        >>> perturbation_interval(list(range(1, 12)))
        (2.0, 10.0)
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise BadConfig("perturbation interval needs at least one value")
    lo, hi = np.percentile(arr, [lo_pct, hi_pct], method="linear")
    return float(lo), float(hi)


def split_halves(data: DataMatrix, config: PcsConfig) -> List[Tuple[DataMatrix, DataMatrix]]:
    """
    The ``(train, held_out)`` pairs a run uses: both orderings, or only the first.

    Features are standardized over the full data before splitting unless
    ``data`` is already flagged standardized.

    Raises:
        ConstantColumn: if a feature has zero variance
    """
    if not data.standardized:
        data = standardize(data)
    partition = split(data, config.split_fraction, SeedSpec(config.master_seed).child("split"))
    first, second = swap_halves(data, partition)
    return [first, second] if config.average_halves else [first]


def _interval_realizations(dist: TargetDistribution, feature_names: Sequence[str], targets: Sequence[str]) -> Dict[str, List[float]]:
    out: Dict[str, List[float]] = {}
    if "model_size" in targets:
        out["model_size"] = [float(v) for v in dist.model_sizes()]
    if "coefficients" in targets:
        stacked = np.array([dist.coefficients[(d, m)] for d in dist.data_ids for m in dist.model_ids])
        for j, name in enumerate(feature_names):
            out[f"coef:{name}"] = [float(v) for v in stacked[:, j]]
    return out


def _per_model_rows(
    half: int, dist: TargetDistribution, screening: ScreeningResult, config: PcsConfig
) -> List[Dict[str, Any]]:
    rows = []
    rank = {model_id: r for r, model_id in enumerate(screening.ranking)}
    lo_pct, hi_pct = config.interval_percentiles
    for model_id in dist.model_ids:
        counts = np.zeros(dist.p, dtype=np.int64)
        for d in dist.data_ids:
            for j in dist.entries[(d, model_id)]:
                counts[j] += 1
        lo, hi = perturbation_interval(dist.model_sizes(model_id), lo_pct, hi_pct)
        rows.append(
            {
                "half": half,
                "model_id": model_id,
                "lambda": dist.lambdas[model_id],
                "screening_error": screening.errors[model_id],
                "trust_rank": rank[model_id],
                "scores": [float(c) / len(dist.data_ids) for c in counts],
                "model_size_interval": [lo, hi],
            }
        )
    return sorted(rows, key=lambda row: row["trust_rank"])


def run_pcs(data: DataMatrix, config: PcsConfig, *, n_jobs: int = 1) -> StabilityReport:
    """
    Standardize, split, path, screen, perturb and score on each half; average
    the halves.

    Each half draws its bootstrap streams from ``master_seed / half / h``, so
    the report is a pure function of (data, config).
    """
    root = SeedSpec(config.master_seed)
    halves = split_halves(data, config)
    lo_pct, hi_pct = config.interval_percentiles

    components: List[StabilityReport] = []
    summaries: List[HalfSummary] = []
    realizations: Dict[str, List[float]] = {}
    per_model: List[Dict[str, Any]] = []

    for h, (train, held) in enumerate(halves):
        half_seed = root.child("half", h)
        path = compute_lambda_path(train, config.nlambda, config.min_ratio)
        plan = build_plan(path, config.bootstrap_replicates, seed=half_seed, identity=config.include_identity)
        screening = screen_models(
            plan.model_perturbations,
            train,
            held,
            config.screening,
            mode=config.evaluation_mode,
            folds=config.cv_folds,
            seed=half_seed.child("cv"),
        )
        dist = compute_target_distribution(
            train, screening.survivors, plan, n_jobs=n_jobs, selection_tol=config.selection_tol
        )
        component = stability_scores(dist)
        components.append(component)
        best = next(m.lam for m in plan.model_perturbations if m.model_id == screening.best)
        summaries.append(
            HalfSummary(
                survivors=tuple(m.lam for m in screening.survivors),
                best_lambda=best,
                screening_errors={m.model_id: screening.errors[m.model_id] for m in screening.survivors},
                selection_counts=component.selection_counts,
                n_fits=component.n_fits,
                convergence_failures=component.convergence_failures,
            )
        )
        for key, values in _interval_realizations(dist, data.feature_names, config.interval_targets).items():
            realizations.setdefault(key, []).extend(values)
        if config.per_model:
            per_model.extend(_per_model_rows(h, dist, screening, config))
        LOG.info(
            "Half %d: %d survivors x %d perturbations, %d features ever selected",
            h, len(screening.survivors), len(plan.data_perturbations), int(np.count_nonzero(component.selection_counts)),
        )

    scores = np.mean(np.stack([c.scores for c in components]), axis=0)
    pooled_counts = np.sum(np.stack([np.array(c.selection_counts) for c in components]), axis=0)
    intervals = {key: perturbation_interval(values, lo_pct, hi_pct) for key, values in realizations.items()}
    return StabilityReport(
        scores=scores,
        selection_counts=tuple(int(c) for c in pooled_counts),
        n_fits=sum(c.n_fits for c in components),
        feature_names=data.feature_names,
        intervals=intervals,
        halves_averaged=len(components) > 1,
        convergence_failures=sum(c.convergence_failures for c in components),
        config_digest=config.config_digest,
        master_seed=config.master_seed,
        halves=tuple(summaries),
        per_model=tuple(per_model),
    )


def pcs_hypothesis_test(
    data: DataMatrix, null_spec: NullSpec, config: PcsConfig, *, n_jobs: int = 1
) -> HypothesisTestResult:
    """
    Run the identical pipeline on D and on the null data D0 and describe how
    they differ. No accept/reject decision is made; that judgment stays with
    the analyst.
    """
    null_pert = make_null_perturbation(null_spec, SeedSpec(config.master_seed))
    null_data = apply_perturbation(data, null_pert)
    LOG.info("Running observed data")
    observed = run_pcs(data, config, n_jobs=n_jobs)
    LOG.info("Running null data (%s)", null_spec.kind.value)
    null = run_pcs(null_data, config, n_jobs=n_jobs)
    overlap = {}
    for key in sorted(set(observed.intervals) & set(null.intervals)):
        (lo1, hi1), (lo0, hi0) = observed.intervals[key], null.intervals[key]
        overlap[key] = bool(lo1 <= hi0 and lo0 <= hi1)
    divergence = ScoreDivergence(score_difference=observed.scores - null.scores, interval_overlap=overlap)
    return HypothesisTestResult(observed=observed, null=null, divergence=divergence, null_spec=null_pert.null_spec)
