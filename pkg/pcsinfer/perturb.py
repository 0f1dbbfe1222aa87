"""Data perturbations (identity, bootstrap, null-constrained) and model perturbations."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from pcsinfer.core_data import DataMatrix, SeedSpec
from pcsinfer.errors import BadConfig, BadSd
from pcsinfer.lasso import LambdaPath

__all__ = [
    "PerturbationKind",
    "NullKind",
    "NullSpec",
    "DataPerturbation",
    "ModelPerturbation",
    "PerturbationPlan",
    "bootstrap_sample",
    "permute_response",
    "generate_null_data",
    "apply_perturbation",
    "make_null_perturbation",
    "build_plan",
]

LOG = logging.getLogger("pcsinfer.perturb")


class PerturbationKind(str, Enum):
    IDENTITY = "identity"
    BOOTSTRAP = "bootstrap"
    NULL_CONSTRAINED = "null_constrained"


class NullKind(str, Enum):
    PERMUTE_RESPONSE = "permute_response"
    GAUSSIAN_PARAMETRIC = "gaussian_parametric"


@dataclass(frozen=True)
class NullSpec:
    """
    A null hypothesis expressed as a constrained perturbation of the response.

    ``mean``/``sd`` apply to ``gaussian_parametric`` only. ``seed`` may be left
    unset; :func:`build_plan` fills it from the master seed.
    """

    kind: NullKind
    mean: float = 0.0
    sd: float = 1.0
    seed: Optional[SeedSpec] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NullKind(self.kind))


@dataclass(frozen=True)
class DataPerturbation:
    kind: PerturbationKind
    seed: SeedSpec
    replicate_index: int = 0
    null_spec: Optional[NullSpec] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PerturbationKind(self.kind))
        if self.kind is PerturbationKind.BOOTSTRAP and self.replicate_index < 1:
            raise BadConfig(f"bootstrap replicate_index must be >= 1, got {self.replicate_index}")
        if self.kind is PerturbationKind.NULL_CONSTRAINED and self.null_spec is None:
            raise BadConfig("null_constrained perturbation needs a NullSpec")

    @property
    def perturbation_id(self) -> str:
        if self.kind is PerturbationKind.BOOTSTRAP:
            return f"bootstrap:{self.replicate_index:04d}"
        if self.kind is PerturbationKind.NULL_CONSTRAINED:
            return f"null:{self.null_spec.kind.value}"
        return "identity"


@dataclass(frozen=True)
class ModelPerturbation:
    lam: float
    model_id: str


@dataclass(frozen=True)
class PerturbationPlan:
    """The pair (data perturbations, model perturbations), plus an optional null perturbation."""

    data_perturbations: Tuple[DataPerturbation, ...]
    model_perturbations: Tuple[ModelPerturbation, ...]
    null_perturbation: Optional[DataPerturbation] = None

    def __post_init__(self) -> None:
        if not self.data_perturbations:
            raise BadConfig("perturbation plan needs at least one data perturbation")
        if not self.model_perturbations:
            raise BadConfig("perturbation plan needs at least one model perturbation")

    @property
    def B(self) -> int:
        return sum(1 for d in self.data_perturbations if d.kind is PerturbationKind.BOOTSTRAP)


def bootstrap_sample(data: DataMatrix, seed: SeedSpec) -> DataMatrix:
    """Draw n rows with replacement; each x row travels with its y entry."""
    rows = seed.rng().integers(0, data.n, size=data.n)
    return data.subset(rows)


def permute_response(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation of ``y``; a length-1 response comes back unchanged."""
    return rng.permutation(np.asarray(y, dtype=float))


def generate_null_data(data: DataMatrix, spec: NullSpec) -> DataMatrix:
    """
    D0: x unchanged, y replaced according to ``spec``.

    Raises:
        BadSd: if a Gaussian null has sd <= 0
        BadConfig: if the spec carries no seed
    """
    if spec.seed is None:
        raise BadConfig("null spec has no seed; build it through build_plan or pass one")
    rng = spec.seed.rng()
    if spec.kind is NullKind.PERMUTE_RESPONSE:
        y0 = permute_response(data.y, rng)
    else:
        if not spec.sd > 0:
            raise BadSd(f"gaussian null needs sd > 0, got {spec.sd}")
        y0 = rng.normal(spec.mean, spec.sd, size=data.n)
    LOG.debug("Generated %s null response for %d rows", spec.kind.value, data.n)
    return data.with_response(y0)


def apply_perturbation(data: DataMatrix, pert: DataPerturbation) -> DataMatrix:
    if pert.kind is PerturbationKind.IDENTITY:
        return data
    if pert.kind is PerturbationKind.BOOTSTRAP:
        return bootstrap_sample(data, pert.seed)
    spec = pert.null_spec if pert.null_spec.seed is not None else replace(pert.null_spec, seed=pert.seed)
    return generate_null_data(data, spec)


def make_null_perturbation(null: NullSpec, seed: SeedSpec) -> DataPerturbation:
    """Wrap ``null`` as a data perturbation, seeding it from ``seed.child("null")`` if unseeded."""
    null_seed = null.seed or seed.child("null")
    return DataPerturbation(PerturbationKind.NULL_CONSTRAINED, null_seed, null_spec=replace(null, seed=null_seed))


def build_plan(
    path: LambdaPath,
    B: int,
    null: Optional[NullSpec] = None,
    seed: Optional[SeedSpec] = None,
    *,
    identity: bool = False,
) -> PerturbationPlan:
    """
    B bootstrap perturbations (optionally preceded by the identity) and one
    model perturbation per path value.

    Replicate b draws from ``seed.child("bootstrap", b)``; the null, when
    given, from ``seed.child("null")`` unless it already has a seed.
    """
    if B < 0 or (B == 0 and not identity):
        raise BadConfig(f"need B >= 1 bootstrap replicates (or the identity), got {B}")
    seed = seed or SeedSpec(0)
    data_perturbations = []
    if identity:
        data_perturbations.append(DataPerturbation(PerturbationKind.IDENTITY, seed.child("identity")))
    for b in range(1, B + 1):
        data_perturbations.append(
            DataPerturbation(PerturbationKind.BOOTSTRAP, seed.child("bootstrap", b), replicate_index=b)
        )
    model_perturbations = tuple(
        ModelPerturbation(lam=float(lam), model_id=f"lambda:{i:03d}") for i, lam in enumerate(path.values)
    )
    null_perturbation = make_null_perturbation(null, seed) if null is not None else None
    LOG.debug("Built plan: %d data x %d model perturbations", len(data_perturbations), len(model_perturbations))
    return PerturbationPlan(tuple(data_perturbations), model_perturbations, null_perturbation)
