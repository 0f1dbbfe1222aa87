"""Data-inspired sparse linear model simulations.

The real enrichment matrix behind the original benchmark is not public, so
base features are a documented synthetic substitute: exp of an
exchangeable-correlated Gaussian (correlation 0.3), i.e. skewed, positive and
correlated, then standardized and augmented with every pairwise product.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from itertools import combinations
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from pcsinfer.core_data import DataMatrix, SeedSpec, standardize
from pcsinfer.errors import BadConfig, KTooLarge

__all__ = [
    "NoiseKind",
    "MisspecKind",
    "NoiseSpec",
    "MisspecSpec",
    "SimConfig",
    "Rule",
    "RuleSet",
    "GroundTruth",
    "SimulatedData",
    "SETTINGS",
    "list_settings",
    "make_features",
    "assign_active",
    "make_rule_set",
    "gen_response",
    "apply_misspec_drop",
    "simulate",
]

LOG = logging.getLogger("pcsinfer.simgen")

BASE_CORRELATION = 0.3


class NoiseKind(str, Enum):
    GAUSSIAN = "gaussian"
    STUDENT_T = "student_t"
    BLOCK_GAUSSIAN = "block_gaussian"
    HETEROSKEDASTIC = "heteroskedastic"


class MisspecKind(str, Enum):
    NONE = "none"
    DROP_ACTIVE = "drop_active"
    RULE_RESPONSE = "rule_response"


@dataclass(frozen=True)
class NoiseSpec:
    """
    Noise distribution. ``sd`` scales gaussian, student_t and block_gaussian
    noise; ``c`` is the heteroskedastic constant (``"auto"`` makes the mean
    variance 1).
    """

    kind: NoiseKind = NoiseKind.GAUSSIAN
    sd: float = 1.0
    df: float = 3.0
    block_size: int = 25
    rho: float = 0.5
    c: Union[float, str] = "auto"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.sd < 0:
            raise BadConfig(f"noise sd must be >= 0, got {self.sd}")
        if self.kind is NoiseKind.STUDENT_T and not self.df > 2:
            raise BadConfig(f"student_t needs df > 2 for finite variance, got {self.df}")
        if self.kind is NoiseKind.BLOCK_GAUSSIAN:
            if int(self.block_size) < 1:
                raise BadConfig(f"block_size must be >= 1, got {self.block_size}")
            if not 0.0 <= self.rho < 1.0:
                raise BadConfig(f"block correlation rho must lie in [0, 1), got {self.rho}")
        if self.kind is NoiseKind.HETEROSKEDASTIC and self.c != "auto" and not float(self.c) > 0:
            raise BadConfig(f"heteroskedastic constant c must be > 0 or 'auto', got {self.c}")


@dataclass(frozen=True)
class MisspecSpec:
    """``k``: active columns hidden from fitting; ``n_pairs``/``rule_coef``: rule response."""

    kind: MisspecKind = MisspecKind.NONE
    k: Union[int, str] = "auto"
    n_pairs: Union[int, str] = "auto"
    rule_coef: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", MisspecKind(self.kind))


@dataclass(frozen=True)
class SimConfig:
    n: int
    p_base: int
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    misspec: MisspecSpec = field(default_factory=MisspecSpec)
    seed: int = 0
    setting: str = "custom"

    def __post_init__(self) -> None:
        if self.n < 2:
            raise BadConfig(f"n must be >= 2, got {self.n}")
        if self.p_base < 2:
            raise BadConfig(f"p_base must be >= 2, got {self.p_base}")
        if self.misspec.kind is MisspecKind.DROP_ACTIVE and self.drop_k > self.s:
            raise KTooLarge(f"cannot drop {self.drop_k} of {self.s} active features")
        if self.misspec.kind is MisspecKind.RULE_RESPONSE and self.s < 2:
            raise BadConfig("rule response needs at least 2 active features")

    @property
    def p(self) -> int:
        return self.p_base + self.p_base * (self.p_base - 1) // 2

    @property
    def s(self) -> int:
        return math.isqrt(self.p)

    @property
    def drop_k(self) -> int:
        return self.s // 2 if self.misspec.k == "auto" else int(self.misspec.k)

    @classmethod
    def from_setting(cls, name: str, n: int, p_base: int, seed: int = 0, **overrides: Any) -> "SimConfig":
        """
        One of the six named settings, with optional ``noise_*``/``misspec_*`` overrides.

        Example:
            >>> SimConfig.from_setting("student_t", n=250, p_base=10).noise.df
            3.0
        """
        if name not in SETTINGS:
            raise BadConfig(f"unknown setting '{name}'; choose from {', '.join(SETTINGS)}")
        _, noise, misspec = SETTINGS[name]
        noise_kw = {k[len("noise_"):]: v for k, v in overrides.items() if k.startswith("noise_")}
        misspec_kw = {k[len("misspec_"):]: v for k, v in overrides.items() if k.startswith("misspec_")}
        unknown = set(overrides) - {f"noise_{k}" for k in noise_kw} - {f"misspec_{k}" for k in misspec_kw}
        if unknown:
            raise BadConfig(f"unknown simulation overrides: {sorted(unknown)}")
        try:
            noise = replace(noise, **noise_kw)
            misspec = replace(misspec, **misspec_kw)
        except TypeError as exc:
            raise BadConfig(str(exc)) from exc
        return cls(n=int(n), p_base=int(p_base), noise=noise, misspec=misspec, seed=int(seed), setting=name)

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload["noise"]["kind"] = self.noise.kind.value
        payload["misspec"]["kind"] = self.misspec.kind.value
        return payload


SETTINGS: Dict[str, Tuple[str, NoiseSpec, MisspecSpec]] = {
    "gaussian": ("i.i.d. Gaussian noise", NoiseSpec(NoiseKind.GAUSSIAN), MisspecSpec()),
    "student_t": ("Student t noise with 3 degrees of freedom", NoiseSpec(NoiseKind.STUDENT_T, df=3.0), MisspecSpec()),
    "block_gaussian": (
        "multivariate Gaussian noise with block covariance",
        NoiseSpec(NoiseKind.BLOCK_GAUSSIAN, block_size=25, rho=0.5),
        MisspecSpec(),
    ),
    "heteroskedastic": (
        "Gaussian noise with variance proportional to ||x_i||^2",
        NoiseSpec(NoiseKind.HETEROSKEDASTIC, c="auto"),
        MisspecSpec(),
    ),
    "drop_active": (
        "i.i.d. Gaussian noise, some active features hidden from the fit",
        NoiseSpec(NoiseKind.GAUSSIAN),
        MisspecSpec(MisspecKind.DROP_ACTIVE),
    ),
    "rule_response": (
        "i.i.d. Gaussian noise, response from thresholded pairs of active features",
        NoiseSpec(NoiseKind.GAUSSIAN),
        MisspecSpec(MisspecKind.RULE_RESPONSE),
    ),
}


def list_settings() -> List[Tuple[str, str]]:
    """``(name, description)`` for the six settings, in registry order."""
    return [(name, entry[0]) for name, entry in SETTINGS.items()]


@dataclass(frozen=True)
class Rule:
    pair: Tuple[int, int]
    thresholds: Tuple[float, float]
    coef: float


@dataclass(frozen=True)
class RuleSet:
    rules: Tuple[Rule, ...]

    @property
    def members(self) -> Tuple[int, ...]:
        return tuple(sorted({j for rule in self.rules for j in rule.pair}))

    def to_dict(self) -> Dict[str, Any]:
        return {"rules": [{"pair": list(r.pair), "thresholds": list(r.thresholds), "coef": r.coef} for r in self.rules]}


@dataclass(frozen=True)
class GroundTruth:
    """
    Generating coefficients in the full feature space.

    ``visible_features`` lists the full-space columns handed to the fit (in
    order); ``fitted_visible_set`` is the active part of them.
    """

    active_set: Tuple[int, ...]
    beta: np.ndarray
    feature_names: Tuple[str, ...]
    visible_features: Tuple[int, ...]
    fitted_visible_set: Tuple[int, ...]

    @classmethod
    def from_active(cls, active: Any, feature_names: Tuple[str, ...]) -> "GroundTruth":
        p = len(feature_names)
        active_set = tuple(sorted(int(j) for j in active))
        beta = np.zeros(p)
        beta[list(active_set)] = 1.0
        beta.setflags(write=False)
        return cls(active_set, beta, tuple(feature_names), tuple(range(p)), active_set)

    @property
    def removed_active(self) -> Tuple[int, ...]:
        return tuple(sorted(set(self.active_set) - set(self.fitted_visible_set)))

    def positives(self) -> Tuple[int, ...]:
        """Active features as column positions of the fitted matrix."""
        visible_active = set(self.fitted_visible_set)
        return tuple(pos for pos, j in enumerate(self.visible_features) if j in visible_active)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "active_set": list(self.active_set),
            "beta": [float(b) for b in self.beta],
            "feature_names": list(self.feature_names),
            "visible_features": list(self.visible_features),
            "fitted_visible_set": list(self.fitted_visible_set),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "GroundTruth":
        try:
            beta = np.array(payload["beta"], dtype=float)
            beta.setflags(write=False)
            return cls(
                tuple(int(j) for j in payload["active_set"]),
                beta,
                tuple(payload["feature_names"]),
                tuple(int(j) for j in payload["visible_features"]),
                tuple(int(j) for j in payload["fitted_visible_set"]),
            )
        except KeyError as exc:
            raise BadConfig(f"truth sidecar is missing '{exc.args[0]}'") from exc


@dataclass(frozen=True)
class SimulatedData:
    data: DataMatrix
    truth: GroundTruth
    config: SimConfig
    rules: Optional[RuleSet] = None


def _feature_names(p_base: int) -> Tuple[str, ...]:
    width = len(str(p_base - 1))
    base = [f"x{j:0{width}d}" for j in range(p_base)]
    return tuple(base + [f"{base[j]}:{base[k]}" for j, k in combinations(range(p_base), 2)])


def make_features(n: int, p_base: int, seed: SeedSpec) -> DataMatrix:
    """
    Standardized correlated log-normal base columns plus all pairwise products.

    Products are taken between standardized base columns, in lexicographic pair
    order, then standardized. The response is a zero placeholder.
    """
    if p_base < 2:
        raise BadConfig(f"p_base must be >= 2, got {p_base}")
    rng = seed.rng()
    shared = rng.standard_normal(n)
    own = rng.standard_normal((n, p_base))
    z = math.sqrt(BASE_CORRELATION) * shared[:, None] + math.sqrt(1.0 - BASE_CORRELATION) * own
    base = np.exp(z)
    base = (base - base.mean(axis=0)) / base.std(axis=0, ddof=1)
    pairs = list(combinations(range(p_base), 2))
    products = np.column_stack([base[:, j] * base[:, k] for j, k in pairs])
    x = np.hstack([base, products])
    names = _feature_names(p_base)
    LOG.debug("Generated %d x %d feature matrix (%d base columns)", n, x.shape[1], p_base)
    return standardize(DataMatrix(x, np.zeros(n), names))


def assign_active(p: int, seed: SeedSpec, feature_names: Optional[Tuple[str, ...]] = None) -> GroundTruth:
    """Uniformly random ``floor(sqrt(p))`` active features with unit coefficients."""
    if p < 1:
        raise BadConfig(f"p must be >= 1, got {p}")
    s = math.isqrt(p)
    active = seed.rng().choice(p, size=s, replace=False)
    names = feature_names or tuple(f"x{j}" for j in range(p))
    return GroundTruth.from_active(active, names)


def make_rule_set(
    x: np.ndarray,
    truth: GroundTruth,
    n_pairs: Union[int, str],
    coef: float,
    seed: SeedSpec,
) -> RuleSet:
    """
    Pairs of distinct active features with median thresholds.

    ``n_pairs="auto"`` shuffles the active set into ceil(s/2) pairs covering
    every active feature (an odd one out is paired with another random active
    feature). Larger explicit counts add random distinct pairs.
    """
    rng = seed.rng()
    active = np.array(truth.active_set)
    if active.size < 2:
        raise BadConfig("rule response needs at least 2 active features")
    order = [int(j) for j in rng.permutation(active)]
    pairs: List[Tuple[int, int]] = [(order[i], order[i + 1]) for i in range(0, len(order) - 1, 2)]
    if len(order) % 2:
        partner = int(rng.choice([j for j in order if j != order[-1]]))
        pairs.append((order[-1], partner))
    target = len(pairs) if n_pairs == "auto" else int(n_pairs)
    if target < 1:
        raise BadConfig(f"n_pairs must be >= 1, got {n_pairs}")
    while len(pairs) < target:
        j, k = (int(v) for v in rng.choice(active, size=2, replace=False))
        pairs.append((j, k))
    pairs = pairs[:target]
    medians = np.median(x, axis=0)
    rules = tuple(
        Rule(pair=(j, k), thresholds=(float(medians[j]), float(medians[k])), coef=float(coef)) for j, k in pairs
    )
    return RuleSet(rules)


def _noise(x: np.ndarray, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    if spec.kind is NoiseKind.GAUSSIAN:
        return spec.sd * rng.standard_normal(n)
    if spec.kind is NoiseKind.STUDENT_T:
        return spec.sd * rng.standard_t(spec.df, size=n)
    if spec.kind is NoiseKind.BLOCK_GAUSSIAN:
        blocks = np.arange(n) // int(spec.block_size)
        shared = rng.standard_normal(int(blocks[-1]) + 1)[blocks]
        own = rng.standard_normal(n)
        return spec.sd * (math.sqrt(spec.rho) * shared + math.sqrt(1.0 - spec.rho) * own)
    row_norms = np.einsum("ij,ij->i", x, x)
    c = 1.0 / float(row_norms.mean()) if spec.c == "auto" else float(spec.c)
    return np.sqrt(c * row_norms) * rng.standard_normal(n)


def gen_response(
    x: np.ndarray,
    truth: GroundTruth,
    config: SimConfig,
    rules: Optional[RuleSet] = None,
) -> np.ndarray:
    """
    Response for the configured setting: ``x beta + eps`` for the linear
    settings, thresholded pair products plus Gaussian noise for rule_response.
    Noise draws from ``SeedSpec(config.seed).child("noise")``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[1] != truth.beta.shape[0]:
        raise BadConfig(f"x has {x.shape[1]} columns, truth has {truth.beta.shape[0]}")
    rng = SeedSpec(config.seed).child("noise").rng()
    if config.misspec.kind is MisspecKind.RULE_RESPONSE:
        if rules is None:
            raise BadConfig("rule_response needs a rule set")
        signal = np.zeros(x.shape[0])
        for rule in rules.rules:
            (j, k), (tj, tk) = rule.pair, rule.thresholds
            signal += rule.coef * ((x[:, j] > tj) & (x[:, k] > tk))
        noise = NoiseSpec(NoiseKind.GAUSSIAN, sd=config.noise.sd)
        return signal + _noise(x, noise, rng)
    return x @ truth.beta + _noise(x, config.noise, rng)


def apply_misspec_drop(
    data: DataMatrix, truth: GroundTruth, k: int, seed: Optional[SeedSpec] = None
) -> Tuple[DataMatrix, GroundTruth]:
    """
    Hide ``k`` randomly chosen active columns from the matrix handed to fitting.

    The truth keeps the full generating active set and records the reduced
    visible one.

    Raises:
        KTooLarge: if k exceeds the number of visible active features
    """
    visible_active = list(truth.fitted_visible_set)
    if k < 0 or k > len(visible_active):
        raise KTooLarge(f"cannot drop {k} of {len(visible_active)} active features")
    if k == 0:
        return data, truth
    rng = (seed or SeedSpec(0).child("drop")).rng()
    dropped = {int(j) for j in rng.choice(visible_active, size=k, replace=False)}
    positions = [pos for pos, j in enumerate(truth.visible_features) if j in dropped]
    reduced = data.drop_columns(positions)
    new_truth = replace(
        truth,
        visible_features=tuple(j for j in truth.visible_features if j not in dropped),
        fitted_visible_set=tuple(j for j in truth.fitted_visible_set if j not in dropped),
    )
    LOG.info("Dropped %d active features before fitting: %s", k, sorted(dropped))
    return reduced, new_truth


def simulate(config: SimConfig) -> SimulatedData:
    """Features, active set, response and optional drop, all from ``config.seed``."""
    root = SeedSpec(config.seed)
    features = make_features(config.n, config.p_base, root.child("features"))
    truth = assign_active(features.p, root.child("active"), features.feature_names)
    rules = None
    if config.misspec.kind is MisspecKind.RULE_RESPONSE:
        rules = make_rule_set(features.x, truth, config.misspec.n_pairs, config.misspec.rule_coef, root.child("rules"))
        truth = GroundTruth.from_active(rules.members, features.feature_names)
    y = gen_response(features.x, truth, config, rules)
    data = DataMatrix(features.x, y, features.feature_names, standardized=True)
    if config.misspec.kind is MisspecKind.DROP_ACTIVE:
        data, truth = apply_misspec_drop(data, truth, config.drop_k, root.child("drop"))
    LOG.info(
        "Simulated setting=%s n=%d p=%d active=%d visible_active=%d",
        config.setting, data.n, data.p, len(truth.active_set), len(truth.fitted_visible_set),
    )
    return SimulatedData(data=data, truth=truth, config=config, rules=rules)
