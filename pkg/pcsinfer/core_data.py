"""Dataset representation, standardization, splitting and seed derivation."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pcsinfer.errors import (
    BadConfig,
    BadFraction,
    ConstantColumn,
    DataError,
    DimensionMismatch,
    MalformedCsv,
)

__all__ = [
    "DataMatrix",
    "TrainTestSplit",
    "SeedSpec",
    "standardize",
    "split",
    "swap_halves",
    "read_csv",
    "write_csv",
]

LOG = logging.getLogger("pcsinfer.core_data")

MOMENT_TOL = 1e-10
MIN_SD = 1e-12
MAX_SEED = 2**64


def _frozen(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DataMatrix:
    """
    Feature matrix ``x`` (n x p) with response ``y`` and feature names.

    Arrays are copied and made read-only on construction, so instances can be
    shared freely between workers.
    """

    x: np.ndarray
    y: np.ndarray
    feature_names: Tuple[str, ...]
    standardized: bool = False

    def __post_init__(self) -> None:
        x = _frozen(self.x)
        y = _frozen(self.y).reshape(-1)
        if x.ndim != 2:
            raise DimensionMismatch(f"x must be 2-dimensional, got shape {x.shape}")
        n, p = x.shape
        if n < 2 or p < 1:
            raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise DimensionMismatch(f"y has {y.shape[0]} entries, x has {n} rows")
        if not np.all(np.isfinite(x)):
            raise DataError("x contains NaN or Inf")
        if not np.all(np.isfinite(y)):
            raise DataError("y contains NaN or Inf")
        names = tuple(str(name) for name in self.feature_names)
        if len(names) != p:
            raise DimensionMismatch(f"{len(names)} feature names for {p} columns")
        if self.standardized:
            means = x.mean(axis=0)
            sds = x.std(axis=0, ddof=1)
            if np.max(np.abs(means)) > MOMENT_TOL or np.max(np.abs(sds - 1.0)) > MOMENT_TOL:
                raise DataError("matrix flagged standardized but column moments are off")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    def subset(self, rows: Sequence[int]) -> "DataMatrix":
        """Rows ``rows`` (in the given order, repeats allowed); never flagged standardized."""
        idx = np.asarray(rows, dtype=np.intp)
        return DataMatrix(self.x[idx], self.y[idx], self.feature_names, standardized=False)

    def with_response(self, y: np.ndarray) -> "DataMatrix":
        return DataMatrix(self.x, y, self.feature_names, standardized=self.standardized)

    def drop_columns(self, columns: Sequence[int]) -> "DataMatrix":
        dropped = {int(j) for j in columns}
        keep = [j for j in range(self.p) if j not in dropped]
        return DataMatrix(
            self.x[:, keep],
            self.y,
            tuple(self.feature_names[j] for j in keep),
            standardized=self.standardized,
        )


@dataclass(frozen=True)
class TrainTestSplit:
    """Disjoint train/test index sets covering ``0..n-1``."""

    train_indices: Tuple[int, ...]
    test_indices: Tuple[int, ...]
    fraction: float

    @property
    def n(self) -> int:
        return len(self.train_indices) + len(self.test_indices)

    def validate(self, n: int) -> None:
        train = set(self.train_indices)
        test = set(self.test_indices)
        if train & test:
            raise BadFraction("train and test indices overlap")
        if train | test != set(range(n)) or len(train) + len(test) != n:
            raise BadFraction(f"split does not partition 0..{n - 1}")


@dataclass(frozen=True)
class SeedSpec:
    """
    A master seed plus a derivation path of ``(label, *indices)`` steps.

    The child seed is the first 8 bytes of BLAKE2b over the canonical JSON of
    ``[master_seed, path]``, so a stream depends only on where it sits in the
    derivation tree and never on execution order.

    Example:
        >>> root = SeedSpec(20240101)
        >>> root.child("bootstrap", 3).derived_seed == root.child("bootstrap", 3).derived_seed
        True
    """

    master_seed: int
    path: Tuple[Tuple, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        seed = int(self.master_seed)
        if not 0 <= seed < MAX_SEED:
            raise BadConfig(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        object.__setattr__(self, "master_seed", seed)
        object.__setattr__(self, "path", tuple(tuple(step) for step in self.path))

    def child(self, label: str, *indices: int) -> "SeedSpec":
        step = (str(label),) + tuple(int(i) for i in indices)
        return SeedSpec(self.master_seed, self.path + (step,))

    @property
    def derived_seed(self) -> int:
        payload = json.dumps([self.master_seed, [list(step) for step in self.path]], separators=(",", ":"))
        digest = hashlib.blake2b(payload.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.derived_seed)


def standardize(data: DataMatrix) -> DataMatrix:
    """
    Center every column and scale it to unit sample standard deviation.

    Uses the n-1 denominator. The response is left untouched.

    Raises:
        ConstantColumn: if a column has standard deviation <= 1e-12

    Example:
        >>> d = DataMatrix(np.array([[1.0], [2.0], [3.0]]), np.zeros(3), ("a",))
        >>> standardize(d).x.ravel().tolist()
        [-1.0, 0.0, 1.0]
    """
    means = data.x.mean(axis=0)
    sds = data.x.std(axis=0, ddof=1)
    for j, sd in enumerate(sds):
        if not sd > MIN_SD:
            raise ConstantColumn(j, data.feature_names[j])
    x = (data.x - means) / sds
    LOG.debug("Standardized %d columns over %d rows", data.p, data.n)
    return DataMatrix(x, data.y, data.feature_names, standardized=True)


def _round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def split(data: DataMatrix, fraction: float, seed: SeedSpec) -> TrainTestSplit:
    """
    Uniformly random train/test partition with ``round_half_up(fraction * n)`` test rows.

    Raises:
        BadFraction: if fraction is outside (0, 1) or leaves either side empty
    """
    if not 0.0 < fraction < 1.0:
        raise BadFraction(f"split fraction must lie in (0, 1), got {fraction}")
    n = data.n
    n_test = _round_half_up(fraction * n)
    if n * fraction < 1 or n_test < 1 or n_test >= n:
        raise BadFraction(f"fraction {fraction} leaves an empty side for n={n}")
    order = seed.rng().permutation(n)
    test = tuple(sorted(int(i) for i in order[:n_test]))
    train = tuple(sorted(int(i) for i in order[n_test:]))
    return TrainTestSplit(train_indices=train, test_indices=test, fraction=float(fraction))


def swap_halves(
    data: DataMatrix, partition: TrainTestSplit
) -> Tuple[Tuple[DataMatrix, DataMatrix], Tuple[DataMatrix, DataMatrix]]:
    """Both orderings ``(train, test)`` and ``(test, train)`` of a split."""
    partition.validate(data.n)
    first = data.subset(partition.train_indices)
    second = data.subset(partition.test_indices)
    return (first, second), (second, first)


def read_csv(path: str | Path, response: str) -> DataMatrix:
    """
    Load a numeric CSV: header row of feature names plus the response column.

    Lines starting with ``#`` are comments (the provenance line written by
    :func:`write_csv`).

    Raises:
        FileNotFoundError: if the file does not exist
        MalformedCsv: on ragged rows, non-numeric cells or a missing response column
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found at {path}")
    try:
        frame = pd.read_csv(path, comment="#", encoding="utf-8", sep=",", skip_blank_lines=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise MalformedCsv(f"{path}: {exc}") from exc
    if response not in frame.columns:
        raise MalformedCsv(f"{path}: response column '{response}' not in header")
    if frame.isna().to_numpy().any():
        bad_row = int(np.flatnonzero(frame.isna().to_numpy().any(axis=1))[0])
        raise MalformedCsv(f"{path}: row {bad_row + 1} is ragged or has empty cells")
    try:
        numeric = frame.apply(pd.to_numeric, errors="raise")
    except (ValueError, TypeError) as exc:
        raise MalformedCsv(f"{path}: non-numeric cell ({exc})") from exc
    features: List[str] = [str(c) for c in numeric.columns if c != response]
    LOG.info("Loaded %s: %d rows, %d features", path, len(numeric), len(features))
    return DataMatrix(
        numeric[features].to_numpy(dtype=float),
        numeric[response].to_numpy(dtype=float),
        tuple(features),
    )


def write_csv(data: DataMatrix, path: str | Path, response: str = "y", header: Optional[str] = None) -> Path:
    """Write features plus response; ``header`` becomes a leading ``#`` comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(data.x, columns=list(data.feature_names))
    frame[response] = data.y
    with open(path, "w", encoding="utf-8", newline="") as handle:
        if header:
            handle.write(f"# {header}\n")
        frame.to_csv(handle, index=False, float_format="%.17g", lineterminator="\n")
    return path
