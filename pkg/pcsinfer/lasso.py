"""Lasso fits by cyclic coordinate descent over a glmnet-style penalty path.

Objective: (1/2n) ||y - b0 - x beta||^2 + lambda ||beta||_1, intercept
unpenalized. The solver works on centered sufficient statistics (covariance
updates), sweeping all coordinates, then only the active set until it
settles, then all coordinates again to confirm.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import mean_squared_error

from pcsinfer.core_data import DataMatrix
from pcsinfer.errors import BadConfig, DegenerateResponse, DimensionMismatch, NumericalError

__all__ = [
    "FeatureSet",
    "LassoFit",
    "LambdaPath",
    "LassoProblem",
    "compute_lambda_path",
    "fit_lasso",
    "fit_path",
    "selected_features",
    "predict",
    "l2_error",
]

LOG = logging.getLogger("pcsinfer.lasso")

FeatureSet = FrozenSet[int]

CONVERGENCE_TOL = 1e-7
MAX_SWEEPS = 100_000
SELECTION_TOL = 1e-8
DEBUG_OBJECTIVE = os.getenv("PCS_DEBUG_OBJECTIVE", "false").lower() in {"1", "true", "yes"}


@dataclass(frozen=True)
class LassoFit:
    beta: np.ndarray
    intercept: float
    lam: float
    converged: bool
    iterations: int

    @property
    def p(self) -> int:
        return int(self.beta.shape[0])


@dataclass(frozen=True)
class LambdaPath:
    """Strictly decreasing, log-equispaced penalties from ``lambda_max`` down."""

    values: Tuple[float, ...]
    nlambda: int
    min_ratio: float

    @property
    def lambda_max(self) -> float:
        return self.values[0]

    def __len__(self) -> int:
        return len(self.values)


class LassoProblem:
    """
    Centered sufficient statistics of one training set.

    Building this once and fitting many penalties against it is how the path
    and the bootstrap grid avoid recomputing the Gram matrix.
    """

    def __init__(self, data: DataMatrix) -> None:
        x = data.x
        self.n, self.p = x.shape
        self.x_mean = x.mean(axis=0)
        self.y_mean = float(data.y.mean())
        xc = x - self.x_mean
        yc = data.y - self.y_mean
        # einsum keeps the reduction order fixed regardless of BLAS threading
        self.gram = np.einsum("ij,ik->jk", xc, xc) / self.n
        self.xty = np.einsum("ij,i->j", xc, yc) / self.n
        self.yty = float(np.einsum("i,i->", yc, yc)) / self.n
        self.diag = np.diag(self.gram).copy()
        self.y_is_constant = bool(np.ptp(data.y) == 0.0)

    @property
    def lambda_max(self) -> float:
        return float(np.max(np.abs(self.xty)))

    def objective(self, beta: np.ndarray, lam: float) -> float:
        quad = self.yty - 2.0 * float(beta @ self.xty) + float(beta @ self.gram @ beta)
        return 0.5 * quad + lam * float(np.sum(np.abs(beta)))

    def _sweep(self, beta: np.ndarray, grad: np.ndarray, lam: float, coords: Sequence[int]) -> float:
        max_delta = 0.0
        for j in coords:
            old = beta[j]
            d = self.diag[j]
            if d <= 0.0:
                new = 0.0
            else:
                rho = grad[j] + d * old
                new = math.copysign(max(abs(rho) - lam, 0.0), rho) / d
            if new != old:
                delta = new - old
                beta[j] = new
                grad -= self.gram[:, j] * delta
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        return max_delta

    def fit(
        self,
        lam: float,
        warm_start: Optional[np.ndarray] = None,
        *,
        tol: float = CONVERGENCE_TOL,
        max_sweeps: int = MAX_SWEEPS,
        check_objective: Optional[bool] = None,
    ) -> LassoFit:
        if lam < 0 or not np.isfinite(lam):
            raise BadConfig(f"lambda must be a finite nonnegative number, got {lam}")
        check = DEBUG_OBJECTIVE if check_objective is None else check_objective

        if lam >= self.lambda_max:
            return LassoFit(np.zeros(self.p), self.y_mean, float(lam), True, 0)

        if warm_start is None:
            beta = np.zeros(self.p)
        else:
            beta = np.array(warm_start, dtype=float, copy=True)
            if beta.shape != (self.p,):
                raise DimensionMismatch(f"warm start has shape {beta.shape}, expected ({self.p},)")

        all_coords = list(range(self.p))
        previous = self.objective(beta, lam) if check else 0.0
        sweeps = 0
        converged = False

        def _checked(delta: float) -> float:
            nonlocal previous
            if check:
                current = self.objective(beta, lam)
                if current > previous + 1e-12 * max(1.0, abs(previous)):
                    raise NumericalError(
                        f"lasso objective increased from {previous!r} to {current!r} at sweep {sweeps}"
                    )
                previous = current
            return delta

        while sweeps < max_sweeps:
            grad = self.xty - self.gram @ beta
            delta = _checked(self._sweep(beta, grad, lam, all_coords))
            sweeps += 1
            if delta < tol:
                converged = True
                break
            active = np.flatnonzero(beta).tolist()
            while sweeps < max_sweeps:
                delta = _checked(self._sweep(beta, grad, lam, active))
                sweeps += 1
                if delta < tol:
                    break

        if not converged:
            LOG.warning("Lasso did not converge at lambda=%.6g after %d sweeps", lam, sweeps)
        intercept = self.y_mean - float(self.x_mean @ beta)
        beta.setflags(write=False)
        return LassoFit(beta, intercept, float(lam), converged, sweeps)


def compute_lambda_path(
    train: DataMatrix, nlambda: int = 100, min_ratio: Union[float, str] = "auto"
) -> LambdaPath:
    """
    glmnet default penalty path for ``train``.

    ``lambda_max = max_j |x_j^T (y - ybar)| / n``; ``min_ratio="auto"`` is
    1e-4 when n > p and 1e-2 otherwise.

    Raises:
        DegenerateResponse: if y is constant
    """
    if nlambda < 1:
        raise BadConfig(f"nlambda must be >= 1, got {nlambda}")
    problem = LassoProblem(train)
    if problem.y_is_constant:
        raise DegenerateResponse("response is constant; no penalty path exists")
    lambda_max = problem.lambda_max
    if not lambda_max > 0.0:
        raise DegenerateResponse("response is orthogonal to every feature")
    if min_ratio == "auto":
        ratio = 1e-4 if train.n > train.p else 1e-2
    else:
        ratio = float(min_ratio)
        if not 0.0 < ratio < 1.0:
            raise BadConfig(f"min_ratio must lie in (0, 1), got {min_ratio}")
    if nlambda == 1:
        values = np.array([lambda_max])
    else:
        values = np.geomspace(lambda_max, lambda_max * ratio, nlambda)
        values[0] = lambda_max
        values[-1] = lambda_max * ratio
    LOG.debug("Lambda path: %d values from %.6g (min_ratio=%g)", nlambda, lambda_max, ratio)
    return LambdaPath(tuple(float(v) for v in values), int(nlambda), float(ratio))


def fit_lasso(train: DataMatrix, lam: float, warm_start: Optional[np.ndarray] = None) -> LassoFit:
    """Fit one penalty; non-convergence is reported through ``LassoFit.converged``."""
    return LassoProblem(train).fit(lam, warm_start)


def fit_path(train: DataMatrix, lambdas: Sequence[float], problem: Optional[LassoProblem] = None) -> List[LassoFit]:
    """
    Fit ``lambdas`` in the given order, each warm-started from the previous fit.

    Pass penalties in decreasing order for the usual path behaviour.
    """
    problem = problem or LassoProblem(train)
    fits: List[LassoFit] = []
    warm: Optional[np.ndarray] = None
    for lam in lambdas:
        fit = problem.fit(lam, warm)
        fits.append(fit)
        warm = fit.beta
    return fits


def selected_features(fit: LassoFit, tol: float = SELECTION_TOL) -> FeatureSet:
    """
    Indices whose coefficient exceeds ``tol`` in magnitude; the intercept never counts.

    Example:
        >>> fit = LassoFit(np.array([0.0, 0.5, -1e-12]), 0.0, 0.1, True, 1)
        >>> sorted(selected_features(fit))
        [1]
    """
    if tol < 0:
        raise BadConfig(f"selection tolerance must be >= 0, got {tol}")
    return frozenset(int(j) for j in np.flatnonzero(np.abs(fit.beta) > tol))


def predict(fit: LassoFit, x_new: np.ndarray) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(x_new, dtype=float))
    if rows.shape[1] != fit.p:
        raise DimensionMismatch(f"x_new has {rows.shape[1]} columns, fit has {fit.p}")
    return fit.intercept + rows @ fit.beta


def l2_error(y_hat: np.ndarray, y: np.ndarray) -> float:
    """Mean squared prediction error."""
    y_hat = np.asarray(y_hat, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y_hat.shape != y.shape:
        raise DimensionMismatch(f"prediction length {y_hat.shape[0]} != response length {y.shape[0]}")
    return float(mean_squared_error(y, y_hat))
