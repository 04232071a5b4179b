"""Symmetric imputation and regression learners.

The imputer is a chained-equations scheme: column means initialise the
missing entries, then per-column linear conditional-mean models are refit on
the completed matrix for a fixed number of sweeps in deterministic column
order. At prediction time each missing coordinate is filled by its column's
model in a single pass over the observed coordinates, mean-filling any
predictor slot that is itself missing; a row with nothing observed falls
back to the column means. Observed coordinates always pass through
unchanged.

Regressors are ordinary least squares and a pair of linear pinball-loss fits
solved by subgradient descent with a fixed iteration budget (fixed budgets
keep fitting exactly symmetric in the row order, up to float roundoff).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import Mask, MaskedDataset, MaskedSample
from .errors import ConfigurationError, DataError

RIDGE_FALLBACK = 1e-8


@dataclass(frozen=True)
class LinearModel:
    """Affine predictor y = coef @ x + intercept."""

    coef: np.ndarray
    intercept: float
    rank_deficient: bool = False

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.coef + self.intercept


def fit_least_squares(x: np.ndarray, y: np.ndarray) -> LinearModel:
    """OLS with intercept; rank-deficient designs refit with a tiny ridge penalty."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = x.shape
    if n <= d:
        raise DataError(f"least squares needs n > d, got n={n}, d={d}")
    a = np.column_stack([np.ones(n), x])
    theta, _, rank, _ = np.linalg.lstsq(a, y, rcond=None)
    if rank < d + 1:
        gram = a.T @ a + RIDGE_FALLBACK * np.eye(d + 1)
        theta = np.linalg.solve(gram, a.T @ y)
        return LinearModel(theta[1:], float(theta[0]), rank_deficient=True)
    return LinearModel(theta[1:], float(theta[0]))


def _pinball_loss(residuals: np.ndarray, tau: float) -> float:
    return float(np.mean(np.where(residuals >= 0, tau * residuals, (tau - 1) * residuals)))


def _fit_pinball(
    a: np.ndarray, y: np.ndarray, tau: float, max_iters: int, tol: float
) -> tuple[np.ndarray, bool]:
    """Subgradient descent on the mean pinball loss, tracking the best iterate.

    Warm-started from the OLS plane shifted to the empirical tau-quantile of
    its residuals. Runs the full budget (no data-dependent early exit) so the
    computation is invariant to row order; the convergence flag records
    whether the final refinement window still improved beyond ``tol``.
    """
    n = a.shape[0]
    theta, _, _, _ = np.linalg.lstsq(a, y, rcond=None)
    theta[0] += np.quantile(y - a @ theta, tau)
    best = theta.copy()
    best_obj = _pinball_loss(y - a @ best, tau)
    scale = max(float(np.std(y)), 1e-12)
    window = max(50, max_iters // 10)
    obj_at_window_start = best_obj
    converged = False
    for t in range(1, max_iters + 1):
        r = y - a @ theta
        grad = -(a.T @ (tau - (r < 0))) / n
        theta = theta - (0.05 * scale / np.sqrt(t)) * grad
        obj = _pinball_loss(y - a @ theta, tau)
        if obj < best_obj:
            best_obj = obj
            best = theta.copy()
        if t % window == 0:
            converged = (
                obj_at_window_start - best_obj <= tol * max(1.0, abs(best_obj))
            )
            obj_at_window_start = best_obj
    return best, converged


@dataclass(frozen=True)
class QuantilePair:
    """Two pinball-loss planes; predictions are swap-repaired so lo <= hi."""

    lo: LinearModel
    hi: LinearModel
    level_lo: float
    level_hi: float
    converged: bool = True

    def predict_bounds(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo = self.lo.predict(x)
        hi = self.hi.predict(x)
        return np.minimum(lo, hi), np.maximum(lo, hi)


def fit_quantile_pair(
    x: np.ndarray,
    y: np.ndarray,
    alpha: float,
    max_iters: int = 1500,
    tol: float = 1e-5,
) -> QuantilePair:
    """Linear quantile planes at levels alpha/2 and 1 - alpha/2."""
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError("alpha must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = x.shape
    if n <= d:
        raise DataError(f"quantile regression needs n > d, got n={n}, d={d}")
    # standardise columns for conditioning; fold back into raw coefficients
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    a = np.column_stack([np.ones(n), (x - mu) / sd])
    models = []
    converged = True
    for tau in (alpha / 2.0, 1.0 - alpha / 2.0):
        theta, ok = _fit_pinball(a, y, tau, max_iters, tol)
        converged = converged and ok
        coef = theta[1:] / sd
        intercept = float(theta[0] - np.dot(coef, mu))
        models.append(LinearModel(coef, intercept))
    return QuantilePair(models[0], models[1], alpha / 2.0, 1.0 - alpha / 2.0, converged)


@dataclass(frozen=True)
class FittedImputer:
    """Per-column conditional-mean models plus per-column fallback means."""

    column_means: np.ndarray
    # per column: (coef over the other columns, intercept), or None when the
    # column has no usable model (d == 1 or the column was never observed)
    models: tuple[Optional[tuple[np.ndarray, float]], ...]
    iterations: int
    all_missing_columns: tuple[int, ...] = ()

    @property
    def d(self) -> int:
        return self.column_means.shape[0]

    def transform_matrix(self, values: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Impute a batch of rows; observed entries pass through unchanged.

        Single pass: each missing coordinate is predicted from the other
        coordinates, with missing predictor slots mean-filled. Rows with no
        observed coordinate at all fall back to the column means.
        """
        values = np.asarray(values, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        filled = np.where(mask, self.column_means, values)
        out = filled.copy()
        usable = mask.any(axis=1) & ~mask.all(axis=1)
        if np.any(usable):
            for j in range(self.d):
                model = self.models[j]
                if model is None:
                    continue
                rows = np.flatnonzero(usable & mask[:, j])
                if rows.size == 0:
                    continue
                coef, intercept = model
                others = np.delete(np.arange(self.d), j)
                out[rows, j] = filled[rows][:, others] @ coef + intercept
        return out

    def transform(self, s: MaskedSample) -> np.ndarray:
        return self.transform_matrix(s.values[None, :], s.mask.bits[None, :])[0]


def impute(imp: FittedImputer, s: MaskedSample) -> np.ndarray:
    """Complete one sample: observed coordinates kept, missing ones filled."""
    if s.d != imp.d:
        raise DataError(f"sample dimension {s.d} != imputer dimension {imp.d}")
    return imp.transform(s)


def fit_chained_imputer(train: MaskedDataset, iters: int = 5) -> FittedImputer:
    """Fit the chained-equations imputer on a masked training set."""
    if len(train) == 0:
        raise DataError("imputer needs a nonempty training set")
    values = train.values
    mask = train.mask_matrix
    n, d = values.shape
    col_observed = (~mask).sum(axis=0)
    all_missing = tuple(int(j) for j in np.flatnonzero(col_observed == 0))
    means = np.zeros(d)
    has_obs = col_observed > 0
    if has_obs.any():
        means[has_obs] = np.nanmean(
            np.where(mask, np.nan, values)[:, has_obs], axis=0
        )

    if d == 1:
        return FittedImputer(means, (None,), 0, all_missing)

    completed = np.where(mask, means, values)
    models: list[Optional[tuple[np.ndarray, float]]] = [None] * d
    for _ in range(iters):
        for j in range(d):
            rows = ~mask[:, j]
            if rows.sum() <= d:  # too few observed responses for a stable fit
                models[j] = None
                continue
            others = np.delete(np.arange(d), j)
            a = np.column_stack([np.ones(int(rows.sum())), completed[rows][:, others]])
            theta, _, rank, _ = np.linalg.lstsq(a, values[rows, j], rcond=None)
            if rank < a.shape[1]:
                gram = a.T @ a + RIDGE_FALLBACK * np.eye(a.shape[1])
                theta = np.linalg.solve(gram, a.T @ values[rows, j])
            models[j] = (theta[1:], float(theta[0]))
            fill = mask[:, j]
            if np.any(fill):
                completed[fill, j] = (
                    completed[fill][:, others] @ theta[1:] + theta[0]
                )
    return FittedImputer(means, tuple(models), iters, all_missing)


@dataclass(frozen=True)
class FittedPipeline:
    """Imputer composed with a regressor, both trained on the same split."""

    imputer: FittedImputer
    regressor: Union[LinearModel, QuantilePair]

    @property
    def is_quantile(self) -> bool:
        return isinstance(self.regressor, QuantilePair)

    def predict_matrix(self, values: np.ndarray, mask: np.ndarray) -> np.ndarray:
        if self.is_quantile:
            raise ConfigurationError("quantile pipeline has bounds, not a centre")
        completed = self.imputer.transform_matrix(values, mask)
        return self.regressor.predict(completed)

    def predict(self, s: MaskedSample) -> float:
        return float(self.predict_matrix(s.values[None, :], s.mask.bits[None, :])[0])

    def predict_bounds_matrix(
        self, values: np.ndarray, mask: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        if not self.is_quantile:
            raise ConfigurationError("mean pipeline has a centre, not bounds")
        completed = self.imputer.transform_matrix(values, mask)
        return self.regressor.predict_bounds(completed)

    def predict_bounds(self, s: MaskedSample) -> tuple[float, float]:
        lo, hi = self.predict_bounds_matrix(s.values[None, :], s.mask.bits[None, :])
        return float(lo[0]), float(hi[0])


def fit_mean_pipeline(train: MaskedDataset, iters: int = 5) -> FittedPipeline:
    """Chained imputer + OLS on the imputed training matrix."""
    if train.y is None:
        raise DataError("training set must carry responses")
    imputer = fit_chained_imputer(train, iters)
    completed = imputer.transform_matrix(train.values, train.mask_matrix)
    return FittedPipeline(imputer, fit_least_squares(completed, train.y))


def fit_quantile_pipeline(
    train: MaskedDataset, alpha: float, iters: int = 5, **fit_kwargs
) -> FittedPipeline:
    """Chained imputer + pinball-loss quantile pair on the imputed matrix."""
    if train.y is None:
        raise DataError("training set must carry responses")
    imputer = fit_chained_imputer(train, iters)
    completed = imputer.transform_matrix(train.values, train.mask_matrix)
    return FittedPipeline(imputer, fit_quantile_pair(completed, train.y, alpha, **fit_kwargs))
