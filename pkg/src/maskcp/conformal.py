"""Interval constructors: split CP, CQR, CQR with exact missing-data
augmentation, nonexchangeable CP, and localized CP for missing covariates.

The missing-covariate constructors restrict calibration to available cases
(mask preceding the test mask), remask them to the test mask before scoring,
and then differ in how the score distribution is weighted:

- nonexchangeable CP sorts available cases farthest-first by masked-input
  distance and gives geometrically decaying weights to cases whose mask
  differs from the test mask (same-mask cases and the test point get the
  maximal weight 1);
- localized CP recentres every score by the level quantile of a
  kernel-smoothed conditional CDF of the training scores around each point,
  then conformalises the recentred scores with the usual +infinity atom.

Scalar constructors wrap the same batched kernels the benchmark harness
uses, so both paths are numerically identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Mask, MaskedDataset, MaskedSample, available_cases, remask_matrix
from .errors import ConfigurationError, DataError
from .metrics import (
    KernelSpec,
    WeightedEmpirical,
    heom_cross,
    normalized_kernel_rows,
    quantile_rows,
    weighted_quantile,
)
from .models import FittedPipeline

NO_AVAILABLE_CASES = "no_available_cases"
NO_AVAILABLE_TRAIN_CASES = "no_available_train_cases"
KERNEL_UNIFORM_FALLBACK = "kernel_uniform_fallback"
EMPTY_INTERVAL_CLAMPED = "empty_interval_clamped"


@dataclass(frozen=True)
class PredictionInterval:
    """Symmetric interval [center - half_width, center + half_width]."""

    center: float
    half_width: float
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if math.isnan(self.center) or math.isnan(self.half_width):
            raise DataError("interval endpoints must not be NaN")
        if self.half_width < 0:
            raise DataError("half_width must be nonnegative")

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width

    @property
    def length(self) -> float:
        return self.upper - self.lower

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.half_width)

    def contains(self, y: float) -> bool:
        return self.lower <= y <= self.upper


def _infinite_interval(center: float, *flags: str) -> PredictionInterval:
    return PredictionInterval(center, math.inf, flags)


# ---------------------------------------------------------------------------
# score computation


@dataclass(frozen=True)
class ConformalScore:
    """One nonconformity score with its calibration-row provenance.

    ``kind`` is "abs" (|Y - prediction|, necessarily nonnegative) or "cqr"
    (max of the two quantile-bound violations, may be negative).
    """

    value: float
    source_index: int
    kind: str = "abs"

    def __post_init__(self):
        if self.kind not in ("abs", "cqr"):
            raise DataError(f"unknown score kind {self.kind!r}")
        if self.kind == "abs" and self.value < 0:
            raise DataError("absolute-residual scores are nonnegative")


def score_records(
    pipeline: FittedPipeline, ds: MaskedDataset, kind: str = "abs"
) -> list[ConformalScore]:
    """Per-row scores with provenance, for inspection and debugging."""
    values = abs_scores(pipeline, ds) if kind == "abs" else cqr_scores(pipeline, ds)
    return [ConformalScore(float(v), i, kind) for i, v in enumerate(values)]


def abs_scores(pipeline: FittedPipeline, ds: MaskedDataset) -> np.ndarray:
    """|Y - prediction| on the dataset's own masks."""
    if ds.y is None:
        raise DataError("calibration data must carry responses")
    preds = pipeline.predict_matrix(ds.values, ds.mask_matrix)
    return np.abs(ds.y - preds)


def remasked_abs_scores(
    pipeline: FittedPipeline, ds: MaskedDataset, idx: np.ndarray, m: Mask
) -> np.ndarray:
    """|Y - prediction| after remasking the selected rows to mask ``m``."""
    if ds.y is None:
        raise DataError("calibration data must carry responses")
    values, mask = remask_matrix(ds.values[idx], ds.mask_matrix[idx], m)
    preds = pipeline.predict_matrix(values, mask)
    return np.abs(ds.y[idx] - preds)


def cqr_scores(pipeline: FittedPipeline, ds: MaskedDataset) -> np.ndarray:
    """max(lo - Y, Y - hi) on the dataset's own masks."""
    if ds.y is None:
        raise DataError("calibration data must carry responses")
    lo, hi = pipeline.predict_bounds_matrix(ds.values, ds.mask_matrix)
    return np.maximum(lo - ds.y, ds.y - hi)


def remasked_cqr_scores(
    pipeline: FittedPipeline, ds: MaskedDataset, idx: np.ndarray, m: Mask
) -> np.ndarray:
    if ds.y is None:
        raise DataError("calibration data must carry responses")
    values, mask = remask_matrix(ds.values[idx], ds.mask_matrix[idx], m)
    lo, hi = pipeline.predict_bounds_matrix(values, mask)
    return np.maximum(lo - ds.y[idx], ds.y[idx] - hi)


# ---------------------------------------------------------------------------
# split CP and CQR


def split_cp_halfwidth(
    pipeline: FittedPipeline, calib: MaskedDataset, alpha: float
) -> float:
    scores = abs_scores(pipeline, calib)
    return weighted_quantile(WeightedEmpirical.uniform_with_inf(scores), 1.0 - alpha)


def split_cp(
    pipeline: FittedPipeline,
    calib: MaskedDataset,
    test: MaskedSample,
    alpha: float,
) -> PredictionInterval:
    """Plain split conformal interval; its width ignores the test mask."""
    if len(calib) == 0:
        raise DataError("calibration set is empty")
    half = split_cp_halfwidth(pipeline, calib, alpha)
    return PredictionInterval(pipeline.predict(test), half)


def cqr_quantile(
    pipeline: FittedPipeline, calib: MaskedDataset, alpha: float
) -> float:
    scores = cqr_scores(pipeline, calib)
    return weighted_quantile(WeightedEmpirical.uniform_with_inf(scores), 1.0 - alpha)


def interval_from_bounds(lo: float, hi: float, q: float) -> PredictionInterval:
    """[lo - q, hi + q] expressed as centre/half-width; clamps if empty."""
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) + q
    if half < 0:
        return PredictionInterval(center, 0.0, (EMPTY_INTERVAL_CLAMPED,))
    return PredictionInterval(center, half)


def cqr(
    pipeline: FittedPipeline,
    calib: MaskedDataset,
    test: MaskedSample,
    alpha: float,
) -> PredictionInterval:
    """Conformalized quantile regression on imputed calibration points."""
    if len(calib) == 0:
        raise DataError("calibration set is empty")
    q = cqr_quantile(pipeline, calib, alpha)
    lo, hi = pipeline.predict_bounds(test)
    return interval_from_bounds(lo, hi, q)


def cqr_mda_quantile(
    pipeline: FittedPipeline, calib: MaskedDataset, m: Mask, alpha: float
) -> tuple[float, int]:
    """Equal-weight CQR quantile over available cases remasked to ``m``."""
    idx = available_cases(calib, m)
    if idx.size == 0:
        return math.inf, 0
    scores = remasked_cqr_scores(pipeline, calib, idx, m)
    q = weighted_quantile(WeightedEmpirical.uniform_with_inf(scores), 1.0 - alpha)
    return q, int(idx.size)


def cqr_mda_exact(
    pipeline: FittedPipeline,
    calib: MaskedDataset,
    test: MaskedSample,
    alpha: float,
) -> PredictionInterval:
    """CQR with exact missing-data augmentation at the test mask."""
    q, n_avail = cqr_mda_quantile(pipeline, calib, test.mask, alpha)
    lo, hi = pipeline.predict_bounds(test)
    if n_avail == 0:
        return _infinite_interval(0.5 * (lo + hi), NO_AVAILABLE_CASES)
    return interval_from_bounds(lo, hi, q)


# ---------------------------------------------------------------------------
# nonexchangeable CP


@dataclass(frozen=True)
class NexcpWeights:
    """Distance-ordered weights: raw (test weight last) and normalised."""

    raw: np.ndarray
    normalized: np.ndarray
    rho: float


def nexcp_weights(same_mask_sorted: np.ndarray, rho: float) -> NexcpWeights:
    """Weights for available cases already sorted farthest-first.

    Position i (1-based) of k sorted cases gets rho^(k+1-i) when its mask
    differs from the test mask and 1 when it matches; the test point's
    weight is 1 and sits last.
    """
    same = np.asarray(same_mask_sorted, dtype=bool)
    k = same.shape[0]
    w = rho ** (k - np.arange(k, dtype=float))
    w[same] = 1.0
    raw = np.append(w, 1.0)
    return NexcpWeights(raw, raw / raw.sum(), rho)


def nexcp_halfwidths_batch(
    scores: np.ndarray,
    same_mask: np.ndarray,
    dist_rows: np.ndarray,
    rho: float,
    alpha: float,
) -> np.ndarray:
    """Half-widths for a batch of test points sharing one mask context.

    ``scores``/``same_mask`` describe the available calibration cases (in
    original order); ``dist_rows`` is (r, k), one row of distances per test
    point. Ties in distance keep original calibration order.
    """
    scores = np.asarray(scores, dtype=float)
    same_mask = np.asarray(same_mask, dtype=bool)
    dist_rows = np.atleast_2d(np.asarray(dist_rows, dtype=float))
    r, k = dist_rows.shape
    order = np.argsort(-dist_rows, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(k), (r, k)).copy(), axis=1)
    weights = rho ** (k - ranks).astype(float)
    weights = np.where(same_mask, 1.0, weights)
    return quantile_rows(scores, weights, 1.0 - alpha, inf_mass=1.0)


def nexcp(
    pipeline: FittedPipeline,
    calib: MaskedDataset,
    test: MaskedSample,
    alpha: float,
    rho: float,
    ranges: np.ndarray,
) -> PredictionInterval:
    """Nonexchangeable conformal interval for a test point with missing covariates."""
    if not 0.0 < rho < 1.0:
        raise ConfigurationError("rho must lie in (0, 1)")
    m = test.mask
    idx = available_cases(calib, m)
    center = pipeline.predict(test)
    if idx.size == 0:
        return _infinite_interval(center, NO_AVAILABLE_CASES)
    scores = remasked_abs_scores(pipeline, calib, idx, m)
    same = np.all(calib.mask_matrix[idx] == m.bits, axis=1)
    dists = heom_cross(
        calib.values[idx],
        calib.mask_matrix[idx],
        test.values[None, :],
        test.mask.bits[None, :],
        np.asarray(ranges, dtype=float),
    )[:, 0]
    half = float(nexcp_halfwidths_batch(scores, same, dists[None, :], rho, alpha)[0])
    return PredictionInterval(center, half)


# ---------------------------------------------------------------------------
# localized CP


@dataclass(frozen=True)
class LocalizedScore:
    """Score recentred by its local conditional quantile (exact identity)."""

    base: float
    local_quantile: float

    @property
    def adjusted(self) -> float:
        return self.base - self.local_quantile


@dataclass(frozen=True)
class LcpMaskState:
    """Per-test-mask quantities shared by every test point with that mask."""

    mask: Mask
    level: float
    train_idx: np.ndarray
    train_scores: np.ndarray
    train_values: np.ndarray
    train_mask: np.ndarray
    correction: float
    kernel_fallback: bool


def lcp_mask_state(
    pipeline: FittedPipeline,
    train: MaskedDataset,
    calib: MaskedDataset,
    m: Mask,
    kernel: KernelSpec,
    ranges: np.ndarray,
    alpha: float,
) -> Optional[LcpMaskState]:
    """Build the shared localized-CP state for mask ``m``; None when no
    available cases exist in either split."""
    train_idx = available_cases(train, m)
    calib_idx = available_cases(calib, m)
    if train_idx.size == 0 or calib_idx.size == 0:
        return None
    ranges = np.asarray(ranges, dtype=float)
    train_scores = remasked_abs_scores(pipeline, train, train_idx, m)
    calib_scores = remasked_abs_scores(pipeline, calib, calib_idx, m)
    dists = heom_cross(
        calib.values[calib_idx],
        calib.mask_matrix[calib_idx],
        train.values[train_idx],
        train.mask_matrix[train_idx],
        ranges,
    )
    kernel_rows, fallback = normalized_kernel_rows(dists, kernel)
    local_q = quantile_rows(train_scores, kernel_rows, 1.0 - alpha)
    adjusted = calib_scores - local_q
    correction = weighted_quantile(
        WeightedEmpirical.uniform_with_inf(adjusted), 1.0 - alpha
    )
    return LcpMaskState(
        mask=m,
        level=1.0 - alpha,
        train_idx=train_idx,
        train_scores=train_scores,
        train_values=train.values[train_idx],
        train_mask=train.mask_matrix[train_idx],
        correction=correction,
        kernel_fallback=bool(fallback.any()),
    )


def lcp_halfwidths_batch(
    state: LcpMaskState,
    test_values: np.ndarray,
    test_mask: np.ndarray,
    kernel: KernelSpec,
    ranges: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Half-widths plus per-row kernel-fallback flags for a batch of test rows."""
    dists = heom_cross(
        test_values, test_mask, state.train_values, state.train_mask,
        np.asarray(ranges, dtype=float),
    )
    kernel_rows, fallback = normalized_kernel_rows(dists, kernel)
    test_q = quantile_rows(state.train_scores, kernel_rows, state.level)
    return test_q + state.correction, fallback


def lcp(
    pipeline: FittedPipeline,
    train: MaskedDataset,
    calib: MaskedDataset,
    test: MaskedSample,
    alpha: float,
    kernel: KernelSpec,
    ranges: np.ndarray,
) -> PredictionInterval:
    """Localized conformal interval for a test point with missing covariates."""
    m = test.mask
    center = pipeline.predict(test)
    state = lcp_mask_state(pipeline, train, calib, m, kernel, ranges, alpha)
    if state is None:
        if available_cases(train, m).size == 0:
            return _infinite_interval(center, NO_AVAILABLE_TRAIN_CASES)
        return _infinite_interval(center, NO_AVAILABLE_CASES)
    halves, fallback = lcp_halfwidths_batch(
        state, test.values[None, :], test.mask.bits[None, :], kernel, ranges
    )
    flags = []
    if state.kernel_fallback or fallback.any():
        flags.append(KERNEL_UNIFORM_FALLBACK)
    half = float(halves[0])
    if half < 0:
        return PredictionInterval(center, 0.0, tuple(flags) + (EMPTY_INTERVAL_CLAMPED,))
    return PredictionInterval(center, half, tuple(flags))
