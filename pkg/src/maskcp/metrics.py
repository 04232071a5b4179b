"""Distance, kernel, and quantile primitives.

Provides the weighted empirical quantile with a reserved mass at +infinity,
the heterogeneous Euclidean-overlap distance over incomplete vectors,
Gaussian kernel weights, and the median-pairwise-distance bandwidth rule.
All functions are pure; batched variants share the exact scan logic with
their scalar counterparts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from .core import MaskedDataset, MaskedSample
from .errors import (
    ConfigurationError,
    DimensionError,
    EmptyDistributionError,
    InsufficientDataError,
)


@dataclass(frozen=True)
class WeightedEmpirical:
    """Finite atoms with nonnegative weights plus a dedicated mass at +infinity."""

    values: np.ndarray
    weights: np.ndarray
    inf_mass: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if values.shape != weights.shape:
            raise DimensionError("values and weights must have equal length")
        if np.any(weights < 0) or self.inf_mass < 0:
            raise EmptyDistributionError("weights must be nonnegative")
        if weights.sum() + self.inf_mass <= 0:
            raise EmptyDistributionError("distribution carries no mass")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "inf_mass", float(self.inf_mass))

    @classmethod
    def uniform_with_inf(cls, values: np.ndarray) -> "WeightedEmpirical":
        """n unit atoms plus one unit of mass at +infinity (the conformal shape)."""
        values = np.asarray(values, dtype=float).ravel()
        return cls(values, np.ones(values.shape[0]), inf_mass=1.0)


def weighted_quantile(dist: WeightedEmpirical, level: float) -> float:
    """inf{z : normalized CDF(z) >= level}; +inf when finite mass never reaches it.

    Equal-valued atoms are merged before the scan, so the result is exact and
    independent of atom order.
    """
    if not 0.0 < level < 1.0:
        raise ConfigurationError(f"quantile level must lie in (0,1), got {level}")
    if dist.values.size == 0:
        return math.inf
    merged_vals, inverse = np.unique(dist.values, return_inverse=True)
    merged_w = np.zeros(merged_vals.shape[0])
    np.add.at(merged_w, inverse, dist.weights)
    cum = np.cumsum(merged_w)
    total = cum[-1] + dist.inf_mass
    if total <= 0:
        raise EmptyDistributionError("distribution carries no mass")
    threshold = level * total
    idx = int(np.searchsorted(cum, threshold, side="left"))
    if idx >= merged_vals.shape[0]:
        return math.inf
    return float(merged_vals[idx])


def quantile_rows(
    values: np.ndarray,
    weight_rows: np.ndarray,
    level: float,
    inf_mass: Union[float, np.ndarray] = 0.0,
) -> np.ndarray:
    """Row-wise weighted quantiles over a shared atom vector.

    ``weight_rows`` is (r, n): one weight vector per row over the same
    ``values`` (n,). Returns (r,) quantiles, +inf where the finite mass of a
    row never reaches ``level``. Matches :func:`weighted_quantile` scan
    semantics (cumulative mass compared against level * total).
    """
    values = np.asarray(values, dtype=float).ravel()
    weight_rows = np.atleast_2d(np.asarray(weight_rows, dtype=float))
    if weight_rows.shape[1] != values.shape[0]:
        raise DimensionError("weight rows must match the atom vector length")
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    cum = np.cumsum(weight_rows[:, order], axis=1)
    totals = cum[:, -1] + inf_mass
    thresholds = level * totals
    reached = cum >= thresholds[:, None]
    idx = reached.argmax(axis=1)
    out = sorted_vals[idx]
    out = np.where(reached.any(axis=1), out, np.inf)
    return out


def heom_distance(
    a: MaskedSample, b: MaskedSample, ranges: np.ndarray
) -> float:
    """Heterogeneous Euclidean-overlap distance between two incomplete vectors.

    Per-attribute distance is 1 when either entry is missing, else the
    absolute difference normalised by the training-column span; attributes
    combine in Euclidean fashion.
    """
    if a.d != b.d:
        raise DimensionError(f"dimension mismatch: {a.d} vs {b.d}")
    ranges = np.asarray(ranges, dtype=float)
    if ranges.shape != (a.d,):
        raise DimensionError("ranges must supply one span per column")
    return float(
        heom_cross(
            a.values[None, :],
            a.mask.bits[None, :],
            b.values[None, :],
            b.mask.bits[None, :],
            ranges,
        )[0, 0]
    )


def heom_cross(
    values_a: np.ndarray,
    mask_a: np.ndarray,
    values_b: np.ndarray,
    mask_b: np.ndarray,
    ranges: np.ndarray,
) -> np.ndarray:
    """(na, nb) HEOM distance matrix between two batches of masked rows."""
    a = np.where(mask_a, 0.0, values_a) / ranges
    b = np.where(mask_b, 0.0, values_b) / ranges
    diff = np.abs(a[:, None, :] - b[None, :, :])
    either_missing = mask_a[:, None, :] | mask_b[None, :, :]
    per = np.where(either_missing, 1.0, diff)
    return np.sqrt(np.einsum("ijk,ijk->ij", per, per))


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice and bandwidth for the localized conditional CDF."""

    bandwidth: float
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ConfigurationError(f"unsupported kernel kind: {self.kind!r}")
        if not self.bandwidth > 0:
            raise ConfigurationError("bandwidth must be positive")

    def evaluate(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.exp(-0.5 * u * u)


class KernelWeights(NamedTuple):
    weights: np.ndarray
    uniform_fallback: bool


def kernel_weights(
    targets: Union[MaskedDataset, Sequence[MaskedSample]],
    x: MaskedSample,
    spec: KernelSpec,
    ranges: np.ndarray,
) -> KernelWeights:
    """Normalised kernel weights of ``targets`` around ``x``.

    Falls back to uniform weights (flagged) when every kernel evaluation
    underflows to zero.
    """
    if not isinstance(targets, MaskedDataset):
        targets = MaskedDataset.from_samples(list(targets))
    if len(targets) == 0:
        raise InsufficientDataError("kernel weights need at least one target")
    dists = heom_cross(
        targets.values,
        targets.mask_matrix,
        x.values[None, :],
        x.mask.bits[None, :],
        np.asarray(ranges, dtype=float),
    )[:, 0]
    w, fell_back = normalized_kernel_rows(dists[None, :], spec)
    return KernelWeights(w[0], bool(fell_back[0]))


def normalized_kernel_rows(
    dist_rows: np.ndarray, spec: KernelSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalised kernel weights; rows whose mass underflows go uniform."""
    raw = spec.evaluate(dist_rows / spec.bandwidth)
    totals = raw.sum(axis=1)
    fallback = totals <= 0.0
    safe_totals = np.where(fallback, 1.0, totals)
    out = raw / safe_totals[:, None]
    if np.any(fallback):
        out[fallback] = 1.0 / dist_rows.shape[1]
    return out, fallback


def median_pairwise_bandwidth(
    points: Union[MaskedDataset, Sequence[MaskedSample]], ranges: np.ndarray
) -> float:
    """Median HEOM distance over all unordered distinct pairs.

    A zero median falls back to the smallest positive pairwise distance; if
    every pair coincides, returns 1.
    """
    if not isinstance(points, MaskedDataset):
        points = MaskedDataset.from_samples(list(points))
    n = len(points)
    if n < 2:
        raise InsufficientDataError("bandwidth rule needs at least two points")
    dmat = heom_cross(
        points.values,
        points.mask_matrix,
        points.values,
        points.mask_matrix,
        np.asarray(ranges, dtype=float),
    )
    iu = np.triu_indices(n, k=1)
    pairwise = dmat[iu]
    med = float(np.median(pairwise))
    if med > 0:
        return med
    positive = pairwise[pairwise > 0]
    if positive.size:
        return float(positive.min())
    return 1.0
