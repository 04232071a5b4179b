"""Mask algebra, masked samples/datasets, and available-case selection.

Missingness is carried by an explicit boolean mask (True = missing), never
by a sentinel float: stored values at missing positions are NaN for
convenience, but the mask is the single source of truth, so NaN payloads in
real data cannot alias missingness.

All containers are immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import (
    DataError,
    DimensionError,
    MaskConsistencyError,
    MaskOrderError,
)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Mask:
    """Binary missingness pattern: ``bits[j]`` True means covariate j is missing."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1:
            raise DimensionError("mask must be a 1-d vector")
        if bits.dtype != np.bool_:
            vals = np.unique(bits)
            if not np.all(np.isin(vals, (0, 1))):
                raise MaskConsistencyError("mask entries must be 0/1")
            bits = bits.astype(bool)
        object.__setattr__(self, "bits", _frozen(bits))

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "Mask":
        return cls(np.asarray(list(bits)))

    @classmethod
    def zeros(cls, d: int) -> "Mask":
        return cls(np.zeros(d, dtype=bool))

    @classmethod
    def ones(cls, d: int) -> "Mask":
        return cls(np.ones(d, dtype=bool))

    @property
    def d(self) -> int:
        return self.bits.shape[0]

    @property
    def size(self) -> int:
        """Number of missing coordinates (the pattern size)."""
        return int(self.bits.sum())

    def obs_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.bits)

    def mis_indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def precedes(self, other: "Mask") -> bool:
        return mask_precedes(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(
            np.all(self.bits == other.bits)
        )

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def __str__(self) -> str:
        return "[" + "".join("1" if b else "0" for b in self.bits) + "]"

    def __repr__(self) -> str:
        return f"Mask({str(self)})"


def mask_precedes(m_tilde: Mask, m: Mask) -> bool:
    """True iff every coordinate missing under ``m_tilde`` is missing under ``m``."""
    if m_tilde.d != m.d:
        raise DimensionError(f"mask lengths differ: {m_tilde.d} vs {m.d}")
    return bool(np.all(m_tilde.bits <= m.bits))


@dataclass(frozen=True)
class MaskedSample:
    """One observation: covariates with a missingness mask and optional response.

    ``values[j]`` is NaN exactly where ``mask.bits[j]`` is True; observed
    entries must be finite.
    """

    values: np.ndarray
    mask: Mask
    y: Optional[float] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise DimensionError("sample values must be a 1-d vector")
        if values.shape[0] != self.mask.d:
            raise DimensionError(
                f"values length {values.shape[0]} != mask length {self.mask.d}"
            )
        observed = ~self.mask.bits
        if not np.all(np.isfinite(values[observed])):
            raise MaskConsistencyError(
                "observed entries must be finite; missingness is carried by the mask"
            )
        values = values.copy()
        values[self.mask.bits] = np.nan
        object.__setattr__(self, "values", _frozen(values))
        if self.y is not None:
            y = float(self.y)
            if not np.isfinite(y):
                raise DataError("response must be finite")
            object.__setattr__(self, "y", y)

    @classmethod
    def from_optional(
        cls, x: Sequence[Optional[float]], y: Optional[float] = None
    ) -> "MaskedSample":
        """Build from a sequence where ``None`` marks a missing entry."""
        bits = np.array([v is None for v in x], dtype=bool)
        values = np.array([np.nan if v is None else float(v) for v in x])
        return cls(values, Mask(bits), y)

    @property
    def d(self) -> int:
        return self.mask.d

    @property
    def x_obs(self) -> np.ndarray:
        return self.values[~self.mask.bits]


class MaskedDataset:
    """Immutable collection of masked samples sharing one dimension.

    Backed by dense arrays for vectorised work: ``values`` is (n, d) with
    NaN at missing positions, ``mask_matrix`` is (n, d) bool, ``y`` is (n,)
    or None. Column ranges are computed from observed entries only.
    """

    def __init__(
        self,
        values: np.ndarray,
        mask_matrix: np.ndarray,
        y: Optional[np.ndarray] = None,
    ):
        values = np.asarray(values, dtype=float)
        mask_matrix = np.asarray(mask_matrix)
        if mask_matrix.dtype != np.bool_:
            mask_matrix = mask_matrix.astype(bool)
        if values.ndim != 2 or mask_matrix.shape != values.shape:
            raise DimensionError("values and mask matrix must share shape (n, d)")
        observed = ~mask_matrix
        if not np.all(np.isfinite(values[observed])):
            raise MaskConsistencyError("observed entries must be finite")
        values = values.copy()
        values[mask_matrix] = np.nan
        self._values = _frozen(values)
        self._mask = _frozen(mask_matrix)
        if y is not None:
            y = np.asarray(y, dtype=float)
            if y.shape != (values.shape[0],):
                raise DimensionError("y must have one entry per sample")
            if not np.all(np.isfinite(y)):
                raise DataError("responses must be finite")
            y = _frozen(y.copy())
        self._y = y
        self._column_ranges: Optional[np.ndarray] = None

    @classmethod
    def from_samples(cls, samples: Sequence[MaskedSample]) -> "MaskedDataset":
        if not samples:
            raise DataError("cannot build a dataset from zero samples")
        d = samples[0].d
        if any(s.d != d for s in samples):
            raise DimensionError("all samples must share dimension d")
        values = np.stack([s.values for s in samples])
        mask = np.stack([s.mask.bits for s in samples])
        ys = [s.y for s in samples]
        if all(v is None for v in ys):
            y = None
        elif any(v is None for v in ys):
            raise DataError("either all samples carry a response or none do")
        else:
            y = np.array(ys, dtype=float)
        return cls(values, mask, y)

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def mask_matrix(self) -> np.ndarray:
        return self._mask

    @property
    def y(self) -> Optional[np.ndarray]:
        return self._y

    @property
    def d(self) -> int:
        return self._values.shape[1]

    def __len__(self) -> int:
        return self._values.shape[0]

    def __getitem__(self, i: int) -> MaskedSample:
        yi = None if self._y is None else float(self._y[i])
        return MaskedSample(self._values[i], Mask(self._mask[i]), yi)

    def __iter__(self) -> Iterator[MaskedSample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def samples(self) -> list[MaskedSample]:
        return list(self)

    def mask_at(self, i: int) -> Mask:
        return Mask(self._mask[i])

    def with_y(self, y: np.ndarray) -> "MaskedDataset":
        return MaskedDataset(self._values, self._mask, y)

    def subset(self, indices: np.ndarray) -> "MaskedDataset":
        y = None if self._y is None else self._y[indices]
        return MaskedDataset(self._values[indices], self._mask[indices], y)

    @property
    def column_ranges(self) -> np.ndarray:
        """(d, 2) per-column (min, max) over observed entries; NaN if none observed."""
        if self._column_ranges is None:
            cleaned = np.where(self._mask, np.nan, self._values)
            any_observed = (~self._mask).any(axis=0)
            lo = np.full(self.d, np.nan)
            hi = np.full(self.d, np.nan)
            lo[any_observed] = np.nanmin(cleaned[:, any_observed], axis=0)
            hi[any_observed] = np.nanmax(cleaned[:, any_observed], axis=0)
            self._column_ranges = _frozen(np.stack([lo, hi], axis=1))
        return self._column_ranges

    @property
    def heom_ranges(self) -> np.ndarray:
        """Per-column normalisation spans; zero or undefined spans become 1."""
        cr = self.column_ranges
        span = cr[:, 1] - cr[:, 0]
        span = np.where(np.isfinite(span) & (span > 0), span, 1.0)
        return span


def available_cases(ds: MaskedDataset, m: Mask) -> np.ndarray:
    """Indices of samples whose mask precedes ``m``, in original order."""
    if ds.d != m.d:
        raise DimensionError(f"dataset dimension {ds.d} != mask length {m.d}")
    ok = ~(ds.mask_matrix & ~m.bits).any(axis=1)
    return np.flatnonzero(ok)


def remask(s: MaskedSample, m_target: Mask) -> MaskedSample:
    """Hide additional entries of ``s`` so its mask becomes exactly ``m_target``.

    Requires ``s.mask ⪯ m_target``; never reveals a value.
    """
    if not mask_precedes(s.mask, m_target):
        raise MaskOrderError(
            f"sample mask {s.mask} does not precede target {m_target}"
        )
    values = s.values.copy()
    values[m_target.bits] = np.nan
    return MaskedSample(values, m_target, s.y)


def remask_matrix(
    values: np.ndarray, mask_matrix: np.ndarray, m_target: Mask
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised remasking of rows already known to precede ``m_target``."""
    out = values.copy()
    out[:, m_target.bits] = np.nan
    mask = np.broadcast_to(m_target.bits, mask_matrix.shape).copy()
    return out, mask
