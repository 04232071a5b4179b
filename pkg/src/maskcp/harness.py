"""Monte-Carlo benchmark runner.

Each repetition draws fresh train/calibration/test data from the Gaussian
linear model, calibrates the amputation mechanism on the training
covariates, fits the imputation+regression pipelines, and evaluates every
enabled interval method marginally and per group (exact mask, or pattern
size with masks drawn from M | size). Repetitions own disjoint seeded RNG
streams, so results are bit-identical for any worker count; aggregation is
an ordered reduction over repetition index.

Infinite intervals count as covered but are excluded from mean lengths and
reported as a separate count.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import conformal
from .conformal import LcpMaskState, cqr_mda_quantile, cqr_quantile, split_cp_halfwidth
from .core import Mask, MaskedDataset, available_cases
from .errors import ConfigurationError, UnreachableGroupError
from .metrics import KernelSpec, heom_cross, median_pairwise_bandwidth
from .models import fit_mean_pipeline, fit_quantile_pipeline
from .synth import AmputeConfig, AmputeModel, DgpConfig, fit_ampute_model, gen_gaussian_linear

METHOD_ORDER = ("cp", "cqr", "cqr_mda_exact", "nexcp", "lcp")
MEAN_METHODS = frozenset({"cp", "nexcp", "lcp"})
QUANTILE_METHODS = frozenset({"cqr", "cqr_mda_exact"})
GROUPINGS = ("by_mask", "by_pattern_size")

MARGINAL_LABEL = "mar"

# purpose indices for per-repetition RNG streams
_RNG_TRAIN, _RNG_CALIB, _RNG_MARGINAL, _RNG_GROUP_BASE = 0, 1, 2, 3


@dataclass(frozen=True)
class ExperimentConfig:
    dgp: DgpConfig
    ampute: AmputeConfig
    n_train: int = 500
    n_calib: int = 250
    n_test_marginal: int = 2000
    n_test_per_group: int = 100
    alpha: float = 0.1
    methods: tuple[str, ...] = ("cp", "nexcp", "lcp")
    reps: int = 50
    master_seed: int = 0
    rho: float = 0.99
    grouping: str = "by_mask"
    jobs: int = 1
    collect_records: bool = False
    imputer_iters: int = 5
    max_group_draws: int = 5_000_000

    def __post_init__(self):
        for name in ("n_train", "n_calib", "n_test_marginal", "n_test_per_group", "reps"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError("alpha must lie in (0, 1)")
        if not 0.0 < self.rho < 1.0:
            raise ConfigurationError("rho must lie in (0, 1)")
        if self.master_seed < 0:
            raise ConfigurationError("master_seed must be nonnegative")
        if self.grouping not in GROUPINGS:
            raise ConfigurationError(f"grouping must be one of {GROUPINGS}")
        unknown = set(self.methods) - set(METHOD_ORDER)
        if unknown or not self.methods:
            raise ConfigurationError(f"methods must be a nonempty subset of {METHOD_ORDER}")
        object.__setattr__(
            self, "methods",
            tuple(m for m in METHOD_ORDER if m in set(self.methods)),
        )
        if self.n_train <= self.dgp.d or self.jobs < 1:
            raise ConfigurationError("need n_train > d and jobs >= 1")


@dataclass(frozen=True)
class ReportRow:
    method: str
    group: str
    coverage: float
    mean_length: float
    n_points: int
    n_infinite: int
    reps: int


@dataclass(frozen=True)
class PointRecords:
    """Flat per-point dump for recount-style verification."""

    rep: np.ndarray
    method: np.ndarray
    group: np.ndarray
    y: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __len__(self) -> int:
        return self.rep.shape[0]


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[ReportRow, ...]
    warnings: tuple[str, ...]
    records: Optional[PointRecords] = None

    def row(self, method: str, group: str) -> ReportRow:
        for r in self.rows:
            if r.method == method and r.group == group:
                return r
        raise KeyError(f"no report row for ({method!r}, {group!r})")


GroupKey = Union[Mask, int]


def enumerate_groups(d: int, maskable: Sequence[int], grouping: str) -> list[tuple[str, GroupKey]]:
    """Deterministic group list; the fully-missing pattern is never a group."""
    if grouping == "by_mask":
        groups = []
        for subset_bits in itertools.product((0, 1), repeat=len(maskable)):
            bits = np.zeros(d, dtype=bool)
            for col, b in zip(maskable, subset_bits):
                bits[col] = bool(b)
            if bits.all():
                continue
            m = Mask(bits)
            groups.append((str(m), m))
        groups.sort(key=lambda kv: kv[0])
        return groups
    max_size = len(maskable) if len(maskable) < d else d - 1
    return [(str(s), s) for s in range(max_size + 1)]


def _rng(master_seed: int, rep: int, *purpose: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, rep, *purpose])


def mask_group_sampler(
    dgp: DgpConfig,
    model: AmputeModel,
    key: GroupKey,
    count: int,
    rng: np.random.Generator,
    max_draws: int = 5_000_000,
) -> MaskedDataset:
    """Rejection-sample test points whose mask matches ``key``.

    ``key`` is either an exact mask or a pattern size; accepted masks then
    follow the mechanism's conditional law M | size(M). Raises
    :class:`UnreachableGroupError` when the draw budget runs out.
    """
    want_values, want_masks, want_y = [], [], []
    got = 0
    drawn = 0
    chunk = 10_000
    while got < count:
        if drawn >= max_draws:
            raise UnreachableGroupError(
                f"group {key} unreached after {drawn} draws ({got}/{count} accepted)"
            )
        n = min(chunk, max_draws - drawn)
        x, y = gen_gaussian_linear(dgp, n, rng)
        masks = model.apply(x, rng)
        drawn += n
        if isinstance(key, Mask):
            accept = np.all(masks == key.bits, axis=1)
        else:
            accept = masks.sum(axis=1) == int(key)
        if accept.any():
            want_values.append(x[accept])
            want_masks.append(masks[accept])
            want_y.append(y[accept])
            got += int(accept.sum())
    values = np.concatenate(want_values)[:count]
    mask = np.concatenate(want_masks)[:count]
    y = np.concatenate(want_y)[:count]
    return MaskedDataset(values, mask, y)


class _MaskContexts:
    """Per-repetition cache of mask-specific calibration quantities."""

    def __init__(self, cfg, mean_pipe, q_pipe, train, calib, ranges, kernel):
        self.cfg = cfg
        self.mean_pipe = mean_pipe
        self.q_pipe = q_pipe
        self.train = train
        self.calib = calib
        self.ranges = ranges
        self.kernel = kernel
        self._nexcp: dict[bytes, tuple] = {}
        self._lcp: dict[bytes, Optional[LcpMaskState]] = {}
        self._cqr_mda: dict[bytes, tuple[float, int]] = {}

    def nexcp_parts(self, m: Mask):
        key = m.bits.tobytes()
        if key not in self._nexcp:
            idx = available_cases(self.calib, m)
            if idx.size == 0:
                self._nexcp[key] = (idx, None, None, None, None)
            else:
                scores = conformal.remasked_abs_scores(self.mean_pipe, self.calib, idx, m)
                same = np.all(self.calib.mask_matrix[idx] == m.bits, axis=1)
                self._nexcp[key] = (
                    idx, scores, same,
                    self.calib.values[idx], self.calib.mask_matrix[idx],
                )
        return self._nexcp[key]

    def lcp_state(self, m: Mask) -> Optional[LcpMaskState]:
        key = m.bits.tobytes()
        if key not in self._lcp:
            self._lcp[key] = conformal.lcp_mask_state(
                self.mean_pipe, self.train, self.calib, m,
                self.kernel, self.ranges, self.cfg.alpha,
            )
        return self._lcp[key]

    def cqr_mda_q(self, m: Mask) -> tuple[float, int]:
        key = m.bits.tobytes()
        if key not in self._cqr_mda:
            self._cqr_mda[key] = cqr_mda_quantile(
                self.q_pipe, self.calib, m, self.cfg.alpha
            )
        return self._cqr_mda[key]


def _eval_bounds(
    cfg: ExperimentConfig,
    ctxs: _MaskContexts,
    ds: MaskedDataset,
    cp_half: Optional[float],
    cqr_q: Optional[float],
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-method (lower, upper) arrays for every point of ``ds``."""
    n = len(ds)
    out = {m: (np.empty(n), np.empty(n)) for m in cfg.methods}
    needs_mean = bool(MEAN_METHODS & set(cfg.methods))
    needs_q = bool(QUANTILE_METHODS & set(cfg.methods))
    centers = ctxs.mean_pipe.predict_matrix(ds.values, ds.mask_matrix) if needs_mean else None
    if needs_q:
        q_lo, q_hi = ctxs.q_pipe.predict_bounds_matrix(ds.values, ds.mask_matrix)

    if "cp" in cfg.methods:
        lo, up = out["cp"]
        lo[:] = centers - cp_half
        up[:] = centers + cp_half
    if "cqr" in cfg.methods:
        lo, up = out["cqr"]
        lo[:] = q_lo - cqr_q
        up[:] = q_hi + cqr_q
        _clamp_crossing(lo, up)

    unique_masks, inverse = np.unique(ds.mask_matrix, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)  # some numpy 2.0.x return (n, 1) here
    for u in range(unique_masks.shape[0]):
        rows = np.flatnonzero(inverse == u)
        m = Mask(unique_masks[u])
        if "nexcp" in cfg.methods:
            lo, up = out["nexcp"]
            idx, scores, same, cal_vals, cal_mask = ctxs.nexcp_parts(m)
            if idx.size == 0:
                lo[rows], up[rows] = -np.inf, np.inf
            else:
                dists = heom_cross(
                    ds.values[rows], ds.mask_matrix[rows], cal_vals, cal_mask, ctxs.ranges
                )
                halves = conformal.nexcp_halfwidths_batch(
                    scores, same, dists, cfg.rho, cfg.alpha
                )
                lo[rows] = centers[rows] - halves
                up[rows] = centers[rows] + halves
        if "lcp" in cfg.methods:
            lo, up = out["lcp"]
            state = ctxs.lcp_state(m)
            if state is None:
                lo[rows], up[rows] = -np.inf, np.inf
            else:
                halves, _ = conformal.lcp_halfwidths_batch(
                    state, ds.values[rows], ds.mask_matrix[rows], ctxs.kernel, ctxs.ranges
                )
                halves = np.maximum(halves, 0.0)
                lo[rows] = centers[rows] - halves
                up[rows] = centers[rows] + halves
        if "cqr_mda_exact" in cfg.methods:
            lo, up = out["cqr_mda_exact"]
            q_m, n_avail = ctxs.cqr_mda_q(m)
            if n_avail == 0:
                lo[rows], up[rows] = -np.inf, np.inf
            else:
                lo[rows] = q_lo[rows] - q_m
                up[rows] = q_hi[rows] + q_m
                _clamp_crossing(lo, up, rows)
    return out


def _clamp_crossing(lo: np.ndarray, up: np.ndarray, rows=slice(None)) -> None:
    l, u = lo[rows], up[rows]
    crossed = l > u
    if np.any(crossed):
        mid = 0.5 * (l[crossed] + u[crossed])
        l[crossed] = mid
        u[crossed] = mid
        lo[rows] = l
        up[rows] = u


@dataclass
class _RepResult:
    rep: int
    # (method, group) -> (covered bool array, lengths float array)
    cells: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]]
    warnings: list[str]
    records: Optional[list[tuple]]  # (method, group, y, lower, upper) rows


def _run_rep(cfg: ExperimentConfig, rep: int, groups) -> _RepResult:
    rng_train = _rng(cfg.master_seed, rep, _RNG_TRAIN)
    x_tr, y_tr = gen_gaussian_linear(cfg.dgp, cfg.n_train, rng_train)
    model = fit_ampute_model(x_tr, cfg.ampute)
    train = MaskedDataset(x_tr, model.apply(x_tr, rng_train), y_tr)

    rng_calib = _rng(cfg.master_seed, rep, _RNG_CALIB)
    x_ca, y_ca = gen_gaussian_linear(cfg.dgp, cfg.n_calib, rng_calib)
    calib = MaskedDataset(x_ca, model.apply(x_ca, rng_calib), y_ca)

    needs_mean = bool(MEAN_METHODS & set(cfg.methods))
    needs_q = bool(QUANTILE_METHODS & set(cfg.methods))
    mean_pipe = fit_mean_pipeline(train, cfg.imputer_iters) if needs_mean else None
    q_pipe = (
        fit_quantile_pipeline(train, cfg.alpha, cfg.imputer_iters) if needs_q else None
    )
    ranges = train.heom_ranges

    kernel = None
    if "lcp" in cfg.methods:
        pool_values = np.concatenate([train.values, calib.values])
        pool_mask = np.concatenate([train.mask_matrix, calib.mask_matrix])
        h = median_pairwise_bandwidth(MaskedDataset(pool_values, pool_mask), ranges)
        kernel = KernelSpec(h)

    ctxs = _MaskContexts(cfg, mean_pipe, q_pipe, train, calib, ranges, kernel)
    cp_half = split_cp_halfwidth(mean_pipe, calib, cfg.alpha) if "cp" in cfg.methods else None
    cqr_q = cqr_quantile(q_pipe, calib, cfg.alpha) if "cqr" in cfg.methods else None

    warnings: list[str] = []
    eval_sets: list[tuple[str, MaskedDataset]] = []
    rng_marginal = _rng(cfg.master_seed, rep, _RNG_MARGINAL)
    x_te, y_te = gen_gaussian_linear(cfg.dgp, cfg.n_test_marginal, rng_marginal)
    eval_sets.append(
        (MARGINAL_LABEL, MaskedDataset(x_te, model.apply(x_te, rng_marginal), y_te))
    )
    for g_index, (label, key) in enumerate(groups):
        rng_group = _rng(cfg.master_seed, rep, _RNG_GROUP_BASE, g_index)
        try:
            group_ds = mask_group_sampler(
                cfg.dgp, model, key, cfg.n_test_per_group, rng_group, cfg.max_group_draws
            )
        except UnreachableGroupError as exc:
            warnings.append(f"rep {rep}: {exc}")
            continue
        eval_sets.append((label, group_ds))

    cells: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}
    records: Optional[list[tuple]] = [] if cfg.collect_records else None
    for label, ds in eval_sets:
        bounds = _eval_bounds(cfg, ctxs, ds, cp_half, cqr_q)
        for method in cfg.methods:
            lo, up = bounds[method]
            covered = (ds.y >= lo) & (ds.y <= up)
            lengths = up - lo
            cells[(method, label)] = (covered, lengths)
            if records is not None:
                records.extend(
                    (method, label, float(yv), float(lv), float(uv))
                    for yv, lv, uv in zip(ds.y, lo, up)
                )
    return _RepResult(rep, cells, warnings, records)


def _run_rep_star(args) -> _RepResult:
    return _run_rep(*args)


def run_experiment(cfg: ExperimentConfig) -> EvalReport:
    """Run all repetitions and aggregate coverage/length per method and group."""
    maskable = cfg.ampute.resolve_maskable(cfg.dgp.d)
    groups = enumerate_groups(cfg.dgp.d, maskable, cfg.grouping)
    tasks = [(cfg, rep, groups) for rep in range(cfg.reps)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_rep_star, tasks))
    else:
        results = [_run_rep_star(t) for t in tasks]
    results.sort(key=lambda r: r.rep)

    labels = [MARGINAL_LABEL] + [label for label, _ in groups]
    rows: list[ReportRow] = []
    warnings: list[str] = []
    for res in results:
        warnings.extend(res.warnings)
    for method in cfg.methods:
        for label in labels:
            covered_parts, length_parts, contributing = [], [], 0
            for res in results:
                cell = res.cells.get((method, label))
                if cell is None:
                    continue
                covered_parts.append(cell[0])
                length_parts.append(cell[1])
                contributing += 1
            if not covered_parts:
                warnings.append(f"group {label} dropped: unreachable in every repetition")
                continue
            covered = np.concatenate(covered_parts)
            lengths = np.concatenate(length_parts)
            finite = np.isfinite(lengths)
            mean_length = float(lengths[finite].mean()) if finite.any() else float("nan")
            rows.append(
                ReportRow(
                    method=method,
                    group=label,
                    coverage=float(covered.mean()),
                    mean_length=mean_length,
                    n_points=int(covered.shape[0]),
                    n_infinite=int((~finite).sum()),
                    reps=contributing,
                )
            )
    # deduplicate dropped-group warnings
    warnings = list(dict.fromkeys(warnings))

    records = None
    if cfg.collect_records:
        reps_col, methods_col, groups_col, ys, los, ups = [], [], [], [], [], []
        for res in results:
            for method, label, yv, lv, uv in res.records:
                reps_col.append(res.rep)
                methods_col.append(method)
                groups_col.append(label)
                ys.append(yv)
                los.append(lv)
                ups.append(uv)
        records = PointRecords(
            rep=np.array(reps_col, dtype=int),
            method=np.array(methods_col, dtype=object),
            group=np.array(groups_col, dtype=object),
            y=np.array(ys),
            lower=np.array(los),
            upper=np.array(ups),
        )
    return EvalReport(tuple(rows), tuple(warnings), records)
