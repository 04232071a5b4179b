import itertools
import math

import numpy as np
import pytest

from maskcp import conformal
from maskcp.conformal import (
    EMPTY_INTERVAL_CLAMPED,
    NO_AVAILABLE_CASES,
    LocalizedScore,
    PredictionInterval,
    cqr,
    cqr_mda_exact,
    lcp,
    nexcp,
    nexcp_weights,
    split_cp,
)
from maskcp.core import Mask, MaskedDataset, MaskedSample, available_cases
from maskcp.errors import DataError
from maskcp.harness import _eval_bounds, _MaskContexts
from maskcp.metrics import (
    KernelSpec,
    WeightedEmpirical,
    median_pairwise_bandwidth,
    weighted_quantile,
)
from maskcp.models import (
    FittedPipeline,
    LinearModel,
    QuantilePair,
    fit_chained_imputer,
    fit_mean_pipeline,
    fit_quantile_pipeline,
)
from maskcp.synth import AmputeConfig, DgpConfig, ampute, gen_gaussian_linear


def masked_ds(values, mask, y=None):
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    return MaskedDataset(np.where(mask, np.nan, values), mask, y)


def masked_sample(vals, y=None):
    arr = np.array([np.nan if v is None else float(v) for v in vals])
    return MaskedSample(arr, Mask(np.isnan(arr)), y)


def constant_pipeline(d, value=0.0):
    """Pipeline predicting a constant, for score-shape tests."""
    train = masked_ds(np.zeros((d + 2, d)), np.zeros((d + 2, d), dtype=bool))
    imputer = fit_chained_imputer(train)
    return FittedPipeline(imputer, LinearModel(np.zeros(d), value))


def synthetic_problem(seed, d=3, n_train=200, n_calib=100, mech="mcar"):
    rng = np.random.default_rng(seed)
    dgp = DgpConfig.benchmark(d)
    x, y = gen_gaussian_linear(dgp, n_train, rng)
    train = ampute(x, AmputeConfig(mech, 0.2), rng).with_y(y)
    xc, yc = gen_gaussian_linear(dgp, n_calib, rng)
    calib = ampute(xc, AmputeConfig(mech, 0.2), rng).with_y(yc)
    return train, calib


class TestSplitCp:
    def test_third_smallest_at_quarter_level(self):
        pipe = constant_pipeline(1)
        calib = masked_ds([[0.0]] * 3, np.zeros((3, 1), dtype=bool), y=[1.0, 2.0, 3.0])
        out = split_cp(pipe, calib, masked_sample([0.0]), alpha=0.25)
        assert out.half_width == 3.0
        assert out.center == 0.0

    def test_small_sample_goes_infinite(self):
        pipe = constant_pipeline(1)
        calib = masked_ds([[0.0]] * 3, np.zeros((3, 1), dtype=bool), y=[1.0, 2.0, 3.0])
        out = split_cp(pipe, calib, masked_sample([0.0]), alpha=0.1)
        assert out.is_infinite
        assert out.contains(1e9)

    def test_missing_responses_rejected(self):
        pipe = constant_pipeline(1)
        calib = masked_ds([[0.0]] * 3, np.zeros((3, 1), dtype=bool))
        with pytest.raises(DataError):
            split_cp(pipe, calib, masked_sample([0.0]), alpha=0.25)


class TestNexcp:
    def test_same_mask_everywhere_reduces_to_split(self):
        train, _ = synthetic_problem(0)
        pipe = fit_mean_pipeline(train)
        rng = np.random.default_rng(1)
        mask = np.tile([True, False, False], (40, 1))
        values = np.where(mask, np.nan, rng.normal(size=(40, 3)))
        calib = MaskedDataset(values, mask, rng.normal(size=40))
        test = masked_sample([None, 0.3, -0.2])
        got = nexcp(pipe, calib, test, 0.1, 0.99, train.heom_ranges)
        ref = split_cp(pipe, calib, test, 0.1)
        assert got.half_width == ref.half_width
        assert got.center == ref.center

    def test_two_case_brute_force_weighted_cdf(self):
        train, _ = synthetic_problem(2, d=2)
        pipe = fit_mean_pipeline(train)
        ranges = train.heom_ranges
        calib = MaskedDataset(
            np.array([[0.4, 1.0], [0.6, np.nan]]),
            np.array([[False, False], [False, True]]),
            np.array([1.2, -0.4]),
        )
        test = masked_sample([0.5, None])
        rho = 0.5
        m = test.mask
        idx = available_cases(calib, m)
        assert idx.tolist() == [0, 1]
        scores = conformal.remasked_abs_scores(pipe, calib, idx, m)
        from maskcp.metrics import heom_distance

        dists = np.array(
            [heom_distance(calib[i], test, ranges) for i in idx]
        )
        order = np.argsort(-dists, kind="stable")
        same_sorted = np.array(
            [bool(np.all(calib.mask_matrix[idx[o]] == m.bits)) for o in order]
        )
        w = nexcp_weights(same_sorted, rho)
        assert w.raw[-1] == 1.0
        assert abs(w.normalized.sum() - 1.0) < 1e-12

        def brute_force_quantile(level):
            cdf_points = sorted(scores[order])
            for v in cdf_points:
                mass = sum(
                    wn
                    for wn, s in zip(w.normalized[:-1], scores[order])
                    if s <= v
                )
                if mass >= level:
                    return v
            return math.inf

        for alpha in (0.5, 0.45, 0.1):
            got = nexcp(pipe, calib, test, alpha, rho, ranges)
            assert got.half_width == brute_force_quantile(1 - alpha)

    def test_empty_available_cases_flagged_infinite(self):
        train, _ = synthetic_problem(3, d=2)
        pipe = fit_mean_pipeline(train)
        calib = MaskedDataset(
            np.array([[np.nan, 1.0]]), np.array([[True, False]]), np.array([0.5])
        )
        test = masked_sample([0.2, None])
        out = nexcp(pipe, calib, test, 0.1, 0.99, train.heom_ranges)
        assert out.is_infinite
        assert NO_AVAILABLE_CASES in out.flags

    def test_same_mask_points_get_maximal_raw_weight(self):
        w = nexcp_weights(np.array([False, True, False, True]), rho=0.8)
        assert w.raw[1] == 1.0 and w.raw[3] == 1.0
        assert np.all(w.raw <= 1.0)
        # geometric part increases toward the nearest (last) position
        assert w.raw[0] == pytest.approx(0.8**4)
        assert w.raw[2] == pytest.approx(0.8**2)


class TestExchangeabilityNoLoss:
    """With fixed position weights, non-coverage over all score assignments
    stays below alpha (zero total-variation case of the coverage bound)."""

    @pytest.mark.parametrize("alpha", [0.1, 0.25, 0.5])
    @pytest.mark.parametrize(
        "scores,same_mask",
        [
            ((0.3, 1.7, 0.9, 2.2, 0.1), (False,) * 4),
            ((1.0, 1.0, 2.0, 0.5, 3.1), (True, False, False, True)),
            ((0.0, 0.0, 0.0, 1.0, 2.0, 4.0), (False, True, False, False, False)),
        ],
    )
    def test_enumerated_noncoverage_below_alpha(self, alpha, scores, same_mask):
        scores = np.array(scores)
        n = scores.size - 1
        same_mask = np.array(same_mask)
        dists = np.arange(n, 0, -1, dtype=float)  # fixed farthest-first layout
        noncover = 0
        total = 0
        for perm in itertools.permutations(range(n + 1)):
            arranged = scores[list(perm)]
            half = conformal.nexcp_halfwidths_batch(
                arranged[:n], same_mask, dists[None, :], 0.7, alpha
            )[0]
            noncover += arranged[n] > half
            total += 1
        assert noncover / total <= alpha + 1e-12


class TestLcp:
    def test_huge_bandwidth_matches_split_on_available_cases(self):
        train, calib = synthetic_problem(4)
        pipe = fit_mean_pipeline(train)
        ranges = train.heom_ranges
        test = masked_sample([None, 0.7, 1.1])
        m = test.mask
        out = lcp(pipe, train, calib, test, 0.1, KernelSpec(1e12), ranges)
        idx = available_cases(calib, m)
        scores = conformal.remasked_abs_scores(pipe, calib, idx, m)
        ref = weighted_quantile(WeightedEmpirical.uniform_with_inf(scores), 0.9)
        assert out.half_width == pytest.approx(ref, rel=1e-9)

    def test_single_training_case_gives_point_mass_quantile(self):
        train_one = MaskedDataset(
            np.array([[0.5, 1.0, -0.3]]), np.zeros((1, 3), dtype=bool), np.array([2.0])
        )
        _, calib = synthetic_problem(5)
        pipe = fit_mean_pipeline(synthetic_problem(5)[0])
        test = masked_sample([None, 0.0, 0.0])
        state = conformal.lcp_mask_state(
            pipe, train_one, calib, test.mask, KernelSpec(0.5),
            np.ones(3), 0.1,
        )
        assert state.train_scores.size == 1
        # every local CDF is a point mass at the single training score
        single = float(state.train_scores[0])
        idx = available_cases(calib, test.mask)
        calib_scores = conformal.remasked_abs_scores(pipe, calib, idx, test.mask)
        adjusted_ref = calib_scores - single
        ref = weighted_quantile(
            WeightedEmpirical.uniform_with_inf(adjusted_ref), 0.9
        )
        assert state.correction == ref

    def test_localized_score_identity_is_exact(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            base, q = rng.normal(size=2)
            s = LocalizedScore(base, q)
            assert s.adjusted == base - q

    def test_empty_train_cases_flagged(self):
        train = MaskedDataset(
            np.array([[np.nan, 1.0]]), np.array([[True, False]]), np.array([0.0])
        )
        _, calib2 = synthetic_problem(7, d=2)
        pipe = fit_mean_pipeline(synthetic_problem(7, d=2)[0])
        test = masked_sample([0.1, None])
        out = lcp(pipe, train, calib2, test, 0.1, KernelSpec(1.0), np.ones(2))
        assert out.is_infinite
        assert conformal.NO_AVAILABLE_TRAIN_CASES in out.flags

    def test_bandwidth_must_be_positive(self):
        with pytest.raises(Exception):
            KernelSpec(-1.0)


class TestCqr:
    @staticmethod
    def _pipeline_with_bounds(d, lo_intercept, hi_intercept, slope=0.0):
        train = masked_ds(np.zeros((d + 2, d)), np.zeros((d + 2, d), dtype=bool))
        imputer = fit_chained_imputer(train)
        coef = np.full(d, slope)
        pair = QuantilePair(
            LinearModel(coef, lo_intercept), LinearModel(coef, hi_intercept),
            0.125, 0.875,
        )
        return FittedPipeline(imputer, pair)

    def test_order_statistic_toy(self):
        # constant bounds [0, 4]; y values 1, 0, 6 give scores -1, 0, 2
        pipe = self._pipeline_with_bounds(1, 0.0, 4.0)
        calib = masked_ds([[0.0]] * 3, np.zeros((3, 1), dtype=bool), y=[1.0, 0.0, 6.0])
        out = cqr(pipe, calib, masked_sample([0.0]), alpha=0.25)
        assert out.lower == -2.0 and out.upper == 6.0

    def test_perfect_quantiles_shrink_inside(self):
        rng = np.random.default_rng(8)
        n = 400
        x = rng.normal(size=(n, 1))
        u = rng.uniform(-0.9, 0.9, size=n)
        y = x[:, 0] + u
        imputer = fit_chained_imputer(
            masked_ds(x, np.zeros_like(x, dtype=bool))
        )
        pair = QuantilePair(
            LinearModel(np.array([1.0]), -0.9), LinearModel(np.array([1.0]), 0.9),
            0.05, 0.95,
        )
        pipe = FittedPipeline(imputer, pair)
        calib = masked_ds(x, np.zeros_like(x, dtype=bool), y=y)
        scores = conformal.cqr_scores(pipe, calib)
        assert np.all(scores <= 0)
        out = cqr(pipe, calib, masked_sample([0.5]), alpha=0.1)
        assert out.lower >= 0.5 - 0.9 - 1e-12
        assert out.upper <= 0.5 + 0.9 + 1e-12

    def test_mda_reduces_to_cqr_when_masks_match(self):
        train, _ = synthetic_problem(9)
        qpipe = fit_quantile_pipeline(train, 0.2)
        rng = np.random.default_rng(10)
        mask = np.tile([False, True, False], (30, 1))
        values = np.where(mask, np.nan, rng.normal(size=(30, 3)))
        calib = MaskedDataset(values, mask, rng.normal(size=30))
        test = masked_sample([0.1, None, 0.4])
        a = cqr_mda_exact(qpipe, calib, test, 0.2)
        b = cqr(qpipe, calib, test, 0.2)
        assert a.lower == b.lower and a.upper == b.upper

    def test_mda_hand_traced_toy(self):
        # imputer trained on x in {1,2,3}: column mean 2; bounds x -/+ 1
        train = masked_ds([[1.0], [2.0], [3.0]], np.zeros((3, 1), dtype=bool))
        imputer = fit_chained_imputer(train)
        pair = QuantilePair(
            LinearModel(np.array([1.0]), -1.0), LinearModel(np.array([1.0]), 1.0),
            0.2, 0.8,
        )
        pipe = FittedPipeline(imputer, pair)
        calib = MaskedDataset(
            np.array([[5.0], [np.nan]]),
            np.array([[False], [True]]),
            np.array([2.5, 1.0]),
        )
        test = masked_sample([None])
        # remasked to all-missing: imputed x=2, bounds [1, 3]; scores -0.5, 0
        out = cqr_mda_exact(pipe, calib, test, alpha=0.4)
        assert out.lower == 1.0 and out.upper == 3.0

    def test_mda_empty_available_flagged(self):
        train, _ = synthetic_problem(11, d=2)
        qpipe = fit_quantile_pipeline(train, 0.2)
        calib = MaskedDataset(
            np.array([[np.nan, 1.0]]), np.array([[True, False]]), np.array([0.5])
        )
        test = masked_sample([0.2, None])
        out = cqr_mda_exact(qpipe, calib, test, 0.2)
        assert out.is_infinite
        assert NO_AVAILABLE_CASES in out.flags


class TestIntervalContract:
    def test_negative_half_width_rejected(self):
        with pytest.raises(DataError):
            PredictionInterval(0.0, -1.0)

    def test_nan_rejected(self):
        with pytest.raises(DataError):
            PredictionInterval(float("nan"), 1.0)

    def test_contains_and_length(self):
        iv = PredictionInterval(1.0, 2.0)
        assert iv.lower == -1.0 and iv.upper == 3.0
        assert iv.contains(3.0) and not iv.contains(3.0001)
        assert iv.length == 4.0

    def test_clamped_interval_from_crossing_bounds(self):
        out = conformal.interval_from_bounds(0.0, 1.0, -2.0)
        assert out.half_width == 0.0
        assert EMPTY_INTERVAL_CLAMPED in out.flags


class TestHarnessEquivalence:
    """The batched benchmark path must agree with the one-shot constructors."""

    def test_batch_matches_one_shot(self):
        from maskcp.harness import ExperimentConfig

        train, calib = synthetic_problem(12)
        pipe = fit_mean_pipeline(train)
        qpipe = fit_quantile_pipeline(train, 0.1)
        ranges = train.heom_ranges
        pool_vals = np.concatenate([train.values, calib.values])
        pool_mask = np.concatenate([train.mask_matrix, calib.mask_matrix])
        kernel = KernelSpec(
            median_pairwise_bandwidth(MaskedDataset(pool_vals, pool_mask), ranges)
        )
        cfg = ExperimentConfig(
            dgp=DgpConfig.benchmark(3),
            ampute=AmputeConfig("mcar", 0.2),
            n_train=50, n_calib=20, n_test_marginal=5, n_test_per_group=5,
            methods=("cp", "cqr", "cqr_mda_exact", "nexcp", "lcp"),
            reps=1, alpha=0.1, rho=0.99,
        )
        ctxs = _MaskContexts(cfg, pipe, qpipe, train, calib, ranges, kernel)
        rng = np.random.default_rng(13)
        xt, yt = gen_gaussian_linear(DgpConfig.benchmark(3), 40, rng)
        test_ds = ampute(xt, AmputeConfig("mcar", 0.25), rng).with_y(yt)
        cp_half = conformal.split_cp_halfwidth(pipe, calib, 0.1)
        cqr_q = conformal.cqr_quantile(qpipe, calib, 0.1)
        bounds = _eval_bounds(cfg, ctxs, test_ds, cp_half, cqr_q)

        for i in range(len(test_ds)):
            s = test_ds[i]
            one_shot = {
                "cp": split_cp(pipe, calib, s, 0.1),
                "cqr": cqr(qpipe, calib, s, 0.1),
                "cqr_mda_exact": cqr_mda_exact(qpipe, calib, s, 0.1),
                "nexcp": nexcp(pipe, calib, s, 0.1, 0.99, ranges),
                "lcp": lcp(pipe, train, calib, s, 0.1, kernel, ranges),
            }
            for method, iv in one_shot.items():
                lo, up = bounds[method]
                assert lo[i] == pytest.approx(iv.lower, rel=1e-12, abs=1e-12), (
                    method, i,
                )
                assert up[i] == pytest.approx(iv.upper, rel=1e-12, abs=1e-12), (
                    method, i,
                )


class TestScoreRecords:
    def test_abs_scores_nonnegative_with_provenance(self):
        train, calib = synthetic_problem(20)
        pipe = fit_mean_pipeline(train)
        records = conformal.score_records(pipe, calib)
        assert [r.source_index for r in records] == list(range(len(calib)))
        assert all(r.value >= 0 for r in records)
        raw = conformal.abs_scores(pipe, calib)
        assert [r.value for r in records] == raw.tolist()

    def test_invalid_records_rejected(self):
        with pytest.raises(DataError):
            conformal.ConformalScore(-0.5, 0, "abs")
        with pytest.raises(DataError):
            conformal.ConformalScore(0.5, 0, "bogus")
        assert conformal.ConformalScore(-0.5, 1, "cqr").value == -0.5


class TestLocalizationTrend:
    """Under x-heteroskedastic noise the localized width tracks the local
    score scale, while the split width cannot; this is the finite-sample
    trend behind conditional validity."""

    def test_width_tracks_local_noise_scale(self):
        rng = np.random.default_rng(0)
        n_train, n_calib = 500, 400
        x_tr = rng.normal(0, 2, size=(n_train, 1))
        y_tr = x_tr[:, 0] + np.abs(x_tr[:, 0]) * rng.normal(size=n_train)
        train = MaskedDataset(x_tr, np.zeros_like(x_tr, dtype=bool), y_tr)
        x_ca = rng.normal(0, 2, size=(n_calib, 1))
        y_ca = x_ca[:, 0] + np.abs(x_ca[:, 0]) * rng.normal(size=n_calib)
        calib = MaskedDataset(x_ca, np.zeros_like(x_ca, dtype=bool), y_ca)
        pipe = fit_mean_pipeline(train)
        ranges = train.heom_ranges
        pool = MaskedDataset(
            np.concatenate([train.values, calib.values]),
            np.concatenate([train.mask_matrix, calib.mask_matrix]),
        )
        kernel = KernelSpec(median_pairwise_bandwidth(pool, ranges))
        grid = [0.0, 0.5, 1.0, 2.0, 3.0]
        widths = []
        for xv in grid:
            s = MaskedSample(np.array([xv]), Mask.zeros(1))
            widths.append(lcp(pipe, train, calib, s, 0.1, kernel, ranges).length)
            flat = split_cp(pipe, calib, s, 0.1).length
        assert all(a < b for a, b in zip(widths, widths[1:]))
        assert widths[-1] > flat > widths[0]
