import math

import numpy as np
import pytest

from maskcp.core import Mask
from maskcp.errors import CalibrationError, ConfigurationError, DomainError
from maskcp.synth import (
    AmputeConfig,
    DgpConfig,
    Example1Params,
    ampute,
    example1_conditional_variance,
    fit_ampute_model,
    gen_gaussian_linear,
)


class TestGaussianLinear:
    def test_noiseless_limit_recovers_first_covariate(self):
        cfg = DgpConfig(beta=(1.0, 0.0, 0.0), noise_sd=1e-12)
        x, y = gen_gaussian_linear(cfg, 500, np.random.default_rng(0))
        assert np.allclose(y, x[:, 0], atol=1e-9)

    def test_benchmark_covariance_matches_target(self):
        cfg = DgpConfig.benchmark(8)
        x, _ = gen_gaussian_linear(cfg, 100_000, np.random.default_rng(1))
        emp = np.cov(x, rowvar=False)
        assert np.max(np.abs(emp - cfg.covariance)) < 0.02
        assert np.max(np.abs(x.mean(axis=0) - 1.0)) < 0.02

    def test_conditional_noise_variance(self):
        cfg = DgpConfig.benchmark(3)
        x, y = gen_gaussian_linear(cfg, 200_000, np.random.default_rng(2))
        residual = y - x @ np.asarray(cfg.beta)
        assert residual.var() == pytest.approx(cfg.noise_sd**2, rel=0.02)
        assert abs(residual.mean()) < 0.01

    def test_bit_reproducible_under_fixed_seed(self):
        cfg = DgpConfig.benchmark(5)
        x1, y1 = gen_gaussian_linear(cfg, 100, np.random.default_rng(7))
        x2, y2 = gen_gaussian_linear(cfg, 100, np.random.default_rng(7))
        assert np.array_equal(x1, x2) and np.array_equal(y1, y2)

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            DgpConfig(beta=(1.0,), phi=1.0)
        with pytest.raises(ConfigurationError):
            DgpConfig(beta=(1.0,), noise_sd=0.0)
        with pytest.raises(ConfigurationError):
            DgpConfig(beta=(1.0, 2.0), mu=(0.0,))


class TestAmpute:
    def test_mcar_rate_on_large_sample(self):
        rng = np.random.default_rng(3)
        x, _ = gen_gaussian_linear(DgpConfig.benchmark(3), 100_000, rng)
        ds = ampute(x, AmputeConfig("mcar", 0.2), rng)
        frac = ds.mask_matrix.mean(axis=0)
        assert np.all(np.abs(frac - 0.2) < 0.005)

    def test_vanishing_rate_leaves_everything_observed(self):
        rng = np.random.default_rng(4)
        x, _ = gen_gaussian_linear(DgpConfig.benchmark(3), 2_000, rng)
        ds = ampute(x, AmputeConfig("mcar", 1e-12), rng)
        assert not ds.mask_matrix.any()

    def test_mnar_self_masking_is_monotone_in_value(self):
        rng = np.random.default_rng(5)
        x, _ = gen_gaussian_linear(DgpConfig.benchmark(3), 50_000, rng)
        ds = ampute(x, AmputeConfig("mnar", 0.2), rng)
        for j in range(3):
            med = np.median(x[:, j])
            upper = ds.mask_matrix[x[:, j] > med, j].mean()
            lower = ds.mask_matrix[x[:, j] <= med, j].mean()
            assert upper > lower

    def test_mar_and_mnar_hit_target_rate(self):
        rng = np.random.default_rng(6)
        x, _ = gen_gaussian_linear(DgpConfig.benchmark(3), 100_000, rng)
        for mech in ("mar", "mnar"):
            ds = ampute(x, AmputeConfig(mech, 0.2), rng)
            cols = AmputeConfig(mech, 0.2).resolve_maskable(3)
            frac = ds.mask_matrix[:, list(cols)].mean(axis=0)
            assert np.all(np.abs(frac - 0.2) < 0.01), (mech, frac)

    def test_non_maskable_columns_untouched(self):
        rng = np.random.default_rng(7)
        x, _ = gen_gaussian_linear(DgpConfig.benchmark(3), 5_000, rng)
        ds = ampute(x, AmputeConfig("mar", 0.3), rng)
        assert not ds.mask_matrix[:, 0].any()
        assert ds.mask_matrix[:, 1:].any()

    def test_mask_value_consistency_on_output(self):
        rng = np.random.default_rng(8)
        x, _ = gen_gaussian_linear(DgpConfig.benchmark(3), 1_000, rng)
        ds = ampute(x, AmputeConfig("mnar", 0.2), rng)
        assert np.array_equal(np.isnan(ds.values), ds.mask_matrix)
        observed = ~ds.mask_matrix
        assert np.array_equal(ds.values[observed], x[observed])

    def test_mar_default_maskable_layout(self):
        assert AmputeConfig("mar").resolve_maskable(3) == (1, 2)
        assert AmputeConfig("mar").resolve_maskable(5) == (3, 4)
        assert AmputeConfig("mar").resolve_maskable(8) == (5, 6, 7)
        assert AmputeConfig("mcar").resolve_maskable(3) == (0, 1, 2)
        with pytest.raises(ConfigurationError):
            AmputeConfig("mar").resolve_maskable(4)
        with pytest.raises(ConfigurationError):
            AmputeConfig("mar", maskable_columns=(0, 1, 2)).resolve_maskable(3)

    def test_calibration_failure_carries_diagnostics(self):
        rng = np.random.default_rng(9)
        x, _ = gen_gaussian_linear(DgpConfig.benchmark(3), 500, rng)
        with pytest.raises(CalibrationError) as err:
            fit_ampute_model(x, AmputeConfig("mnar", 1e-300))
        assert "target" in err.value.diagnostics

    def test_model_reuse_is_deterministic(self):
        rng = np.random.default_rng(10)
        x, _ = gen_gaussian_linear(DgpConfig.benchmark(3), 2_000, rng)
        model = fit_ampute_model(x, AmputeConfig("mnar", 0.2))
        m1 = model.apply(x, np.random.default_rng(11))
        m2 = model.apply(x, np.random.default_rng(11))
        assert np.array_equal(m1, m2)


def truncated_variance_oracle(p, mask_bits, x_obs, n_accept, seed):
    """Rejection-sample the hidden covariate's truncated conditional normal."""
    rng = np.random.default_rng(seed)
    kept = []
    while sum(len(k) for k in kept) < n_accept:
        if mask_bits == (1, 0):
            mu_c = p.mu1 + p.rho * (p.sigma1 / p.sigma2) * (x_obs - p.mu2)
            sd_c = p.sigma1 * math.sqrt(1 - p.rho**2)
            draw = rng.normal(mu_c, sd_c, size=200_000)
            kept.append(draw[draw > p.tau1])
        else:
            mu_c = p.mu2 + p.rho * (p.sigma2 / p.sigma1) * (x_obs - p.mu1)
            sd_c = p.sigma2 * math.sqrt(1 - p.rho**2)
            draw = rng.normal(mu_c, sd_c, size=200_000)
            kept.append(draw[draw < p.tau2])
    hidden = np.concatenate(kept)[:n_accept]
    beta_h = p.beta1 if mask_bits == (1, 0) else p.beta2
    y = beta_h * hidden + rng.normal(0.0, p.noise_sd, size=n_accept)
    return y.var()


PARAMS = Example1Params(
    beta1=1.5, beta2=-2.0, mu1=0.5, mu2=1.0,
    sigma1=1.2, sigma2=0.8, rho=0.4, noise_sd=1.0,
    tau1=1.0, tau2=0.6,
)


class TestExample1Variance:
    def test_fully_observed_returns_noise_variance(self):
        assert example1_conditional_variance(PARAMS, (0, 0)) == PARAMS.noise_sd**2

    def test_no_truncation_independent_covariates(self):
        p = Example1Params(
            beta1=1.5, beta2=-2.0, mu1=0.5, mu2=1.0,
            sigma1=1.2, sigma2=0.8, rho=0.0, noise_sd=1.0,
            tau1=-60.0, tau2=0.6,
        )
        got = example1_conditional_variance(p, (1, 0), x_obs=0.3)
        assert got == pytest.approx(p.beta1**2 * p.sigma1**2 + p.noise_sd**2, rel=1e-9)

    def test_rejection_sampling_oracle_mask_10(self):
        got = example1_conditional_variance(PARAMS, (1, 0), x_obs=1.4)
        mc = truncated_variance_oracle(PARAMS, (1, 0), 1.4, 400_000, seed=12)
        assert got == pytest.approx(mc, rel=0.02)

    def test_rejection_sampling_oracle_mask_01(self):
        got = example1_conditional_variance(PARAMS, (0, 1), x_obs=0.2)
        mc = truncated_variance_oracle(PARAMS, (0, 1), 0.2, 400_000, seed=13)
        assert got == pytest.approx(mc, rel=0.02)

    def test_missingness_only_adds_variance_on_grid(self):
        for rho in (-0.7, -0.2, 0.0, 0.3, 0.8):
            for tau1 in (-1.0, 0.5, 2.0):
                for x2 in (-1.0, 0.0, 1.5):
                    p = Example1Params(
                        beta1=1.1, beta2=0.7, mu1=0.0, mu2=0.5,
                        sigma1=1.0, sigma2=1.3, rho=rho, noise_sd=0.9,
                        tau1=tau1, tau2=0.0,
                    )
                    got = example1_conditional_variance(p, (1, 0), x_obs=x2)
                    assert got >= p.noise_sd**2 - 1e-12

    def test_unsupported_masks_rejected(self):
        with pytest.raises(DomainError):
            example1_conditional_variance(PARAMS, (1, 1), x_obs=0.0)
        with pytest.raises(DomainError):
            example1_conditional_variance(PARAMS, (1, 0))
        with pytest.raises(DomainError):
            example1_conditional_variance(PARAMS, Mask.from_bits([0, 0, 1]), x_obs=0.0)

    def test_parameter_validation(self):
        with pytest.raises(ConfigurationError):
            Example1Params(1, 1, 0, 0, 1, 1, rho=1.0, noise_sd=1, tau1=0, tau2=0)
        with pytest.raises(ConfigurationError):
            Example1Params(1, 1, 0, 0, -1, 1, rho=0.0, noise_sd=1, tau1=0, tau2=0)
