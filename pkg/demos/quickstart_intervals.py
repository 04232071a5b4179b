"""Build all five prediction-interval flavours for points with missing covariates.

Generates data from the benchmark Gaussian linear model, hides 20% of the
entries completely at random, fits the imputation+regression pipelines, and
prints the interval each method produces for a handful of test points with
different missingness patterns.
"""

import numpy as np

import maskcp as mc

rng = np.random.default_rng(0)
dgp = mc.DgpConfig.benchmark(3)

# training and calibration data with MCAR missingness
x_train, y_train = mc.gen_gaussian_linear(dgp, 500, rng)
model = mc.fit_ampute_model(x_train, mc.AmputeConfig("mcar", 0.2))
train = mc.MaskedDataset(x_train, model.apply(x_train, rng), y_train)

x_cal, y_cal = mc.gen_gaussian_linear(dgp, 250, rng)
calib = mc.MaskedDataset(x_cal, model.apply(x_cal, rng), y_cal)

mean_pipe = mc.fit_mean_pipeline(train)
quantile_pipe = mc.fit_quantile_pipeline(train, alpha=0.1)

ranges = train.heom_ranges
pool = mc.MaskedDataset(
    np.concatenate([train.values, calib.values]),
    np.concatenate([train.mask_matrix, calib.mask_matrix]),
)
kernel = mc.KernelSpec(mc.median_pairwise_bandwidth(pool, ranges))

tests = [
    mc.MaskedSample.from_optional([1.0, 1.0, 1.0]),
    mc.MaskedSample.from_optional([None, 1.0, 1.0]),
    mc.MaskedSample.from_optional([None, None, 1.0]),
]

print(f"{'test point':24s} {'method':14s} {'lower':>8s} {'upper':>8s} {'width':>7s}")
for s in tests:
    label = str(s.mask)
    intervals = {
        "cp": mc.split_cp(mean_pipe, calib, s, 0.1),
        "cqr": mc.cqr(quantile_pipe, calib, s, 0.1),
        "cqr_mda_exact": mc.cqr_mda_exact(quantile_pipe, calib, s, 0.1),
        "nexcp": mc.nexcp(mean_pipe, calib, s, 0.1, rho=0.99, ranges=ranges),
        "lcp": mc.lcp(mean_pipe, train, calib, s, 0.1, kernel, ranges),
    }
    for name, iv in intervals.items():
        print(
            f"mask {label:18s} {name:14s} {iv.lower:8.3f} {iv.upper:8.3f} {iv.length:7.3f}"
        )
    print()

print("The plain split-CP width ignores the mask; the mask-aware methods widen")
print("their intervals as more covariates go missing.")
