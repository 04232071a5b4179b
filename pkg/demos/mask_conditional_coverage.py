"""Reproduce the headline coverage table at desk scale.

Runs the Monte-Carlo benchmark for d=3 covariates under MCAR missingness and
prints coverage and mean interval length per missingness pattern. Split CP
keeps 90% coverage on average but fails badly on the patterns that hide the
informative covariates; the mask-aware methods hold ~90% on every pattern by
adapting their width.
"""

import maskcp as mc

config = mc.ExperimentConfig(
    dgp=mc.DgpConfig.benchmark(3),
    ampute=mc.AmputeConfig("mcar", rate=0.2),
    n_train=300,
    n_calib=150,
    n_test_marginal=1000,
    n_test_per_group=100,
    alpha=0.1,
    methods=("cp", "nexcp", "lcp"),
    reps=25,
    master_seed=20240801,
    grouping="by_mask",
)

report = mc.run_experiment(config)

groups = ["mar"] + [str(m) for m in sorted({r.group for r in report.rows} - {"mar"})]
print(f"{'group':8s}" + "".join(f"{m + ' cov':>11s}{m + ' len':>11s}" for m in config.methods))
for group in groups:
    cells = []
    for method in config.methods:
        row = report.row(method, group)
        cells.append(f"{row.coverage:11.3f}{row.mean_length:11.3f}")
    print(f"{group:8s}" + "".join(cells))

cp_110 = report.row("cp", "[110]").coverage
print()
print(f"split CP covers only {cp_110:.1%} of responses when the two most")
print("informative covariates are missing, while nexCP and LCP stay near 90%.")
