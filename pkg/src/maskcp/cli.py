"""Command-line front end.

Subcommands:

- ``synth-bench``: run the synthetic benchmark described by a TOML config
  and write ``report.csv`` (one row per method x group) plus ``report.json``
  (full report, config echo, seed). Flags override config values.
- ``predict``: fit on a training CSV (features + response in the last
  column), split 2:1 into train/calibration, and emit an interval per query
  row; NA token configurable, empty fields count as missing.
- ``audit``: recompute marginal and per-mask empirical coverage from a CSV
  of (y_true, lower, upper, mask bits).

Exit codes: 0 success, 2 user error (bad config/CSV/schema), 1 internal
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .conformal import PredictionInterval, cqr, cqr_mda_exact, lcp, nexcp, split_cp
from .core import Mask, MaskedDataset, MaskedSample
from .errors import ConfigurationError, DataError, MaskcpUserError
from .harness import METHOD_ORDER, ExperimentConfig, run_experiment
from .metrics import KernelSpec, median_pairwise_bandwidth
from .models import fit_mean_pipeline, fit_quantile_pipeline
from .synth import AmputeConfig, DgpConfig

REPORT_CSV_HEADER = ("method", "group", "coverage", "mean_length", "n_points", "n_infinite")


def _fmt6(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


def _fmt12(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def _parse_float(cell: str, line_no: int, column: str) -> float:
    text = cell.strip().lower()
    if text in ("inf", "+inf", "infinity"):
        return math.inf
    if text in ("-inf", "-infinity"):
        return -math.inf
    try:
        value = float(cell)
    except ValueError as exc:
        raise DataError(f"line {line_no}: bad value {cell!r} in column {column}") from exc
    if math.isnan(value):
        raise DataError(f"line {line_no}: NaN is not a value in column {column}")
    return value


# ---------------------------------------------------------------------------
# synth-bench


def _experiment_from_toml(path: Path, args) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config parse error in {path}: {exc}") from exc

    dgp_sec = dict(doc.get("dgp", {}))
    amp_sec = dict(doc.get("ampute", {}))
    exp_sec = dict(doc.get("experiment", {}))

    d = dgp_sec.pop("d", None)
    beta = dgp_sec.pop("beta", None)
    if beta is None:
        if d is None:
            raise ConfigurationError("config must set dgp.d or dgp.beta")
        beta = DgpConfig.benchmark(int(d)).beta
    elif d is not None and int(d) != len(beta):
        raise ConfigurationError(f"dgp.d = {d} contradicts len(dgp.beta) = {len(beta)}")
    kwargs = {"beta": tuple(float(b) for b in beta)}
    if "mu" in dgp_sec:
        kwargs["mu"] = tuple(float(v) for v in dgp_sec.pop("mu"))
    for k in ("phi", "noise_sd"):
        if k in dgp_sec:
            kwargs[k] = float(dgp_sec.pop(k))
    if dgp_sec:
        raise ConfigurationError(f"unknown [dgp] keys: {sorted(dgp_sec)}")
    dgp = DgpConfig(**kwargs)

    amp_kwargs = {}
    if "mechanism" in amp_sec:
        amp_kwargs["mechanism"] = str(amp_sec.pop("mechanism")).lower()
    if "rate" in amp_sec:
        amp_kwargs["rate"] = float(amp_sec.pop("rate"))
    if "maskable_columns" in amp_sec:
        amp_kwargs["maskable_columns"] = tuple(int(c) for c in amp_sec.pop("maskable_columns"))
    if "mnar_steepness" in amp_sec:
        amp_kwargs["mnar_steepness"] = float(amp_sec.pop("mnar_steepness"))
    if amp_sec:
        raise ConfigurationError(f"unknown [ampute] keys: {sorted(amp_sec)}")
    ampute = AmputeConfig(**amp_kwargs)

    exp_kwargs = {"dgp": dgp, "ampute": ampute}
    renames = {"seed": "master_seed"}
    known = {
        "n_train", "n_calib", "n_test_marginal", "n_test_per_group", "alpha",
        "methods", "reps", "seed", "rho", "grouping", "jobs",
        "imputer_iters", "max_group_draws", "collect_records",
    }
    unknown = set(exp_sec) - known
    if unknown:
        raise ConfigurationError(f"unknown [experiment] keys: {sorted(unknown)}")
    for key, value in exp_sec.items():
        name = renames.get(key, key)
        if name == "methods":
            value = tuple(str(m) for m in value)
        exp_kwargs[name] = value

    # flag overrides win over config-file values
    if args.seed is not None:
        exp_kwargs["master_seed"] = args.seed
    if args.alpha is not None:
        exp_kwargs["alpha"] = args.alpha
    if args.rho is not None:
        exp_kwargs["rho"] = args.rho
    if args.methods is not None:
        exp_kwargs["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if args.reps is not None:
        exp_kwargs["reps"] = args.reps
    if args.jobs is not None:
        exp_kwargs["jobs"] = args.jobs
    try:
        return ExperimentConfig(**exp_kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def _config_echo(cfg: ExperimentConfig) -> dict:
    echo = asdict(cfg)
    echo["dgp"] = asdict(cfg.dgp)
    echo["ampute"] = asdict(cfg.ampute)
    return echo


def cmd_synth_bench(args) -> int:
    cfg = _experiment_from_toml(Path(args.config), args)
    report = run_experiment(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    csv_path = out_dir / "report.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_CSV_HEADER)
        for row in report.rows:
            writer.writerow([
                row.method, row.group,
                _fmt6(row.coverage), _fmt6(row.mean_length),
                row.n_points, row.n_infinite,
            ])

    json_path = out_dir / "report.json"
    payload = {
        "seed": cfg.master_seed,
        "config": _config_echo(cfg),
        "rows": [asdict(r) for r in report.rows],
        "warnings": list(report.warnings),
    }
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2, allow_nan=True)
        fh.write("\n")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {csv_path} and {json_path}")
    return 0


# ---------------------------------------------------------------------------
# predict


def _read_csv_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except FileNotFoundError as exc:
        raise DataError(f"file not found: {path}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    return rows[0], rows[1:]


def _parse_masked_rows(
    rows: list[list[str]], n_cols: int, na_token: str, path: Path, y_col: bool
) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    n = len(rows)
    width = n_cols + (1 if y_col else 0)
    values = np.zeros((n, n_cols))
    mask = np.zeros((n, n_cols), dtype=bool)
    y = np.zeros(n) if y_col else None
    for i, row in enumerate(rows):
        line_no = i + 2  # header is line 1
        if len(row) != width:
            raise DataError(f"{path}: line {line_no}: expected {width} fields, got {len(row)}")
        for j in range(n_cols):
            cell = row[j].strip()
            if cell == na_token or cell == "":
                mask[i, j] = True
            else:
                values[i, j] = _parse_float(row[j], line_no, f"#{j + 1}")
        if y_col:
            y[i] = _parse_float(row[n_cols], line_no, "response")
    return values, mask, y


def cmd_predict(args) -> int:
    method = args.method
    train_header, train_rows = _read_csv_rows(Path(args.train))
    query_header, query_rows = _read_csv_rows(Path(args.query))
    if len(train_header) < 2:
        raise DataError("train CSV needs at least one feature column plus the response")
    feature_names = train_header[:-1]
    if query_header != feature_names:
        raise DataError(
            f"schema mismatch: query columns {query_header} != train features {feature_names}"
        )
    d = len(feature_names)
    values, mask, y = _parse_masked_rows(train_rows, d, args.na_token, Path(args.train), True)
    q_values, q_mask, _ = _parse_masked_rows(query_rows, d, args.na_token, Path(args.query), False)
    all_na = np.flatnonzero(mask.all(axis=0))
    for j in all_na:
        print(
            f"warning: column {feature_names[j]!r} entirely missing; fallback imputation",
            file=sys.stderr,
        )

    full = MaskedDataset(np.where(mask, np.nan, values), mask, y)
    rng = np.random.default_rng(args.seed)
    perm = rng.permutation(len(full))
    n_train = max(1, int(round(len(full) * 2 / 3)))
    if len(full) - n_train < 1:
        raise DataError("not enough rows to form a calibration split")
    train = full.subset(perm[:n_train])
    calib = full.subset(perm[n_train:])
    ranges = train.heom_ranges

    if method in ("cqr", "cqr_mda_exact"):
        pipeline = fit_quantile_pipeline(train, args.alpha)
    else:
        pipeline = fit_mean_pipeline(train)
    kernel = None
    if method == "lcp":
        pool_values = np.concatenate([train.values, calib.values])
        pool_mask = np.concatenate([train.mask_matrix, calib.mask_matrix])
        kernel = KernelSpec(median_pairwise_bandwidth(MaskedDataset(pool_values, pool_mask), ranges))

    out_rows = []
    for i in range(q_values.shape[0]):
        sample = MaskedSample(np.where(q_mask[i], np.nan, q_values[i]), Mask(q_mask[i]))
        interval: PredictionInterval
        if method == "cp":
            interval = split_cp(pipeline, calib, sample, args.alpha)
        elif method == "cqr":
            interval = cqr(pipeline, calib, sample, args.alpha)
        elif method == "cqr_mda_exact":
            interval = cqr_mda_exact(pipeline, calib, sample, args.alpha)
        elif method == "nexcp":
            interval = nexcp(pipeline, calib, sample, args.alpha, args.rho, ranges)
        else:
            interval = lcp(pipeline, train, calib, sample, args.alpha, kernel, ranges)
        out_rows.append([
            _fmt12(interval.lower), _fmt12(interval.upper), _fmt12(interval.center),
            ";".join(interval.flags),
        ])

    stream = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["lower", "upper", "center", "flags"])
        writer.writerows(out_rows)
    finally:
        if args.out:
            stream.close()
    return 0


# ---------------------------------------------------------------------------
# audit


def cmd_audit(args) -> int:
    header, rows = _read_csv_rows(Path(args.intervals))
    if len(header) < 4 or header[:3] != ["y_true", "lower", "upper"]:
        raise DataError("audit CSV must start with columns y_true,lower,upper plus mask bits")
    d = len(header) - 3
    bad_lines = []
    y, lo, up = [], [], []
    masks = []
    for i, row in enumerate(rows):
        line_no = i + 2
        if len(row) != 3 + d:
            bad_lines.append(line_no)
            continue
        try:
            yv = _parse_float(row[0], line_no, "y_true")
            lov = _parse_float(row[1], line_no, "lower")
            upv = _parse_float(row[2], line_no, "upper")
            bits = [float(c.strip()) for c in row[3:]]
            if any(b not in (0.0, 1.0) for b in bits):
                raise DataError(f"line {line_no}: mask bits must be 0/1")
        except (DataError, ValueError):
            bad_lines.append(line_no)
            continue
        y.append(yv)
        lo.append(lov)
        up.append(upv)
        masks.append([int(b) for b in bits])
    if bad_lines:
        raise DataError(f"malformed rows at lines: {', '.join(map(str, bad_lines))}")
    if not y:
        raise DataError("audit CSV contains no data rows")

    y = np.asarray(y)
    lo = np.asarray(lo)
    up = np.asarray(up)
    mask = np.asarray(masks, dtype=bool)
    covered = (y >= lo) & (y <= up)
    lengths = up - lo

    def _stats(sel: np.ndarray) -> tuple[float, float, int, int]:
        finite = np.isfinite(lengths[sel])
        mean_len = float(lengths[sel][finite].mean()) if finite.any() else float("nan")
        return float(covered[sel].mean()), mean_len, int(sel.sum()), int((~finite).sum())

    out = [("mar", *_stats(np.ones(len(y), dtype=bool)))]
    unique_masks = np.unique(mask, axis=0)
    for u in unique_masks:
        label = str(Mask(u))
        sel = np.all(mask == u, axis=1)
        out.append((label, *_stats(sel)))

    stream = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["group", "coverage", "mean_length", "n_points", "n_infinite"])
        for label, cov, mean_len, n, n_inf in out:
            writer.writerow([label, _fmt6(cov), _fmt6(mean_len), n, n_inf])
    finally:
        if args.out:
            stream.close()
    return 0


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskcp",
        description="Conformal prediction intervals for regression with missing covariates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("synth-bench", help="run the synthetic coverage benchmark")
    bench.add_argument("--config", required=True, help="TOML config path")
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--alpha", type=float, default=None)
    bench.add_argument("--rho", type=float, default=None)
    bench.add_argument("--methods", type=str, default=None, help="comma-separated subset")
    bench.add_argument("--reps", type=int, default=None)
    bench.add_argument("--jobs", type=int, default=None)
    bench.add_argument("--out", type=str, default=".", help="output directory")
    bench.set_defaults(func=cmd_synth_bench)

    predict = sub.add_parser("predict", help="predict intervals for query rows")
    predict.add_argument("--train", required=True, help="CSV of features + response (last column)")
    predict.add_argument("--query", required=True, help="CSV of features; NAs allowed")
    predict.add_argument("--method", required=True, choices=list(METHOD_ORDER))
    predict.add_argument("--alpha", type=float, default=0.1)
    predict.add_argument("--rho", type=float, default=0.99)
    predict.add_argument("--na-token", dest="na_token", type=str, default="NA")
    predict.add_argument("--seed", type=int, default=0, help="train/calibration split seed")
    predict.add_argument("--out", type=str, default=None, help="output CSV (default stdout)")
    predict.set_defaults(func=cmd_predict)

    audit = sub.add_parser("audit", help="recompute coverage from emitted intervals")
    audit.add_argument("--intervals", required=True, help="CSV of y_true,lower,upper,mask bits")
    audit.add_argument("--out", type=str, default=None, help="output CSV (default stdout)")
    audit.set_defaults(func=cmd_audit)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MaskcpUserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal error contract
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
