"""Command-line entry point.

Subcommands: fit, l2, test, class-balance, change-detect, synth, experiment.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .applications import (
    LabeledSet,
    change_scores,
    class_balance_estimate,
    top_change_points,
)
from .data import (
    CsvFormatError,
    gen_class_balance,
    gen_gaussian_shift,
    gen_outlier_mixture,
    gen_step_series,
    l2_norm_series,
    load_csv,
    rng_stream,
    save_csv,
)
from .divergence import l2_from_samples
from .estimator import HyperGrid, fit_cv
from .experiments import ExperimentConfig, run_experiment
from .kernel import SingularSystemError
from .two_sample import kliep_statistic, lsdd_statistic, permutation_test


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}") from exc


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="base random seed")
    parser.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    parser.add_argument("--sigma-grid", type=_float_list, default=None,
                        help="comma-separated kernel widths (default: median heuristic)")
    parser.add_argument("--lambda-grid", type=_float_list, default=None,
                        help="comma-separated regularization values")
    parser.add_argument("--max-centers", type=int, default=300, help="kernel center budget")
    parser.add_argument("--output", default=None, help="output path (or path stem)")
    parser.add_argument("--format", choices=("csv", "json"), default="json",
                        help="output format where both are supported")


def _grid(args) -> HyperGrid | None:
    if args.sigma_grid is None and args.lambda_grid is None:
        return None
    if args.sigma_grid is None or args.lambda_grid is None:
        raise ValueError("provide both --sigma-grid and --lambda-grid, or neither")
    return HyperGrid(sigmas=np.asarray(args.sigma_grid), lambdas=np.asarray(args.lambda_grid))


def _emit(args, document: dict, rows: list[dict] | None = None) -> None:
    """Write the result as JSON, or as CSV when rows are given, to --output or stdout."""
    if args.format == "csv" and rows is not None:
        lines = []
        header = list(rows[0].keys())
        lines.append(",".join(header))
        for row in rows:
            lines.append(",".join(_csv_cell(row[key]) for key in header))
        text = "\n".join(lines) + "\n"
    else:
        text = json.dumps(document, indent=2) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _cmd_fit(args) -> int:
    x = load_csv(args.x, has_header=args.header)
    xp = load_csv(args.x_prime, has_header=args.header)
    model, report = fit_cv(
        x, xp, grid=_grid(args), folds=args.folds,
        rng=rng_stream(args.seed, "cli-fit"), max_centers=args.max_centers,
    )
    document = {
        "selected_sigma": report.selected_sigma,
        "selected_lambda": report.selected_lambda,
        "folds": report.folds,
        "n_centers": model.basis.size,
        "cv_scores": [
            {"sigma": s, "lambda": l, "mean_score": float(m)}
            for (s, l), m in zip(report.candidates, report.mean_scores)
        ],
    }
    if args.eval_at:
        from .estimator import predict

        pts = load_csv(args.eval_at, has_header=args.header)
        document["predictions"] = [float(v) for v in predict(model, pts.points)]
    _emit(args, document, rows=document["cv_scores"])
    return 0


def _cmd_l2(args) -> int:
    x = load_csv(args.x, has_header=args.header)
    xp = load_csv(args.x_prime, has_header=args.header)
    model, report = fit_cv(
        x, xp, grid=_grid(args), folds=args.folds,
        rng=rng_stream(args.seed, "cli-l2"), max_centers=args.max_centers,
    )
    est = l2_from_samples(x, xp, model)
    document = {
        "selected_sigma": report.selected_sigma,
        "selected_lambda": report.selected_lambda,
        **dataclasses.asdict(est),
    }
    rows = [{"estimator": key, "value": value} for key, value in dataclasses.asdict(est).items()]
    _emit(args, document, rows=rows)
    return 0


def _cmd_test(args) -> int:
    x = load_csv(args.x, has_header=args.header)
    xp = load_csv(args.x_prime, has_header=args.header)
    if args.statistic == "lsdd":
        statistic = lsdd_statistic(grid=_grid(args), folds=args.folds, max_centers=args.max_centers)
    else:
        statistic = kliep_statistic(folds=args.folds)
    result = permutation_test(
        x, xp, statistic,
        n_permutations=args.permutations, alpha=args.alpha,
        rng=rng_stream(args.seed, "cli-test"),
    )
    document = {
        "statistic": args.statistic,
        "observed_stat": result.observed_stat,
        "p_value": result.p_value,
        "reject": result.reject,
        "alpha": result.alpha,
        "n_permutations": int(result.permuted_stats.size),
    }
    _emit(args, document)
    return 0


def _cmd_class_balance(args) -> int:
    train = LabeledSet(
        positives=load_csv(args.positives, has_header=args.header),
        negatives=load_csv(args.negatives, has_header=args.header),
    )
    test = load_csv(args.test, has_header=args.header)
    result = class_balance_estimate(
        train, test,
        pi_grid=np.linspace(0.0, 1.0, args.pi_points),
        hyper=_grid(args), folds=args.folds,
        rng=rng_stream(args.seed, "cli-class-balance"),
        max_centers=args.max_centers,
    )
    document = {
        "pi_hat": result.pi_hat,
        "selected_sigma": result.selected_sigma,
        "selected_lambda": result.selected_lambda,
        "curve": [{"pi": pi, "distance": d} for pi, d in result.grid],
    }
    _emit(args, document, rows=document["curve"])
    return 0


def _cmd_change_detect(args) -> int:
    series = load_csv(args.series, has_header=args.header).points
    if args.l2norm:
        series = l2_norm_series(series)
    result = change_scores(
        series, k=args.k, r=args.r, stride=args.stride,
        hyper=_grid(args), rng=rng_stream(args.seed, "cli-change-detect"),
        folds=args.folds, max_centers=args.max_centers,
        estimator=args.estimator, freeze_hyperparams=args.freeze_hyperparams,
    )
    document = {
        "times": [int(t) for t in result.times],
        "scores": [float(s) for s in result.scores],
        "top_change_points": top_change_points(result, args.top),
    }
    rows = [{"time": int(t), "score": float(s)} for t, s in zip(result.times, result.scores)]
    _emit(args, document, rows=rows)
    return 0


def _cmd_synth(args) -> int:
    rng = rng_stream(args.seed, "cli-synth", args.kind)
    if not args.output:
        raise ValueError("synth requires --output as a path stem")
    stem = args.output
    if args.kind == "gaussian-shift":
        x, xp = gen_gaussian_shift(args.d, args.n, args.n_prime, args.mu, rng)
        save_csv(f"{stem}_x.csv", x.points)
        save_csv(f"{stem}_x_prime.csv", xp.points)
        written = [f"{stem}_x.csv", f"{stem}_x_prime.csv"]
    elif args.kind == "outlier-mixture":
        x, xp = gen_outlier_mixture(args.n, args.n_prime, args.eta, args.mu, rng)
        save_csv(f"{stem}_x.csv", x.points)
        save_csv(f"{stem}_x_prime.csv", xp.points)
        written = [f"{stem}_x.csv", f"{stem}_x_prime.csv"]
    elif args.kind == "class-balance":
        train, test, labels = gen_class_balance(
            args.d, args.n_labeled, args.n_test, args.pi_star, args.separation, rng
        )
        save_csv(f"{stem}_positives.csv", train.positives.points)
        save_csv(f"{stem}_negatives.csv", train.negatives.points)
        save_csv(f"{stem}_test.csv", test.points)
        save_csv(f"{stem}_labels.csv", labels.astype(float))
        written = [
            f"{stem}_positives.csv", f"{stem}_negatives.csv",
            f"{stem}_test.csv", f"{stem}_labels.csv",
        ]
    else:  # step-series
        series = gen_step_series(args.length, args.change_times, args.shift, args.noise_sd, rng)
        save_csv(f"{stem}_series.csv", series)
        written = [f"{stem}_series.csv"]
    sys.stdout.write("\n".join(written) + "\n")
    return 0


def _cmd_experiment(args) -> int:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        if args.output:
            data["output"] = args.output
        config = ExperimentConfig.from_dict(data)
    else:
        if not args.name:
            raise ValueError("provide an experiment name or --config")
        config = ExperimentConfig(
            experiment=args.name,
            replicates=args.replicates,
            seed=args.seed,
            output=args.output,
            folds=args.folds,
            max_centers=args.max_centers,
            sigmas=tuple(args.sigma_grid) if args.sigma_grid else None,
            lambdas=tuple(args.lambda_grid) if args.lambda_grid else None,
            workers=args.workers,
        )
    table = run_experiment(config)
    for summary in table.summaries:
        sys.stdout.write(
            f"{summary.condition} {summary.estimator}: "
            f"{summary.mean:.6g} +- {summary.stderr:.3g} (n={summary.count})\n"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsdd",
        description="Density-difference estimation, L2 distances, and downstream tasks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="cross-validated density-difference fit")
    p_fit.add_argument("--x", required=True, help="CSV of samples from p")
    p_fit.add_argument("--x-prime", required=True, help="CSV of samples from p'")
    p_fit.add_argument("--header", action="store_true", help="skip one header row")
    p_fit.add_argument("--eval-at", default=None, help="CSV of points to evaluate the fit at")
    _add_common(p_fit)
    p_fit.set_defaults(func=_cmd_fit)

    p_l2 = sub.add_parser("l2", help="all L2-distance estimates between two samples")
    p_l2.add_argument("--x", required=True)
    p_l2.add_argument("--x-prime", required=True)
    p_l2.add_argument("--header", action="store_true")
    _add_common(p_l2)
    p_l2.set_defaults(func=_cmd_l2)

    p_test = sub.add_parser("test", help="permutation two-sample test")
    p_test.add_argument("--x", required=True)
    p_test.add_argument("--x-prime", required=True)
    p_test.add_argument("--header", action="store_true")
    p_test.add_argument("--statistic", choices=("lsdd", "kliep"), default="lsdd")
    p_test.add_argument("--permutations", type=int, default=100)
    p_test.add_argument("--alpha", type=float, default=0.05)
    _add_common(p_test)
    p_test.set_defaults(func=_cmd_test)

    p_bal = sub.add_parser("class-balance", help="estimate the test-set class balance")
    p_bal.add_argument("--positives", required=True)
    p_bal.add_argument("--negatives", required=True)
    p_bal.add_argument("--test", required=True)
    p_bal.add_argument("--header", action="store_true")
    p_bal.add_argument("--pi-points", type=int, default=101)
    _add_common(p_bal)
    p_bal.set_defaults(func=_cmd_class_balance)

    p_chg = sub.add_parser("change-detect", help="sliding-window change scores")
    p_chg.add_argument("--series", required=True, help="CSV time series, one sample per row")
    p_chg.add_argument("--header", action="store_true")
    p_chg.add_argument("--k", type=int, default=5, help="subsequence window length")
    p_chg.add_argument("--r", type=int, default=50, help="windows per segment")
    p_chg.add_argument("--stride", type=int, default=1)
    p_chg.add_argument("--top", type=int, default=4, help="local maxima to report")
    p_chg.add_argument("--estimator", choices=("combined", "positive_part"), default="combined")
    p_chg.add_argument("--freeze-hyperparams", action="store_true",
                       help="reuse the first evaluation's (sigma, lambda)")
    p_chg.add_argument("--l2norm", action="store_true",
                       help="reduce multichannel rows to their Euclidean norm first")
    _add_common(p_chg)
    p_chg.set_defaults(func=_cmd_change_detect)

    p_syn = sub.add_parser("synth", help="write synthetic datasets as CSV")
    p_syn.add_argument("kind", choices=(
        "gaussian-shift", "outlier-mixture", "class-balance", "step-series"))
    p_syn.add_argument("--d", type=int, default=1)
    p_syn.add_argument("--n", type=int, default=200)
    p_syn.add_argument("--n-prime", type=int, default=200)
    p_syn.add_argument("--mu", type=float, default=0.5)
    p_syn.add_argument("--eta", type=float, default=0.1)
    p_syn.add_argument("--pi-star", type=float, default=0.5)
    p_syn.add_argument("--n-labeled", type=int, default=20)
    p_syn.add_argument("--n-test", type=int, default=50)
    p_syn.add_argument("--separation", type=float, default=2.0)
    p_syn.add_argument("--length", type=int, default=2500)
    p_syn.add_argument("--change-times", type=_int_list, default=[500, 1000, 1500, 2000])
    p_syn.add_argument("--shift", type=float, default=3.0)
    p_syn.add_argument("--noise-sd", type=float, default=1.0)
    _add_common(p_syn)
    p_syn.set_defaults(func=_cmd_synth)

    p_exp = sub.add_parser("experiment", help="run a replicated experiment")
    p_exp.add_argument("name", nargs="?", default=None,
                       help="experiment name (or use --config)")
    p_exp.add_argument("--config", default=None, help="JSON config file")
    p_exp.add_argument("--replicates", type=int, default=100)
    p_exp.add_argument("--workers", type=int, default=1)
    _add_common(p_exp)
    p_exp.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except CsvFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (SingularSystemError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
