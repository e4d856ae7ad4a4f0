"""Replicated experiment runner with long-format result tables.

Each experiment draws fresh data per replicate, runs the relevant estimators,
and appends one row per (replicate, condition, estimator).  Every replicate
uses random substreams keyed by (seed, experiment, replicate, condition,
role), so results are reproducible, independent of scheduling, and replicates
can run in parallel processes.  Tables serialize to a long-format CSV of the
raw rows and a JSON document carrying the configuration, a version string,
the rows, and per-(condition, estimator) summaries.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from . import __version__
from .applications import (
    change_scores,
    class_balance_estimate,
    class_balance_estimate_kde,
    weighted_rls_fit,
)
from .data import (
    OUTLIER_SD,
    gen_class_balance,
    gen_gaussian_shift,
    gen_outlier_mixture,
    gen_step_series,
    rng_stream,
    true_l2_gaussian_shift,
    true_l2_outlier_mixture,
)
from .divergence import l2_from_samples
from .estimator import HyperGrid, fit_cv
from .kde import KdeModel, default_bandwidths, kde_l2, kde_select_bandwidth
from .two_sample import kliep_statistic, lsdd_statistic, permutation_test

EXPERIMENTS = (
    "l2-curve",
    "kde-compare",
    "robustness",
    "two-sample-power",
    "class-balance",
    "change-detection",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun an experiment bit-for-bit."""

    experiment: str
    replicates: int = 100
    seed: int = 0
    output: str | None = None

    # dataset parameters
    d: int = 1
    n: int = 200
    n_prime: int = 200
    mu: tuple[float, ...] | float | None = None
    eta: tuple[float, ...] | float | None = None
    pi_star: tuple[float, ...] | None = None
    change_times: tuple[int, ...] | None = None

    # hyper-grid overrides (None means the per-fit median-distance default)
    sigmas: tuple[float, ...] | None = None
    lambdas: tuple[float, ...] | None = None
    folds: int = 5
    max_centers: int = 300

    # two-sample testing
    n_permutations: int = 100
    alpha: float = 0.05
    statistics: tuple[str, ...] = ("lsdd", "kliep")

    # class balance
    n_labeled: int = 20
    n_test: int = 50
    separation: float = 2.0
    pi_points: int = 101
    rls_reg: float = 0.1

    # change detection
    length: int = 2500
    shift: float = 3.0
    noise_sd: float = 1.0
    k: int = 5
    r: int = 50
    stride: int = 1

    workers: int = 1

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}"
            )
        if self.replicates < 1:
            raise ValueError("replicate count must be >= 1")

    def hyper_grid(self) -> HyperGrid | None:
        if self.sigmas is None and self.lambdas is None:
            return None
        if self.sigmas is None or self.lambdas is None:
            raise ValueError("override both sigmas and lambdas, or neither")
        return HyperGrid(
            sigmas=np.asarray(self.sigmas, float), lambdas=np.asarray(self.lambdas, float)
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        clean = {}
        for key, value in data.items():
            clean[key] = tuple(value) if isinstance(value, list) else value
        return cls(**clean)


@dataclass(frozen=True)
class ResultRow:
    replicate: int
    condition: str
    estimator: str
    value: float


@dataclass(frozen=True)
class SummaryRow:
    condition: str
    estimator: str
    mean: float
    stderr: float
    count: int


@dataclass(frozen=True, eq=False)
class ResultTable:
    config: ExperimentConfig
    rows: tuple[ResultRow, ...]
    summaries: tuple[SummaryRow, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.summaries:
            object.__setattr__(self, "summaries", summarize(self.rows))

    def summary_value(self, condition: str, estimator: str) -> float:
        for row in self.summaries:
            if row.condition == condition and row.estimator == estimator:
                return row.mean
        raise KeyError(f"no summary for ({condition!r}, {estimator!r})")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write("replicate,condition,estimator,value\n")
            for row in self.rows:
                handle.write(
                    f"{row.replicate},{row.condition},{row.estimator},{row.value:.17g}\n"
                )

    def write_json(self, path) -> None:
        document = {
            "config": self.config.to_dict(),
            "version": f"lsdd-{__version__}",
            "rows": [dataclasses.asdict(r) for r in self.rows],
            "summaries": [dataclasses.asdict(s) for s in self.summaries],
        }
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(document, handle, indent=2)
            handle.write("\n")


def summarize(rows) -> tuple[SummaryRow, ...]:
    """Mean and standard error per (condition, estimator), first-appearance order."""
    groups: dict[tuple[str, str], list[float]] = {}
    for row in rows:
        groups.setdefault((row.condition, row.estimator), []).append(row.value)
    out = []
    for (condition, estimator), values in groups.items():
        arr = np.asarray(values, dtype=float)
        stderr = float(np.std(arr, ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        out.append(
            SummaryRow(
                condition=condition,
                estimator=estimator,
                mean=float(arr.mean()),
                stderr=stderr,
                count=int(arr.size),
            )
        )
    return tuple(out)


def _as_list(value, default: tuple[float, ...]) -> list[float]:
    if value is None:
        return list(default)
    if np.isscalar(value):
        return [float(value)]
    return [float(v) for v in value]


@lru_cache(maxsize=None)
def true_kl_outlier_mixture(eta: float, mu: float) -> float:
    """KL divergence of the contaminated normal from the clean normal, by quadrature."""

    def clean(x):
        return np.exp(-(x**2) / 2.0) / np.sqrt(2.0 * np.pi)

    def contaminated(x):
        out = np.exp(-((x - mu) ** 2) / (2.0 * OUTLIER_SD**2)) / np.sqrt(
            2.0 * np.pi * OUTLIER_SD**2
        )
        return (1.0 - eta) * clean(x) + eta * out

    def integrand(x):
        p = contaminated(x)
        if p <= 0.0:
            return 0.0
        return p * np.log(p / clean(x))

    lo = min(-12.0, mu - 12.0)
    hi = max(12.0, mu + 12.0)
    value, _ = quad(integrand, lo, hi, points=[0.0, mu], limit=200)
    return float(value)


def _l2_rows(config: ExperimentConfig, rep: int, ci: int, mu: float, kind: str) -> list[ResultRow]:
    rng = rng_stream(config.seed, config.experiment, rep, ci, "data")
    x, xp = gen_gaussian_shift(config.d, config.n, config.n_prime, mu, rng)
    fit_rng = rng_stream(config.seed, config.experiment, rep, ci, "fit")
    model, _ = fit_cv(
        x,
        xp,
        grid=config.hyper_grid(),
        folds=config.folds,
        rng=fit_rng,
        max_centers=config.max_centers,
    )
    est = l2_from_samples(x, xp, model)
    condition = f"mu={mu:g}"
    rows = [
        ResultRow(rep, condition, "lsdd_combined", est.combined),
        ResultRow(rep, condition, "true_l2", true_l2_gaussian_shift(mu)),
    ]
    if kind == "l2-curve":
        rows[1:1] = [
            ResultRow(rep, condition, "lsdd_plain_h", est.plain_h),
            ResultRow(rep, condition, "lsdd_plain_quadratic", est.plain_quadratic),
            ResultRow(rep, condition, "lsdd_bias_corrected", est.bias_corrected),
            ResultRow(rep, condition, "lsdd_positive_part", est.positive_part),
        ]
    else:
        kde_rng = rng_stream(config.seed, config.experiment, rep, ci, "kde")
        bw_x = kde_select_bandwidth(x, default_bandwidths(x), folds=config.folds, rng=kde_rng)
        bw_xp = kde_select_bandwidth(xp, default_bandwidths(xp), folds=config.folds, rng=kde_rng)
        value = kde_l2(KdeModel(x, bw_x), KdeModel(xp, bw_xp))
        rows.insert(1, ResultRow(rep, condition, "kde_l2", value))
    return rows


def _replicate_rows(config: ExperimentConfig, rep: int) -> list[ResultRow]:
    rows: list[ResultRow] = []
    if config.experiment in ("l2-curve", "kde-compare"):
        default_mu = (0.0, 0.2, 0.4, 0.6, 0.8)
        for ci, mu in enumerate(_as_list(config.mu, default_mu)):
            rows.extend(_l2_rows(config, rep, ci, mu, config.experiment))

    elif config.experiment == "robustness":
        etas = _as_list(config.eta, (0.1,))
        mus = _as_list(config.mu, (0.0, 2.0, 4.0, 6.0, 8.0, 10.0))
        ci = 0
        for eta in etas:
            for mu in mus:
                condition = f"eta={eta:g},mu={mu:g}"
                rng = rng_stream(config.seed, config.experiment, rep, ci, "data")
                x, xp = gen_outlier_mixture(config.n, config.n_prime, eta, mu, rng)
                fit_rng = rng_stream(config.seed, config.experiment, rep, ci, "fit")
                model, _ = fit_cv(
                    x,
                    xp,
                    grid=config.hyper_grid(),
                    folds=config.folds,
                    rng=fit_rng,
                    max_centers=config.max_centers,
                )
                est = l2_from_samples(x, xp, model)
                ratio_rng = rng_stream(config.seed, config.experiment, rep, ci, "ratio")
                kl_stat = kliep_statistic(folds=config.folds)(x, xp, ratio_rng)
                rows.append(ResultRow(rep, condition, "lsdd_l2", est.combined))
                rows.append(ResultRow(rep, condition, "kliep_kl", kl_stat))
                rows.append(
                    ResultRow(rep, condition, "true_l2", true_l2_outlier_mixture(eta, mu))
                )
                rows.append(
                    ResultRow(rep, condition, "true_kl", true_kl_outlier_mixture(eta, mu))
                )
                ci += 1

    elif config.experiment == "two-sample-power":
        etas = _as_list(config.eta, (0.0,))
        mus = _as_list(config.mu, (10.0,))
        ci = 0
        for eta in etas:
            for mu in mus:
                condition = f"eta={eta:g},mu={mu:g}"
                rng = rng_stream(config.seed, config.experiment, rep, ci, "data")
                x, xp = gen_outlier_mixture(config.n, config.n_prime, eta, mu, rng)
                for name in config.statistics:
                    if name == "lsdd":
                        statistic = lsdd_statistic(
                            grid=config.hyper_grid(),
                            folds=config.folds,
                            max_centers=config.max_centers,
                        )
                    elif name == "kliep":
                        statistic = kliep_statistic(folds=config.folds)
                    else:
                        raise ValueError(f"unknown statistic {name!r}")
                    test_rng = rng_stream(
                        config.seed, config.experiment, rep, ci, f"{name}-test"
                    )
                    result = permutation_test(
                        x,
                        xp,
                        statistic,
                        n_permutations=config.n_permutations,
                        alpha=config.alpha,
                        rng=test_rng,
                    )
                    rows.append(ResultRow(rep, condition, f"{name}_p_value", result.p_value))
                    rows.append(
                        ResultRow(rep, condition, f"{name}_reject", float(result.reject))
                    )
                ci += 1

    elif config.experiment == "class-balance":
        pi_grid = np.linspace(0.0, 1.0, config.pi_points)
        for ci, pi_star in enumerate(config.pi_star or tuple(np.round(np.arange(1, 10) * 0.1, 1))):
            condition = f"pi={pi_star:g}"
            rng = rng_stream(config.seed, config.experiment, rep, ci, "data")
            train, test, labels = gen_class_balance(
                config.d, config.n_labeled, config.n_test, pi_star, config.separation, rng
            )
            lsdd_res = class_balance_estimate(
                train,
                test,
                pi_grid=pi_grid,
                hyper=config.hyper_grid(),
                folds=config.folds,
                rng=rng_stream(config.seed, config.experiment, rep, ci, "lsdd"),
                max_centers=config.max_centers,
            )
            kde_res = class_balance_estimate_kde(
                train,
                test,
                pi_grid=pi_grid,
                folds=config.folds,
                rng=rng_stream(config.seed, config.experiment, rep, ci, "kde"),
            )
            rows.append(ResultRow(rep, condition, "lsdd_pi_hat", lsdd_res.pi_hat))
            rows.append(ResultRow(rep, condition, "kde_pi_hat", kde_res.pi_hat))
            rows.append(
                ResultRow(rep, condition, "lsdd_sq_error", (lsdd_res.pi_hat - pi_star) ** 2)
            )
            rows.append(
                ResultRow(rep, condition, "kde_sq_error", (kde_res.pi_hat - pi_star) ** 2)
            )
            for name, res in (("lsdd", lsdd_res), ("kde", kde_res)):
                clf = weighted_rls_fit(train, res.pi_hat, reg=config.rls_reg)
                error = float(np.mean(clf.predict(test.points) != labels))
                rows.append(ResultRow(rep, condition, f"{name}_clf_error", error))

    elif config.experiment == "change-detection":
        change_times = config.change_times or (500, 1000, 1500, 2000)
        rng = rng_stream(config.seed, config.experiment, rep, "data")
        series = gen_step_series(
            config.length, change_times, config.shift, config.noise_sd, rng
        )
        result = change_scores(
            series,
            k=config.k,
            r=config.r,
            stride=config.stride,
            hyper=config.hyper_grid(),
            rng=rng_stream(config.seed, config.experiment, rep, "score"),
            folds=config.folds,
            max_centers=config.max_centers,
        )
        for t, score in zip(result.times, result.scores):
            rows.append(ResultRow(rep, f"t={int(t)}", "lsdd_score", float(score)))

    else:  # pragma: no cover - guarded by ExperimentConfig
        raise ValueError(f"unknown experiment {config.experiment!r}")
    return rows


def _worker(args: tuple[ExperimentConfig, int]) -> list[ResultRow]:
    return _replicate_rows(*args)


def run_experiment(config: ExperimentConfig) -> ResultTable:
    """Run every replicate, assemble the table, and write any requested outputs."""
    tasks = [(config, rep) for rep in range(config.replicates)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_replicate = list(pool.map(_worker, tasks))
    else:
        per_replicate = [_worker(task) for task in tasks]

    rows: list[ResultRow] = []
    for replicate_rows in per_replicate:
        rows.extend(replicate_rows)
    table = ResultTable(config=config, rows=tuple(rows))
    if config.output:
        table.write_csv(f"{config.output}.csv")
        table.write_json(f"{config.output}.json")
    return table
