"""Permutation two-sample testing over any distance statistic.

The null distribution is built by pooling both samples, re-splitting the pool
uniformly at random, and recomputing the statistic from scratch on each
re-split, including any internal model selection, so the observed statistic
and its null replicates go through the identical pipeline.  The p-value uses
add-one smoothing (the observed split counts as one of its own permutations),
which keeps the test valid at any significance level.

Each permutation runs on its own random substream derived from (base, index),
so results are reproducible and replicates could be evaluated in any order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .divergence import l2_from_samples
from .estimator import HyperGrid, fit_cv
from .kernel import SampleSet
from .kliep import kliep_fit_cv, kliep_kl_estimate

Statistic = Callable[[SampleSet, SampleSet, np.random.Generator], float]


class StatisticError(RuntimeError):
    """A distance statistic failed while the test was running."""


@dataclass(frozen=True, eq=False)
class TestResult:
    observed_stat: float
    permuted_stats: np.ndarray
    p_value: float
    reject: bool
    alpha: float


def _substream(base: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((base, index))))


def permutation_test(
    x: SampleSet,
    x_prime: SampleSet,
    statistic: Statistic,
    n_permutations: int = 100,
    alpha: float = 0.05,
    rng: np.random.Generator | None = None,
) -> TestResult:
    """Test whether both samples come from one distribution.

    ``statistic`` is called as statistic(x, x_prime, rng) and must return a
    scalar distance; larger values mean more separation.  Substream 0 drives
    the observed statistic, substream i >= 1 the i-th permutation.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    if x.dim != x_prime.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {x_prime.dim}")
    if rng is None:
        rng = np.random.default_rng()
    base = int(rng.integers(0, 2**32))

    try:
        observed = float(statistic(x, x_prime, _substream(base, 0)))
    except Exception as exc:
        raise StatisticError(f"statistic failed on the observed split: {exc}") from exc

    pooled = np.vstack([x.points, x_prime.points])
    n = x.n
    permuted = np.empty(n_permutations)
    for i in range(1, n_permutations + 1):
        sub = _substream(base, i)
        order = sub.permutation(pooled.shape[0])
        xa = SampleSet(pooled[order[:n]])
        xb = SampleSet(pooled[order[n:]])
        try:
            permuted[i - 1] = float(statistic(xa, xb, sub))
        except Exception as exc:
            raise StatisticError(f"statistic failed on permutation {i}: {exc}") from exc

    p_value = (1.0 + float(np.sum(permuted >= observed))) / (1.0 + n_permutations)
    return TestResult(
        observed_stat=observed,
        permuted_stats=permuted,
        p_value=p_value,
        reject=bool(p_value <= alpha),
        alpha=alpha,
    )


def lsdd_statistic(
    grid: HyperGrid | None = None,
    folds: int = 5,
    max_centers: int = 300,
    estimator: str = "combined",
) -> Statistic:
    """Distance statistic: cross-validated density-difference fit, then an L2 estimate."""
    if estimator not in ("combined", "plain_h", "plain_quadratic", "bias_corrected", "positive_part"):
        raise ValueError(f"unknown estimator {estimator!r}")

    def stat(x: SampleSet, x_prime: SampleSet, rng: np.random.Generator) -> float:
        model, _ = fit_cv(x, x_prime, grid=grid, folds=folds, rng=rng, max_centers=max_centers)
        return getattr(l2_from_samples(x, x_prime, model), estimator)

    return stat


def kliep_statistic(
    sigma_candidates=None,
    folds: int = 5,
    max_centers: int = 100,
    max_iter: int = 500,
    tol: float = 1e-4,
) -> Statistic:
    """Distance statistic: cross-validated ratio fit, then the KL estimate."""

    def stat(x: SampleSet, x_prime: SampleSet, rng: np.random.Generator) -> float:
        model = kliep_fit_cv(
            x,
            x_prime,
            sigma_candidates=sigma_candidates,
            folds=folds,
            rng=rng,
            max_iter=max_iter,
            tol=tol,
            max_centers=max_centers,
        )
        return kliep_kl_estimate(model, x)

    return stat
