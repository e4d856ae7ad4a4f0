"""Downstream uses of the density-difference machinery.

Two tasks live here.  Class-balance estimation matches a mixture of the
class-wise training input densities against the unlabeled test input density
in L2 distance, sweeping the mixing coefficient; the matching distance is the
combined estimator evaluated with a mixture-weighted mean vector, so the
whole sweep reuses one factorization.  Change-point scoring embeds a time
series as overlapping subsequence windows and scores the distance between
consecutive window segments, so distributional change shows up as local score
maxima.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.signal import find_peaks

from .divergence import l2_from_samples
from .estimator import (
    DEFAULT_LAMBDAS,
    HyperGrid,
    default_hyper_grid,
    fit_fixed,
    fit_cv,
    median_pairwise_distance,
)
from .kde import KdeModel, default_bandwidths, kde_cross_integral, kde_select_bandwidth
from .kernel import (
    GaussianBasis,
    SampleSet,
    SingularSystemError,
    design_matrix,
    gram_matrix,
    select_centers,
)
from .two_sample import Statistic


@dataclass(frozen=True, eq=False)
class LabeledSet:
    """Labeled binary training data as two sample sets."""

    positives: SampleSet
    negatives: SampleSet

    def __post_init__(self) -> None:
        if self.positives.dim != self.negatives.dim:
            raise ValueError(
                f"dimension mismatch: {self.positives.dim} vs {self.negatives.dim}"
            )

    @property
    def dim(self) -> int:
        return self.positives.dim


@dataclass(frozen=True, eq=False)
class ClassBalanceResult:
    """Estimated positive-class proportion plus the full matching-distance curve."""

    pi_hat: float
    grid: tuple[tuple[float, float], ...]
    selected_sigma: float | None = None
    selected_lambda: float | None = None


@dataclass(frozen=True, eq=False)
class SubsequenceSet:
    """Overlapping windows of k consecutive time-series vectors, flattened."""

    windows: np.ndarray
    k: int
    m: int

    def __post_init__(self) -> None:
        windows = np.asarray(self.windows, dtype=float)
        if windows.ndim != 2 or windows.shape[1] != self.k * self.m:
            raise ValueError(
                f"windows shape {windows.shape} does not match k*m = {self.k * self.m}"
            )
        object.__setattr__(self, "windows", windows)

    @property
    def count(self) -> int:
        return self.windows.shape[0]


@dataclass(frozen=True, eq=False)
class ChangeScoreSeries:
    """Change scores aligned to the segment boundary they evaluate."""

    times: np.ndarray
    scores: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=int)
        scores = np.asarray(self.scores, dtype=float)
        if times.shape != scores.shape or times.ndim != 1:
            raise ValueError("times and scores must be aligned 1-d arrays")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "scores", scores)


def _mixture_cv_select(
    psi_pos: list[np.ndarray],
    psi_neg: list[np.ndarray],
    psi_test: list[np.ndarray],
    grams: list[np.ndarray],
    grid: HyperGrid,
    folds: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Pick (sigma, lambda) by hold-out risk for the 0.5/0.5 mixture-vs-test fit.

    ``psi_*`` hold one design matrix per candidate width; each of the three
    sample sets is shuffled and split into T folds once, shared across
    candidates.
    """
    sets = [psi_pos, psi_neg, psi_test]
    fold_idx = [np.array_split(rng.permutation(s[0].shape[0]), folds) for s in sets]
    n_lams = grid.lambdas.size
    mean_scores = np.zeros(grid.sigmas.size * n_lams)
    for si in range(grid.sigmas.size):
        p_pos, p_neg, p_test = psi_pos[si], psi_neg[si], psi_test[si]
        evals, vecs = np.linalg.eigh(grams[si])
        evals = np.clip(evals, 0.0, None)
        totals = [p.sum(axis=0) for p in (p_pos, p_neg, p_test)]
        counts = [p.shape[0] for p in (p_pos, p_neg, p_test)]
        for t in range(folds):
            holds = [fold_idx[j][t] for j in range(3)]
            train_means = [
                (totals[j] - (p_pos, p_neg, p_test)[j][holds[j]].sum(axis=0))
                / (counts[j] - holds[j].size)
                for j in range(3)
            ]
            h_t = 0.5 * train_means[0] + 0.5 * train_means[1] - train_means[2]
            z = vecs.T @ h_t
            hold_mats = [(p_pos, p_neg, p_test)[j][holds[j]] for j in range(3)]
            for lj, lam in enumerate(grid.lambdas):
                denom = evals + lam
                cutoff = max(float(evals[-1]), lam) * 1e-14
                w = np.where(denom > cutoff, z / np.where(denom > cutoff, denom, 1.0), 0.0)
                theta = vecs @ w
                quad = float(np.sum(evals * w * w))
                mix_term = 0.5 * float(np.mean(hold_mats[0] @ theta)) + 0.5 * float(
                    np.mean(hold_mats[1] @ theta)
                )
                test_term = float(np.mean(hold_mats[2] @ theta))
                mean_scores[si * n_lams + lj] += quad - 2.0 * mix_term + 2.0 * test_term
    mean_scores /= folds
    best = int(np.argmin(mean_scores))
    return float(grid.sigmas[best // n_lams]), float(grid.lambdas[best % n_lams])


def class_balance_estimate(
    train: LabeledSet,
    test: SampleSet,
    pi_grid=None,
    hyper: HyperGrid | None = None,
    folds: int = 5,
    rng: np.random.Generator | None = None,
    max_centers: int = 300,
) -> ClassBalanceResult:
    """Estimate the test-set positive-class proportion by L2 distribution matching.

    For each candidate proportion the mean-difference vector of the
    pi-weighted mixture of class-wise basis means against the test basis mean
    feeds the usual regularized solve, and the combined L2 estimate is the
    matching distance.  Hyperparameters are selected once, by cross-validation
    at pi = 0.5, and reused across the grid so the curve stays comparable.
    """
    if train.dim != test.dim:
        raise ValueError(f"dimension mismatch: {train.dim} vs {test.dim}")
    if pi_grid is None:
        pi_grid = np.linspace(0.0, 1.0, 101)
    pi_grid = np.asarray(pi_grid, dtype=float).reshape(-1)
    if pi_grid.size == 0:
        raise ValueError("pi grid must be nonempty")
    if np.any((pi_grid < 0) | (pi_grid > 1)):
        raise ValueError("pi grid values must lie in [0, 1]")
    if min(train.positives.n, train.negatives.n, test.n) < folds:
        raise ValueError(
            f"need at least {folds} points in each of positives, negatives, and test"
        )
    if rng is None:
        rng = np.random.default_rng()

    labeled = SampleSet(np.vstack([train.positives.points, train.negatives.points]))
    if hyper is None:
        hyper = default_hyper_grid(labeled, test)
    centers = select_centers(labeled, test, max_centers=max_centers, rng=rng)

    bases = [GaussianBasis(centers=centers, width=float(s)) for s in hyper.sigmas]
    grams = [gram_matrix(b) for b in bases]
    psi_pos = [design_matrix(b, train.positives.points) for b in bases]
    psi_neg = [design_matrix(b, train.negatives.points) for b in bases]
    psi_test = [design_matrix(b, test.points) for b in bases]

    sigma, lam = _mixture_cv_select(psi_pos, psi_neg, psi_test, grams, hyper, folds, rng)
    si = int(np.argmin(np.abs(hyper.sigmas - sigma)))
    gram = grams[si]
    mean_pos = psi_pos[si].mean(axis=0)
    mean_neg = psi_neg[si].mean(axis=0)
    mean_test = psi_test[si].mean(axis=0)

    factor = cho_factor(gram + lam * np.eye(gram.shape[0]), lower=True, check_finite=False)
    curve = []
    for pi in pi_grid:
        h_pi = pi * mean_pos + (1.0 - pi) * mean_neg - mean_test
        theta = cho_solve(factor, h_pi, check_finite=False)
        distance = 2.0 * float(h_pi @ theta) - float(theta @ gram @ theta)
        curve.append((float(pi), distance))
    best = int(np.argmin([c[1] for c in curve]))
    return ClassBalanceResult(
        pi_hat=curve[best][0],
        grid=tuple(curve),
        selected_sigma=sigma,
        selected_lambda=lam,
    )


def class_balance_estimate_kde(
    train: LabeledSet,
    test: SampleSet,
    pi_grid=None,
    folds: int = 5,
    rng: np.random.Generator | None = None,
) -> ClassBalanceResult:
    """Baseline matcher: exact L2 between a mixture of class KDEs and the test KDE.

    Bandwidths are selected per set by held-out log-likelihood; the mixture
    distance then expands into pairwise Gaussian cross integrals, so the
    sweep over mixing proportions is closed-form.
    """
    if train.dim != test.dim:
        raise ValueError(f"dimension mismatch: {train.dim} vs {test.dim}")
    if pi_grid is None:
        pi_grid = np.linspace(0.0, 1.0, 101)
    pi_grid = np.asarray(pi_grid, dtype=float).reshape(-1)
    if pi_grid.size == 0:
        raise ValueError("pi grid must be nonempty")
    if np.any((pi_grid < 0) | (pi_grid > 1)):
        raise ValueError("pi grid values must lie in [0, 1]")
    if rng is None:
        rng = np.random.default_rng()

    models = []
    for part in (train.positives, train.negatives, test):
        t = min(folds, part.n)
        if t >= 2:
            bw = kde_select_bandwidth(part, default_bandwidths(part), folds=t, rng=rng)
        else:
            bw = float(np.median(default_bandwidths(part)))
        models.append(KdeModel(samples=part, bandwidth=bw))
    pos, neg, tst = models

    a_pp = kde_cross_integral(pos, pos)
    a_nn = kde_cross_integral(neg, neg)
    a_tt = kde_cross_integral(tst, tst)
    a_pn = kde_cross_integral(pos, neg)
    a_pt = kde_cross_integral(pos, tst)
    a_nt = kde_cross_integral(neg, tst)

    curve = []
    for pi in pi_grid:
        q = 1.0 - pi
        distance = (
            pi * pi * a_pp
            + q * q * a_nn
            + a_tt
            + 2.0 * pi * q * a_pn
            - 2.0 * pi * a_pt
            - 2.0 * q * a_nt
        )
        curve.append((float(pi), float(distance)))
    best = int(np.argmin([c[1] for c in curve]))
    return ClassBalanceResult(pi_hat=curve[best][0], grid=tuple(curve))


@dataclass(frozen=True, eq=False)
class WeightedRlsClassifier:
    """Gaussian-kernel scorer whose sign is the predicted label."""

    centers: np.ndarray
    width: float
    beta: np.ndarray

    def decision_values(self, xs) -> np.ndarray:
        basis = GaussianBasis(centers=self.centers, width=self.width)
        return design_matrix(basis, np.asarray(xs, dtype=float)) @ self.beta

    def predict(self, xs) -> np.ndarray:
        return np.where(self.decision_values(xs) >= 0.0, 1, -1)


def weighted_rls_fit(
    train: LabeledSet,
    pi_hat: float,
    kernel_width: float | None = None,
    reg: float = 0.1,
) -> WeightedRlsClassifier:
    """Class-balance-weighted regularized least squares on a Gaussian expansion.

    Positive examples carry weight pi_hat/n_pos and negatives
    (1 - pi_hat)/n_neg, so the fitted scorer targets the reweighted test
    distribution.  Minimizing sum_i w_i (g(x_i) - y_i)^2 + reg ||g||^2 over
    g(x) = sum_j beta_j k(x, x_j) reduces to (W K + reg I) beta = W y.
    """
    if not 0.0 <= pi_hat <= 1.0:
        raise ValueError("pi_hat must lie in [0, 1]")
    points = np.vstack([train.positives.points, train.negatives.points])
    y = np.concatenate(
        [np.ones(train.positives.n), -np.ones(train.negatives.n)]
    )
    weights = np.concatenate(
        [
            np.full(train.positives.n, pi_hat / train.positives.n),
            np.full(train.negatives.n, (1.0 - pi_hat) / train.negatives.n),
        ]
    )
    if kernel_width is None:
        kernel_width = median_pairwise_distance(points)
    basis = GaussianBasis(centers=points, width=float(kernel_width))
    kmat = design_matrix(basis, points)
    system = weights[:, None] * kmat + reg * np.eye(points.shape[0])
    try:
        beta = np.linalg.solve(system, weights * y)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "weighted least-squares system is singular; increase reg"
        ) from exc
    return WeightedRlsClassifier(centers=points, width=float(kernel_width), beta=beta)


def build_subsequences(series, k: int) -> SubsequenceSet:
    """Stack k consecutive time-series vectors into one point per start time."""
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"series must be 1-d or 2-d, got ndim={arr.ndim}")
    length, m = arr.shape
    if k < 1:
        raise ValueError("window length k must be >= 1")
    if length < k:
        raise ValueError(f"series length {length} is shorter than window length {k}")
    view = np.lib.stride_tricks.sliding_window_view(arr, k, axis=0)
    windows = view.transpose(0, 2, 1).reshape(length - k + 1, k * m)
    return SubsequenceSet(windows=windows.copy(), k=k, m=m)


def change_scores(
    series,
    k: int = 5,
    r: int = 50,
    scorer: Statistic | None = None,
    stride: int = 1,
    hyper: HyperGrid | None = None,
    rng: np.random.Generator | None = None,
    folds: int = 5,
    max_centers: int = 300,
    estimator: str = "combined",
    freeze_hyperparams: bool = False,
) -> ChangeScoreSeries:
    """Score distributional change between consecutive segments of r windows.

    At each evaluation start t (on the stride grid) the r windows from t are
    compared against the next r windows, and the score is indexed by the
    boundary time t + r.  The default scorer fits the density-difference
    model with full cross-validation per evaluation and reports the chosen L2
    estimate; ``freeze_hyperparams`` reuses the first evaluation's selected
    (sigma, lambda) for all later ones.  Each evaluation runs on a substream
    keyed by t, so scores at shared times agree across strides.

    When no grid is given, one is built from the median distance over all
    windows, with widths spanning 0.4 to 4 times that median.  Consecutive
    windows overlap in k-1 samples, and that dependence lets hold-out
    validation reward near-delta kernels that merely memorize window
    positions; keeping the width floor at a sizable fraction of the median
    distance removes that degenerate corner.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    subseq = build_subsequences(series, k)
    if subseq.count < 2 * r:
        raise ValueError(
            f"series yields {subseq.count} windows; need at least {2 * r} for segments of {r}"
        )
    if rng is None:
        rng = np.random.default_rng()
    if hyper is None and scorer is None:
        med = median_pairwise_distance(subseq.windows)
        hyper = HyperGrid(
            sigmas=med * np.geomspace(0.4, 4.0, 8),
            lambdas=np.asarray(DEFAULT_LAMBDAS),
        )
    base = int(rng.integers(0, 2**32))

    times = []
    scores = []
    frozen: tuple[float, float] | None = None
    for t in range(0, subseq.count - 2 * r + 1, stride):
        seg_a = SampleSet(subseq.windows[t : t + r])
        seg_b = SampleSet(subseq.windows[t + r : t + 2 * r])
        sub = np.random.Generator(np.random.Philox(np.random.SeedSequence((base, t))))
        if scorer is not None:
            value = float(scorer(seg_a, seg_b, sub))
        elif freeze_hyperparams and frozen is not None:
            centers = select_centers(seg_a, seg_b, max_centers=max_centers, rng=sub)
            model = fit_fixed(seg_a, seg_b, frozen[0], frozen[1], centers)
            value = getattr(l2_from_samples(seg_a, seg_b, model), estimator)
        else:
            model, report = fit_cv(
                seg_a, seg_b, grid=hyper, folds=folds, rng=sub, max_centers=max_centers
            )
            if freeze_hyperparams:
                frozen = (report.selected_sigma, report.selected_lambda)
            value = getattr(l2_from_samples(seg_a, seg_b, model), estimator)
        times.append(t + r)
        scores.append(value)
    return ChangeScoreSeries(times=np.asarray(times), scores=np.asarray(scores))


def top_change_points(
    result: ChangeScoreSeries, count: int, min_separation: int | None = None
) -> list[int]:
    """Times of the ``count`` highest local maxima of the score series.

    ``min_separation`` (in time units) suppresses lower maxima closer than
    that to a higher one; scores within a segment length of a change all
    measure the same boundary, so passing the segment length r reports each
    change once instead of crowding the list with one jagged peak.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    distance = 1
    if min_separation is not None and result.times.size > 1:
        step = int(np.min(np.diff(result.times)))
        distance = max(1, int(np.ceil(min_separation / step)))
    peaks, _ = find_peaks(result.scores, distance=distance)
    if peaks.size == 0:
        return []
    order = peaks[np.argsort(result.scores[peaks], kind="stable")[::-1]]
    return [int(result.times[i]) for i in order[:count]]
