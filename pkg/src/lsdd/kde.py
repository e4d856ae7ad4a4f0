"""Gaussian kernel density estimation and the two-step density-difference baseline.

Estimating each density separately and subtracting is the obvious competitor
to direct density-difference fitting.  Because products of Gaussians integrate
in closed form, the L2 distance between two Gaussian KDEs (and between
mixtures of them) is exact, no quadrature needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .estimator import median_pairwise_distance
from .kernel import SampleSet


@dataclass(frozen=True, eq=False)
class KdeModel:
    """A Gaussian kernel density estimate: the samples plus one bandwidth."""

    samples: SampleSet
    bandwidth: float

    def __post_init__(self) -> None:
        bw = float(self.bandwidth)
        if not np.isfinite(bw) or bw <= 0:
            raise ValueError(f"bandwidth must be a positive finite real, got {bw}")
        object.__setattr__(self, "bandwidth", bw)

    @property
    def dim(self) -> int:
        return self.samples.dim


def kde_density(model: KdeModel, xs) -> np.ndarray:
    """Density estimate at each query point (always strictly positive)."""
    pts = np.asarray(xs, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[1] != model.dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, model expects {model.dim}")
    var = model.bandwidth**2
    sq = cdist(pts, model.samples.points, "sqeuclidean")
    norm = model.samples.n * (2.0 * np.pi * var) ** (model.dim / 2.0)
    return np.exp(-sq / (2.0 * var)).sum(axis=1) / norm


def kde_eval(model: KdeModel, x) -> float:
    """Density estimate at a single point."""
    return float(kde_density(model, np.asarray(x, dtype=float).reshape(1, -1))[0])


def kde_log_density(model: KdeModel, xs) -> np.ndarray:
    """Log-density at each query point, computed stably via log-sum-exp."""
    pts = np.asarray(xs, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[1] != model.dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, model expects {model.dim}")
    var = model.bandwidth**2
    sq = cdist(pts, model.samples.points, "sqeuclidean")
    log_norm = np.log(model.samples.n) + (model.dim / 2.0) * np.log(2.0 * np.pi * var)
    return logsumexp(-sq / (2.0 * var), axis=1) - log_norm


def default_bandwidths(x: SampleSet, num: int = 10) -> np.ndarray:
    """Log-spaced bandwidth candidates bracketing the median-distance heuristic."""
    med = median_pairwise_distance(x.points)
    return np.geomspace(med / 20.0, 2.0 * med, num)


def kde_select_bandwidth(
    x: SampleSet,
    candidates,
    folds: int = 5,
    rng: np.random.Generator | None = None,
) -> float:
    """Pick the candidate maximizing mean held-out log-likelihood over T folds."""
    candidates = np.asarray(candidates, dtype=float).reshape(-1)
    if candidates.size == 0:
        raise ValueError("need at least one bandwidth candidate")
    if np.any(candidates <= 0):
        raise ValueError("bandwidth candidates must be positive")
    if x.n < folds:
        raise ValueError(f"need at least {folds} samples for {folds}-fold cross-validation")
    if rng is None:
        rng = np.random.default_rng()
    fold_idx = np.array_split(rng.permutation(x.n), folds)
    scores = np.zeros(candidates.size)
    for t in range(folds):
        hold = fold_idx[t]
        mask = np.ones(x.n, dtype=bool)
        mask[hold] = False
        train = SampleSet(x.points[mask])
        held_points = x.points[hold]
        for ci, bw in enumerate(candidates):
            model = KdeModel(samples=train, bandwidth=float(bw))
            scores[ci] += float(np.mean(kde_log_density(model, held_points)))
    scores /= folds
    if not np.any(np.isfinite(scores)):
        raise ValueError("every bandwidth candidate gave a degenerate held-out likelihood")
    return float(candidates[int(np.argmax(scores))])


def kde_diff_eval(p_model: KdeModel, p_prime_model: KdeModel, xs) -> np.ndarray:
    """Pointwise difference of the two density estimates."""
    if p_model.dim != p_prime_model.dim:
        raise ValueError("models have different dimensions")
    return kde_density(p_model, xs) - kde_density(p_prime_model, xs)


def kde_cross_integral(a: KdeModel, b: KdeModel) -> float:
    """Exact integral of the product of two Gaussian KDEs.

    Each pair of kernels convolves to a single Gaussian evaluated at the
    center separation, so the integral is a mean of n_a * n_b closed-form
    terms with combined variance bw_a^2 + bw_b^2.
    """
    if a.dim != b.dim:
        raise ValueError("models have different dimensions")
    var = a.bandwidth**2 + b.bandwidth**2
    sq = cdist(a.samples.points, b.samples.points, "sqeuclidean")
    norm = (2.0 * np.pi * var) ** (a.dim / 2.0)
    return float(np.mean(np.exp(-sq / (2.0 * var)))) / norm


def kde_l2(p_model: KdeModel, p_prime_model: KdeModel) -> float:
    """Exact L2 distance between two Gaussian KDEs (zero iff they coincide)."""
    value = (
        kde_cross_integral(p_model, p_model)
        + kde_cross_integral(p_prime_model, p_prime_model)
        - 2.0 * kde_cross_integral(p_model, p_prime_model)
    )
    return max(0.0, value)
