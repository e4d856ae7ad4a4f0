"""Least-squares density-difference fitting with (sigma, lambda) cross-validation.

The model g(x) = sum_l theta_l exp(-||x - c_l||^2 / (2 sigma^2)) is fitted to
p - p' by minimizing the quadratic objective

    theta' H theta - 2 h' theta + lambda theta' theta,

whose unique minimizer is (H + lambda I)^{-1} h with H the analytic Gram
matrix and h the empirical basis-mean difference.  Model selection minimizes
the unbiased hold-out risk estimate over a grid of (sigma, lambda) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .kernel import (
    Coefficients,
    DesignPair,
    GaussianBasis,
    SampleSet,
    design_matrix,
    gram_matrix,
    mean_diff_vector,
    select_centers,
    solve_regularized,
)

DEFAULT_LAMBDAS = (1e-3, 1e-2, 1e-1, 1.0, 10.0)


@dataclass(frozen=True, eq=False)
class DensityDiffModel:
    """A fitted density-difference model: basis, coefficients, and cached Gram matrix."""

    basis: GaussianBasis
    theta: Coefficients
    gram: np.ndarray

    def __post_init__(self) -> None:
        if len(self.theta) != self.basis.size:
            raise ValueError(
                f"theta length {len(self.theta)} does not match basis size {self.basis.size}"
            )
        gram = np.asarray(self.gram, dtype=float)
        if gram.shape != (self.basis.size, self.basis.size):
            raise ValueError(f"gram shape {gram.shape} does not match basis size")
        object.__setattr__(self, "gram", gram)


@dataclass(frozen=True, eq=False)
class HyperGrid:
    """Candidate kernel widths and regularization strengths, each strictly increasing."""

    sigmas: np.ndarray
    lambdas: np.ndarray

    def __post_init__(self) -> None:
        sigmas = np.asarray(self.sigmas, dtype=float).reshape(-1)
        lambdas = np.asarray(self.lambdas, dtype=float).reshape(-1)
        if sigmas.size == 0 or lambdas.size == 0:
            raise ValueError("hyperparameter grid must be nonempty")
        if np.any(sigmas <= 0) or not np.all(np.isfinite(sigmas)):
            raise ValueError("kernel widths must be positive finite reals")
        if np.any(lambdas < 0) or not np.all(np.isfinite(lambdas)):
            raise ValueError("regularization values must be nonnegative finite reals")
        if sigmas.size > 1 and np.any(np.diff(sigmas) <= 0):
            raise ValueError("kernel widths must be strictly increasing")
        if lambdas.size > 1 and np.any(np.diff(lambdas) <= 0):
            raise ValueError("regularization values must be strictly increasing")
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "lambdas", lambdas)


@dataclass(frozen=True, eq=False)
class CvReport:
    """Grid-search record: per-fold and mean scores plus the selected pair.

    Candidates are enumerated width-major (all lambdas for the smallest width
    first); ties in the mean score resolve to the earliest candidate.
    """

    sigmas: np.ndarray
    lambdas: np.ndarray
    fold_scores: np.ndarray
    mean_scores: np.ndarray
    selected_sigma: float
    selected_lambda: float
    selected_index: int
    folds: int

    @property
    def candidates(self) -> list[tuple[float, float]]:
        return [(float(s), float(l)) for s in self.sigmas for l in self.lambdas]


def median_pairwise_distance(points: np.ndarray) -> float:
    """Median Euclidean distance between pairs of points (the usual width heuristic).

    Falls back to 1.0 for degenerate inputs (fewer than two points, or all
    points coincident).  Inputs larger than 2000 points are thinned to an
    evenly spaced subset so the cost stays quadratic in 2000, not n.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[0] > 2000:
        pts = pts[np.linspace(0, pts.shape[0] - 1, 2000).astype(int)]
    if pts.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(pts)))
    return med if med > 0 else 1.0


def default_hyper_grid(
    x: SampleSet,
    x_prime: SampleSet,
    n_sigmas: int = 10,
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS,
) -> HyperGrid:
    """Log-spaced widths spanning 0.1 to 10 times the pooled median distance."""
    med = median_pairwise_distance(np.vstack([x.points, x_prime.points]))
    sigmas = np.geomspace(0.1 * med, 10.0 * med, n_sigmas)
    return HyperGrid(sigmas=sigmas, lambdas=np.asarray(lambdas, dtype=float))


def fit_fixed(
    x: SampleSet,
    x_prime: SampleSet,
    sigma: float,
    lam: float,
    centers: np.ndarray,
) -> DensityDiffModel:
    """Fit the density-difference model at fixed width and regularization."""
    basis = GaussianBasis(centers=centers, width=sigma)
    gram = gram_matrix(basis)
    diff = mean_diff_vector(basis, x, x_prime)
    theta = solve_regularized(DesignPair(gram=gram, mean_diff=diff), lam)
    return DensityDiffModel(basis=basis, theta=theta, gram=gram)


def predict(model: DensityDiffModel, xs) -> np.ndarray:
    """Evaluate the fitted density difference at each query point."""
    return design_matrix(model.basis, np.asarray(xs, dtype=float)) @ model.theta.theta


def squared_norm(model: DensityDiffModel) -> float:
    """Integral of the squared model over R^d, computed as theta' H theta.

    Tiny negative values from roundoff (above -1e-10) are reported as 0.
    """
    theta = model.theta.theta
    value = float(theta @ model.gram @ theta)
    if -1e-10 < value < 0.0:
        return 0.0
    return value


def cv_score(model: DensityDiffModel, holdout_x: SampleSet, holdout_x_prime: SampleSet) -> float:
    """Hold-out risk estimate: theta'Htheta - 2 mean_x f + 2 mean_x' f."""
    if holdout_x.n < 1 or holdout_x_prime.n < 1:
        raise ValueError("holdout sets must be nonempty")
    theta = model.theta.theta
    quad = float(theta @ model.gram @ theta)
    mean_x = float(np.mean(predict(model, holdout_x.points)))
    mean_xp = float(np.mean(predict(model, holdout_x_prime.points)))
    return quad - 2.0 * mean_x + 2.0 * mean_xp


def _fold_indices(n: int, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    return np.array_split(rng.permutation(n), folds)


def fit_cv(
    x: SampleSet,
    x_prime: SampleSet,
    grid: HyperGrid | None = None,
    folds: int = 5,
    rng: np.random.Generator | None = None,
    max_centers: int = 300,
) -> tuple[DensityDiffModel, CvReport]:
    """Select (sigma, lambda) by T-fold cross-validation and refit on all data.

    Kernel centers are drawn once from the pooled data and held fixed across
    folds and candidates, so each width needs a single Gram matrix.  Both
    sample sets are shuffled independently (x first) and split into T
    near-equal folds.  For each candidate the model is fitted on the
    out-of-fold portions of both sets and scored on the held-out portions;
    the candidate with the smallest mean score wins, earliest candidate first
    on ties.
    """
    if folds < 2:
        raise ValueError("cross-validation requires at least 2 folds")
    if x.n < folds or x_prime.n < folds:
        raise ValueError(
            f"need at least {folds} points in each set for {folds}-fold cross-validation"
        )
    if rng is None:
        rng = np.random.default_rng()
    if grid is None:
        grid = default_hyper_grid(x, x_prime)

    centers = select_centers(x, x_prime, max_centers=max_centers, rng=rng)
    folds_x = _fold_indices(x.n, folds, rng)
    folds_xp = _fold_indices(x_prime.n, folds, rng)

    n_lams = grid.lambdas.size
    fold_scores = np.empty((grid.sigmas.size * n_lams, folds))

    for si, sigma in enumerate(grid.sigmas):
        basis = GaussianBasis(centers=centers, width=float(sigma))
        gram = gram_matrix(basis)
        psi_x = design_matrix(basis, x.points)
        psi_xp = design_matrix(basis, x_prime.points)
        # One symmetric eigendecomposition per width serves every (fold, lambda)
        # pair; the final refit goes through the Cholesky path in fit_fixed.
        evals, vecs = np.linalg.eigh(gram)
        evals = np.clip(evals, 0.0, None)
        total_x = psi_x.sum(axis=0)
        total_xp = psi_xp.sum(axis=0)
        for t in range(folds):
            ix, ixp = folds_x[t], folds_xp[t]
            train_mean_x = (total_x - psi_x[ix].sum(axis=0)) / (x.n - ix.size)
            train_mean_xp = (total_xp - psi_xp[ixp].sum(axis=0)) / (x_prime.n - ixp.size)
            z = vecs.T @ (train_mean_x - train_mean_xp)
            hold_x = psi_x[ix]
            hold_xp = psi_xp[ixp]
            for lj, lam in enumerate(grid.lambdas):
                denom = evals + lam
                cutoff = max(float(evals[-1]), lam) * 1e-14
                w = np.where(denom > cutoff, z / np.where(denom > cutoff, denom, 1.0), 0.0)
                quad = float(np.sum(evals * w * w))
                theta = vecs @ w
                score = (
                    quad
                    - 2.0 * float(np.mean(hold_x @ theta))
                    + 2.0 * float(np.mean(hold_xp @ theta))
                )
                fold_scores[si * n_lams + lj, t] = score

    mean_scores = fold_scores.mean(axis=1)
    best = int(np.argmin(mean_scores))
    best_sigma = float(grid.sigmas[best // n_lams])
    best_lambda = float(grid.lambdas[best % n_lams])
    model = fit_fixed(x, x_prime, best_sigma, best_lambda, centers)
    report = CvReport(
        sigmas=grid.sigmas,
        lambdas=grid.lambdas,
        fold_scores=fold_scores,
        mean_scores=mean_scores,
        selected_sigma=best_sigma,
        selected_lambda=best_lambda,
        selected_index=best,
        folds=folds,
    )
    return model, report
