"""KL-divergence estimation through direct density-ratio fitting.

Models the ratio w(x) = p(x)/p'(x) as a nonnegative combination of Gaussian
kernels centered on (a subset of) the numerator samples, maximizing the mean
log-ratio over the numerator sample under the moment constraint that the
fitted ratio averages to one over the denominator sample.  The program is
concave; a projected gradient ascent with backtracking suffices.  The mean
log fitted ratio over the numerator sample then estimates KL(p || p').

The raw estimates are reported as-is: the empirical normalization makes their
scale unreliable, but their profile across conditions is informative, which
is all the comparisons here need.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .estimator import median_pairwise_distance
from .kernel import GaussianBasis, SampleSet, design_matrix

RATIO_FLOOR = 1e-12

ARMIJO = 1e-4


class ConvergenceWarning(RuntimeWarning):
    """Emitted when the ascent stops at max_iter without reaching tolerance."""


@dataclass(frozen=True, eq=False)
class RatioModel:
    """Fitted density-ratio model with nonnegative, normalization-feasible weights."""

    basis: GaussianBasis
    alpha: np.ndarray
    converged: bool = True
    objective_path: tuple[float, ...] = ()
    cv_scores: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        if alpha.shape[0] != self.basis.size:
            raise ValueError(
                f"alpha length {alpha.shape[0]} does not match basis size {self.basis.size}"
            )
        if np.any(alpha < 0):
            raise ValueError("ratio weights must be nonnegative")
        object.__setattr__(self, "alpha", alpha)


def ratio_values(model: RatioModel, xs) -> np.ndarray:
    """Fitted ratio w(x) at each query point."""
    return design_matrix(model.basis, np.asarray(xs, dtype=float)) @ model.alpha


def default_ratio_bandwidths(x: SampleSet, x_prime: SampleSet) -> np.ndarray:
    """Kernel width candidates: powers of two around the pooled median distance."""
    med = median_pairwise_distance(np.vstack([x.points, x_prime.points]))
    return med * 2.0 ** np.arange(-2.0, 3.0)


def _select_ratio_centers(
    x: SampleSet, max_centers: int, rng: np.random.Generator
) -> np.ndarray:
    if x.n <= max_centers:
        return x.points
    return x.points[rng.choice(x.n, size=max_centers, replace=False)]


def _project(alpha: np.ndarray, bvec: np.ndarray) -> np.ndarray:
    """Clamp to the nonnegative orthant, then rescale onto the normalization face."""
    alpha = np.clip(alpha, 0.0, None)
    scale = float(bvec @ alpha)
    if scale <= 0.0:
        alpha = np.ones_like(alpha)
        scale = float(bvec @ alpha)
    return alpha / scale


def _fit_weights(
    phi: np.ndarray,
    bvec: np.ndarray,
    max_iter: int,
    tol: float,
    init: np.ndarray | None = None,
) -> tuple[np.ndarray, bool, list[float]]:
    """Projected gradient ascent on the mean log-ratio over rows of phi."""
    n = phi.shape[0]
    bnorm = float(bvec @ bvec)

    def objective(a: np.ndarray) -> float:
        return float(np.mean(np.log(np.clip(phi @ a, RATIO_FLOOR, None))))

    alpha = _project(np.ones(phi.shape[1]) if init is None else init, bvec)
    obj = objective(alpha)
    path = [obj]
    step = 1.0
    converged = False
    for _ in range(max_iter):
        w = np.clip(phi @ alpha, RATIO_FLOOR, None)
        grad = phi.T @ (1.0 / w) / n
        # The ascent direction is the gradient projected onto the
        # normalization hyperplane; stepping along the raw gradient can be
        # neutralized by the rescale in the projection.  Stationarity masks
        # off descent directions at active bounds.
        tangent = grad - (float(bvec @ grad) / bnorm) * bvec
        free = (alpha > 0.0) | (tangent > 0.0)
        if float(np.max(np.abs(np.where(free, tangent, 0.0)))) <= tol:
            converged = True
            break
        accepted = False
        while step >= 1e-14:
            cand = _project(alpha + step * tangent, bvec)
            cand_obj = objective(cand)
            gain = float(grad @ (cand - alpha))
            if cand_obj >= obj + ARMIJO * gain and cand_obj >= obj - 1e-12:
                alpha, obj = cand, cand_obj
                path.append(obj)
                accepted = True
                step *= 2.0
                break
            step *= 0.5
        if not accepted:
            # The line search cannot improve the objective at any step size;
            # the iterate is numerically stationary.
            converged = True
            break
    return alpha, converged, path


def kliep_fit(
    x: SampleSet,
    x_prime: SampleSet,
    sigma: float,
    max_iter: int = 300,
    tol: float = 1e-3,
    rng: np.random.Generator | None = None,
    max_centers: int = 100,
) -> RatioModel:
    """Fit the ratio model at a fixed kernel width.

    Centers come from the numerator samples (at most ``max_centers`` of them).
    On hitting ``max_iter`` the best feasible iterate is returned and a
    ConvergenceWarning is emitted.
    """
    if x.dim != x_prime.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {x_prime.dim}")
    if rng is None:
        rng = np.random.default_rng()
    centers = _select_ratio_centers(x, max_centers, rng)
    basis = GaussianBasis(centers=centers, width=float(sigma))
    phi = design_matrix(basis, x.points)
    bvec = design_matrix(basis, x_prime.points).mean(axis=0)
    if float(bvec.max(initial=0.0)) <= 0.0:
        raise ValueError("denominator samples do not overlap the basis support")
    alpha, converged, path = _fit_weights(phi, bvec, max_iter, tol)
    if not converged:
        warnings.warn(
            f"ratio fit did not reach tolerance {tol} within {max_iter} iterations",
            ConvergenceWarning,
            stacklevel=2,
        )
    return RatioModel(
        basis=basis, alpha=alpha, converged=converged, objective_path=tuple(path)
    )


def kliep_kl_estimate(model: RatioModel, x: SampleSet) -> float:
    """Mean log fitted ratio over the numerator sample (floored before the log)."""
    w = np.clip(ratio_values(model, x.points), RATIO_FLOOR, None)
    return float(np.mean(np.log(w)))


def kliep_fit_cv(
    x: SampleSet,
    x_prime: SampleSet,
    sigma_candidates=None,
    folds: int = 5,
    rng: np.random.Generator | None = None,
    max_iter: int = 300,
    tol: float = 1e-3,
    max_centers: int = 100,
) -> RatioModel:
    """Select the kernel width by held-out mean log-ratio over numerator folds.

    Centers are drawn once from the full numerator sample and shared across
    widths and folds; the winning width is refitted on all data.  The
    per-width scores are attached to the returned model as ``cv_scores``.
    """
    if sigma_candidates is None:
        sigma_candidates = default_ratio_bandwidths(x, x_prime)
    sigma_candidates = np.asarray(sigma_candidates, dtype=float).reshape(-1)
    if sigma_candidates.size == 0:
        raise ValueError("need at least one width candidate")
    if x.n < folds:
        raise ValueError(f"need at least {folds} numerator samples for {folds} folds")
    if rng is None:
        rng = np.random.default_rng()

    centers = _select_ratio_centers(x, max_centers, rng)
    fold_idx = np.array_split(rng.permutation(x.n), folds)
    scores = np.zeros(sigma_candidates.size)
    warm: np.ndarray | None = None
    for ci, sigma in enumerate(sigma_candidates):
        basis = GaussianBasis(centers=centers, width=float(sigma))
        phi_all = design_matrix(basis, x.points)
        bvec = design_matrix(basis, x_prime.points).mean(axis=0)
        if float(bvec.max(initial=0.0)) <= 0.0:
            scores[ci] = -np.inf
            continue
        for t in range(folds):
            hold = fold_idx[t]
            mask = np.ones(x.n, dtype=bool)
            mask[hold] = False
            # warm-starting from the previous fold's solution speeds up the
            # ascent without changing where the concave program converges
            alpha, _, _ = _fit_weights(phi_all[mask], bvec, max_iter, tol, init=warm)
            warm = alpha
            held = np.clip(phi_all[hold] @ alpha, RATIO_FLOOR, None)
            scores[ci] += float(np.mean(np.log(held)))
    scores /= folds
    best = int(np.argmax(scores))

    basis = GaussianBasis(centers=centers, width=float(sigma_candidates[best]))
    phi = design_matrix(basis, x.points)
    bvec = design_matrix(basis, x_prime.points).mean(axis=0)
    alpha, converged, path = _fit_weights(phi, bvec, max_iter, tol)
    if not converged:
        warnings.warn(
            f"ratio fit did not reach tolerance {tol} within {max_iter} iterations",
            ConvergenceWarning,
            stacklevel=2,
        )
    return RatioModel(
        basis=basis,
        alpha=alpha,
        converged=converged,
        objective_path=tuple(path),
        cv_scores=tuple(
            (float(s), float(v)) for s, v in zip(sigma_candidates, scores)
        ),
    )
