"""Gaussian-kernel numerical substrate shared by every estimator in the package.

Provides the sample containers, Gaussian basis construction, the closed-form
Gram matrix of kernel inner products, empirical basis-mean differences, and
the regularized linear solve that all higher-level fitting routines reduce to.

All functions here are pure: inputs are never mutated, the returned containers
hold read-only arrays, and independent calls are safe to run concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist


class SingularSystemError(RuntimeError):
    """Raised when a linear system cannot be solved even by pseudo-inversion."""


class DegenerateSolveWarning(RuntimeWarning):
    """Emitted when a solve falls back to an eigenvalue-based pseudo-solve."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _as_points(values, *, name: str) -> np.ndarray:
    pts = np.asarray(values, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array of row vectors, got ndim={pts.ndim}")
    if pts.shape[0] < 1 or pts.shape[1] < 1:
        raise ValueError(f"{name} must contain at least one point of dimension >= 1")
    return _readonly(pts.copy())


@dataclass(frozen=True, eq=False)
class SampleSet:
    """A nonempty set of d-dimensional points, one per row.

    The empirical face of one of the two densities being compared. A 1-d
    input is treated as n points in one dimension.
    """

    points: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", _as_points(self.points, name="points"))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def as_sample_set(values) -> SampleSet:
    """Coerce an array-like (or pass through a SampleSet) to a SampleSet."""
    if isinstance(values, SampleSet):
        return values
    return SampleSet(np.asarray(values, dtype=float))


@dataclass(frozen=True, eq=False)
class GaussianBasis:
    """Gaussian kernel centers plus a common width.

    Basis function ``l`` maps a point x to exp(-||x - c_l||^2 / (2 width^2)).
    """

    centers: np.ndarray
    width: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "centers", _as_points(self.centers, name="centers"))
        width = float(self.width)
        if not np.isfinite(width) or width <= 0:
            raise ValueError(f"width must be a positive finite real, got {width}")
        object.__setattr__(self, "width", width)

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True, eq=False)
class DesignPair:
    """The Gram matrix and empirical mean-difference vector for one basis/data split."""

    gram: np.ndarray
    mean_diff: np.ndarray

    def __post_init__(self) -> None:
        gram = np.asarray(self.gram, dtype=float)
        diff = np.asarray(self.mean_diff, dtype=float).reshape(-1)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
            raise ValueError(f"gram must be square, got shape {gram.shape}")
        if diff.shape[0] != gram.shape[0]:
            raise ValueError(
                f"mean_diff length {diff.shape[0]} does not match gram size {gram.shape[0]}"
            )
        scale = max(float(np.abs(gram).max()), 1e-300)
        asym = float(np.abs(gram - gram.T).max())
        if not asym <= 1e-12 * scale:
            raise ValueError("gram matrix is not symmetric within 1e-12 relative tolerance")
        object.__setattr__(self, "gram", _readonly(gram.copy()))
        object.__setattr__(self, "mean_diff", _readonly(diff.copy()))

    @property
    def size(self) -> int:
        return self.gram.shape[0]


@dataclass(frozen=True, eq=False)
class Coefficients:
    """Fitted basis coefficients; entries are guaranteed finite."""

    theta: np.ndarray

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(theta)):
            raise ValueError("coefficients must be finite (no NaN/Inf)")
        object.__setattr__(self, "theta", _readonly(theta.copy()))

    def __len__(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True, eq=False)
class BasisMoments:
    """Empirical mean and covariance of the basis-function vector under one sample set."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {mean.shape[0]}")
        object.__setattr__(self, "mean", _readonly(mean.copy()))
        object.__setattr__(self, "cov", _readonly(((cov + cov.T) / 2.0)))


def select_centers(
    x: SampleSet,
    x_prime: SampleSet,
    max_centers: int = 300,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Pick kernel centers from the pooled samples.

    Returns all pooled points (x first, then x_prime) when they fit within
    ``max_centers``; otherwise a uniform subset without replacement, whose
    order is a deterministic function of the rng state.
    """
    if x.dim != x_prime.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {x_prime.dim}")
    if max_centers < 1:
        raise ValueError("max_centers must be >= 1")
    pooled = np.vstack([x.points, x_prime.points])
    if pooled.shape[0] <= max_centers:
        return pooled
    if rng is None:
        rng = np.random.default_rng()
    idx = rng.choice(pooled.shape[0], size=max_centers, replace=False)
    return pooled[idx]


def basis_eval(basis: GaussianBasis, x) -> np.ndarray:
    """Evaluate every Gaussian basis function at a single point."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != basis.dim:
        raise ValueError(f"point has dimension {x.shape[0]}, basis expects {basis.dim}")
    sq = np.sum((basis.centers - x) ** 2, axis=1)
    return np.exp(-sq / (2.0 * basis.width**2))


def design_matrix(basis: GaussianBasis, points: np.ndarray) -> np.ndarray:
    """Evaluate the basis at many points at once; rows index points, columns centers."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[1] != basis.dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, basis expects {basis.dim}")
    sq = cdist(pts, basis.centers, "sqeuclidean")
    return np.exp(-sq / (2.0 * basis.width**2))


def gram_matrix(basis: GaussianBasis) -> np.ndarray:
    """Closed-form matrix of pairwise integrals of the basis functions over R^d.

    Entry (l, l') equals (pi sigma^2)^(d/2) exp(-||c_l - c_l'||^2 / (4 sigma^2)),
    which makes the matrix symmetric positive semi-definite with a constant
    diagonal (pi sigma^2)^(d/2).
    """
    sq = cdist(basis.centers, basis.centers, "sqeuclidean")
    gram = (np.pi * basis.width**2) ** (basis.dim / 2.0) * np.exp(-sq / (4.0 * basis.width**2))
    return (gram + gram.T) / 2.0


def mean_diff_vector(basis: GaussianBasis, x: SampleSet, x_prime: SampleSet) -> np.ndarray:
    """Difference of empirical basis-function means between the two sample sets."""
    if x.dim != basis.dim or x_prime.dim != basis.dim:
        raise ValueError("sample dimension does not match basis dimension")
    mean_x = design_matrix(basis, x.points).mean(axis=0)
    mean_xp = design_matrix(basis, x_prime.points).mean(axis=0)
    return mean_x - mean_xp


def _pseudo_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Eigenvalue-based least-squares solve for (near-)singular symmetric systems."""
    try:
        evals, vecs = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("eigendecomposition failed on the gram matrix") from exc
    cutoff = float(evals.max(initial=0.0)) * 1e-12
    if cutoff <= 0:
        raise SingularSystemError("gram matrix is numerically zero")
    z = vecs.T @ rhs
    inv = np.where(evals > cutoff, 1.0, 0.0)
    safe = np.where(evals > cutoff, evals, 1.0)
    return vecs @ (inv * z / safe)


def solve_regularized(design: DesignPair, lam: float) -> Coefficients:
    """Solve (H + lam I) theta = mean_diff.

    Uses a Cholesky factorization, which exists whenever lam > 0 or H is
    positive definite.  On factorization failure (rank-deficient H at lam = 0)
    the solve falls back to an eigenvalue pseudo-solve and emits a
    DegenerateSolveWarning rather than aborting a surrounding model sweep.
    """
    lam = float(lam)
    if lam < 0:
        raise ValueError("regularization parameter must be nonnegative")
    h = design.mean_diff
    a = design.gram + lam * np.eye(design.size)
    try:
        factor = cho_factor(a, lower=True, check_finite=False)
        theta = cho_solve(factor, h, check_finite=False)
    except np.linalg.LinAlgError:
        warnings.warn(
            "Cholesky factorization failed; falling back to pseudo-solve",
            DegenerateSolveWarning,
            stacklevel=2,
        )
        theta = _pseudo_solve(a, h)
    if not np.all(np.isfinite(theta)):
        raise SingularSystemError("linear solve produced non-finite coefficients")
    return Coefficients(theta)


def basis_moments(basis: GaussianBasis, x: SampleSet) -> BasisMoments:
    """Empirical mean vector and (population) covariance matrix of the basis values."""
    psi = design_matrix(basis, x.points)
    mean = psi.mean(axis=0)
    centered = psi - mean
    cov = centered.T @ centered / x.n
    return BasisMoments(mean=mean, cov=cov)
