import numpy as np
import pytest

from lsdd import (
    Coefficients,
    DegenerateSolveWarning,
    DesignPair,
    GaussianBasis,
    SampleSet,
    basis_eval,
    basis_moments,
    design_matrix,
    gram_matrix,
    mean_diff_vector,
    select_centers,
    solve_regularized,
)

from oracles import quad_gram_entry


def random_basis(rng, b=4, d=1, width=None):
    return GaussianBasis(
        centers=rng.normal(size=(b, d)),
        width=width if width is not None else float(rng.uniform(0.4, 1.5)),
    )


class TestContainers:
    def test_sample_set_requires_points(self):
        with pytest.raises(ValueError):
            SampleSet(np.empty((0, 2)))

    def test_sample_set_promotes_1d(self):
        s = SampleSet(np.array([1.0, 2.0, 3.0]))
        assert s.n == 3 and s.dim == 1

    def test_sample_set_is_readonly(self):
        s = SampleSet(np.array([[1.0, 2.0]]))
        with pytest.raises(ValueError):
            s.points[0, 0] = 0.0

    def test_basis_rejects_bad_width(self):
        with pytest.raises(ValueError):
            GaussianBasis(centers=np.zeros((2, 1)), width=0.0)
        with pytest.raises(ValueError):
            GaussianBasis(centers=np.zeros((2, 1)), width=-1.0)

    def test_design_pair_rejects_asymmetry(self):
        with pytest.raises(ValueError):
            DesignPair(gram=np.array([[1.0, 0.5], [0.2, 1.0]]), mean_diff=np.zeros(2))

    def test_design_pair_rejects_size_mismatch(self):
        with pytest.raises(ValueError):
            DesignPair(gram=np.eye(3), mean_diff=np.zeros(2))

    def test_coefficients_must_be_finite(self):
        with pytest.raises(ValueError):
            Coefficients(np.array([1.0, np.nan]))
        with pytest.raises(ValueError):
            Coefficients(np.array([np.inf]))


class TestSelectCenters:
    def test_no_subsampling_keeps_order(self):
        x = SampleSet(np.array([[0.0], [1.0]]))
        xp = SampleSet(np.array([[2.0]]))
        centers = select_centers(x, xp, max_centers=10, rng=np.random.default_rng(0))
        assert np.array_equal(centers, np.array([[0.0], [1.0], [2.0]]))

    def test_subsampling_cardinality(self):
        rng = np.random.default_rng(1)
        x = SampleSet(rng.normal(size=(260, 2)))
        xp = SampleSet(rng.normal(size=(240, 2)))
        centers = select_centers(x, xp, max_centers=300, rng=np.random.default_rng(2))
        assert centers.shape == (300, 2)
        pooled = np.vstack([x.points, xp.points])
        # every center is one of the pooled points, each picked at most once
        matches = [np.flatnonzero((pooled == c).all(axis=1))[0] for c in centers]
        assert len(set(matches)) == 300

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(3)
        x = SampleSet(rng.normal(size=(50, 1)))
        xp = SampleSet(rng.normal(size=(50, 1)))
        a = select_centers(x, xp, max_centers=20, rng=np.random.default_rng(7))
        b = select_centers(x, xp, max_centers=20, rng=np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            select_centers(
                SampleSet(np.zeros((3, 1))), SampleSet(np.zeros((3, 2))), max_centers=5
            )


class TestBasisEval:
    def test_value_at_center_is_one(self):
        basis = GaussianBasis(centers=np.array([[0.5, -1.0], [2.0, 2.0]]), width=0.8)
        assert basis_eval(basis, [0.5, -1.0])[0] == 1.0

    def test_unit_distance_value(self):
        basis = GaussianBasis(centers=np.array([[0.0]]), width=1.0)
        assert basis_eval(basis, [1.0])[0] == pytest.approx(np.exp(-0.5), abs=1e-12)
        assert basis_eval(basis, [1.0])[0] == pytest.approx(0.606531, abs=1e-6)

    def test_symmetry_in_point_and_center(self):
        rng = np.random.default_rng(0)
        c = rng.normal(size=2)
        x = rng.normal(size=2)
        a = basis_eval(GaussianBasis(centers=c.reshape(1, -1), width=0.9), x)
        b = basis_eval(GaussianBasis(centers=x.reshape(1, -1), width=0.9), c)
        assert a[0] == b[0]

    def test_translation_invariance(self):
        rng = np.random.default_rng(4)
        basis = random_basis(rng, b=5, d=3)
        x = rng.normal(size=3)
        shift = rng.normal(size=3)
        shifted = GaussianBasis(centers=basis.centers + shift, width=basis.width)
        assert np.allclose(
            basis_eval(basis, x), basis_eval(shifted, x + shift), rtol=0, atol=1e-12
        )

    def test_values_in_unit_interval(self):
        rng = np.random.default_rng(5)
        basis = random_basis(rng, b=6, d=2)
        vals = basis_eval(basis, rng.normal(size=2))
        assert np.all(vals > 0) and np.all(vals <= 1)

    def test_dimension_mismatch(self):
        basis = GaussianBasis(centers=np.zeros((2, 2)), width=1.0)
        with pytest.raises(ValueError):
            basis_eval(basis, [1.0])


class TestGramMatrix:
    def test_diagonal_equals_coincident_formula(self):
        basis = GaussianBasis(centers=np.array([[0.0], [3.0]]), width=1.0)
        gram = gram_matrix(basis)
        assert gram[0, 0] == pytest.approx(np.sqrt(np.pi), abs=1e-12)
        assert gram[0, 0] == pytest.approx(1.772454, abs=1e-6)
        assert gram[1, 1] == gram[0, 0]

    def test_two_dimensional_entry(self):
        basis = GaussianBasis(centers=np.array([[0.0, 0.0], [2.0, 0.0]]), width=1.0)
        gram = gram_matrix(basis)
        assert gram[0, 1] == pytest.approx(np.pi * np.exp(-1.0), abs=1e-9)
        assert gram[0, 1] == pytest.approx(1.155727, abs=1e-6)

    @pytest.mark.parametrize("d,b", [(1, 5), (2, 3)])
    def test_matches_quadrature(self, d, b):
        rng = np.random.default_rng(10 + d)
        basis = random_basis(rng, b=b, d=d, width=0.8)
        gram = gram_matrix(basis)
        for i in range(b):
            for j in range(i, b):
                assert gram[i, j] == pytest.approx(quad_gram_entry(basis, i, j), abs=1e-6)

    def test_symmetric_and_psd(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            basis = random_basis(rng, b=8, d=int(rng.integers(1, 4)))
            gram = gram_matrix(basis)
            assert np.array_equal(gram, gram.T)
            evals = np.linalg.eigvalsh(gram)
            assert evals.min() >= -1e-10 * evals.max()

    def test_constant_diagonal(self):
        rng = np.random.default_rng(12)
        basis = random_basis(rng, b=6, d=2, width=0.7)
        gram = gram_matrix(basis)
        expected = (np.pi * 0.7**2) ** 1.0
        assert np.allclose(np.diag(gram), expected, rtol=0, atol=1e-12)


class TestMeanDiffVector:
    def test_identical_sets_give_exact_zero(self):
        rng = np.random.default_rng(13)
        x = SampleSet(rng.normal(size=(40, 2)))
        basis = random_basis(rng, b=7, d=2)
        diff = mean_diff_vector(basis, x, x)
        assert np.all(diff == 0.0)

    def test_one_point_limit(self):
        basis = GaussianBasis(centers=np.array([[0.0], [1.0]]), width=1.0)
        x = SampleSet(np.array([[0.0]]))
        far = SampleSet(np.array([[200.0]]))
        diff = mean_diff_vector(basis, x, far)
        assert diff[0] == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(diff, basis_eval(basis, [0.0]), atol=1e-12)

    def test_linearity_under_equal_split(self):
        rng = np.random.default_rng(14)
        basis = random_basis(rng, b=5, d=1)
        xa, xb = SampleSet(rng.normal(size=(30, 1))), SampleSet(rng.normal(size=(30, 1)))
        ya, yb = SampleSet(rng.normal(size=(30, 1))), SampleSet(rng.normal(size=(30, 1)))
        pooled = mean_diff_vector(
            basis,
            SampleSet(np.vstack([xa.points, xb.points])),
            SampleSet(np.vstack([ya.points, yb.points])),
        )
        halves = 0.5 * (mean_diff_vector(basis, xa, ya) + mean_diff_vector(basis, xb, yb))
        assert np.allclose(pooled, halves, atol=1e-14)

    def test_antisymmetric_exactly(self):
        rng = np.random.default_rng(15)
        basis = random_basis(rng, b=6, d=2)
        x = SampleSet(rng.normal(size=(25, 2)))
        xp = SampleSet(rng.normal(size=(35, 2)))
        assert np.array_equal(
            mean_diff_vector(basis, x, xp), -mean_diff_vector(basis, xp, x)
        )

    def test_dimension_mismatch(self):
        basis = GaussianBasis(centers=np.zeros((2, 2)), width=1.0)
        with pytest.raises(ValueError):
            mean_diff_vector(basis, SampleSet(np.zeros((3, 1))), SampleSet(np.zeros((3, 1))))


class TestSolveRegularized:
    def test_zero_rhs_gives_zero(self):
        rng = np.random.default_rng(16)
        basis = random_basis(rng, b=5, d=1)
        design = DesignPair(gram=gram_matrix(basis), mean_diff=np.zeros(5))
        for lam in (0.0, 0.1, 10.0):
            assert np.all(solve_regularized(design, lam).theta == 0.0)

    def test_scalar_closed_form(self):
        design = DesignPair(gram=np.array([[np.sqrt(np.pi)]]), mean_diff=np.array([0.5]))
        theta = solve_regularized(design, 0.1).theta[0]
        assert theta == pytest.approx(0.5 / (np.sqrt(np.pi) + 0.1), abs=1e-12)
        assert theta == pytest.approx(0.267029, abs=1e-6)

    @pytest.mark.parametrize("lam", [0.0, 1e-3, 1.0])
    def test_residual_property(self, lam):
        rng = np.random.default_rng(17)
        for _ in range(20):
            b = int(rng.integers(2, 12))
            a = rng.normal(size=(b, b))
            gram = a @ a.T + 0.1 * np.eye(b)
            gram = (gram + gram.T) / 2
            h = rng.normal(size=b)
            design = DesignPair(gram=gram, mean_diff=h)
            theta = solve_regularized(design, lam).theta
            residual = (gram + lam * np.eye(b)) @ theta - h
            assert np.linalg.norm(residual) <= 1e-8 * np.linalg.norm(h)

    def test_singular_unregularized_falls_back_with_warning(self):
        # duplicated centers make the gram matrix exactly rank-deficient
        basis = GaussianBasis(centers=np.array([[0.0], [0.0], [1.0]]), width=1.0)
        gram = gram_matrix(basis)
        x = SampleSet(np.array([[0.2], [0.4]]))
        xp = SampleSet(np.array([[1.5]]))
        h = mean_diff_vector(basis, x, xp)
        design = DesignPair(gram=gram, mean_diff=h)
        with pytest.warns(DegenerateSolveWarning):
            theta = solve_regularized(design, 0.0).theta
        residual = gram @ theta - h
        assert np.linalg.norm(residual) <= 1e-8 * np.linalg.norm(h)

    def test_negative_lambda_rejected(self):
        design = DesignPair(gram=np.eye(2), mean_diff=np.ones(2))
        with pytest.raises(ValueError):
            solve_regularized(design, -1e-6)


class TestBasisMoments:
    def test_single_sample_has_zero_cov(self):
        rng = np.random.default_rng(18)
        basis = random_basis(rng, b=4, d=2)
        moments = basis_moments(basis, SampleSet(rng.normal(size=(1, 2))))
        assert np.all(moments.cov == 0.0)

    def test_identical_samples_have_zero_cov(self):
        rng = np.random.default_rng(19)
        basis = random_basis(rng, b=4, d=1)
        point = rng.normal(size=(1, 1))
        moments = basis_moments(basis, SampleSet(np.repeat(point, 7, axis=0)))
        assert np.allclose(moments.cov, 0.0, atol=1e-30)

    def test_two_point_variance_formula(self):
        basis = GaussianBasis(centers=np.array([[0.0]]), width=1.0)
        x = SampleSet(np.array([[0.5], [2.0]]))
        psi = design_matrix(basis, x.points)[:, 0]
        moments = basis_moments(basis, x)
        assert moments.cov[0, 0] == pytest.approx(((psi[0] - psi[1]) / 2) ** 2, rel=1e-12)

    def test_cov_is_symmetric_psd(self):
        rng = np.random.default_rng(20)
        basis = random_basis(rng, b=6, d=2)
        moments = basis_moments(basis, SampleSet(rng.normal(size=(40, 2))))
        assert np.array_equal(moments.cov, moments.cov.T)
        evals = np.linalg.eigvalsh(moments.cov)
        assert evals.min() >= -1e-12 * max(evals.max(), 1e-300)

    def test_mean_matches_design_average(self):
        rng = np.random.default_rng(21)
        basis = random_basis(rng, b=5, d=1)
        x = SampleSet(rng.normal(size=(15, 1)))
        moments = basis_moments(basis, x)
        assert np.allclose(moments.mean, design_matrix(basis, x.points).mean(0), atol=0)
