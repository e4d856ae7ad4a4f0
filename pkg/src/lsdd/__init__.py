"""Direct least-squares density-difference estimation and its applications.

The package fits f = p - p' in one shot with a Gaussian-kernel least-squares
model whose solution, Gram matrix, and squared norm are all closed-form, and
layers on top of that: L2-distance estimators with regularization-bias
cancellation, a KDE subtraction baseline, a KL-divergence comparator via
direct density-ratio fitting, permutation two-sample tests, semi-supervised
class-balance estimation, and sliding-window change-point scoring.
"""

__version__ = "0.1.0"

from .kernel import (
    BasisMoments,
    Coefficients,
    DegenerateSolveWarning,
    DesignPair,
    GaussianBasis,
    SampleSet,
    SingularSystemError,
    as_sample_set,
    basis_eval,
    basis_moments,
    design_matrix,
    gram_matrix,
    mean_diff_vector,
    select_centers,
    solve_regularized,
)
from .estimator import (
    CvReport,
    DensityDiffModel,
    HyperGrid,
    cv_score,
    default_hyper_grid,
    fit_cv,
    fit_fixed,
    median_pairwise_distance,
    predict,
    squared_norm,
)
from .divergence import (
    L2Estimates,
    gram_condition_number,
    l2_bias_corrected,
    l2_combined,
    l2_estimates,
    l2_from_samples,
    l2_generalized,
    l2_plain_h,
    l2_plain_quadratic,
    l2_positive_part,
)
from .kde import (
    KdeModel,
    default_bandwidths,
    kde_cross_integral,
    kde_density,
    kde_diff_eval,
    kde_eval,
    kde_l2,
    kde_log_density,
    kde_select_bandwidth,
)
from .kliep import (
    ConvergenceWarning,
    RatioModel,
    default_ratio_bandwidths,
    kliep_fit,
    kliep_fit_cv,
    kliep_kl_estimate,
    ratio_values,
)
from .two_sample import (
    StatisticError,
    TestResult,
    kliep_statistic,
    lsdd_statistic,
    permutation_test,
)
from .applications import (
    ChangeScoreSeries,
    ClassBalanceResult,
    LabeledSet,
    SubsequenceSet,
    WeightedRlsClassifier,
    build_subsequences,
    change_scores,
    class_balance_estimate,
    class_balance_estimate_kde,
    top_change_points,
    weighted_rls_fit,
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
    true_l2_gaussian_shift,
    true_l2_outlier_mixture,
)
from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    ResultRow,
    ResultTable,
    SummaryRow,
    run_experiment,
    summarize,
    true_kl_outlier_mixture,
)

__all__ = [name for name in dir() if not name.startswith("_")]
