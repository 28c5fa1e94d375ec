"""Permutation-based estimation of bivariate isotonic matrices from sparse noisy samples."""

from .core import (
    MatrixClass,
    MatrixClassTag,
    NoiseKind,
    NoiseModel,
    Permutation,
    is_biso,
    is_sst,
    permute_matrix,
    read_matrix,
    write_matrix,
)
from .estimators import (
    ESTIMATORS,
    Blocking,
    ComparisonGraph,
    SortMode,
    TdsEstimate,
    Thresholds,
    blocking_subroutine,
    borda_sort,
    compute_thresholds,
    meta_estimate,
    reference_blocking,
    sort_partial_sums,
    topological_sort,
    two_dimensional_sort,
)
from .evaluation import (
    Family,
    GroundTruth,
    RateFit,
    fit_rate,
    frobenius_error,
    generate_ground_truth,
    max_col_norm_error,
    max_row_norm_error,
    variation,
)
from .isotonic import pava, project_biso, project_biso_permuted
from .sampling import (
    ObservationSet,
    SplitMode,
    build_observation_matrix,
    fixed_n_wrapper,
    sample_observations,
    split_sample,
)

__version__ = "0.1.0"
