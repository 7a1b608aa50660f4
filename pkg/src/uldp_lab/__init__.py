"""Utility-optimized local differential privacy: mechanisms, estimators,
the optimal privacy-utility tradeoff, and Monte Carlo validation."""

from .core import (
    Distribution,
    DirectionBasis,
    Partition,
    direction_basis,
    p_alpha,
    point_mass,
    project_subspace,
    uniform,
)
from .designs import (
    BlockDesign,
    DesignReport,
    complete_design,
    design_from_json,
    design_to_json,
    validate_design,
)
from .estimation import (
    BackendError,
    EstimatorDegenerateError,
    EstimatorTable,
    FisherMatrix,
    SufficientStats,
    UndefinedScoreError,
    block_trace_check,
    estimate_from_stats,
    fisher_information,
    score_vector,
    ubd_estimator_table,
)
from .mechanisms import (
    FeasibilityError,
    GammaWeights,
    Mechanism,
    OutputSymbol,
    UldpReport,
    bd_mechanism,
    extremal_from_gamma,
    invertible,
    mechanism_from_json,
    mechanism_to_json,
    protected,
    sample_output,
    ubd_mechanism,
    validate_uldp,
)
from .put import (
    ObjectiveValue,
    RegimeThresholds,
    SaddleSolution,
    SaddleSolverError,
    bd_scheme_error,
    closed_form,
    inner_min_t,
    ldp_optimum,
    objective,
    objective_dalpha,
    saddle_solve,
    thresholds,
    ubd_asymptotic_error,
    uniformity_threshold,
    uss_error,
    uss_worst_case,
)
from .sim import (
    SimConfig,
    SimResult,
    exact_scaled_mse,
    freq_mse_translate,
    run_trials,
    sample_stats,
    scheme_error_at_mixture,
    sweep_rows_to_csv,
    trial_rng,
    worst_case_sweep,
)

__version__ = "0.1.0"
