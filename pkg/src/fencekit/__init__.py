"""Fence methods for mixed model selection.

Builds a statistical fence Qhat_M <= Qhat_ref + c * sigma_M around the
reference model, selects the simplest candidate inside it, and calibrates the
tuning constant c by parametric bootstrap. Includes the forward-backward
variant for large model spaces, information-criterion baselines and a
simulation laboratory.
"""

from .adaptive import (
    AdaptiveConfig,
    AdaptiveReport,
    PStarCurve,
    adaptive_select,
    baseline_adjust,
    bootstrap_datasets,
    full_model_test,
    minimum_model_test,
    pick_c_star,
    pstar_curve,
    threshold_check,
    upper_bound_B,
)
from .fence import FenceConfig, FenceOutcome, fb_fence, fence_select, in_fence, sigma_table
from .gic import GicConfig, gic_select
from .measures import (
    FitResult,
    MeasureKind,
    fit_glmm_sse,
    fit_least_squares,
    fit_ml_fay_herriot,
    fit_model,
    fit_mvc,
    fit_table,
    glmm_mean_g,
    transform_unit_variance,
)
from .model_space import (
    CandidateModel,
    Dataset,
    ModelSpace,
    classify_selection,
    enumerate_all_subsets,
    is_submodel,
)
from .numerics import (
    QuadratureRule,
    RngStream,
    f_distribution_sd_of_gap,
    gauss_hermite_rule,
    solve_least_squares,
)
from .sigma import SigmaKind, sigma_chisq_approx, sigma_exact_f, sigma_observed_variance
from .simlab import (
    AdaptiveStrategy,
    FBFenceStrategy,
    FenceStrategy,
    GicStrategy,
    Scenario,
    StudyResult,
    generate_clustered_lmm,
    generate_fay_herriot,
    generate_two_level_logistic,
    run_study,
    table1_scenario,
    table2_scenario,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
