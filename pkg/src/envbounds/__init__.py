"""Envelope-score estimation of aggregated intersection bounds.

Targets of the form ``E_X[min_t s(t, X)]`` (and their saddle analogues) are
estimated by cross-fitting the regression surface, picking the minimising
index per observation and averaging the chosen unbiased signal.
"""

from .apps import (
    APPLICATIONS,
    ArmCdfNuisance,
    BinaryArmNuisance,
    BoundPair,
    LeeBounds,
    LeeNuisance,
    RoyBounds,
    RoyNuisance,
    WelfareNuisance,
    fit_arm_cdf_nuisance,
    fit_frechet_nuisance,
    fit_lee_nuisance,
    fit_roy_nuisance,
    frechet_bounds,
    lee_bounds_binary,
    lee_bounds_discrete,
    makarov_cdf_bounds,
    roy_bounds,
    roy_unconditional_bounds,
    run_application,
    worst_case_welfare,
)
from .core import (
    STAR,
    DiscreteDistribution,
    FiniteIndexSet,
    FoldAssignment,
    Observation,
    Sample,
    Schema,
    make_folds,
    read_csv,
    validate_sample,
    write_csv,
)
from .cvar import (
    CvarResult,
    cvar_lower_direct,
    cvar_lower_dual,
    cvar_upper_direct,
    cvar_upper_dual,
    generalized_quantile,
)
from .envelope import (
    MAX,
    MIN,
    EnvelopeEstimate,
    ScoreFamily,
    classify,
    estimate,
    estimate_with_oracle,
    margin_histogram,
)
from .errors import *  # noqa: F401,F403
from .first_stage import (
    ConditionalCdfSurface,
    CrossFitNuisance,
    RegressionSurface,
    cell_mean_fit,
    fit_conditional_cdf,
    kernel_fit,
    sup_norm_gap,
)
from .saddle import SaddleEstimate, SaddleFamily, best_case_welfare, estimate_saddle, find_saddle
from .simlab import DgpSpec, McReport, monte_carlo, simulate, true_psi

__version__ = "0.1.0"
