"""Bayesian cure-rate survival modelling with Metropolis-coupled MCMC.

The population survival treats a latent cured fraction through a
generalized promotion-time link, covering mixture-cure, promotion-time,
and negative-binomial cure models as special cases of one parameter pair.
Fitting runs parallel tempered chains with within-chain Metropolis and
Langevin updates; post-processing provides MAP tables, HPD intervals,
FDR-controlled discovery of cured subjects, Cox-Snell diagnostics, and
predictive curves with credible bands.
"""

from .analysis import (
    PredictionTable,
    SummaryReport,
    cox_snell_residuals,
    evaluate_discoveries,
    fdr_discoveries,
    hpd_interval,
    kaplan_meier,
    predict,
    residual_km_pairs,
    summarize,
)
from .data import (
    ColumnRoles,
    DesignInfo,
    LoadedData,
    build_design_matrix,
    load_dataset,
    read_table,
    simulate_dataset,
    write_table,
)
from .errors import (
    ConfigError,
    ConstantColumnWarning,
    CureModelError,
    DegenerateSurvival,
    DegenerateSusceptibles,
    DomainError,
    EmptyDataset,
    GeneratorError,
    GradientUnavailable,
    IdentifiabilityWarning,
    InsufficientSamples,
    InvalidBase,
    ParseError,
    RegistrationError,
    SchemaMismatch,
    UnseenLevel,
)
from .families import (
    BUILTIN_FAMILIES,
    PromotionSpec,
    evaluate,
    evaluate_batch,
    evaluate_mixture,
    evaluate_over_draws,
    promotion_spec,
    register_user_family,
    registered_families,
)
from .model import (
    SurvivalDataset,
    Theta,
    complete_log_likelihood,
    conditional_cured_prob,
    cure_rate,
    full_latent,
    latent_susceptible_probs,
    observed_log_likelihood,
    pop_cumulative_hazard,
    pop_density,
    pop_hazard,
    pop_survival,
    susceptible_density,
    susceptible_survival,
    validate_theta,
)
from .priors import PriorConfig, log_prior, sample_prior
from .sampler import (
    FitResult,
    Mc3Config,
    default_temperatures,
    mala_step,
    numeric_gradient,
    run_mc3,
)

__all__ = [
    "BUILTIN_FAMILIES",
    "ColumnRoles",
    "ConfigError",
    "ConstantColumnWarning",
    "CureModelError",
    "DegenerateSurvival",
    "DegenerateSusceptibles",
    "DesignInfo",
    "DomainError",
    "EmptyDataset",
    "FitResult",
    "GeneratorError",
    "GradientUnavailable",
    "IdentifiabilityWarning",
    "InsufficientSamples",
    "InvalidBase",
    "LoadedData",
    "Mc3Config",
    "ParseError",
    "PredictionTable",
    "PriorConfig",
    "PromotionSpec",
    "RegistrationError",
    "SchemaMismatch",
    "SummaryReport",
    "SurvivalDataset",
    "Theta",
    "UnseenLevel",
    "build_design_matrix",
    "complete_log_likelihood",
    "conditional_cured_prob",
    "cox_snell_residuals",
    "cure_rate",
    "default_temperatures",
    "evaluate",
    "evaluate_batch",
    "evaluate_discoveries",
    "evaluate_mixture",
    "evaluate_over_draws",
    "fdr_discoveries",
    "full_latent",
    "hpd_interval",
    "kaplan_meier",
    "latent_susceptible_probs",
    "load_dataset",
    "log_prior",
    "mala_step",
    "numeric_gradient",
    "observed_log_likelihood",
    "pop_cumulative_hazard",
    "pop_density",
    "pop_hazard",
    "pop_survival",
    "predict",
    "promotion_spec",
    "read_table",
    "register_user_family",
    "registered_families",
    "residual_km_pairs",
    "run_mc3",
    "sample_prior",
    "simulate_dataset",
    "summarize",
    "susceptible_density",
    "susceptible_survival",
    "validate_theta",
    "write_table",
]

__version__ = "0.1.0"
