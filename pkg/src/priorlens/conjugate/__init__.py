"""Conjugate examples with closed-form ``log Z_n(X, alpha)``."""
from .normal import (
    NormalEvaluator,
    NormalHyper,
    NormalModel,
    NormalPrior,
    NormalSuffStats,
    generate_normal_data,
    model_family_normal,
    normal_log_Z,
    normal_posterior_mean,
    normal_prior_family,
)
from .ridge import (
    RegressionData,
    RidgeEvaluator,
    RidgeHyper,
    RidgeModel,
    RidgePrior,
    RidgeSuffStats,
    generate_ridge_data,
    model_family_ridge,
    ridge_log_Z,
    ridge_posterior_mean,
    ridge_prior_family,
)
