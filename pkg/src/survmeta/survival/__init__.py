from .cox import (
    CoxConvergenceWarning,
    CoxFitReport,
    CoxSeparationError,
    breslow_cumulative_hazard,
    cox_partial_loglik_and_gradient,
    newton_cox,
)
from .km import censoring_km_fit, km_fit, product_limit
from .models import (
    MODEL_KINDS,
    CoxPHModel,
    FittedSurvivalModel,
    KaplanMeierModel,
    ModelSpec,
    RandomSurvivalForestModel,
    coxph_fit,
    fit_survival_model,
    predict_survival,
    rsf_fit,
)
from .rsf import RsfHyperparams, logrank_scores

__all__ = [
    "MODEL_KINDS",
    "CoxConvergenceWarning",
    "CoxFitReport",
    "CoxPHModel",
    "CoxSeparationError",
    "FittedSurvivalModel",
    "KaplanMeierModel",
    "ModelSpec",
    "RandomSurvivalForestModel",
    "RsfHyperparams",
    "breslow_cumulative_hazard",
    "censoring_km_fit",
    "cox_partial_loglik_and_gradient",
    "coxph_fit",
    "fit_survival_model",
    "km_fit",
    "logrank_scores",
    "newton_cox",
    "predict_survival",
    "product_limit",
    "rsf_fit",
]
