"""Causal meta-learners on top of survival models.

Estimates the effect of a binary treatment on the restricted mean time to
an adverse event from right-censored data.
"""
from .causal import (
    AssumptionReport,
    HorizonConfig,
    MatchingConfig,
    PositivityError,
    assumption_checks,
    matching_ate,
    rmet,
    rmet_batch,
    s_learner_ate,
    subgroup_ite_report,
    t_learner_ate,
    unadjusted_km_ate,
)
from .cohort import (
    NormalizationStats,
    PreprocessConfig,
    binarize_adherence,
    build_snapshot,
    encode_and_normalize,
    ingest_longitudinal,
    split,
    trim,
    write_longitudinal,
)
from .domain import (
    EffectEstimate,
    SnapshotCohort,
    SubjectRecord,
    SurvivalCurve,
    SurvivalCurves,
    validate_dataset,
)
from .metrics import (
    auc_td,
    brier_curve,
    concordance_td,
    evaluate_survival,
    integrated_brier,
    roc_auc_binary,
)
from .survival import (
    ModelSpec,
    RsfHyperparams,
    censoring_km_fit,
    cox_partial_loglik_and_gradient,
    coxph_fit,
    km_fit,
    predict_survival,
    rsf_fit,
)
from .synth import DgpConfig, generate, oracle_ate

__version__ = "0.1.0"
