# coding: utf-8

# # Survival models and their metrics
#
# We draw a small cohort with a known data-generating process, fit the three
# survival models behind the common interface and score them on held-out
# subjects with the time-dependent concordance, the integrated Brier score
# and the time-dependent AUC.

# %%
import numpy as np

from survmeta import (
    ModelSpec,
    PreprocessConfig,
    build_snapshot,
    encode_and_normalize,
    evaluate_survival,
    km_fit,
    rmet,
    split,
    trim,
)
from survmeta.synth import DgpConfig, generate

cfg = DgpConfig(n_subjects=1500, seed=1, snapshot_tau=3, beta_age=0.6, propensity_age=0.8)
records, truth = generate(cfg)
cohort = trim(build_snapshot(records, cfg.snapshot_tau, PreprocessConfig()))
print(f"{len(cohort)} subjects at month {cohort.tau}, {cohort.event.mean():.0%} with an event")

# %% [markdown]
# The product-limit curve of the whole cohort, and the area under it up to
# the horizon: the restricted mean event time.

# %%
curve = km_fit(cohort.residual_time, cohort.event)
print("S(t) at 6, 12, 24 months:", np.round(curve([6, 12, 24]), 3))
print(f"restricted mean event time to {cfg.horizon} months: {rmet(curve, cfg.horizon):.2f}")

# %% [markdown]
# Split once, standardize with training statistics, then fit and score.

# %%
train, val, test = split(cohort, (0.6, 0.2, 0.2), seed=0)
train, stats = encode_and_normalize(train)
test = encode_and_normalize(test, stats)[0]
X_tr, names = train.covariates(include_treatment=True)
X_te, _ = test.covariates(include_treatment=True)

specs = [
    ModelSpec("kaplan_meier"),
    ModelSpec("cox_ph", {"penalizer": 0.01}),
    ModelSpec("random_survival_forest", {"n_trees": 100, "min_samples_split": 10,
                                         "min_samples_leaf": 5}),
]
for spec in specs:
    model = spec.fit(X_tr, train.residual_time, train.event, names, seed=0)
    rep = evaluate_survival(model.predict_curves(X_te), test.residual_time, test.event)
    print(f"{spec.kind:24s} C^td {rep.c_td:.3f}  IBS {rep.ibs:.3f}  AUC^td {rep.auc_td_mean:.3f}")

# %% [markdown]
# Kaplan-Meier ignores features, so its concordance sits at exactly 0.5.
# The Cox model sees the age effect and the risk-score proxies.
