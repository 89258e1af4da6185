# coding: utf-8

# # Recovering a known treatment effect
#
# Age raises both the chance of non-adherence and the hazard, so a naive
# comparison of arms is confounded. The meta-learners adjust for it. The
# Monte Carlo oracle gives the population effect on the restricted mean
# event time.

# %%
from dataclasses import replace

import numpy as np

from survmeta import (
    ModelSpec,
    PreprocessConfig,
    build_snapshot,
    encode_and_normalize,
    matching_ate,
    s_learner_ate,
    t_learner_ate,
    trim,
    unadjusted_km_ate,
)
from survmeta.synth import DgpConfig, calibrate_censoring_rate, generate, oracle_ate

base = DgpConfig(n_subjects=4000, snapshot_tau=1, beta_treatment=0.7, beta_age=0.5,
                 propensity_age=1.0)
cfg = replace(base, censoring_rate=calibrate_censoring_rate(base, 0.2))
oracle = oracle_ate(cfg)
print(f"oracle ATE {oracle.ate:.3f} months (Monte Carlo se {oracle.se:.4f})")

# %%
cox = ModelSpec("cox_ph")
rows = []
for seed in range(3):
    records, truth = generate(replace(cfg, seed=seed))
    pp = PreprocessConfig(include_risk_scores=False)
    cohort = encode_and_normalize(trim(build_snapshot(records, cfg.snapshot_tau, pp)))[0]
    rows.append([
        unadjusted_km_ate(cohort, cfg.horizon).ate,
        t_learner_ate(cohort, cox, cfg.horizon).ate,
        s_learner_ate(cohort, cox, cfg.horizon).ate,
        matching_ate(cohort, cox, 5, cfg.horizon).ate,
    ])
rows = np.array(rows)
for name, col in zip(["unadjusted KM", "T-learner", "S-learner", "matching K=5"], rows.T):
    print(f"{name:14s} mean {col.mean():7.3f}   relative error {(col.mean() / oracle.ate - 1):+.1%}")

# %% [markdown]
# The unadjusted contrast overstates the harm because older subjects are
# both less adherent and at higher risk. The three adjusted estimators land
# near the oracle.

# %% [markdown]
# Individual effects average to the reported ATE by construction.

# %%
est = t_learner_ate(cohort, cox, cfg.horizon)
print(f"ATE {est.ate:.6f} = mean ITE {np.mean(est.ites):.6f}; ITE range "
      f"[{est.ites.min():.2f}, {est.ites.max():.2f}]")
