# coding: utf-8

# # The full experiment grid
#
# Snapshots at several months, seeded repeats, hyperparameter selection on a
# validation split, test metrics, then effect tables for every model and
# estimator. Everything lands in one output directory with a manifest.
# The same run is available as `survmeta run --config <file>`.

# %%
import json
import tempfile
from pathlib import Path

import pandas as pd

from survmeta.cohort import PreprocessConfig
from survmeta.pipeline import ExperimentConfig, ModelGrid, emit_plot_data, run_experiment
from survmeta.synth import DgpConfig

out = Path(tempfile.mkdtemp(prefix="survmeta_demo_"))
config = ExperimentConfig(
    dgp=DgpConfig(n_subjects=600, seed=2, beta_age=0.4, propensity_age=0.6,
                  beta_latent=(0.5,), propensity_latent=(0.8,)),
    preprocess=PreprocessConfig(snapshot_taus=(3, 6, 9), n_repeats=2),
    models=[ModelGrid("cox_ph", {"penalizer": [0.0, 0.1]}),
            ModelGrid("random_survival_forest", {"n_trees": [20, 40], "min_samples_leaf": [5]})],
    horizon=60,
    out_dir=str(out),
    n_jobs=2,
)
result = run_experiment(config)

# %%
print(result.metrics.groupby(["tau", "model"])[["c_td", "ibs", "auc_td"]].mean().round(3))

# %%
for tau, table in result.ate_tables.items():
    cols = ["model"] + [c for c in table.columns if c.endswith("_mean")]
    print(f"\ntau = {tau}")
    print(table[cols].round(2).to_string(index=False))

# %% [markdown]
# The simulated non-adherence only acts on the hazard from month 3, the
# DGP's snapshot month. At later snapshots the adherence indicator is just
# another covariate, so the estimates there hover around zero.

# %% [markdown]
# Plot-ready data for the trend, histogram and survival-curve figures.

# %%
for path in emit_plot_data(out):
    print(path.name, len(pd.read_csv(path)), "rows")
manifest = json.loads((out / "manifest.json").read_text())
print("cohort sizes:", manifest["cohort_sizes"])
