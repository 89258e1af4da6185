"""Experiment driver: repeats x snapshots x models x estimators.

Every cell of the grid is computed independently and the main process
writes all files, so the output bytes depend only on the configuration.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import __version__
from .causal import (
    matching_ate,
    rmet_batch,
    s_learner_ate,
    subgroup_ite_report,
    t_learner_ate,
    unadjusted_km_ate,
)
from .cohort import (
    PreprocessConfig,
    build_snapshot,
    encode_and_normalize,
    ingest_longitudinal,
    split,
    trim,
)
from .domain import MAX_MONTHS, EffectEstimate, SurvivalCurve
from .metrics import concordance_td, evaluate_survival
from .survival import km_fit
from .survival.models import MODEL_KINDS, ModelSpec, RandomSurvivalForestModel
from .synth import DgpConfig, generate

log = logging.getLogger(__name__)

DEFAULT_GRIDS = {
    "cox_ph": {"penalizer": [0.0, 0.01, 0.1, 0.5]},
    "random_survival_forest": {
        "n_trees": [100, 250, 500],
        "min_samples_split": [5, 10, 20],
        "min_samples_leaf": [2, 5, 10],
    },
    "kaplan_meier": {},
}
ESTIMATORS = ("t_learner", "s_learner", "matching:1", "matching:5", "matching:20", "unadjusted_km")
UNADJUSTED_ROW = "unadjusted"
FAILED = "failed"
OK = "ok"


@dataclass
class ModelGrid:
    kind: str
    grid: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")

    def specs(self) -> list[ModelSpec]:
        keys = sorted(self.grid)
        out = []
        for values in itertools.product(*(self.grid[k] for k in keys)):
            params = dict(zip(keys, values))
            if params.get("min_samples_leaf", 0) > params.get("min_samples_split", np.inf):
                continue
            out.append(ModelSpec(self.kind, params))
        return out


def _estimator_slug(name: str) -> str:
    return name.replace(":", "_")


def parse_estimator(name: str):
    if name in ("t_learner", "s_learner", "unadjusted_km"):
        return name, None
    if name.startswith("matching:"):
        k = int(name.split(":", 1)[1])
        if k < 1:
            raise ValueError("matching K must be >= 1")
        return "matching", k
    raise ValueError(f"unknown estimator {name!r}")


@dataclass
class ExperimentConfig:
    """Everything a run depends on. JSON round-trips via to_dict/from_dict."""

    input_path: str | None = None
    dgp: DgpConfig | None = None
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    models: list = field(default_factory=lambda: [
        ModelGrid(k, DEFAULT_GRIDS[k]) for k in ("cox_ph", "random_survival_forest")])
    estimators: list = field(default_factory=lambda: list(ESTIMATORS))
    horizon: float = MAX_MONTHS
    out_dir: str = "results"
    n_jobs: int = 1

    def __post_init__(self):
        if (self.input_path is None) == (self.dgp is None):
            raise ValueError("give exactly one of input_path or dgp")
        if not self.models:
            raise ValueError("at least one model is required")
        if not self.estimators:
            raise ValueError("at least one estimator is required")
        for e in self.estimators:
            parse_estimator(e)
        self.models = [m if isinstance(m, ModelGrid) else ModelGrid(**m) for m in self.models]
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def to_dict(self) -> dict:
        return {
            "input_path": self.input_path,
            "dgp": self.dgp.to_dict() if self.dgp else None,
            "preprocess": asdict(self.preprocess),
            "models": [{"kind": m.kind, "grid": m.grid} for m in self.models],
            "estimators": list(self.estimators),
            "horizon": self.horizon,
            "out_dir": self.out_dir,
            "n_jobs": self.n_jobs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if d.get("dgp") is not None:
            d["dgp"] = DgpConfig.from_dict(d["dgp"])
        if "preprocess" in d:
            d["preprocess"] = PreprocessConfig(**d["preprocess"])
        if "models" in d:
            d["models"] = [ModelGrid(**m) for m in d["models"]]
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def load_records(config: ExperimentConfig):
    if config.dgp is not None:
        return generate(config.dgp)[0]
    pp = config.preprocess
    if not Path(config.input_path).exists():
        raise FileNotFoundError(config.input_path)
    return ingest_longitudinal(config.input_path, pp.adherence_threshold_days,
                               require_risk_scores=pp.include_risk_scores)


def snapshot_cohorts(records, pp: PreprocessConfig):
    return {tau: trim(build_snapshot(records, tau, pp)) for tau in pp.snapshot_taus}


def _select(grid: ModelGrid, train, val, seed):
    """Fit every grid point on train and keep the best validation C^td."""
    X_tr, names = train.covariates(include_treatment=True)
    X_val, _ = val.covariates(include_treatment=True)
    specs = grid.specs() or [ModelSpec(grid.kind)]
    best = None
    fitted_cache = {}
    for spec in specs:
        if spec.kind == "random_survival_forest":
            # forests differing only in n_trees share their leading trees
            key = tuple(sorted((k, v) for k, v in spec.params.items() if k != "n_trees"))
            n_max = max(s.params.get("n_trees", 100) for s in specs
                        if tuple(sorted((k, v) for k, v in s.params.items() if k != "n_trees")) == key)
            if key not in fitted_cache:
                big = replace(spec, params={**spec.params, "n_trees": n_max})
                fitted_cache[key] = big.fit(X_tr, train.residual_time, train.event, names, seed=seed)
            full = fitted_cache[key]
            n = spec.params.get("n_trees", 100)
            model = RandomSurvivalForestModel(full.grid, full.trees[:n],
                                              replace(full.params, n_trees=n), names)
        else:
            model = spec.fit(X_tr, train.residual_time, train.event, names, seed=seed)
        try:
            score = concordance_td(model.predict_curves(X_val), val.residual_time, val.event)
        except ValueError:
            score = -np.inf
        if best is None or score > best[0]:
            best = (score, spec, model)
    return best


def _estimate(name, spec, full, train, horizon, seed):
    kind, k = parse_estimator(name)
    if kind == "t_learner":
        return t_learner_ate(full, spec, horizon, train=train, seed=seed)
    if kind == "s_learner":
        return s_learner_ate(full, spec, horizon, train=train, seed=seed)
    if kind == "matching":
        return matching_ate(full, spec, k, horizon, train=train, seed=seed)
    return unadjusted_km_ate(full, horizon)


def _run_cell(config: ExperimentConfig, tau, repeat, cohort, want_ate=True):
    """One (tau, repeat) job: split, normalize, select, evaluate, estimate."""
    pp = config.preprocess
    seed = pp.seed + repeat
    train, val, test = split(cohort, pp.split, seed)
    train_n, stats = encode_and_normalize(train)
    val_n = encode_and_normalize(val, stats)[0]
    test_n = encode_and_normalize(test, stats)[0]
    full_n = encode_and_normalize(cohort, stats)[0]
    metrics, ates = [], []
    for grid in config.models:
        row = {"tau": tau, "model": grid.kind, "repeat": repeat}
        try:
            score, spec, model = _select(grid, train_n, val_n, seed)
            X_te, _ = test_n.covariates(include_treatment=True)
            rep = evaluate_survival(model.predict_curves(X_te), test_n.residual_time, test_n.event)
            row.update(status=OK, params=json.dumps(spec.params, sort_keys=True),
                       val_c_td=score, c_td=rep.c_td, ibs=rep.ibs, auc_td=rep.auc_td_mean, error="")
        except Exception as exc:  # recorded per cell, never aborts the run
            log.warning("tau=%s repeat=%s model=%s failed: %s", tau, repeat, grid.kind, exc)
            spec = None
            row.update(status=FAILED, params="", val_c_td=np.nan, c_td=np.nan, ibs=np.nan,
                       auc_td=np.nan, error=str(exc))
        metrics.append(row)
        if not want_ate:
            continue
        for est in config.estimators:
            if est == "unadjusted_km":
                continue
            cell = {"tau": tau, "repeat": repeat, "model": grid.kind, "estimator": est}
            try:
                if spec is None:
                    raise RuntimeError("model selection failed")
                eff = _estimate(est, spec, full_n, train_n, config.horizon, seed)
                cell.update(status=OK, ate=eff.ate, ites=eff.ites, error="")
            except Exception as exc:
                cell.update(status=FAILED, ate=np.nan, ites=None, error=str(exc))
            ates.append(cell)
    if want_ate and "unadjusted_km" in config.estimators:
        cell = {"tau": tau, "repeat": repeat, "model": UNADJUSTED_ROW, "estimator": "unadjusted_km"}
        try:
            eff = unadjusted_km_ate(full_n, config.horizon)
            cell.update(status=OK, ate=eff.ate, ites=eff.ites, error="")
        except Exception as exc:
            cell.update(status=FAILED, ate=np.nan, ites=None, error=str(exc))
        ates.append(cell)
    return metrics, ates


@dataclass
class ExperimentResult:
    out_dir: Path
    metrics: pd.DataFrame
    ate_repeats: pd.DataFrame
    ate_tables: dict
    cohorts: dict
    files: list


def _ate_table(rep: pd.DataFrame, estimators, models) -> pd.DataFrame:
    rows = []
    for model in models:
        row = {"model": model}
        for est in estimators:
            slug = _estimator_slug(est)
            cells = rep[(rep.model == model) & (rep.estimator == est)]
            if cells.empty:
                row.update({f"{slug}_mean": np.nan, f"{slug}_std": np.nan, f"{slug}_status": "n/a"})
                continue
            if (cells.status != OK).any():
                row.update({f"{slug}_mean": np.nan, f"{slug}_std": np.nan,
                            f"{slug}_status": FAILED})
                continue
            vals = cells.ate.to_numpy(dtype=float)
            row.update({
                f"{slug}_mean": float(np.mean(vals)),
                f"{slug}_std": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
                f"{slug}_status": OK,
            })
        rows.append(row)
    return pd.DataFrame(rows)


def _write_csv(df: pd.DataFrame, path: Path, files: list):
    df.to_csv(path, index=False, lineterminator="\n")
    files.append(path.name)


def run_experiment(config: ExperimentConfig, want_ate=True) -> ExperimentResult:
    """Run the whole protocol and write every table to ``config.out_dir``.

    Per snapshot and repeat: split, normalize on train, select
    hyperparameters by validation C^td, report test metrics, then estimate
    ATEs on the full cohort with models fitted on the training part.
    """
    pp = config.preprocess
    records = load_records(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cohorts = snapshot_cohorts(records, pp)
    jobs = [(tau, r) for tau in pp.snapshot_taus for r in range(pp.n_repeats)]
    results = Parallel(n_jobs=config.n_jobs)(
        delayed(_run_cell)(config, tau, r, cohorts[tau], want_ate) for tau, r in jobs
    )
    metrics = pd.DataFrame([m for res in results for m in res[0]])
    cells = [c for res in results for c in res[1]]
    files: list[str] = []
    manifest_cells = []
    ate_tables = {}
    model_rows = [m.kind for m in config.models]
    if "unadjusted_km" in config.estimators:
        model_rows.append(UNADJUSTED_ROW)

    rep = pd.DataFrame([{k: v for k, v in c.items() if k != "ites"} for c in cells],
                       columns=["tau", "repeat", "model", "estimator", "status", "ate", "error"])
    for tau in pp.snapshot_taus:
        cohort = cohorts[tau]
        m_tau = metrics[metrics.tau == tau]
        _write_csv(m_tau, out / f"metrics_{tau}.csv", files)
        for _, row in m_tau.iterrows():
            manifest_cells.append({"tau": tau, "repeat": int(row["repeat"]), "model": row["model"],
                                   "estimator": None, "status": row["status"],
                                   "file": f"metrics_{tau}.csv"})
        _write_km(cohort, config.horizon, out / f"km_{tau}.csv", files)
        if not want_ate:
            continue
        rep_tau = rep[rep.tau == tau]
        _write_csv(rep_tau, out / f"ate_repeats_{tau}.csv", files)
        table = _ate_table(rep_tau, config.estimators, model_rows)
        ate_tables[tau] = table
        _write_csv(table, out / f"ate_{tau}.csv", files)
        sub_rows = []
        for (model, est), group in itertools.groupby(
            sorted((c for c in cells if c["tau"] == tau), key=lambda c: (c["model"], c["estimator"])),
            key=lambda c: (c["model"], c["estimator"]),
        ):
            group = sorted(group, key=lambda c: c["repeat"])
            fname = f"ite_{tau}_{model}_{_estimator_slug(est)}.csv"
            frames = []
            for c in group:
                manifest_cells.append({"tau": tau, "repeat": c["repeat"], "model": model,
                                       "estimator": est, "status": c["status"],
                                       "error": c["error"], "file": fname})
                if c["ites"] is None:
                    continue
                frames.append(pd.DataFrame({
                    "repeat": c["repeat"],
                    "subject_id": cohort.ids,
                    "treatment": cohort.treatment,
                    "ite": c["ites"],
                    "formulation": cohort.labels["formulation"],
                    "drug_name": cohort.labels["drug_name"],
                }))
            if not frames:
                continue
            ite_df = pd.concat(frames, ignore_index=True)
            _write_csv(ite_df, out / fname, files)
            if len(frames) == len(group):
                mean_ite = ite_df.groupby("subject_id", sort=False)["ite"].mean().to_numpy()
                eff = EffectEstimate.from_ites(mean_ite, est, model)
                for s in subgroup_ite_report(eff, cohort):
                    sub_rows.append({"model": model, "estimator": est, "label_kind": s.label_kind,
                                     "label": s.label, "count": s.count, "mean_ite": s.mean_ite,
                                     "std_ite": s.std_ite})
        _write_csv(pd.DataFrame(sub_rows, columns=["model", "estimator", "label_kind", "label",
                                                   "count", "mean_ite", "std_ite"]),
                   out / f"subgroups_{tau}.csv", files)

    summary = (metrics[metrics.status == OK]
               .groupby(["tau", "model"], sort=True)[["c_td", "ibs", "auc_td"]]
               .agg(["mean", "std"]))
    summary.columns = [f"{a}_{b}" for a, b in summary.columns]
    _write_csv(summary.reset_index(), out / "metrics_summary.csv", files)

    manifest = {
        "version": __version__,
        "config": config.to_dict(),
        "cohort_sizes": {str(t): len(c) for t, c in cohorts.items()},
        "cells": manifest_cells,
        "files": sorted(files),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return ExperimentResult(out, metrics, rep, ate_tables, cohorts, sorted(files))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, float) and np.isnan(o):
        return None
    raise TypeError(f"not JSON serializable: {type(o)}")


def _write_km(cohort, horizon, path: Path, files):
    rows = []
    for arm, name in ((0, "control"), (1, "treated")):
        mask = cohort.treatment == arm
        if not mask.any():
            continue
        curve = km_fit(cohort.residual_time[mask], cohort.event[mask])
        rows += [{"arm": name, "time": t, "survival": s} for t, s in zip(curve.grid, curve.values)]
    _write_csv(pd.DataFrame(rows, columns=["arm", "time", "survival"]), path, files)


def read_km_curve(path, arm: str) -> SurvivalCurve:
    df = pd.read_csv(path)
    df = df[df.arm == arm]
    return SurvivalCurve(df.time.to_numpy(float), df.survival.to_numpy(float))


def emit_plot_data(out_dir, bins=20):
    """Tidy per-figure data from the files of a finished run.

    Writes ``plot_ate_trend.csv`` (one row per tau, model, estimator),
    ``plot_ite_hist.csv`` (repeat-averaged ITE histograms per subgroup,
    shared bin edges per panel) and ``plot_km.csv`` (step coordinates).
    """
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    taus = sorted({int(t) for t in manifest["cohort_sizes"]})
    trend, hist, km = [], [], []
    for tau in taus:
        km_path = out / f"km_{tau}.csv"
        if km_path.exists():
            df = pd.read_csv(km_path)
            df.insert(0, "tau", tau)
            km.append(df)
        ate_path = out / f"ate_{tau}.csv"
        if not ate_path.exists():
            continue
        table = pd.read_csv(ate_path, keep_default_na=False, na_values=[""])
        estimators = [c[: -len("_status")] for c in table.columns if c.endswith("_status")]
        for _, row in table.iterrows():
            for slug in estimators:
                if row[f"{slug}_status"] == "n/a":
                    continue
                trend.append({"tau": tau, "model": row.model, "estimator": slug,
                              "ate_mean": row[f"{slug}_mean"], "ate_std": row[f"{slug}_std"],
                              "status": row[f"{slug}_status"]})
                ite_path = out / f"ite_{tau}_{row.model}_{slug}.csv"
                if row[f"{slug}_status"] != OK or not ite_path.exists():
                    continue
                ites = pd.read_csv(ite_path, keep_default_na=False, na_values=[""])
                per_subject = ites.groupby("subject_id", sort=False).agg(
                    ite=("ite", "mean"), formulation=("formulation", "first"),
                    drug_name=("drug_name", "first"))
                vals = per_subject.ite.to_numpy()
                lo, hi = float(vals.min()), float(vals.max())
                if lo == hi:
                    lo, hi = lo - 0.5, hi + 0.5
                edges = np.linspace(lo, hi, bins + 1)
                groups = [("all", "all", per_subject)]
                for kind in ("formulation", "drug_name"):
                    col = per_subject[kind]
                    for label in sorted(col.dropna().unique()):
                        groups.append((kind, label, per_subject[col == label]))
                for kind, label, g in groups:
                    counts, _ = np.histogram(g.ite.to_numpy(), bins=edges)
                    hist += [{"tau": tau, "model": row.model, "estimator": slug,
                              "label_kind": kind, "label": label, "bin_left": edges[b],
                              "bin_right": edges[b + 1], "count": int(counts[b])}
                             for b in range(bins)]
    written = []
    pd.DataFrame(trend, columns=["tau", "model", "estimator", "ate_mean", "ate_std", "status"]) \
        .to_csv(out / "plot_ate_trend.csv", index=False, lineterminator="\n")
    written.append(out / "plot_ate_trend.csv")
    pd.DataFrame(hist, columns=["tau", "model", "estimator", "label_kind", "label", "bin_left",
                                "bin_right", "count"]) \
        .to_csv(out / "plot_ite_hist.csv", index=False, lineterminator="\n")
    written.append(out / "plot_ite_hist.csv")
    if km:
        pd.concat(km, ignore_index=True).to_csv(out / "plot_km.csv", index=False, lineterminator="\n")
        written.append(out / "plot_km.csv")
    return written


@dataclass
class AblationResult:
    full: ExperimentResult
    ablated: ExperimentResult
    table: pd.DataFrame


def run_ablation(config: ExperimentConfig) -> AblationResult:
    """Run the experiment with and without risk-score features and pair the ATEs."""
    if not config.preprocess.include_risk_scores:
        raise ValueError("ablation needs a configuration that includes the risk scores")
    base = Path(config.out_dir)
    full = run_experiment(replace(config, out_dir=str(base / "full")))
    abl_pp = replace(config.preprocess, include_risk_scores=False)
    ablated = run_experiment(replace(config, preprocess=abl_pp, out_dir=str(base / "ablation")))
    rows = []
    for tau in config.preprocess.snapshot_taus:
        f_tab = full.ate_tables[tau].set_index("model")
        a_tab = ablated.ate_tables[tau].set_index("model")
        for model in f_tab.index:
            for est in config.estimators:
                slug = _estimator_slug(est)
                if f_tab.loc[model, f"{slug}_status"] == "n/a":
                    continue
                status = OK if (f_tab.loc[model, f"{slug}_status"] == OK
                                and a_tab.loc[model, f"{slug}_status"] == OK) else FAILED
                rows.append({
                    "tau": tau, "model": model, "estimator": est,
                    "full_mean": f_tab.loc[model, f"{slug}_mean"],
                    "full_std": f_tab.loc[model, f"{slug}_std"],
                    "ablated_mean": a_tab.loc[model, f"{slug}_mean"],
                    "ablated_std": a_tab.loc[model, f"{slug}_std"],
                    "status": status,
                })
    table = pd.DataFrame(rows)
    table.to_csv(base / "ablation.csv", index=False, lineterminator="\n")
    return AblationResult(full, ablated, table)


def factual_rmets(model, cohort, horizon):
    X, _ = cohort.covariates(include_treatment=True)
    return rmet_batch(model.predict_curves(X), horizon)
