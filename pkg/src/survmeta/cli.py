"""Command-line driver.

    survmeta simulate   --out data/ --seed 1
    survmeta preprocess --input data/cohort.csv --out prep/
    survmeta estimate   --input data/cohort.csv --out results/ --models cox_ph
    survmeta run        --config experiment.json

Flags given on the command line override the JSON config.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import pandas as pd

from .causal import assumption_checks
from .cohort import (
    DatasetValidationError,
    PreprocessConfig,
    SchemaError,
    build_snapshot,
    cohort_to_frame,
    ingest_longitudinal,
    schema_to_json,
    trim,
    write_longitudinal,
)
from .pipeline import (
    DEFAULT_GRIDS,
    ExperimentConfig,
    ModelGrid,
    emit_plot_data,
    run_ablation,
    run_experiment,
)
from .synth import DgpConfig, censored_fraction, generate, oracle_ate

log = logging.getLogger("survmeta")


def _int_list(text):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _common(p):
    p.add_argument("--config", type=Path, help="JSON file mirroring ExperimentConfig")
    p.add_argument("--seed", type=int, help="base seed for splits, models and simulation")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--input", type=Path, help="longitudinal CSV (instead of a simulated DGP)")
    p.add_argument("--taus", type=_int_list, help="snapshot months, e.g. 3,6,9,12")
    p.add_argument("--threshold-days", type=int, help="non-adherence coverage threshold")
    p.add_argument("--no-risk-scores", action="store_true", help="drop the risk-score features")
    p.add_argument("--estimators", type=_str_list,
                   help="comma list of t_learner,s_learner,matching:K,unadjusted_km")
    p.add_argument("--models", type=_str_list,
                   help="comma list of cox_ph,random_survival_forest,kaplan_meier")
    p.add_argument("--n-repeats", type=int, help="number of seeded repeats")
    p.add_argument("--horizon", type=float, help="RMET horizon in months")
    p.add_argument("--n-jobs", type=int, help="worker processes")


def build_parser():
    parser = argparse.ArgumentParser(prog="survmeta", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "draw a synthetic longitudinal cohort with known effects",
        "preprocess": "build trimmed snapshot cohorts and positivity reports",
        "fit": "select hyperparameters on validation splits",
        "evaluate": "test-set C^td, IBS and AUC^td per model",
        "estimate": "ATE/ITE tables for every model and estimator",
        "ablate": "paired run with and without risk-score features",
        "report": "tidy plot data from a finished output directory",
        "run": "estimate plus report",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "simulate":
            p.add_argument("--n-subjects", type=int)
    return parser


def experiment_config(args) -> ExperimentConfig:
    """Merge the JSON config (if any) with command-line overrides."""
    base = json.loads(args.config.read_text()) if args.config else {}
    if args.input is not None:
        base["input_path"] = str(args.input)
        base.pop("dgp", None)
    if base.get("input_path") is None and base.get("dgp") is None:
        raise ValueError("no data: pass --input or a config with input_path or dgp")
    pp = dict(base.get("preprocess", {}))
    if args.seed is not None:
        pp["seed"] = args.seed
    if args.taus:
        pp["snapshot_taus"] = list(args.taus)
    if args.threshold_days is not None:
        pp["adherence_threshold_days"] = args.threshold_days
    if args.no_risk_scores:
        pp["include_risk_scores"] = False
    if args.n_repeats is not None:
        pp["n_repeats"] = args.n_repeats
    base["preprocess"] = pp
    if args.models:
        given = {m["kind"]: m for m in base.get("models", [])}
        base["models"] = [given.get(k, {"kind": k, "grid": DEFAULT_GRIDS.get(k, {})})
                          for k in args.models]
    if args.estimators:
        base["estimators"] = args.estimators
    if args.horizon is not None:
        base["horizon"] = args.horizon
    if args.out is not None:
        base["out_dir"] = str(args.out)
    if args.n_jobs is not None:
        base["n_jobs"] = args.n_jobs
    return ExperimentConfig.from_dict(base)


def cmd_simulate(args):
    raw = json.loads(args.config.read_text()) if args.config else {}
    raw = raw.get("dgp", raw)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.n_subjects is not None:
        raw["n_subjects"] = args.n_subjects
    if args.threshold_days is not None:
        raw["adherence_threshold_days"] = args.threshold_days
    cfg = DgpConfig.from_dict(raw)
    out = args.out or Path("synthetic")
    out.mkdir(parents=True, exist_ok=True)
    records, truth = generate(cfg)
    write_longitudinal(records, out / "cohort.csv")
    pd.DataFrame({
        "subject_id": truth.ids, "treatment": truth.treatment, "propensity": truth.propensity,
        "rmet0": truth.rmet0, "rmet1": truth.rmet1, "ite": truth.ite,
    }).to_csv(out / "truth.csv", index=False, lineterminator="\n")
    orc = oracle_ate(cfg)
    summary = {"dgp": cfg.to_dict(), "oracle_ate": orc.ate, "oracle_se": orc.se,
               "sample_ate": truth.sample_ate, "censored_fraction": censored_fraction(cfg)}
    (out / "oracle.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(records)} subjects to {out}; oracle ATE {orc.ate:.3f} (se {orc.se:.3f})")


def cmd_preprocess(args):
    cfg = experiment_config(args)
    pp = cfg.preprocess
    if cfg.input_path is not None:
        records = ingest_longitudinal(cfg.input_path, pp.adherence_threshold_days,
                                      require_risk_scores=pp.include_risk_scores)
    else:
        records = generate(cfg.dgp)[0]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for tau in pp.snapshot_taus:
        cohort = trim(build_snapshot(records, tau, pp))
        cohort_to_frame(cohort).to_csv(out / f"cohort_{tau}.csv", index=False, lineterminator="\n")
        (out / f"schema_{tau}.json").write_text(schema_to_json(cohort) + "\n")
        rep = assumption_checks(cohort)
        (out / f"assumptions_{tau}.json").write_text(json.dumps({
            "n_treated": rep.n_treated, "n_control": rep.n_control,
            "events_treated": rep.events_treated, "events_control": rep.events_control,
            "positivity_ok": rep.positivity_ok, "n_strata": rep.n_strata,
            "one_armed_strata": [list(s) + [a] for s, a in rep.one_armed_strata],
        }, indent=2) + "\n")
        print(f"tau={tau}: {len(cohort)} subjects, {rep.n_treated} treated, "
              f"{rep.events_treated + rep.events_control} events")


def _print_tables(result):
    for tau, table in sorted(result.ate_tables.items()):
        print(f"\nATE, tau={tau} (mean ± std over repeats)")
        print(table.to_string(index=False))


def cmd_fit(args):
    cfg = experiment_config(args)
    result = run_experiment(cfg, want_ate=False)
    cols = ["tau", "model", "repeat", "status", "params", "val_c_td"]
    print(result.metrics[cols].to_string(index=False))


def cmd_evaluate(args):
    cfg = experiment_config(args)
    result = run_experiment(cfg, want_ate=False)
    cols = ["tau", "model", "repeat", "status", "c_td", "ibs", "auc_td"]
    print(result.metrics[cols].to_string(index=False))


def cmd_estimate(args):
    result = run_experiment(experiment_config(args))
    _print_tables(result)


def cmd_ablate(args):
    res = run_ablation(experiment_config(args))
    print(res.table.to_string(index=False))


def cmd_report(args):
    out = args.out
    if out is None and args.config:
        out = Path(json.loads(args.config.read_text()).get("out_dir", "results"))
    out = out or Path("results")
    if not (out / "manifest.json").exists():
        raise FileNotFoundError(f"{out / 'manifest.json'} not found; run `estimate` first")
    for path in emit_plot_data(out):
        print(path)


def cmd_run(args):
    cfg = experiment_config(args)
    result = run_experiment(cfg)
    _print_tables(result)
    for path in emit_plot_data(cfg.out_dir):
        print(path)


COMMANDS = {
    "simulate": cmd_simulate,
    "preprocess": cmd_preprocess,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "estimate": cmd_estimate,
    "ablate": cmd_ablate,
    "report": cmd_report,
    "run": cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, SchemaError, DatasetValidationError) as exc:
        print(f"survmeta {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
