"""Longitudinal CSV ingestion and snapshot cohort construction."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .domain import (
    MAX_MONTHS,
    N_RISK_SCORES,
    RISK_SCORE_NAMES,
    STATIC_CATEGORICALS,
    FeatureSpec,
    SnapshotCohort,
    SubjectRecord,
    validate_dataset,
)

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "subject_id", "month", "coverage_days",
    *RISK_SCORE_NAMES,
    "age", "race", "gender", "education", "formulation", "drug_name",
    "observed_time", "event_flag",
)
STATIC_FIELDS = ("age", *STATIC_CATEGORICALS)
LABEL_FIELDS = ("formulation", "drug_name")
NOT_COVERED = "not-covered"
TREATMENT = "adherence_current"


class SchemaError(ValueError):
    pass


class DatasetValidationError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        head = "; ".join(str(v) for v in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"{len(self.violations)} dataset violations: {head}{more}")


@dataclass(frozen=True)
class PreprocessConfig:
    adherence_threshold_days: int = 10
    snapshot_taus: tuple = (3, 6, 9, 12)
    split: tuple = (0.6, 0.2, 0.2)
    n_repeats: int = 5
    include_risk_scores: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "snapshot_taus", tuple(int(t) for t in self.snapshot_taus))
        object.__setattr__(self, "split", tuple(float(f) for f in self.split))
        if not 0 <= self.adherence_threshold_days <= 31:
            raise ValueError("adherence threshold must lie in [0, 31]")
        if any(t < 1 for t in self.snapshot_taus):
            raise ValueError("snapshot taus must be >= 1")
        check_fractions(self.split)
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be >= 1")


def check_fractions(fractions):
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ValueError("split needs three non-negative fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions sum to {sum(fractions)}, not 1")


def binarize_adherence(coverage_days: int, threshold: int = 10) -> int:
    """1 (non-adherent) when coverage is at most ``threshold`` days, else 0."""
    if not 0 <= coverage_days <= 31:
        raise ValueError(f"coverage days {coverage_days} out of [0, 31]")
    if not 0 <= threshold <= 31:
        raise ValueError(f"threshold {threshold} out of [0, 31]")
    return int(coverage_days <= threshold)


def _parse_int(value, name, line):
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise SchemaError(f"line {line}: {name}={value!r} is not a number") from None
    if not f.is_integer():
        raise SchemaError(f"line {line}: {name}={value!r} is not an integer")
    return int(f)


def ingest_longitudinal(path, threshold: int = 10, require_risk_scores: bool = True):
    """Read the long-format CSV (one row per subject-month) into records.

    Static fields and outcome columns are repeated on every row of a
    subject and must agree. A month with all five risk columns blank is
    stored as missing. Raises :class:`SchemaError` on malformed input and
    :class:`DatasetValidationError` when the parsed records break an
    invariant.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = [c for c in CSV_COLUMNS if require_risk_scores or c not in RISK_SCORE_NAMES]
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        has_risk = all(c in header for c in RISK_SCORE_NAMES)
        subjects: dict[str, dict] = {}
        for line, row in enumerate(reader, start=2):
            sid = row["subject_id"]
            if not sid:
                raise SchemaError(f"line {line}: empty subject_id")
            month = _parse_int(row["month"], "month", line)
            if not 1 <= month <= MAX_MONTHS:
                raise SchemaError(f"line {line}: month out of range ({month})")
            days = _parse_int(row["coverage_days"], "coverage_days", line)
            if not 0 <= days <= 31:
                raise SchemaError(f"line {line}: coverage_days out of range ({days})")
            scores = None
            if has_risk:
                raw = [row[c] for c in RISK_SCORE_NAMES]
                if all(r == "" for r in raw):
                    scores = None
                elif any(r == "" for r in raw):
                    raise SchemaError(f"line {line}: partially missing risk scores")
                else:
                    try:
                        scores = tuple(float(r) for r in raw)
                    except ValueError:
                        raise SchemaError(f"line {line}: non-numeric risk score") from None
            try:
                static = {"age": float(row["age"])}
            except ValueError:
                raise SchemaError(f"line {line}: non-numeric age {row['age']!r}") from None
            static.update({k: row[k] for k in STATIC_CATEGORICALS})
            labels = {"formulation": row["formulation"] or NOT_COVERED}
            if row["drug_name"]:
                labels["drug_name"] = row["drug_name"]
            outcome = (
                _parse_int(row["observed_time"], "observed_time", line),
                _parse_int(row["event_flag"], "event_flag", line),
            )
            if outcome[1] not in (0, 1):
                raise SchemaError(f"line {line}: event_flag must be 0 or 1")
            s = subjects.setdefault(
                sid, {"months": {}, "static": static, "labels": labels, "outcome": outcome}
            )
            if s["static"] != static or s["labels"] != labels or s["outcome"] != outcome:
                raise SchemaError(f"line {line}: static fields of subject {sid} change between rows")
            if month in s["months"]:
                raise SchemaError(f"line {line}: duplicate month {month} for subject {sid}")
            s["months"][month] = (days, scores)

    records = []
    for sid, s in subjects.items():
        months = sorted(s["months"])
        if months != list(range(1, len(months) + 1)):
            raise SchemaError(f"subject {sid}: months must run contiguously from 1")
        days = tuple(s["months"][m][0] for m in months)
        records.append(SubjectRecord(
            id=sid,
            observed_time=s["outcome"][0],
            event_flag=bool(s["outcome"][1]),
            adherence_series=tuple(binarize_adherence(d, threshold) for d in days),
            coverage_days_series=days,
            static_covariates=s["static"],
            risk_scores_series=tuple(s["months"][m][1] for m in months),
            subgroup_labels=s["labels"],
        ))
    violations = validate_dataset(records)
    if violations:
        raise DatasetValidationError(violations)
    return records


def write_longitudinal(records: Sequence[SubjectRecord], path):
    """Inverse of :func:`ingest_longitudinal`; floats are written with repr."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            st, lab = r.static_covariates, r.subgroup_labels
            formulation = lab.get("formulation", NOT_COVERED)
            for m, (days, scores) in enumerate(
                zip(r.coverage_days_series, r.risk_scores_series), start=1
            ):
                risk = [repr(float(x)) for x in scores] if scores is not None else [""] * N_RISK_SCORES
                w.writerow([
                    r.id, m, days, *risk,
                    repr(float(st["age"])), st["race"], st["gender"], st["education"],
                    formulation, lab.get("drug_name", ""),
                    r.observed_time, int(bool(r.event_flag)),
                ])


def _one_hot(values, levels, prefix):
    values = np.asarray(values, dtype=object)
    cols = [(values == lv).astype(float) for lv in levels[1:]]
    names = [f"{prefix}={lv}" for lv in levels[1:]]
    return cols, names


def build_snapshot(records: Sequence[SubjectRecord], tau: int,
                   config: PreprocessConfig | None = None) -> SnapshotCohort:
    """Cohort of subjects still event-free and observed at month ``tau + 1``.

    Features, in order: age, one-hot static categoricals (first level
    dropped, levels taken from this cohort), the five risk scores at
    ``tau`` (unless disabled), adherence history for months 1..tau-1 and
    the current adherence indicator, which is the treatment.
    """
    config = config or PreprocessConfig()
    if tau < 1:
        raise ValueError("tau must be >= 1")
    use_risk = config.include_risk_scores
    rows = [r for r in records if r.observed_time >= tau + 1]
    dropped = 0
    if use_risk:
        kept = [r for r in rows if r.risk_scores_series[tau - 1] is not None]
        dropped = len(rows) - len(kept)
        rows = kept
        if dropped:
            log.info("tau=%d: dropped %d subjects with missing risk scores", tau, dropped)
    if not rows:
        raise ValueError(f"empty cohort at tau={tau}")

    static = {k: np.array([r.static_covariates[k] for r in rows], dtype=object)
              for k in STATIC_CATEGORICALS}
    static["age"] = np.array([float(r.static_covariates["age"]) for r in rows])
    levels = {k: tuple(sorted(set(static[k]))) for k in STATIC_CATEGORICALS}
    features, static_schema = _static_block(static, levels)
    if use_risk:
        R = np.array([r.risk_scores_series[tau - 1] for r in rows], dtype=float)
        features += list(R.T)
        static_schema += [FeatureSpec(n, "risk_score") for n in RISK_SCORE_NAMES]
    for t in range(1, tau):
        features.append(np.array([r.adherence_series[t - 1] for r in rows], dtype=float))
        static_schema.append(FeatureSpec(f"adherence_m{t}", "history"))
    treat = np.array([r.adherence_series[tau - 1] for r in rows], dtype=int)
    features.append(treat.astype(float))
    static_schema.append(FeatureSpec(TREATMENT, "treatment"))

    labels = {k: np.array([r.subgroup_labels.get(k) for r in rows], dtype=object)
              for k in LABEL_FIELDS}
    return SnapshotCohort(
        tau=tau,
        ids=np.array([r.id for r in rows], dtype=object),
        features=np.column_stack(features),
        schema=static_schema,
        treatment=treat,
        residual_time=np.array([r.observed_time - tau for r in rows], dtype=float),
        event=np.array([r.event_flag for r in rows], dtype=bool),
        static=static,
        labels=labels,
        treatment_name=TREATMENT,
    )


def _static_block(static, levels, age=None):
    cols = [np.asarray(static["age"], dtype=float) if age is None else age]
    schema = [FeatureSpec("age", "continuous")]
    for k in STATIC_CATEGORICALS:
        c, names = _one_hot(static[k], levels[k], k)
        cols += c
        schema += [FeatureSpec(n, "static") for n in names]
    return cols, schema


def trim(cohort: SnapshotCohort) -> SnapshotCohort:
    """Drop every static stratum whose members all share one treatment value.

    Strata are combinations of the categorical static covariates; a
    singleton stratum is one-armed by definition and is dropped too.
    """
    from .causal import static_strata

    strata = static_strata(cohort)
    arms: dict = {}
    for s, a in zip(strata, cohort.treatment):
        arms.setdefault(s, set()).add(int(a))
    keep = np.array([len(arms[s]) == 2 for s in strata])
    if not keep.any():
        raise ValueError(f"trimming emptied the cohort at tau={cohort.tau}")
    n_removed = int((~keep).sum())
    if n_removed:
        log.info("tau=%d: trimmed %d subjects in one-armed strata", cohort.tau, n_removed)
    return cohort.subset(keep)


@dataclass
class NormalizationStats:
    """Training-set encoding: category levels and z-score parameters."""

    levels: dict
    mean: dict
    std: dict
    dropped: tuple = ()

    def to_json(self) -> str:
        d = asdict(self)
        d["levels"] = {k: list(v) for k, v in self.levels.items()}
        d["dropped"] = list(self.dropped)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NormalizationStats":
        d = json.loads(text)
        return cls(
            levels={k: tuple(v) for k, v in d["levels"].items()},
            mean=d["mean"],
            std=d["std"],
            dropped=tuple(d["dropped"]),
        )


def encode_and_normalize(cohort: SnapshotCohort, stats: NormalizationStats | None = None):
    """Re-encode categoricals and z-score continuous features.

    With ``stats=None`` the encoding is learned from ``cohort`` (the
    training rows) and returned; otherwise the given training encoding is
    applied. Continuous features are age and the risk scores; binary
    features pass through. Continuous features with zero training
    variance are dropped. Expects a cohort straight from
    :func:`build_snapshot` / :func:`trim`.
    """
    names = cohort.feature_names
    kinds = {f.name: f.kind for f in cohort.schema}
    raw = {n: cohort.features[:, j] for j, n in enumerate(names)}
    continuous = [n for n in names if kinds[n] in ("continuous", "risk_score")]
    if stats is None:
        levels = {k: tuple(sorted(set(cohort.static[k]))) for k in STATIC_CATEGORICALS}
        mean = {n: float(np.mean(raw[n])) for n in continuous}
        std = {n: float(np.std(raw[n])) for n in continuous}
        # a constant column can come out with std ~1e-17 from rounding in the mean
        dropped = tuple(n for n in continuous
                        if std[n] <= 1e-12 * max(1.0, abs(mean[n])))
        stats = NormalizationStats(levels, mean, std, dropped)
    else:
        if set(stats.mean) != set(continuous):
            raise ValueError(
                f"normalization stats cover {sorted(stats.mean)}, cohort has {sorted(continuous)}"
            )
        for k in STATIC_CATEGORICALS:
            unseen = sorted(set(cohort.static[k]) - set(stats.levels[k]))
            if unseen:
                raise ValueError(f"unseen category {unseen[0]!r} for {k}")

    def z(n):
        return (raw[n] - stats.mean[n]) / stats.std[n]

    cols, schema = _static_block(cohort.static, stats.levels, age=z("age") if "age" not in stats.dropped else None)
    if "age" in stats.dropped:
        cols, schema = cols[1:], schema[1:]
    for n in names:
        k = kinds[n]
        if k in ("continuous", "static"):
            continue
        if k == "risk_score":
            if n in stats.dropped:
                continue
            cols.append(z(n))
        else:
            cols.append(raw[n])
        schema.append(FeatureSpec(n, k))
    return cohort.with_features(np.column_stack(cols), schema), stats


def split(cohort: SnapshotCohort, fractions=(0.6, 0.2, 0.2), seed=0):
    """Random disjoint train/validation/test parts, deterministic in ``seed``."""
    check_fractions(fractions)
    n = len(cohort)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    parts = (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])
    for name, idx in zip(("train", "validation", "test"), parts):
        if len(idx) == 0:
            raise ValueError(f"empty {name} split for a cohort of {n}")
    return tuple(cohort.subset(np.sort(idx)) for idx in parts)


def cohort_to_frame(cohort: SnapshotCohort) -> pd.DataFrame:
    df = pd.DataFrame(cohort.features, columns=cohort.feature_names)
    df.insert(0, "subject_id", cohort.ids)
    df["treatment"] = cohort.treatment
    df["residual_time"] = cohort.residual_time
    df["event_flag"] = cohort.event.astype(int)
    for k, v in cohort.static.items():
        if k != "age":
            df[k] = v
    for k, v in cohort.labels.items():
        df[k] = v
    return df


def schema_to_json(cohort: SnapshotCohort) -> str:
    return json.dumps(
        {"tau": cohort.tau, "treatment": cohort.treatment_name,
         "features": [{"name": f.name, "kind": f.kind} for f in cohort.schema]},
        indent=2,
    )
