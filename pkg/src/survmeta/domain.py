"""Core data types shared across the package.

Times are integer months unless noted otherwise. Survival curves are
right-continuous step functions: ``values[k]`` holds on
``[grid[k], grid[k + 1])`` and the last value is carried forward.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

MAX_MONTHS = 96
N_RISK_SCORES = 5
RISK_SCORE_NAMES = (
    "risk_mortality",
    "risk_jail",
    "risk_shelter",
    "risk_hospitalization",
    "risk_overdose",
)
STATIC_CATEGORICALS = ("race", "gender", "education")
FORMULATIONS = ("injectable", "non-injectable", "not-covered")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SubjectRecord:
    """One subject's monthly history plus static covariates and outcome.

    ``risk_scores_series`` holds one 5-tuple per month, or ``None`` for a
    month whose scores are missing.
    """

    id: str
    observed_time: int
    event_flag: bool
    adherence_series: tuple
    coverage_days_series: tuple
    static_covariates: Mapping[str, object]
    risk_scores_series: tuple
    subgroup_labels: Mapping[str, str] = field(default_factory=dict)

    @property
    def n_months(self) -> int:
        return len(self.adherence_series)

    def __eq__(self, other):
        if not isinstance(other, SubjectRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.observed_time == other.observed_time
            and bool(self.event_flag) == bool(other.event_flag)
            and tuple(self.adherence_series) == tuple(other.adherence_series)
            and tuple(self.coverage_days_series) == tuple(other.coverage_days_series)
            and dict(self.static_covariates) == dict(other.static_covariates)
            and tuple(self.risk_scores_series) == tuple(other.risk_scores_series)
            and dict(self.subgroup_labels) == dict(other.subgroup_labels)
        )

    __hash__ = None


@dataclass(frozen=True)
class Violation:
    subject_id: str
    message: str

    def __str__(self):
        return f"{self.subject_id}: {self.message}"


def validate_dataset(records: Sequence[SubjectRecord]) -> list[Violation]:
    """Check every record against the data-model invariants.

    Returns the list of violations; an empty list means the dataset is
    well formed. Never raises for bad data.
    """
    out = []
    seen = set()
    for r in records:
        sid = str(r.id)
        if sid in seen:
            out.append(Violation(sid, "duplicate subject id"))
        seen.add(sid)
        m = r.n_months
        if m > MAX_MONTHS:
            out.append(Violation(sid, f"history of {m} months exceeds {MAX_MONTHS}"))
        if r.observed_time < 1:
            out.append(Violation(sid, "observed_time must be >= 1"))
        if r.observed_time > m:
            out.append(
                Violation(sid, f"observed_time exceeds history ({r.observed_time} > {m})")
            )
        if any(a not in (0, 1) for a in r.adherence_series):
            out.append(Violation(sid, "adherence values must be 0 or 1"))
        if len(r.coverage_days_series) != m:
            out.append(Violation(sid, "coverage_days series length differs from adherence"))
        elif any(not 0 <= d <= 31 for d in r.coverage_days_series):
            out.append(Violation(sid, "coverage days out of [0, 31]"))
        if len(r.risk_scores_series) != m:
            out.append(Violation(sid, "risk score series length differs from adherence"))
        for month, scores in enumerate(r.risk_scores_series, start=1):
            if scores is None:
                continue
            if len(scores) != N_RISK_SCORES:
                out.append(Violation(sid, f"month {month}: expected {N_RISK_SCORES} risk scores"))
            elif any(not (0.0 <= s <= 1.0) for s in scores):
                out.append(Violation(sid, f"month {month}: risk score out of [0,1]"))
        age = r.static_covariates.get("age")
        if age is None or not np.isfinite(float(age)):
            out.append(Violation(sid, "age missing or non-finite"))
    return out


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    # one of: static, continuous, risk_score, history, treatment
    kind: str


@dataclass(frozen=True, eq=False)
class SnapshotCohort:
    """Cross-section of the cohort at snapshot month ``tau``.

    Row-aligned arrays rather than row objects. ``static`` keeps the raw
    static covariates (categorical strings and age) so that strata and
    encodings can be recomputed; ``features`` is the numeric design matrix
    described by ``schema``.
    """

    tau: int
    ids: np.ndarray
    features: np.ndarray
    schema: tuple
    treatment: np.ndarray
    residual_time: np.ndarray
    event: np.ndarray
    static: Mapping[str, np.ndarray]
    labels: Mapping[str, np.ndarray]
    treatment_name: str = "adherence_current"

    def __post_init__(self):
        n = len(self.ids)
        object.__setattr__(self, "ids", _frozen(self.ids, object))
        object.__setattr__(self, "features", _frozen(self.features).reshape(n, -1))
        object.__setattr__(self, "treatment", _frozen(self.treatment, int))
        object.__setattr__(self, "residual_time", _frozen(self.residual_time))
        object.__setattr__(self, "event", _frozen(self.event, bool))
        object.__setattr__(self, "schema", tuple(self.schema))
        if self.features.shape[1] != len(self.schema):
            raise ValueError(
                f"feature matrix has {self.features.shape[1]} columns, schema has {len(self.schema)}"
            )
        for arr in (self.treatment, self.residual_time, self.event):
            if len(arr) != n:
                raise ValueError("cohort arrays are not row-aligned")
        if n and self.residual_time.min() < 1:
            raise ValueError("residual_time must be >= 1 for every row")
        if not np.isin(self.treatment, (0, 1)).all():
            raise ValueError("treatment must be binary")
        j = self.feature_index(self.treatment_name)
        if j is not None and not np.array_equal(self.features[:, j], self.treatment):
            raise ValueError("treatment feature disagrees with treatment column")

    def __len__(self):
        return len(self.ids)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.schema]

    def feature_index(self, name: str):
        for j, f in enumerate(self.schema):
            if f.name == name:
                return j
        return None

    def subset(self, mask_or_index) -> "SnapshotCohort":
        idx = np.asarray(mask_or_index)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return SnapshotCohort(
            tau=self.tau,
            ids=self.ids[idx],
            features=self.features[idx],
            schema=self.schema,
            treatment=self.treatment[idx],
            residual_time=self.residual_time[idx],
            event=self.event[idx],
            static={k: np.asarray(v)[idx] for k, v in self.static.items()},
            labels={k: np.asarray(v)[idx] for k, v in self.labels.items()},
            treatment_name=self.treatment_name,
        )

    def with_features(self, features, schema) -> "SnapshotCohort":
        return SnapshotCohort(
            tau=self.tau,
            ids=self.ids,
            features=features,
            schema=schema,
            treatment=self.treatment,
            residual_time=self.residual_time,
            event=self.event,
            static=self.static,
            labels=self.labels,
            treatment_name=self.treatment_name,
        )

    def covariates(self, include_treatment: bool):
        """Design matrix and names, optionally without the treatment column."""
        j = self.feature_index(self.treatment_name)
        if include_treatment:
            if j is None:
                raise ValueError(f"treatment feature {self.treatment_name!r} absent from schema")
            return self.features, self.feature_names
        if j is None:
            return self.features, self.feature_names
        keep = [k for k in range(len(self.schema)) if k != j]
        return self.features[:, keep], [self.schema[k].name for k in keep]


class SurvivalCurve:
    """Right-continuous step survival function on a time grid starting at 0."""

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        grid = _frozen(grid)
        values = _frozen(values)
        if grid.ndim != 1 or grid.shape != values.shape or len(grid) == 0:
            raise ValueError("grid and values must be 1-d arrays of equal, non-zero length")
        if grid[0] != 0:
            raise ValueError("grid must start at 0")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if values[0] != 1.0:
            raise ValueError("S(0) must equal 1")
        if np.any(np.diff(values) > 0):
            raise ValueError("survival values must be non-increasing")
        if values.min() < 0 or values.max() > 1:
            raise ValueError("survival values must lie in [0, 1]")
        self.grid = grid
        self.values = values

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        k = np.searchsorted(self.grid, u, side="right") - 1
        return self.values[np.clip(k, 0, None)]

    def left_limit(self, u):
        """S(u-), the value just before ``u``."""
        u = np.asarray(u, dtype=float)
        k = np.searchsorted(self.grid, u, side="left") - 1
        return np.where(k < 0, 1.0, self.values[np.clip(k, 0, None)])

    def __eq__(self, other):
        if not isinstance(other, SurvivalCurve):
            return NotImplemented
        return np.array_equal(self.grid, other.grid) and np.array_equal(self.values, other.values)

    __hash__ = None

    def __repr__(self):
        return f"SurvivalCurve(n_steps={len(self.grid)}, S(end)={self.values[-1]:.4g})"


class SurvivalCurves:
    """A batch of step curves sharing one grid; ``values`` is (n, len(grid))."""

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        self.grid = _frozen(grid)
        self.values = _frozen(values).reshape(-1, len(self.grid))
        if self.grid[0] != 0 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must start at 0 and be strictly increasing")

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i) -> SurvivalCurve:
        return SurvivalCurve(self.grid, self.values[i])

    def at(self, t) -> np.ndarray:
        """Per-subject S(t) for a scalar t."""
        k = int(np.searchsorted(self.grid, t, side="right")) - 1
        return self.values[:, max(k, 0)]

    @classmethod
    def from_curves(cls, curves: Sequence[SurvivalCurve]) -> "SurvivalCurves":
        if isinstance(curves, SurvivalCurves):
            return curves
        grid = np.unique(np.concatenate([c.grid for c in curves]))
        return cls(grid, np.vstack([c(grid) for c in curves]))


@dataclass(frozen=True, eq=False)
class EffectEstimate:
    """Per-subject ITEs and their mean (the ATE), in months."""

    ites: np.ndarray
    ate: float
    method_tag: str
    base_model_tag: str = ""
    repeat_std: float = float("nan")
    ids: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "ites", _frozen(self.ites))
        if self.ids is not None:
            object.__setattr__(self, "ids", _frozen(self.ids, object))

    @classmethod
    def from_ites(cls, ites, method_tag, base_model_tag="", ids=None, horizon=None):
        ites = np.asarray(ites, dtype=float)
        if horizon is not None and np.any(np.abs(ites) > horizon + 1e-9):
            raise ValueError("ITE magnitude exceeds the horizon")
        return cls(ites, float(np.mean(ites)), method_tag, base_model_tag, ids=ids)
