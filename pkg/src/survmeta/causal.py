"""Restricted mean event time and survival meta-learners.

Every estimator returns an :class:`~survmeta.domain.EffectEstimate` whose
``ate`` is the plain mean of its per-subject ITEs. A positive ITE means the
treatment lengthens the time to the adverse event.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import (
    MAX_MONTHS,
    STATIC_CATEGORICALS,
    EffectEstimate,
    SnapshotCohort,
    SurvivalCurve,
    SurvivalCurves,
)
from .survival import km_fit
from .survival.models import ModelSpec

DEFAULT_K = (1, 5, 20)


class PositivityError(ValueError):
    pass


@dataclass(frozen=True)
class HorizonConfig:
    horizon: float = MAX_MONTHS

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True)
class MatchingConfig:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("K must be >= 1")


def _step_area(grid, values, horizon):
    edges = np.minimum(np.append(grid, max(horizon, grid[-1])), horizon)
    # sequential sum: single curves and batches must agree to the last bit
    return np.cumsum(values * np.diff(edges), axis=-1)[..., -1]


def rmet(curve: SurvivalCurve, horizon: float = MAX_MONTHS) -> float:
    """Area under a step survival curve on ``[0, horizon]``.

    >>> rmet(SurvivalCurve([0, 2, 4], [1.0, 0.5, 0.0]), 96)
    3.0
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return float(_step_area(curve.grid, curve.values, horizon))


def rmet_batch(curves: SurvivalCurves, horizon: float = MAX_MONTHS) -> np.ndarray:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return _step_area(curves.grid, curves.values, horizon)


def _check_arms(cohort, what="cohort"):
    n1 = int(cohort.treatment.sum())
    n0 = len(cohort) - n1
    if n1 == 0 or n0 == 0:
        raise PositivityError(f"positivity violated: one-armed {what}")
    return n0, n1


def t_learner_ate(cohort: SnapshotCohort, model_spec: ModelSpec, horizon=MAX_MONTHS,
                  train: SnapshotCohort | None = None, seed=0) -> EffectEstimate:
    """Separate survival models per arm; ITE_i = mu_1(z_i) - mu_0(z_i).

    The treatment column is dropped from the features. Models are fitted on
    ``train`` (default: the cohort itself) and evaluated on every cohort row.
    """
    train = cohort if train is None else train
    _check_arms(train)
    X_tr, names = train.covariates(include_treatment=False)
    X, _ = cohort.covariates(include_treatment=False)
    mu = {}
    for a in (0, 1):
        arm = train.treatment == a
        if not train.event[arm].any():
            raise ValueError(f"no events in the {'treated' if a else 'control'} arm")
        model = model_spec.fit(X_tr[arm], train.residual_time[arm], train.event[arm],
                               names, seed=seed + a)
        mu[a] = rmet_batch(model.predict_curves(X), horizon)
    return EffectEstimate.from_ites(mu[1] - mu[0], "t_learner", model_spec.tag,
                                    ids=cohort.ids, horizon=horizon)


def s_learner_ate(cohort: SnapshotCohort, model_spec: ModelSpec, horizon=MAX_MONTHS,
                  train: SnapshotCohort | None = None, seed=0) -> EffectEstimate:
    """One model with the treatment as a feature, evaluated at A=1 and A=0.

    Only the snapshot treatment feature is overwritten; adherence history
    stays as observed.
    """
    train = cohort if train is None else train
    X_tr, names = train.covariates(include_treatment=True)
    if not train.event.any():
        raise ValueError("no events in the training cohort")
    model = model_spec.fit(X_tr, train.residual_time, train.event, names, seed=seed)
    X, _ = cohort.covariates(include_treatment=True)
    j = cohort.feature_index(cohort.treatment_name)
    mu = {}
    for a in (0, 1):
        Xa = X.copy()
        Xa[:, j] = a
        mu[a] = rmet_batch(model.predict_curves(Xa), horizon)
    return EffectEstimate.from_ites(mu[1] - mu[0], "s_learner", model_spec.tag,
                                    ids=cohort.ids, horizon=horizon)


def standardize_columns(X):
    """z-score each column, dropping constant ones."""
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0)
    keep = sd > 1e-12 * np.maximum(1.0, np.abs(X.mean(axis=0)))
    return (X[:, keep] - X[:, keep].mean(axis=0)) / sd[keep]


def nearest_neighbors(query, pool, k, block=256):
    """Indices into ``pool`` of the k nearest rows for each query row.

    Euclidean distance; equal distances resolve to the lower pool index.
    """
    out = np.empty((len(query), k), dtype=int)
    for start in range(0, len(query), block):
        q = query[start:start + block]
        d2 = ((q[:, None, :] - pool[None, :, :]) ** 2).sum(axis=2)
        out[start:start + block] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def matching_neighbors(cohort: SnapshotCohort, k: int):
    """Opposite-arm neighbour sets, as cohort row indices, for every row."""
    n0, n1 = _check_arms(cohort)
    for size, name in ((n0, "control"), (n1, "treated")):
        if k > size:
            raise ValueError(f"K={k} exceeds the {name} group size ({size})")
    X, _ = cohort.covariates(include_treatment=False)
    Z = standardize_columns(X)
    nbrs = np.empty((len(cohort), k), dtype=int)
    for a in (0, 1):
        rows = np.flatnonzero(cohort.treatment == a)
        pool = np.flatnonzero(cohort.treatment != a)
        nbrs[rows] = pool[nearest_neighbors(Z[rows], Z[pool], k)]
    return nbrs


def matching_ate(cohort: SnapshotCohort, model_spec: ModelSpec, matching: MatchingConfig | int = 5,
                 horizon=MAX_MONTHS, train: SnapshotCohort | None = None, seed=0,
                 factual: np.ndarray | None = None) -> EffectEstimate:
    """K-nearest-neighbour matching on factual RMETs from one joint model.

    The counterfactual RMET of row i is the mean factual RMET of its K
    nearest opposite-arm rows in standardized covariate space (treatment
    excluded). ``factual`` short-circuits the model fit when the factual
    RMETs are already known.
    """
    k = matching.k if isinstance(matching, MatchingConfig) else int(matching)
    MatchingConfig(k)
    nbrs = matching_neighbors(cohort, k)
    if factual is None:
        train = cohort if train is None else train
        if not train.event.any():
            raise ValueError("no events in the training cohort")
        X_tr, names = train.covariates(include_treatment=True)
        model = model_spec.fit(X_tr, train.residual_time, train.event, names, seed=seed)
        X, _ = cohort.covariates(include_treatment=True)
        factual = rmet_batch(model.predict_curves(X), horizon)
    factual = np.asarray(factual, dtype=float)
    counterfactual = factual[nbrs].mean(axis=1)
    ites = (factual - counterfactual) * (2 * cohort.treatment - 1)
    tag = model_spec.tag if model_spec is not None else ""
    return EffectEstimate.from_ites(ites, f"matching({k})", tag, ids=cohort.ids, horizon=horizon)


def unadjusted_km_ate(cohort: SnapshotCohort, horizon=MAX_MONTHS) -> EffectEstimate:
    """Difference of arm-wise Kaplan-Meier RMETs; every ITE is set to it."""
    _check_arms(cohort)
    mu = {}
    for a in (0, 1):
        arm = cohort.treatment == a
        mu[a] = rmet(km_fit(cohort.residual_time[arm], cohort.event[arm]), horizon)
    ites = np.full(len(cohort), mu[1] - mu[0])
    return EffectEstimate.from_ites(ites, "unadjusted_km", "kaplan_meier", ids=cohort.ids,
                                    horizon=horizon)


@dataclass
class SubgroupSummary:
    label_kind: str
    label: str
    count: int
    mean_ite: float
    std_ite: float
    bin_edges: np.ndarray
    bin_counts: np.ndarray


def subgroup_ite_report(effects: EffectEstimate, cohort: SnapshotCohort, label_kinds=None,
                        bins=20) -> list[SubgroupSummary]:
    """Per-label ITE summaries (count, subgroup ATE, std, histogram).

    Histogram edges are shared across all subgroups so the bars line up.
    Rows with a missing label are left out of that label kind.
    """
    ites = np.asarray(effects.ites, dtype=float)
    if len(ites) != len(cohort):
        raise ValueError("effects and cohort differ in length")
    lo, hi = float(ites.min()), float(ites.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    out = []
    for kind in label_kinds or sorted(cohort.labels):
        col = np.asarray(cohort.labels[kind], dtype=object)
        present = np.array([v is not None and v == v and v != "" for v in col])
        for label in sorted(set(col[present])):
            vals = ites[col == label]
            counts, _ = np.histogram(vals, bins=edges)
            out.append(SubgroupSummary(
                label_kind=kind,
                label=str(label),
                count=len(vals),
                mean_ite=float(np.mean(vals)),
                std_ite=float(np.std(vals, ddof=1)) if len(vals) > 1 else float("nan"),
                bin_edges=edges,
                bin_counts=counts,
            ))
    return out


@dataclass
class AssumptionReport:
    n_treated: int
    n_control: int
    events_treated: int
    events_control: int
    positivity_ok: bool
    one_armed_strata: list = field(default_factory=list)
    n_strata: int = 0

    @property
    def ok(self) -> bool:
        return self.positivity_ok and not self.one_armed_strata


def static_strata(cohort: SnapshotCohort, keys=STATIC_CATEGORICALS):
    keys = [k for k in keys if k in cohort.static]
    cols = [np.asarray(cohort.static[k], dtype=object) for k in keys]
    return [tuple(str(c[i]) for c in cols) for i in range(len(cohort))]


def assumption_checks(cohort: SnapshotCohort) -> AssumptionReport:
    """The checkable part of the identification assumptions.

    Positivity is checked globally (both arms present) and within every
    static-covariate stratum.
    """
    t = cohort.treatment
    strata = static_strata(cohort)
    arms = {}
    for s, a in zip(strata, t):
        arms.setdefault(s, set()).add(int(a))
    one_armed = [(s, next(iter(a))) for s, a in sorted(arms.items()) if len(a) == 1]
    n1 = int(t.sum())
    return AssumptionReport(
        n_treated=n1,
        n_control=len(t) - n1,
        events_treated=int(cohort.event[t == 1].sum()),
        events_control=int(cohort.event[t == 0].sum()),
        positivity_ok=n1 > 0 and len(t) - n1 > 0,
        one_armed_strata=one_armed,
        n_strata=len(arms),
    )
