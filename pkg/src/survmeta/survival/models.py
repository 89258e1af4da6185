"""Fitted survival models behind one prediction interface."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..domain import SurvivalCurve, SurvivalCurves
from .cox import CoxFitReport, breslow_cumulative_hazard, newton_cox
from .km import km_fit
from .rsf import RsfHyperparams, grow_forest

MODEL_KINDS = ("kaplan_meier", "cox_ph", "random_survival_forest")


class FittedSurvivalModel:
    """Base class: a fitted estimator of S(u | z).

    Subclasses implement :meth:`predict_curves` for a feature matrix whose
    columns follow ``feature_names``.
    """

    kind = "abstract"

    def __init__(self, feature_names: Sequence[str]):
        self.feature_names = tuple(feature_names)

    def predict_curves(self, X) -> SurvivalCurves:
        raise NotImplementedError

    def _check_matrix(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"expected {len(self.feature_names)} features {list(self.feature_names)}, "
                f"got {X.shape[1]}"
            )
        return X

    def predict_survival(self, z) -> SurvivalCurve:
        """Survival curve for one feature vector.

        ``z`` is either a mapping from feature name to value, checked against
        the training schema, or a plain vector in schema order.
        """
        if isinstance(z, Mapping) or hasattr(z, "index") and hasattr(z, "to_dict"):
            z = dict(z)
            missing = [f for f in self.feature_names if f not in z]
            extra = [f for f in z if f not in self.feature_names]
            if missing or extra:
                raise ValueError(f"feature schema mismatch: missing {missing}, extra {extra}")
            z = [z[f] for f in self.feature_names]
        return self.predict_curves(self._check_matrix(z))[0]


class KaplanMeierModel(FittedSurvivalModel):
    """Population curve; features are accepted and ignored."""

    kind = "kaplan_meier"

    def __init__(self, times, events, feature_names=()):
        super().__init__(feature_names)
        self.curve = km_fit(times, events)

    def predict_curves(self, X):
        X = self._check_matrix(X)
        vals = np.broadcast_to(self.curve.values, (len(X), len(self.curve.values)))
        return SurvivalCurves(self.curve.grid, vals)


class CoxPHModel(FittedSurvivalModel):
    kind = "cox_ph"

    def __init__(self, report: CoxFitReport, event_times, cum_hazard, feature_names):
        super().__init__(feature_names)
        self.report = report
        self.coefficients = report.coefficients
        self.event_times = np.asarray(event_times, dtype=float)
        self.cum_hazard = np.asarray(cum_hazard, dtype=float)

    @property
    def baseline_survival(self) -> SurvivalCurve:
        return SurvivalCurve(
            np.concatenate([[0.0], self.event_times]),
            np.concatenate([[1.0], np.exp(-self.cum_hazard)]),
        )

    def predict_curves(self, X):
        X = self._check_matrix(X)
        risk = np.exp(X @ self.coefficients)
        vals = np.exp(-np.outer(risk, self.cum_hazard))
        vals = np.hstack([np.ones((len(X), 1)), vals])
        return SurvivalCurves(np.concatenate([[0.0], self.event_times]), vals)


class RandomSurvivalForestModel(FittedSurvivalModel):
    kind = "random_survival_forest"

    def __init__(self, grid, trees, params: RsfHyperparams, feature_names):
        super().__init__(feature_names)
        self.grid = grid
        self.trees = trees
        self.params = params

    def predict_curves(self, X):
        X = self._check_matrix(X)
        acc = np.zeros((len(X), len(self.grid)))
        for tree in self.trees:
            acc += tree.predict(X)
        return SurvivalCurves(self.grid, np.clip(acc / len(self.trees), 0.0, 1.0))


def coxph_fit(features, times, events, penalizer=0.0, feature_names=None,
              constant_columns="raise"):
    """Fit a Cox model; returns ``(model, report)``.

    The prediction is ``S(u|z) = exp(-H0(u) exp(beta'z))`` with the Breslow
    baseline ``H0`` evaluated at training event times.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = feature_names or [f"x{j}" for j in range(X.shape[1])]
    report = newton_cox(X, times, events, penalizer, constant_columns=constant_columns)
    t, H = breslow_cumulative_hazard(X, times, events, report.coefficients)
    return CoxPHModel(report, t, H, names), report


def rsf_fit(features, times, events, hyperparams: RsfHyperparams | None = None,
            feature_names=None, n_jobs=1) -> RandomSurvivalForestModel:
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    params = hyperparams or RsfHyperparams()
    names = feature_names or [f"x{j}" for j in range(X.shape[1])]
    grid, trees = grow_forest(X, times, events, params, n_jobs=n_jobs)
    return RandomSurvivalForestModel(grid, trees, params, names)


def predict_survival(model: FittedSurvivalModel, z) -> SurvivalCurve:
    return model.predict_survival(z)


@dataclass(frozen=True)
class ModelSpec:
    """A model kind plus the hyperparameters to fit it with."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; choose from {MODEL_KINDS}")

    @property
    def tag(self) -> str:
        if not self.params:
            return self.kind
        inner = ",".join(f"{k}={self.params[k]}" for k in sorted(self.params))
        return f"{self.kind}({inner})"

    def fit(self, X, times, events, feature_names=None, seed=None) -> FittedSurvivalModel:
        if self.kind == "kaplan_meier":
            names = feature_names if feature_names is not None else ()
            return KaplanMeierModel(times, events, names)
        if self.kind == "cox_ph":
            # learners hand over arbitrary sub-cohorts; a column that happens
            # to be constant there carries no information
            model, _ = coxph_fit(
                X, times, events,
                penalizer=float(self.params.get("penalizer", 0.0)),
                feature_names=feature_names,
                constant_columns="zero",
            )
            return model
        params = dict(self.params)
        if seed is not None and "seed" not in params:
            params["seed"] = int(seed)
        return rsf_fit(X, times, events, RsfHyperparams(**params), feature_names)


def fit_survival_model(spec: ModelSpec, features, times, events, feature_names=None, seed=None):
    return spec.fit(features, times, events, feature_names, seed)
