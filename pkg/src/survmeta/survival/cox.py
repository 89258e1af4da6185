"""Cox proportional hazards: Breslow partial likelihood and a Newton solver."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

MAX_ITER = 100
GRAD_TOL = 1e-7
MAX_HALVINGS = 40
# |beta_j| * sd_j beyond this means the likelihood is still climbing towards
# an infinite coefficient (monotone likelihood).
SEPARATION_BOUND = 25.0
# effects beyond this trigger an explicit monotone-likelihood check at the end
LARGE_EFFECT = 5.0


class CoxSeparationError(ValueError):
    """The unpenalized partial likelihood has no finite maximizer."""


class CoxConvergenceWarning(RuntimeWarning):
    pass


@dataclass
class CoxFitReport:
    coefficients: np.ndarray
    log_likelihood: float
    n_iter: int
    converged: bool
    penalizer: float
    grad_max_norm: float
    history: list = field(default_factory=list)
    fixed_columns: tuple = ()


def _check_inputs(X, times, events):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    if not (X.shape[0] == len(times) == len(events)):
        raise ValueError("features, times and events must have the same number of rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    if not np.all(np.isfinite(times)):
        raise ValueError("non-finite times")
    return X, times, events


class _RiskSets:
    """Sorted layout reused across Newton iterations."""

    def __init__(self, X, times, events):
        order = np.argsort(times, kind="stable")
        self.X = X[order]
        self.events = events[order]
        t = times[order]
        ev_times, d = np.unique(t[self.events], return_counts=True)
        self.event_times = ev_times
        self.d = d.astype(float)
        # risk set of event time t_j is the sorted tail starting here
        self.start = np.searchsorted(t, ev_times, side="left")
        self.x_events = self.X[self.events].sum(axis=0)

    def evaluate(self, beta, penalizer, hessian=False):
        X = self.X
        eta = X @ beta
        c = eta.max() if len(eta) else 0.0
        w = np.exp(eta - c)
        s0 = np.cumsum(w[::-1])[::-1][self.start]
        wx = w[:, None] * X
        s1 = np.cumsum(wx[::-1], axis=0)[::-1][self.start]
        ll = eta[self.events].sum() - np.sum(self.d * (c + np.log(s0)))
        ll -= 0.5 * penalizer * beta @ beta
        mean_x = s1 / s0[:, None]
        grad = self.x_events - (self.d[:, None] * mean_x).sum(axis=0) - penalizer * beta
        if not hessian:
            return ll, grad
        wxx = wx[:, :, None] * X[:, None, :]
        s2 = np.cumsum(wxx[::-1], axis=0)[::-1][self.start]
        info = np.einsum("j,jab->ab", self.d, s2 / s0[:, None, None])
        info -= np.einsum("j,ja,jb->ab", self.d, mean_x, mean_x)
        hess = -info - penalizer * np.eye(len(beta))
        return ll, grad, hess


def cox_partial_loglik_and_gradient(features, times, events, beta, penalizer=0.0):
    """Breslow partial log-likelihood minus ``penalizer/2 * |beta|^2`` and its gradient."""
    if penalizer < 0:
        raise ValueError("penalizer must be >= 0")
    X, times, events = _check_inputs(features, times, events)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if not events.any():
        ll = -0.5 * penalizer * beta @ beta
        return float(ll), -penalizer * beta
    ll, grad = _RiskSets(X, times, events).evaluate(beta, penalizer)
    return float(ll), grad


def breslow_cumulative_hazard(features, times, events, beta):
    """Breslow baseline cumulative hazard at the distinct event times."""
    X, times, events = _check_inputs(features, times, events)
    rs = _RiskSets(X, times, events)
    w = np.exp(rs.X @ beta)
    s0 = np.cumsum(w[::-1])[::-1][rs.start]
    return rs.event_times, np.cumsum(rs.d / s0)


def newton_cox(features, times, events, penalizer=0.0, constant_columns="raise",
               max_iter=MAX_ITER, tol=GRAD_TOL) -> CoxFitReport:
    """Maximize the penalized Breslow partial likelihood.

    Newton-Raphson from beta = 0 with step halving, so the objective never
    decreases between iterations. Constant columns have no information;
    with ``penalizer == 0`` they raise unless ``constant_columns="zero"``,
    which pins their coefficient at 0.
    """
    if penalizer < 0:
        raise ValueError("penalizer must be >= 0")
    X, times, events = _check_inputs(features, times, events)
    if not events.any():
        raise ValueError("Cox model needs at least one event")
    p = X.shape[1]
    sd = X.std(axis=0)
    # identical values can leave a rounding-level std instead of exactly 0
    sd[sd <= 1e-12 * np.maximum(1.0, np.abs(X.mean(axis=0)))] = 0.0
    const = np.flatnonzero(sd == 0)
    if len(const) and penalizer == 0 and constant_columns == "raise":
        raise ValueError(
            f"constant feature columns {const.tolist()} make the unpenalized fit degenerate; "
            "use penalizer > 0"
        )
    free = np.flatnonzero(sd > 0) if constant_columns == "zero" or penalizer == 0 else np.arange(p)
    rs = _RiskSets(X[:, free], times, events)

    b = np.zeros(len(free))
    ll, grad, hess = rs.evaluate(b, penalizer, hessian=True)
    history = [ll]
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        if len(b) == 0 or np.max(np.abs(grad)) < tol:
            converged = True
            n_iter -= 1
            break
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            if penalizer == 0:
                raise CoxSeparationError(
                    "singular information matrix; the data may be separable. Use penalizer > 0"
                ) from None
            raise
        scale = 1.0
        # near the optimum the objective changes below its rounding error
        slack = 64 * np.finfo(float).eps * max(1.0, abs(ll))
        for _ in range(MAX_HALVINGS):
            cand = b + scale * step
            ll_new = rs.evaluate(cand, penalizer)[0]
            if np.isfinite(ll_new) and ll_new >= ll - slack:
                break
            scale *= 0.5
        else:
            # no ascent possible within float precision
            break
        b = cand
        ll, grad, hess = rs.evaluate(b, penalizer, hessian=True)
        history.append(ll)
        if penalizer == 0 and np.any(np.abs(b) * sd[free] > SEPARATION_BOUND):
            raise CoxSeparationError(
                "coefficients diverge (monotone likelihood, e.g. perfect separation); "
                "refit with penalizer > 0"
            )
    else:
        converged = len(b) == 0 or np.max(np.abs(grad)) < tol
    if penalizer == 0 and np.any(np.abs(b) * sd[free] > LARGE_EFFECT):
        # a finite maximizer this far out is rare; under monotone likelihood
        # doubling the coefficients still does not lower the objective
        ll_far = rs.evaluate(2 * b, penalizer)[0]
        if not np.isfinite(ll_far) or ll_far >= ll - 64 * np.finfo(float).eps * max(1.0, abs(ll)):
            raise CoxSeparationError(
                "coefficients diverge (monotone likelihood, e.g. perfect separation); "
                "refit with penalizer > 0"
            )
    gnorm = float(np.max(np.abs(grad))) if len(b) else 0.0
    converged = converged and gnorm < tol
    beta = np.zeros(p)
    beta[free] = b
    if not converged:
        warnings.warn(
            f"Cox Newton solver stopped after {n_iter} iterations with gradient max-norm "
            f"{gnorm:.3g} (tolerance {tol:g})",
            CoxConvergenceWarning,
            stacklevel=2,
        )
    return CoxFitReport(
        coefficients=beta,
        log_likelihood=float(ll),
        n_iter=n_iter,
        converged=converged,
        penalizer=float(penalizer),
        grad_max_norm=gnorm,
        history=history,
        fixed_columns=tuple(int(j) for j in np.setdiff1d(np.arange(p), free)),
    )
