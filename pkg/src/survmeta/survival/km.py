"""Product-limit estimators for the event and censoring distributions."""
from __future__ import annotations

import numpy as np

from ..domain import SurvivalCurve


def _as_samples(samples, events=None):
    if events is None:
        arr = np.asarray(samples, dtype=float)
        if arr.size == 0:
            raise ValueError("empty sample")
        arr = arr.reshape(-1, 2)
        times, events = arr[:, 0], arr[:, 1]
    else:
        times = np.asarray(samples, dtype=float)
        events = np.asarray(events)
        if times.size == 0:
            raise ValueError("empty sample")
        if times.shape != events.shape:
            raise ValueError("times and events differ in length")
    if not np.all(np.isfinite(times)):
        raise ValueError("non-finite times")
    if times.min() < 0:
        raise ValueError("times must be non-negative")
    return times, events.astype(bool)


def product_limit(times, events, weights=None):
    """Kaplan-Meier steps.

    Returns the distinct event times and the survival value from each of
    them onwards. ``weights`` are case weights (bootstrap multiplicities).
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    w = np.ones(len(times)) if weights is None else np.asarray(weights, dtype=float)
    uniq, inv = np.unique(times, return_inverse=True)
    d = np.bincount(inv, weights=w * events, minlength=len(uniq))
    removed = np.bincount(inv, weights=w, minlength=len(uniq))
    at_risk = np.cumsum(removed[::-1])[::-1]
    has_event = d > 0
    if not has_event.any():
        return np.empty(0), np.empty(0)
    surv = np.cumprod(1.0 - d[has_event] / at_risk[has_event])
    return uniq[has_event], surv


def _curve(event_times, surv):
    if len(event_times) and event_times[0] == 0:
        raise ValueError("events at time 0 are not supported")
    grid = np.concatenate([[0.0], event_times])
    values = np.concatenate([[1.0], np.clip(surv, 0.0, 1.0)])
    return SurvivalCurve(grid, values)


def km_fit(samples, events=None) -> SurvivalCurve:
    """Kaplan-Meier curve of ``(time, event)`` pairs.

    Accepts either a sequence of pairs or two parallel arrays. The curve
    steps at distinct event times and stays flat after the last one.

    >>> km_fit([(1, 1), (2, 0), (3, 1)]).values
    array([1.        , 0.66666667, 0.        ])
    """
    times, ev = _as_samples(samples, events)
    return _curve(*product_limit(times, ev))


def censoring_km_fit(samples, events=None) -> SurvivalCurve:
    """Kaplan-Meier curve of the censoring distribution, G(u).

    Same as :func:`km_fit` with the event indicator complemented.
    """
    times, ev = _as_samples(samples, events)
    return _curve(*product_limit(times, ~ev))
