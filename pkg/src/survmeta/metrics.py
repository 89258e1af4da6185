"""Discrimination and calibration metrics for censored predictions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .domain import SurvivalCurve, SurvivalCurves
from .survival import censoring_km_fit


class DegenerateEvaluationError(ValueError):
    pass


def _batch(curves) -> SurvivalCurves:
    if isinstance(curves, SurvivalCurves):
        return curves
    return SurvivalCurves.from_curves(list(curves))


def _columns_at(curves: SurvivalCurves, t):
    k = np.searchsorted(curves.grid, np.asarray(t, dtype=float), side="right") - 1
    return curves.values[:, np.clip(k, 0, None)]


def _outcomes(curves, times, events):
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    if len(curves) != len(times) or len(times) != len(events):
        raise ValueError("curves, times and events differ in length")
    return times, events


def concordance_td(curves, times, events) -> float:
    """Antolini's time-dependent concordance.

    Pair (i, j) is comparable when i has an event and T_i < T_j; it is
    concordant when S_i(T_i) < S_j(T_i). Ties in predicted survival score 1/2.
    """
    curves = _batch(curves)
    times, events = _outcomes(curves, times, events)
    cases = np.flatnonzero(events)
    if len(cases) == 0:
        raise DegenerateEvaluationError("degenerate evaluation set: no comparable pairs")
    S = _columns_at(curves, times[cases])  # (n, n_cases): S_j(T_i)
    s_own = S[cases, np.arange(len(cases))]
    comparable = times[:, None] > times[cases][None, :]
    n_pairs = int(comparable.sum())
    if n_pairs == 0:
        raise DegenerateEvaluationError("degenerate evaluation set: no comparable pairs")
    conc = int((comparable & (s_own[None, :] < S)).sum())
    ties = int((comparable & (s_own[None, :] == S)).sum())
    return (2 * conc + ties) / (2 * n_pairs)


def evaluation_grid(times, events, censor_curve: SurvivalCurve | None = None):
    """Distinct event times, cut where the censoring curve reaches zero."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    G = censor_curve or censoring_km_fit(times, events)
    grid = np.unique(times[events])
    return grid[G(grid) > 0]


def _ipcw(times, events, t, G):
    """Brier/AUC weights at time t: 1/G(T_i-) for cases, 1/G(t) for the at-risk."""
    case = (times <= t) & events
    ctrl = times > t
    g_case = G.left_limit(times[case])
    g_t = float(G(t))
    if np.any(g_case <= 0) or (ctrl.any() and g_t <= 0):
        raise DegenerateEvaluationError(
            f"censoring support exhausted at t={t:g}; truncate the evaluation grid"
        )
    w = np.zeros(len(times))
    w[case] = 1.0 / g_case
    if ctrl.any():
        w[ctrl] = 1.0 / g_t
    return case, ctrl, w


def brier_curve(curves, times, events, grid, censor_curve: SurvivalCurve | None = None):
    """IPCW Brier score at each grid time.

    Subjects censored at or before t get weight 0, events at or before t
    weight 1/G(T_i-), subjects still at risk weight 1/G(t).
    """
    curves = _batch(curves)
    times, events = _outcomes(curves, times, events)
    G = censor_curve or censoring_km_fit(times, events)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    out = np.empty(len(grid))
    for m, t in enumerate(grid):
        case, ctrl, w = _ipcw(times, events, t, G)
        s = curves.at(t)
        y = ctrl.astype(float)
        out[m] = np.mean(w * (y - s) ** 2)
    return out


def integrated_brier(bs_series, grid) -> float:
    """Trapezoidal integral of BS(t), divided by the grid span."""
    bs = np.asarray(bs_series, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 2:
        raise ValueError("integrated Brier score needs at least two grid points")
    if bs.shape != grid.shape:
        raise ValueError("bs_series and grid differ in length")
    return float(np.trapezoid(bs, grid) / (grid[-1] - grid[0]))


def auc_td(curves, times, events, grid, censor_curve: SurvivalCurve | None = None):
    """Cumulative/dynamic AUC with inverse-probability-of-censoring weights.

    At each t, cases are events with T <= t (weighted by 1/G(T_i-)) and
    controls are subjects with T > t. The risk score is 1 - S(t). Grid
    points without a case or a control are skipped. Returns
    ``(times_used, auc_values, mean_auc)``.
    """
    curves = _batch(curves)
    times, events = _outcomes(curves, times, events)
    G = censor_curve or censoring_km_fit(times, events)
    used, vals = [], []
    for t in np.atleast_1d(np.asarray(grid, dtype=float)):
        case, ctrl, w = _ipcw(times, events, t, G)
        if not case.any() or not ctrl.any():
            continue
        risk = 1.0 - curves.at(t)
        r_ctrl = np.sort(risk[ctrl])
        lo = np.searchsorted(r_ctrl, risk[case], side="left")
        hi = np.searchsorted(r_ctrl, risk[case], side="right")
        score = lo + 0.5 * (hi - lo)
        wc = w[case]
        used.append(t)
        # correctly rounded sums keep the result independent of summation order
        vals.append(math.fsum(wc * score) / (math.fsum(wc) * len(r_ctrl)))
    if not vals:
        raise DegenerateEvaluationError("no grid time has both a case and a control")
    vals = np.array(vals)
    return np.array(used), vals, float(vals.mean())


def roc_auc_binary(scores, labels):
    """Mann-Whitney AUC and ROC points for a binary score.

    Returns ``(auc, fpr, tpr, thresholds)``; the ROC has one point per
    distinct score (descending threshold, ``score >= threshold`` flagged
    positive) plus the origin.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary")
    n1 = int(labels.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("both classes must be present")
    ranks = rankdata(scores)
    auc = (ranks[labels == 1].sum() - n1 * (n1 + 1) / 2) / (n1 * n0)
    thresholds = np.unique(scores)[::-1]
    order = np.argsort(-scores, kind="stable")
    s_sorted, y_sorted = scores[order], labels[order]
    last = np.searchsorted(-s_sorted, -thresholds, side="right")
    tp = np.cumsum(y_sorted)[last - 1]
    fp = last - tp
    fpr = np.concatenate([[0.0], fp / n0])
    tpr = np.concatenate([[0.0], tp / n1])
    return float(auc), fpr, tpr, np.concatenate([[np.inf], thresholds])


@dataclass
class MetricReport:
    c_td: float
    ibs: float
    auc_td_mean: float
    auc_times: np.ndarray
    auc_values: np.ndarray
    grid: np.ndarray


def evaluate_survival(curves, times, events, grid=None) -> MetricReport:
    """C^td, IBS and mean AUC^td on one evaluation set."""
    curves = _batch(curves)
    times, events = _outcomes(curves, times, events)
    G = censoring_km_fit(times, events)
    grid = evaluation_grid(times, events, G) if grid is None else np.asarray(grid, dtype=float)
    bs = brier_curve(curves, times, events, grid, G)
    t_used, auc_vals, auc_mean = auc_td(curves, times, events, grid, G)
    return MetricReport(
        c_td=concordance_td(curves, times, events),
        ibs=integrated_brier(bs, grid),
        auc_td_mean=auc_mean,
        auc_times=t_used,
        auc_values=auc_vals,
        grid=grid,
    )
