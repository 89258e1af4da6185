"""Random survival forest grown with log-rank splits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .km import product_limit


@dataclass(frozen=True)
class RsfHyperparams:
    n_trees: int = 100
    min_samples_split: int = 10
    min_samples_leaf: int = 5
    # None -> ceil(sqrt(p))
    features_per_split: int | None = None
    seed: int = 0
    bootstrap: bool = True
    max_depth: int | None = None

    def __post_init__(self):
        for name in ("n_trees", "min_samples_split", "min_samples_leaf"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be positive")
        if self.min_samples_leaf > self.min_samples_split:
            raise ValueError("min_samples_leaf must not exceed min_samples_split")


def logrank_scores(x, times, events, min_leaf=1):
    """Standardized two-sample log-rank statistic for every threshold of ``x``.

    Left child is ``x <= threshold``. Returns ``(thresholds, scores)`` for
    the admissible splits only (both children hold at least ``min_leaf``
    samples); thresholds are midpoints between consecutive distinct values.
    """
    order = np.argsort(x, kind="stable")
    xs, ts, es = x[order], times[order], events[order]
    n = len(xs)
    ev_times = np.unique(ts[es])
    if len(ev_times) == 0 or n < 2:
        return np.empty(0), np.empty(0)
    at_risk = ts[:, None] >= ev_times[None, :]
    died = (ts[:, None] == ev_times[None, :]) & es[:, None]
    y_left = np.cumsum(at_risk, axis=0)[:-1]
    d_left = np.cumsum(died, axis=0)[:-1]
    y = at_risk.sum(axis=0).astype(float)
    d = died.sum(axis=0).astype(float)

    n_left = np.arange(1, n)
    ok = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
    if not ok.any():
        return np.empty(0), np.empty(0)
    y_left, d_left = y_left[ok], d_left[ok]
    frac = y_left / y
    num = np.sum(d_left - frac * d, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tie_corr = np.where(y > 1, (y - d) / (y - 1), 0.0)
    var = np.sum(frac * (1 - frac) * tie_corr * d, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(var > 0, np.abs(num) / np.sqrt(var), 0.0)
    k = np.flatnonzero(ok)
    thresholds = 0.5 * (xs[k] + xs[k + 1])
    return thresholds, score


class _TreeBuilder:
    def __init__(self, X, times, events, grid, params, rng):
        self.X, self.times, self.events = X, times, events
        self.grid = grid
        self.params = params
        self.rng = rng
        p = X.shape[1]
        m = params.features_per_split or math.ceil(math.sqrt(p))
        self.mtry = min(m, p)
        self.feature, self.threshold, self.left, self.right, self.leaf = [], [], [], [], []
        self.leaf_values = []

    def _new_node(self):
        for lst in (self.feature, self.left, self.right, self.leaf):
            lst.append(-1)
        self.threshold.append(np.nan)
        return len(self.feature) - 1

    def _make_leaf(self, node, idx):
        t, s = product_limit(self.times[idx], self.events[idx])
        k = np.searchsorted(t, self.grid, side="right")
        self.leaf[node] = len(self.leaf_values)
        self.leaf_values.append(np.concatenate([[1.0], s])[k])

    def _best_split(self, idx):
        p = self.params
        X = self.X[idx]
        times, events = self.times[idx], self.events[idx]
        best = (0.0, -1, np.nan)
        for f in self.rng.choice(X.shape[1], size=self.mtry, replace=False):
            thr, score = logrank_scores(X[:, f], times, events, p.min_samples_leaf)
            if len(score) == 0:
                continue
            j = int(np.argmax(score))
            if score[j] > best[0]:
                best = (float(score[j]), int(f), float(thr[j]))
        return best

    def build(self, idx):
        root = self._new_node()
        stack = [(root, idx, 0)]
        p = self.params
        while stack:
            node, idx, depth = stack.pop()
            splittable = (
                len(idx) >= p.min_samples_split
                and len(idx) >= 2 * p.min_samples_leaf
                and self.events[idx].any()
                and (p.max_depth is None or depth < p.max_depth)
            )
            score, f, thr = self._best_split(idx) if splittable else (0.0, -1, np.nan)
            if f < 0:
                self._make_leaf(node, idx)
                continue
            go_left = self.X[idx, f] <= thr
            left, right = self._new_node(), self._new_node()
            self.feature[node], self.threshold[node] = f, thr
            self.left[node], self.right[node] = left, right
            stack.append((right, idx[~go_left], depth + 1))
            stack.append((left, idx[go_left], depth + 1))
        return _Tree(
            np.array(self.feature),
            np.array(self.threshold),
            np.array(self.left),
            np.array(self.right),
            np.array(self.leaf),
            np.vstack(self.leaf_values),
        )


@dataclass(frozen=True, eq=False)
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf: np.ndarray
    leaf_values: np.ndarray

    def apply(self, X):
        node = np.zeros(len(X), dtype=int)
        rows = np.arange(len(X))
        while True:
            inner = self.feature[node] >= 0
            if not inner.any():
                return self.leaf[node]
            f = np.where(inner, self.feature[node], 0)
            go_left = X[rows, f] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(inner, nxt, node)

    def predict(self, X):
        return self.leaf_values[self.apply(X)]


def _grow_tree(X, times, events, grid, params, seed):
    rng = np.random.default_rng(seed)
    n = len(times)
    idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
    return _TreeBuilder(X, times, events, grid, params, rng).build(idx)


def grow_forest(X, times, events, params: RsfHyperparams, n_jobs=1):
    """Grow ``params.n_trees`` trees; returns ``(grid, trees)``.

    Leaves store Kaplan-Meier curves of their (in-bag) samples, evaluated on
    the grid of all distinct training event times.
    """
    X = np.asarray(X, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    if len(times) == 0:
        raise ValueError("empty sample")
    # fewer than min_samples_split rows is allowed: every tree is one leaf
    if not events.any():
        raise ValueError("no events to split on")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    grid = np.concatenate([[0.0], np.unique(times[events])])
    seeds = np.random.SeedSequence(params.seed).spawn(params.n_trees)
    if n_jobs == 1:
        trees = [_grow_tree(X, times, events, grid, params, s) for s in seeds]
    else:
        trees = Parallel(n_jobs=n_jobs)(
            delayed(_grow_tree)(X, times, events, grid, params, s) for s in seeds
        )
    return grid, trees
