"""Small synthetic datasets shared by several test modules."""
from fractions import Fraction

import numpy as np

from survmeta.domain import SurvivalCurves

# The three hand-worked product-limit fixtures: (samples, grid, exact values)
KM_FIXTURES = [
    ([(1, 1), (2, 0), (3, 1)], [0, 1, 3], [Fraction(1), Fraction(2, 3), Fraction(0)]),
    ([(4, 0), (7, 0)], [0], [Fraction(1)]),
    ([(2, 1)], [0, 2], [Fraction(1), Fraction(0)]),
]


def ph_data(rng, n, beta, p=1):
    """Discrete-time proportional-hazards sample with independent censoring.

    One binary covariate when ``p == 1``, otherwise ``p`` standard normals.
    """
    X = rng.standard_normal((n, p)) if p > 1 else rng.integers(0, 2, size=(n, 1)).astype(float)
    rate = 0.1 * np.exp(X @ np.atleast_1d(beta))
    t = np.ceil(rng.exponential(size=n) / rate)
    c = np.ceil(rng.exponential(size=n) / 0.03)
    return X, np.minimum(t, c), t <= c


def separable_data(rng, n=200):
    """Group g=1 fails at month 1-2 (by w), group g=0 at month 9-10."""
    g = rng.integers(0, 2, size=n)
    w = rng.random(n)
    noise = rng.standard_normal(n)
    t = np.where(g == 1, np.where(w < 0.5, 1, 2), np.where(w < 0.5, 9, 10)).astype(float)
    X = np.column_stack([g, w, noise]).astype(float)
    return X, t, np.ones(n, bool)


def random_instance(seed, n=None, censor=True, ties=True):
    """Random curves on a shared grid plus outcomes; values drawn from a few levels."""
    r = np.random.default_rng(seed)
    n = n or int(r.integers(4, 51))
    times = r.integers(1, 8 if ties else 1000, size=n).astype(float)
    events = r.random(n) < 0.7 if censor else np.ones(n, bool)
    events[np.argmin(times)] = True
    grid = np.arange(0.0, 10.0)
    levels = np.linspace(0, 1, 5) if ties else r.random(60)
    drops = np.sort(r.choice(levels, size=(n, len(grid) - 1)), axis=1)[:, ::-1]
    values = np.hstack([np.ones((n, 1)), drops])
    return SurvivalCurves(grid, values), times, events
