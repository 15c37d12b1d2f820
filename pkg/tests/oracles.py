"""Independent reference implementations used to cross-check the library.

Everything here is deliberately written with different algorithms than the
package: exhaustive enumeration instead of incremental scans, arbitrary
precision instead of float accumulation, sorted compensated summation instead
of vectorized means.
"""
from __future__ import annotations

import math

import numpy as np
from mpmath import mp, mpf

# Same split-comparison semantics as the library: a candidate must beat the
# incumbent's gain beyond float noise, otherwise the earlier (lower feature,
# lower threshold) candidate stands.
GAIN_RTOL = 1e-9
GAIN_ATOL = 1e-12


def pearson_mp(x, y) -> float:
    """Product-moment correlation evaluated at 60 significant digits."""
    with mp.workdps(60):
        xs = [mpf(float(v)) for v in x]
        ys = [mpf(float(v)) for v in y]
        n = len(xs)
        mx = sum(xs) / n
        my = sum(ys) / n
        sxy = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
        sxx = sum((a - mx) ** 2 for a in xs)
        syy = sum((b - my) ** 2 for b in ys)
        return float(sxy / mp.sqrt(sxx * syy))


def mae_sorted_fsum(predictions, actuals) -> float:
    """MAE via sorted compensated summation."""
    diffs = sorted(abs(float(p) - float(a)) for p, a in zip(predictions, actuals))
    return math.fsum(diffs) / len(diffs)


class _Leaf:
    def __init__(self, value):
        self.value = value

    def predict(self, row):
        return self.value


class _Node:
    def __init__(self, feature, threshold, left, right):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right

    def predict(self, row):
        child = self.left if row[self.feature] <= self.threshold else self.right
        return child.predict(row)


def _sse(ys):
    mean = sum(ys) / len(ys)
    return sum((v - mean) ** 2 for v in ys)


def brute_force_tree(X, y, min_samples_split: int = 2):
    """Exhaustive-split recursive regression tree with the documented tie rule."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)

    def fit(rows):
        ys = [y[i] for i in rows]
        if len(rows) < min_samples_split or min(ys) == max(ys):
            return _Leaf(sum(ys) / len(ys))
        parent = _sse(ys)
        best_gain = 0.0
        best = None
        for f in range(X.shape[1]):
            values = sorted(set(X[i, f] for i in rows))
            for a, b in zip(values, values[1:]):
                thr = 0.5 * (a + b)
                left = [i for i in rows if X[i, f] <= thr]
                right = [i for i in rows if X[i, f] > thr]
                gain = parent - _sse([y[i] for i in left]) - _sse([y[i] for i in right])
                if gain > best_gain + GAIN_RTOL * best_gain + GAIN_ATOL:
                    best_gain = gain
                    best = (f, thr, left, right)
        if best is None:
            return _Leaf(sum(ys) / len(ys))
        f, thr, left, right = best
        return _Node(f, thr, fit(left), fit(right))

    return fit(list(range(X.shape[0])))


def brute_force_predictions(X, y, queries) -> np.ndarray:
    tree = brute_force_tree(X, y)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    return np.array([tree.predict(row) for row in queries])
