"""Regression trees and a bagged random-forest baseline.

Trees are CART-style: at each node the split maximizing weighted variance
reduction is chosen, with candidate thresholds at midpoints between
consecutive distinct sorted values. Growth continues until a node is pure or
unsplittable (no depth cap). Ties between equal-gain splits go to the lowest
feature index, then the lowest threshold; "equal" means within a small
relative tolerance so that float noise cannot flip the choice.

The forest fits each tree on a bootstrap resample (size n, with replacement)
drawn from a per-tree seeded stream, and predicts the mean of its trees.
No per-split feature subsampling: every feature is considered at every node.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._jit import njit
from .errors import DataError
from .seeding import rng_for

# A candidate split wins only if its gain beats the incumbent beyond float
# noise; otherwise the earlier (lower feature, lower threshold) split stays.
GAIN_RTOL = 1e-9
GAIN_ATOL = 1e-12

_LEAF = -1


@njit(cache=True, nogil=True)
def _grow_tree_arrays(X, y, min_samples_split):
    n, n_features = X.shape
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)
    impurity = np.zeros(max_nodes)
    counts = np.zeros(max_nodes, dtype=np.int64)

    idx = np.arange(n)
    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_lo = np.empty(max_nodes, dtype=np.int64)
    stack_hi = np.empty(max_nodes, dtype=np.int64)
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    top = 1
    n_nodes = 1

    xf = np.empty(n)
    buf = np.empty(n, dtype=np.int64)

    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        m = hi - lo

        s = 0.0
        s2 = 0.0
        ymin = np.inf
        ymax = -np.inf
        for k in range(lo, hi):
            yi = y[idx[k]]
            s += yi
            s2 += yi * yi
            if yi < ymin:
                ymin = yi
            if yi > ymax:
                ymax = yi
        sse = s2 - s * s / m
        if sse < 0.0:
            sse = 0.0
        value[node] = s / m
        impurity[node] = sse / m
        counts[node] = m

        if m < min_samples_split or ymin == ymax:
            continue

        best_gain = 0.0
        best_feature = -1
        best_threshold = 0.0
        for f in range(n_features):
            for k in range(m):
                xf[k] = X[idx[lo + k], f]
            order = np.argsort(xf[:m], kind="mergesort")
            sl = 0.0
            sl2 = 0.0
            for k in range(m - 1):
                yi = y[idx[lo + order[k]]]
                sl += yi
                sl2 += yi * yi
                xk = xf[order[k]]
                xk1 = xf[order[k + 1]]
                if xk == xk1:
                    continue
                nl = k + 1
                nr = m - nl
                sr = s - sl
                sr2 = s2 - sl2
                sse_l = sl2 - sl * sl / nl
                sse_r = sr2 - sr * sr / nr
                if sse_l < 0.0:
                    sse_l = 0.0
                if sse_r < 0.0:
                    sse_r = 0.0
                gain = sse - sse_l - sse_r
                if gain > best_gain + GAIN_RTOL * best_gain + GAIN_ATOL:
                    best_gain = gain
                    best_feature = f
                    best_threshold = 0.5 * (xk + xk1)
        if best_feature < 0:
            continue

        # stable partition of idx[lo:hi] around the chosen threshold
        nl = 0
        for k in range(lo, hi):
            if X[idx[k], best_feature] <= best_threshold:
                nl += 1
        a = 0
        b = 0
        for k in range(lo, hi):
            i = idx[k]
            if X[i, best_feature] <= best_threshold:
                buf[a] = i
                a += 1
            else:
                buf[nl + b] = i
                b += 1
        for k in range(m):
            idx[lo + k] = buf[k]

        feature[node] = best_feature
        threshold[node] = best_threshold
        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        left[node] = left_id
        right[node] = right_id
        stack_node[top] = right_id
        stack_lo[top] = lo + nl
        stack_hi[top] = hi
        top += 1
        stack_node[top] = left_id
        stack_lo[top] = lo
        stack_hi[top] = lo + nl
        top += 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        impurity[:n_nodes],
        counts[:n_nodes],
    )


@njit(cache=True, nogil=True)
def _predict_tree_arrays(feature, threshold, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@dataclass
class RegressionTree:
    """Flat node arrays; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    impurity: np.ndarray
    n_node_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return _predict_tree_arrays(self.feature, self.threshold, self.left, self.right, self.value, X)

    def importance_raw(self, n_features: int) -> np.ndarray:
        """Total squared-error decrease attributed to each feature."""
        out = np.zeros(n_features)
        sse = self.impurity * self.n_node_samples
        for node in range(self.n_nodes):
            f = self.feature[node]
            if f >= 0:
                out[f] += sse[node] - sse[self.left[node]] - sse[self.right[node]]
        return out


def fit_tree(X: np.ndarray, y: np.ndarray, min_samples_split: int = 2) -> RegressionTree:
    """Grow one unpruned variance-reduction regression tree."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot fit a tree on zero rows")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y row counts differ")
    arrays = _grow_tree_arrays(X, y, min_samples_split)
    return RegressionTree(*arrays)


@dataclass
class RandomForest:
    trees: list[RegressionTree]
    feature_ids: list[int]
    seed: int
    bootstrap: bool = True

    @property
    def n_estimators(self) -> int:
        return len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return np.stack([tree.predict(X) for tree in self.trees])


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_estimators: int = 1000,
    seed: int = 0,
    bootstrap: bool = True,
    feature_ids: Sequence[int] | None = None,
    threads: int = 1,
) -> RandomForest:
    """Fit ``n_estimators`` trees on per-tree seeded bootstrap resamples."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot fit a forest on zero rows")

    def one(i: int) -> RegressionTree:
        if bootstrap:
            rows = rng_for(seed, f"tree-{i}").integers(0, n, size=n)
            return fit_tree(X[rows], y[rows])
        return fit_tree(X, y)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(one, range(n_estimators)))
    else:
        trees = [one(i) for i in range(n_estimators)]
    ids = list(feature_ids) if feature_ids is not None else list(range(X.shape[1]))
    return RandomForest(trees=trees, feature_ids=ids, seed=seed, bootstrap=bootstrap)


def forest_importances(forest: RandomForest) -> tuple[np.ndarray, bool]:
    """Mean of per-tree normalized impurity decreases, re-normalized to sum 1.

    Returns ``(importances, degenerate)``; degenerate means no tree ever
    split (constant target) and the vector is all zeros.
    """
    n_features = len(forest.feature_ids)
    acc = np.zeros(n_features)
    contributing = 0
    for tree in forest.trees:
        raw = tree.importance_raw(n_features)
        total = raw.sum()
        if total > 0.0:
            acc += raw / total
            contributing += 1
    if contributing == 0:
        return np.zeros(n_features), True
    out = acc / contributing
    return out / out.sum(), False


# ---------------------------------------------------------------------------
# Serialization (versioned textual node-array format)

_FORMAT = "hddrul-forest 1"


def save_forest(forest: RandomForest, path: str | Path) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(_FORMAT + "\n")
        fh.write(f"n_estimators {forest.n_estimators}\n")
        fh.write(f"seed {forest.seed}\n")
        fh.write(f"bootstrap {int(forest.bootstrap)}\n")
        fh.write("feature_ids " + " ".join(str(fid) for fid in forest.feature_ids) + "\n")
        for t, tree in enumerate(forest.trees):
            fh.write(f"tree {t} nodes {tree.n_nodes}\n")
            for node in range(tree.n_nodes):
                fh.write(
                    "%d %.17g %d %d %.17g %.17g %d\n"
                    % (
                        tree.feature[node],
                        tree.threshold[node],
                        tree.left[node],
                        tree.right[node],
                        tree.value[node],
                        tree.impurity[node],
                        tree.n_node_samples[node],
                    )
                )
        fh.write("end\n")


def load_forest(path: str | Path) -> RandomForest:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _FORMAT:
        raise DataError(f"{path}: not a {_FORMAT!r} file")
    pos = 1
    meta = {}
    while pos < len(lines) and not lines[pos].startswith("tree "):
        key, _, rest = lines[pos].partition(" ")
        meta[key] = rest
        pos += 1
    n_estimators = int(meta["n_estimators"])
    feature_ids = [int(tok) for tok in meta["feature_ids"].split()]
    trees = []
    for _ in range(n_estimators):
        head = lines[pos].split()
        n_nodes = int(head[3])
        pos += 1
        rows = [lines[pos + k].split() for k in range(n_nodes)]
        pos += n_nodes
        trees.append(
            RegressionTree(
                feature=np.array([int(r[0]) for r in rows], dtype=np.int64),
                threshold=np.array([float(r[1]) for r in rows]),
                left=np.array([int(r[2]) for r in rows], dtype=np.int64),
                right=np.array([int(r[3]) for r in rows], dtype=np.int64),
                value=np.array([float(r[4]) for r in rows]),
                impurity=np.array([float(r[5]) for r in rows]),
                n_node_samples=np.array([int(r[6]) for r in rows], dtype=np.int64),
            )
        )
    return RandomForest(
        trees=trees,
        feature_ids=feature_ids,
        seed=int(meta["seed"]),
        bootstrap=bool(int(meta["bootstrap"])),
    )
