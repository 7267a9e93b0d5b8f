"""CART classification trees grown on Gini impurity, stored as flat arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1
_TIE_EPS = 1e-12


def gini(counts) -> float:
    """Gini index 1 - sum p_i^2 of a vector of class counts."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p ** 2))


@dataclass(frozen=True)
class Tree:
    """Binary tree: a sample goes left when ``x[feature] <= threshold``.

    ``value`` holds the fraction of class-1 training samples at each node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            n = node[active]
            go_left = X[active, self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)]


def best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray):
    """Lowest weighted Gini over ``features``.

    Returns (feature, threshold, impurity) or None when every candidate feature
    is constant on these rows. Exact ties prefer the lowest feature index, then
    the lowest threshold.
    """
    n = y.size
    sub = X[:, features]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    ys = y[order]
    pos_left = np.cumsum(ys, axis=0)[:-1].astype(np.float64)
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    p_l = pos_left / n_left
    p_r = (ys.sum(axis=0) - pos_left) / n_right
    impurity = (n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)) / n
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    impurity = np.where(valid, impurity, np.inf)
    best = impurity.min()
    rows, cols = np.nonzero(impurity <= best + _TIE_EPS)
    cand = sorted(zip(features[cols].tolist(), xs[rows, cols].tolist()))
    feat, thr = cand[0]
    return int(feat), float(thr), float(best)


def grow_tree(X, y, min_samples_split: int = 2, max_depth: int | None = None,
              max_features: int | None = None, rng: np.random.Generator | None = None) -> Tree:
    """Greedy depth-first growth; nodes split while impure and splittable.

    With ``max_features`` set, each node draws that many candidate features
    without replacement and falls back to the rest only when all drawn
    candidates are constant.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_features = X.shape[1]
    all_features = np.arange(n_features)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[idx].mean()) if idx.size else 0.0)
        return len(feature) - 1

    root = new_node(np.arange(y.size))
    stack = [(root, np.arange(y.size), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        pos = ys.sum()
        if idx.size < min_samples_split or pos == 0 or pos == idx.size:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        Xn = X[idx]
        split = None
        if max_features is not None and max_features < n_features:
            perm = rng.permutation(n_features)
            split = best_split(Xn, ys, np.sort(perm[:max_features]))
            if split is None:
                split = best_split(Xn, ys, np.sort(perm[max_features:]))
        else:
            split = best_split(Xn, ys, all_features)
        if split is None:
            continue
        f, thr, _ = split
        mask = Xn[:, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return Tree(np.array(feature, dtype=np.int64), np.array(threshold),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value), n_features)
