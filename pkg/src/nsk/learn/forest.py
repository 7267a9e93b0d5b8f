from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tree import Tree, grow_tree


@dataclass(frozen=True)
class Forest:
    trees: tuple

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def votes(self, X) -> np.ndarray:
        """Hard class vote of every tree, shape (n_trees, n_rows)."""
        return np.stack([(t.predict_proba(X) >= 0.5).astype(np.int64) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        # majority vote; an even split goes to class 1
        return (2 * self.votes(X).sum(axis=0) >= self.n_trees).astype(np.int64)

    def predict_proba(self, X) -> np.ndarray:
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)


def max_features_for(d: int, setting="sqrt") -> int:
    if setting in ("sqrt", "auto"):
        return max(1, int(math.floor(math.sqrt(d))))
    if setting is None:
        return d
    return max(1, min(d, int(setting)))


def grow_forest(X, y, n_trees: int = 100, max_features="sqrt", seed=0,
                min_samples_split: int = 2, max_depth: int | None = None) -> Forest:
    """Bootstrap-aggregated Gini trees with per-split feature subsampling.

    Each tree draws from its own child of ``SeedSequence(seed)``, so tree i is
    the same whether trees are grown serially or in parallel.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    m = max_features_for(d, max_features)
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        boot = rng.integers(0, n, size=n)
        trees.append(grow_tree(X[boot], y[boot], min_samples_split, max_depth, m, rng))
    return Forest(tuple(trees))


def forest_from_trees(trees) -> Forest:
    trees = tuple(trees)
    if not trees or not all(isinstance(t, Tree) for t in trees):
        raise ValueError("a forest needs at least one Tree")
    return Forest(trees)
