from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        centered = X - self.mean
        # zero-variance training features carry no information: emit zeros
        return np.divide(centered, self.sd, out=np.zeros_like(centered), where=self.sd > 0)


def standardize_fit(X_train) -> Standardizer:
    X = np.asarray(X_train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("standardize_fit needs a non-empty 2-D matrix")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 1e-12 * np.maximum(np.abs(mean), 1.0), sd, 0.0)
    return Standardizer(mean, sd)


def standardize_apply(s: Standardizer, X) -> np.ndarray:
    return s.apply(X)
