"""Per-feature group comparison: means, Cohen's d, Welch p-value and power."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from ..dataio import parse_feature_column
from ..errors import DataError, DegenerateVariance
from .stats import cohens_d, power_two_sample, welch_t

EFFECT_COLUMNS = ("rank", "k", "band", "state", "feature", "mean_a", "mean_b", "d", "p", "power")


def effect_table(columns, values, labels, alpha: float = 0.05, top: int | None = None) -> list[dict]:
    """Rank features by |d| between group A (label 0) and group B (label 1).

    ``values`` holds one row per subject. ``d`` is signed as B minus A.
    Features with zero variance in both groups are left out. Ties in |d|
    keep column order.
    """
    X = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[1] != len(columns) or y.shape != (X.shape[0],):
        raise DataError("effect_table needs values (n_subjects, n_columns) and one label per row")
    a, b = X[y == 0], X[y == 1]
    if len(a) < 2 or len(b) < 2:
        raise DataError("each group needs at least two subjects")
    rows = []
    for j, name in enumerate(columns):
        try:
            d = cohens_d(b[:, j], a[:, j])
            _, _, p = welch_t(b[:, j], a[:, j])
        except DegenerateVariance:
            continue
        band, k, state, feature = parse_feature_column(name)
        rows.append({"k": k, "band": band, "state": state, "feature": feature,
                     "mean_a": float(a[:, j].mean()), "mean_b": float(b[:, j].mean()),
                     "d": d, "p": p, "power": power_two_sample(abs(d), len(a), len(b), alpha)})
    order = sorted(range(len(rows)), key=lambda i: -abs(rows[i]["d"]))
    ranked = []
    for rank, i in enumerate(order[:top] if top else order, start=1):
        ranked.append({"rank": rank, **rows[i]})
    return ranked


def effect_table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EFFECT_COLUMNS)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], (int, str)) else repr(r[c]) for c in EFFECT_COLUMNS])
    return buf.getvalue()


def write_effect_table(rows: list[dict], path: str | Path) -> None:
    Path(path).write_text(effect_table_csv(rows))
