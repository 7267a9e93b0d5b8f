"""Subject-level stratified folds, cross-validation and the evaluation report."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from ..learn import Dataset, decision_scores, predict, train
from .metrics import ConfusionMatrix, metrics, roc_auc, roc_curve


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple  # tuple of tuples of subject ids
    labels: dict  # subject id -> 0/1
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def class_counts(self) -> list[tuple[int, int]]:
        """(healthy, tinnitus) subject counts per fold."""
        return [(sum(self.labels[s] == 0 for s in f), sum(self.labels[s] == 1 for s in f))
                for f in self.folds]

    def fold_of(self) -> dict:
        return {s: i for i, f in enumerate(self.folds) for s in f}


def make_subject_folds(subjects, k: int = 5, seed=0) -> FoldPlan:
    """Shuffle each class separately and deal its subjects round-robin.

    ``subjects`` is a sequence of (subject_id, label) with label 0/1 or the
    strings healthy/tinnitus. The second class starts dealing where the first
    stopped so fold sizes stay within one of each other.
    """
    if k < 2:
        raise ConfigError("need at least 2 folds")
    labels = {}
    for sid, lab in subjects:
        code = {"healthy": 0, "tinnitus": 1}.get(lab, lab)
        if code not in (0, 1):
            raise ConfigError(f"subject {sid}: label must be binary, got {lab!r}")
        if sid in labels and labels[sid] != code:
            raise ConfigError(f"subject {sid} has conflicting labels")
        labels[str(sid)] = int(code)
    rng = np.random.default_rng(seed)
    folds: list[list[str]] = [[] for _ in range(k)]
    offset = 0
    for cls in (0, 1):
        members = sorted(s for s, c in labels.items() if c == cls)
        if len(members) < k:
            raise ConfigError(f"class {cls} has {len(members)} subjects, fewer than k={k}")
        for i, idx in enumerate(rng.permutation(len(members))):
            folds[(offset + i) % k].append(members[idx])
        offset = (offset + len(members)) % k
    seed_val = int(seed) if isinstance(seed, (int, np.integer)) else 0
    return FoldPlan(tuple(tuple(sorted(f)) for f in folds), labels, seed_val)


@dataclass
class FoldResult:
    index: int
    test_subjects: list
    confusion: ConfusionMatrix
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None
    roc: list
    subject: dict = field(default_factory=dict)
    scores: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"fold": self.index, "test_subjects": list(self.test_subjects),
                "confusion": self.confusion.as_dict(), "accuracy": self.accuracy,
                "precision": self.precision, "recall": self.recall, "f1": self.f1,
                "auc": self.auc, "roc": [list(p) for p in self.roc], "subject": self.subject}


@dataclass
class EvalReport:
    learner: str
    folds: list
    seed: int = 0
    delong: list = field(default_factory=list)
    effects: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    METRICS = ("accuracy", "precision", "recall", "f1", "auc")

    @staticmethod
    def _mean_sd(vals) -> dict:
        vals = [v for v in vals if v is not None]
        return {"mean": float(np.mean(vals)) if vals else None,
                "sd": float(np.std(vals)) if vals else None}

    def summary(self) -> dict:
        """Cross-fold mean and population SD of the window-level metrics, and
        of the subject-level metrics under ``subject``."""
        out = {name: self._mean_sd([getattr(f, name) for f in self.folds])
               for name in self.METRICS}
        out["subject"] = {name: self._mean_sd([f.subject.get(name) for f in self.folds])
                          for name in self.METRICS}
        return out

    def as_dict(self) -> dict:
        return {"learner": self.learner, "seed": self.seed, "n_folds": len(self.folds),
                "folds": [f.as_dict() for f in self.folds], "summary": self.summary(),
                "delong": self.delong, "effects": self.effects, "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["learner", "fold", "metric", "value"])
        for f in self.folds:
            for name in self.METRICS:
                val = getattr(f, name)
                w.writerow([self.learner, f.index, name, "" if val is None else repr(val)])
            for name in self.METRICS:
                val = f.subject.get(name)
                w.writerow([self.learner, f.index, f"subject_{name}",
                            "" if val is None else repr(val)])
        return buf.getvalue()

    def write(self, out_dir: str | Path, stem: str | None = None) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = stem or f"report_{self.learner}"
        jp, cp = out_dir / f"{stem}.json", out_dir / f"{stem}.csv"
        jp.write_text(self.to_json())
        cp.write_text(self.to_csv())
        return jp, cp


def report_from_dict(d: dict) -> EvalReport:
    folds = []
    for f in d["folds"]:
        folds.append(FoldResult(f["fold"], f["test_subjects"], ConfusionMatrix(**f["confusion"]),
                                f["accuracy"], f["precision"], f["recall"], f["f1"], f["auc"],
                                [tuple(p) for p in f["roc"]], f.get("subject", {})))
    return EvalReport(d["learner"], folds, d.get("seed", 0), d.get("delong", []),
                      d.get("effects", []), d.get("meta", {}))


def _fold_seed(seed, fold: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(fold,)).generate_state(1, np.uint64)[0])


def _run_fold(args):
    ds, train_mask, test_mask, learner, params, fold_seed = args
    model = train(learner, ds.subset(train_mask), seed=fold_seed, **params)
    X_test, y_test = ds.X[test_mask], ds.y[test_mask]
    y_pred = predict(model, X_test)
    scores = decision_scores(model, X_test)
    return y_test, y_pred, scores


def _subject_block(sids, scores, y) -> dict:
    """Metrics with one vote per subject: the mean window score, cut at 0.5."""
    order = list(dict.fromkeys(sids))
    mean_score = np.array([scores[sids == s].mean() for s in order])
    y_subj = np.array([y[sids == s][0] for s in order])
    cm = ConfusionMatrix.from_labels(y_subj, mean_score >= 0.5)
    m = metrics(cm)
    both = np.unique(y_subj).size == 2
    return {"n_subjects": len(order), "confusion": cm.as_dict(), "accuracy": m.accuracy,
            "precision": m.precision, "recall": m.recall, "f1": m.f1,
            "auc": roc_auc(mean_score, y_subj) if both else None,
            "scores": {s: float(v) for s, v in zip(order, mean_score)},
            "labels": {s: int(v) for s, v in zip(order, y_subj)}}


def subject_scores(report: EvalReport) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Out-of-fold subject scores and labels, subjects sorted by id."""
    scores, labels = {}, {}
    for f in report.folds:
        scores.update(f.subject.get("scores", {}))
        labels.update(f.subject.get("labels", {}))
    ids = sorted(scores)
    return ids, np.array([scores[s] for s in ids]), np.array([labels[s] for s in ids])


def cross_validate(ds: Dataset, plan: FoldPlan, learner: str = "rf", params: dict | None = None,
                   jobs: int = 1, keep_scores: bool = True) -> EvalReport:
    """Train on all folds but one, test on the held-out subjects, for each fold.

    The standardizer and model of each fold see training subjects only.
    Metrics are reported per window row and, under ``subject``, per subject
    with the subject's mean window score as its score.
    """
    params = dict(params or {})
    fold_of = plan.fold_of()
    missing = sorted(set(ds.subject_ids) - set(fold_of))
    if missing:
        raise DataError(f"subjects missing from the fold plan: {missing[:5]}")
    row_fold = np.array([fold_of[s] for s in ds.subject_ids])
    tasks = []
    for i in range(plan.k):
        test_mask = row_fold == i
        train_mask = ~test_mask
        train_subj = set(ds.subject_ids[train_mask])
        test_subj = set(ds.subject_ids[test_mask])
        if train_subj & test_subj:
            raise AssertionError(f"fold {i}: subjects in both train and test")
        if not test_mask.any():
            raise DataError(f"fold {i} has no rows")
        tasks.append((ds, train_mask, test_mask, learner, params, _fold_seed(plan.seed, i)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_run_fold, tasks))
    else:
        outputs = [_run_fold(t) for t in tasks]

    folds = []
    for i, (y_test, y_pred, scores) in enumerate(outputs):
        test_sids = ds.subject_ids[row_fold == i]
        cm = ConfusionMatrix.from_labels(y_test, y_pred)
        m = metrics(cm)
        both = np.unique(y_test).size == 2
        auc = roc_auc(scores, y_test) if both else None
        roc = roc_curve(scores, y_test) if both else []
        folds.append(FoldResult(i, list(plan.folds[i]), cm, m.accuracy, m.precision, m.recall,
                                m.f1, auc, roc, _subject_block(test_sids, scores, y_test),
                                scores.tolist() if keep_scores else [],
                                y_test.tolist() if keep_scores else []))
    return EvalReport(learner, folds, plan.seed)


def pooled_scores(report: EvalReport) -> tuple[np.ndarray, np.ndarray]:
    """Out-of-fold scores and labels concatenated in fold order."""
    scores = np.concatenate([np.asarray(f.scores, dtype=float) for f in report.folds])
    labels = np.concatenate([np.asarray(f.labels, dtype=int) for f in report.folds])
    return scores, labels
