"""Trained-model wrapper, the four learners behind one interface, and the NSKM
binary container.

NSKM layout (little-endian)::

    b"NSKM" | u32 version | u16 len + kind (ascii) | u32 len + JSON metadata |
    u32 n_blobs | per blob: u16 len + name, u8 len + dtype str, u8 ndim,
    u64 * ndim shape, raw bytes
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError, MalformedInput
from . import mlp as _mlp
from .forest import Forest, grow_forest
from .standardize import Standardizer, standardize_fit
from .svm import Svm, train_svm
from .tree import Tree, grow_tree

NSKM_MAGIC = b"NSKM"
NSKM_VERSION = 1
KINDS = ("dt", "rf", "svm", "mlp")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    subject_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        sid = (np.arange(y.size).astype(str) if self.subject_ids is None
               else np.asarray(self.subject_ids).astype(str))
        if X.ndim != 2 or y.shape != (X.shape[0],) or sid.shape != y.shape:
            raise DataError("Dataset needs X (n, d), y (n,), subject_ids (n,)")
        if not np.all(np.isfinite(X)):
            raise DataError("Dataset features must be finite")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0 or 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "subject_ids", sid)

    @property
    def n(self) -> int:
        return self.y.size

    def subset(self, mask) -> "Dataset":
        return Dataset(self.X[mask], self.y[mask], self.subject_ids[mask])


@dataclass(frozen=True)
class TrainedModel:
    kind: str
    model: object
    standardizer: Standardizer
    seed: int = 0
    params: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.standardizer.mean.size


def _as_int_seed(seed) -> int:
    return int(seed) if seed is not None else 0


def train_dt(ds: Dataset, min_samples_split: int = 2, max_depth=None, seed=0) -> TrainedModel:
    s = standardize_fit(ds.X)
    tree = grow_tree(s.apply(ds.X), ds.y, min_samples_split, max_depth)
    return TrainedModel("dt", tree, s, _as_int_seed(seed),
                        {"min_samples_split": min_samples_split, "max_depth": max_depth})


def train_rf(ds: Dataset, n_trees: int = 100, max_features="sqrt", seed=0,
             min_samples_split: int = 2, max_depth=None) -> TrainedModel:
    if ds.n < 2:
        raise DataError("random forest needs at least two rows")
    s = standardize_fit(ds.X)
    forest = grow_forest(s.apply(ds.X), ds.y, n_trees, max_features, seed,
                         min_samples_split, max_depth)
    return TrainedModel("rf", forest, s, _as_int_seed(seed),
                        {"n_trees": n_trees, "max_features": max_features})


def train_svm_rbf(ds: Dataset, C: float = 1.0, gamma="scale", seed=0, tol: float = 1e-3) -> TrainedModel:
    s = standardize_fit(ds.X)
    model, res = train_svm(s.apply(ds.X), ds.y, C, gamma, tol)
    return TrainedModel("svm", model, s, _as_int_seed(seed),
                        {"C": C, "gamma": gamma, "iterations": res.iterations,
                         "kkt_gap": res.kkt_gap})


def train_mlp(ds: Dataset, hidden=(64, 32, 16), epochs: int = 10, batch: int = 32,
              dropout: float = 0.5, l1: float = 0.005, l2: float = 0.001, lr: float = 1e-3,
              seed=0) -> TrainedModel:
    s = standardize_fit(ds.X)
    params, history = _mlp.train(s.apply(ds.X), ds.y, tuple(hidden), epochs, batch,
                                 dropout, l1, l2, lr, seed)
    return TrainedModel("mlp", params, s, _as_int_seed(seed),
                        {"hidden": list(hidden), "epochs": epochs, "loss_history": history})


TRAINERS = {"dt": train_dt, "rf": train_rf, "svm": train_svm_rbf, "mlp": train_mlp}


def train(kind: str, ds: Dataset, seed=0, **params) -> TrainedModel:
    if kind not in TRAINERS:
        raise ValueError(f"unknown learner {kind!r}")
    return TRAINERS[kind](ds, seed=seed, **params)


def _check_width(m: TrainedModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != m.n_features:
        raise DataError(f"model expects {m.n_features} features, got {X.shape[1]}")
    return X


def predict_proba(m: TrainedModel, X) -> np.ndarray:
    """Probability of class 1 for each row."""
    Z = m.standardizer.apply(_check_width(m, X))
    if m.kind == "mlp":
        p = _mlp.predict_proba(m.model, Z)
    else:
        p = m.model.predict_proba(Z)
    return np.clip(p, 0.0, 1.0)


def predict(m: TrainedModel, X) -> np.ndarray:
    """Class labels: the forest uses its majority vote, every other learner
    thresholds ``predict_proba`` at 0.5."""
    X = _check_width(m, X)
    if m.kind == "rf":
        return m.model.predict(m.standardizer.apply(X))
    return (predict_proba(m, X) >= 0.5).astype(np.int64)


def decision_scores(m: TrainedModel, X) -> np.ndarray:
    """Continuous score used for ROC analysis."""
    return predict_proba(m, X)


# ---------------------------------------------------------------------------
# NSKM serialization
# ---------------------------------------------------------------------------


def _tree_blobs(prefix: str, t: Tree) -> dict:
    return {f"{prefix}feature": t.feature, f"{prefix}threshold": t.threshold,
            f"{prefix}left": t.left, f"{prefix}right": t.right, f"{prefix}value": t.value}


def _tree_from(prefix: str, blobs: dict, n_features: int) -> Tree:
    return Tree(blobs[f"{prefix}feature"], blobs[f"{prefix}threshold"], blobs[f"{prefix}left"],
                blobs[f"{prefix}right"], blobs[f"{prefix}value"], n_features)


def model_to_blobs(m: TrainedModel) -> tuple[dict, dict]:
    blobs = {"std_mean": m.standardizer.mean, "std_sd": m.standardizer.sd}
    meta = {"seed": m.seed, "params": m.params, "n_features": m.n_features}
    if m.kind == "dt":
        blobs.update(_tree_blobs("t0_", m.model))
    elif m.kind == "rf":
        meta["n_trees"] = m.model.n_trees
        for i, t in enumerate(m.model.trees):
            blobs.update(_tree_blobs(f"t{i}_", t))
    elif m.kind == "svm":
        s: Svm = m.model
        blobs.update({"support": s.support, "coef": s.coef})
        meta.update({"b": s.b, "gamma": s.gamma, "platt_a": s.platt_a, "platt_b": s.platt_b})
    elif m.kind == "mlp":
        blobs.update({f"mlp_{k}": v for k, v in m.model.arrays.items()})
        meta["n_hidden"] = m.model.n_hidden
    return meta, blobs


def model_from_blobs(kind: str, meta: dict, blobs: dict) -> TrainedModel:
    s = Standardizer(blobs["std_mean"], blobs["std_sd"])
    d = int(meta["n_features"])
    if kind == "dt":
        model = _tree_from("t0_", blobs, d)
    elif kind == "rf":
        model = Forest(tuple(_tree_from(f"t{i}_", blobs, d) for i in range(meta["n_trees"])))
    elif kind == "svm":
        model = Svm(blobs["support"], blobs["coef"], meta["b"], meta["gamma"],
                    meta["platt_a"], meta["platt_b"])
    elif kind == "mlp":
        arrays = {k[4:]: v for k, v in blobs.items() if k.startswith("mlp_")}
        model = _mlp.MlpParams(arrays, int(meta["n_hidden"]))
    else:
        raise MalformedInput(f"unknown model kind {kind!r}")
    return TrainedModel(kind, model, s, int(meta["seed"]), meta["params"])


def save_model(m: TrainedModel, path: str | Path) -> None:
    meta, blobs = model_to_blobs(m)
    kind = m.kind.encode("ascii")
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    out = [NSKM_MAGIC, struct.pack("<I", NSKM_VERSION), struct.pack("<H", len(kind)), kind,
           struct.pack("<I", len(meta_bytes)), meta_bytes, struct.pack("<I", len(blobs))]
    for name in sorted(blobs):
        arr = np.ascontiguousarray(blobs[name])
        arr = arr.astype(arr.dtype.newbyteorder("<"))
        dt = arr.dtype.str.encode("ascii")
        nb = name.encode("ascii")
        out += [struct.pack("<H", len(nb)), nb, struct.pack("<B", len(dt)), dt,
                struct.pack("<B", arr.ndim), struct.pack(f"<{arr.ndim}Q", *arr.shape),
                arr.tobytes()]
    Path(path).write_bytes(b"".join(out))


def load_model(path: str | Path) -> TrainedModel:
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise MalformedInput("truncated NSKM file")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != NSKM_MAGIC:
        raise MalformedInput("not an NSKM model file")
    (version,) = struct.unpack("<I", take(4))
    if version != NSKM_VERSION:
        raise MalformedInput(f"unsupported NSKM version {version}")
    (klen,) = struct.unpack("<H", take(2))
    kind = take(klen).decode("ascii")
    (mlen,) = struct.unpack("<I", take(4))
    meta = json.loads(take(mlen).decode("utf-8"))
    (n_blobs,) = struct.unpack("<I", take(4))
    blobs = {}
    for _ in range(n_blobs):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("ascii")
        (dlen,) = struct.unpack("<B", take(1))
        dtype = np.dtype(take(dlen).decode("ascii"))
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        blobs[name] = np.frombuffer(take(count * dtype.itemsize), dtype=dtype).reshape(shape).copy()
    if pos != len(data):
        raise MalformedInput("trailing bytes after NSKM payload")
    return model_from_blobs(kind, meta, blobs)
