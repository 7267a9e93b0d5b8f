"""On-disk formats: EEG recordings, fMRI volume series, feature matrices, config.

EEGR binary layout (little-endian)::

    b"EEGR" | u32 version=1 | u32 n_channels | f64 fs_hz | u64 n_samples |
    f32 samples, channel-major (all of channel 0, then channel 1, ...)

Every recording or volume file ``<stem>.<ext>`` has a JSON sidecar
``<stem>.meta.json`` holding ``subject_id`` and ``label`` (plus ``fs_hz`` for
CSV recordings and the dimensions for volume series).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, MalformedInput, SchemaError

LABELS = ("healthy", "tinnitus")
EEGR_MAGIC = b"EEGR"
EEGR_VERSION = 1
_EEGR_HEADER = struct.Struct("<4sIIdQ")

FEATURE_NAMES = ("duration_ms", "occurrence_per_s", "coverage_pct", "mean_gfp_uv")
STATE_LETTERS = "ABCDEFGHIJKL"
DEFAULT_BANDS = (
    ("delta", 1.0, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha", 8.0, 13.0),
    ("beta", 13.0, 30.0),
    ("gamma", 30.0, 45.0),
)
_COLUMN_RE = re.compile(r"^([A-Za-z][A-Za-z0-9_]*)\.k(\d+)\.([A-L])\.([a-z_]+)$")


def label_code(label: str) -> int:
    """Numeric class for a label: healthy -> 0, tinnitus -> 1."""
    try:
        return LABELS.index(label)
    except ValueError:
        raise DataError(f"unknown label {label!r}; expected one of {LABELS}") from None


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class EegRecording:
    subject_id: str
    label: str
    fs_hz: float
    samples: np.ndarray  # (n_samples, n_channels), microvolts

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise DataError("samples must be a 2-D (n_samples, n_channels) matrix")
        if not (math.isfinite(self.fs_hz) and self.fs_hz > 0):
            raise DataError(f"fs_hz must be positive, got {self.fs_hz}")
        if self.samples.shape[1] < 1:
            raise DataError("recording has zero channels")
        if self.samples.shape[0] < 1:
            raise DataError("recording has zero samples")
        if not np.all(np.isfinite(self.samples)):
            raise MalformedInput("recording contains non-finite samples")
        label_code(self.label)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]


@dataclass
class FmriSeries:
    subject_id: str
    label: str
    voxels: np.ndarray  # (t, slice, h, w)
    normalized: bool = False

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.float64)
        if self.voxels.ndim != 4 or min(self.voxels.shape) < 1:
            raise DataError("voxels must be a non-empty (t, slice, h, w) array")
        if not np.all(np.isfinite(self.voxels)):
            raise MalformedInput("volume series contains non-finite values")
        if self.normalized and (self.voxels.min() < 0 or self.voxels.max() > 1):
            raise DataError("normalized series has voxels outside [0, 1]")
        label_code(self.label)

    @property
    def timepoints(self) -> int:
        return self.voxels.shape[0]

    @property
    def slices(self) -> int:
        return self.voxels.shape[1]

    @property
    def height(self) -> int:
        return self.voxels.shape[2]

    @property
    def width(self) -> int:
        return self.voxels.shape[3]


@dataclass
class FeatureMatrix:
    """Window-by-feature table with the subject and label of every row."""

    columns: list[str]
    values: np.ndarray
    subject_ids: list[str] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.columns = list(self.columns)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, len(self.columns))
        self.subject_ids = [str(s) for s in self.subject_ids]
        self.labels = list(self.labels)
        n = self.values.shape[0]
        if len(self.subject_ids) != n or len(self.labels) != n:
            raise SchemaError("subject_ids and labels must have one entry per row")
        validate_columns(self.columns)
        if not np.all(np.isfinite(self.values)):
            raise MalformedInput("feature matrix contains non-finite values")

    @property
    def y(self) -> np.ndarray:
        return np.array([label_code(lab) for lab in self.labels], dtype=np.int64)


@dataclass
class PipelineConfig:
    window_s: float = 10.0
    bands: list = field(default_factory=lambda: [list(b) for b in DEFAULT_BANDS])
    microstate_ks: list = field(default_factory=lambda: [4, 5, 6, 7])
    artifact_limit_uv: float = 150.0
    seed: int = 0
    cv_folds: int = 5
    broadband_hz: list = field(default_factory=lambda: [0.5, 50.0])
    filter_order: int = 3
    decomposition: str = "bandpass"
    fit_mode: str = "window"
    n_init: int = 20
    max_iter: int = 100
    learners: list = field(default_factory=lambda: ["rf", "dt"])
    classifier_params: dict = field(default_factory=lambda: {
        "dt": {"min_samples_split": 2, "max_depth": None},
        "rf": {"n_trees": 100, "max_features": "sqrt"},
        "svm": {"C": 1.0, "gamma": "scale"},
        "mlp": {"hidden": [64, 32, 16], "epochs": 10, "batch": 32, "dropout": 0.5,
                "l1": 0.005, "l2": 0.001, "lr": 1e-3},
    })
    cwt_images: bool = False
    jobs: int = 1

    def validate(self, fs_hz: float | None = None) -> "PipelineConfig":
        if not self.window_s > 0:
            raise ConfigError("window_s must be positive")
        if not self.bands:
            raise ConfigError("at least one band is required")
        names = [b[0] for b in self.bands]
        if len(set(names)) != len(names):
            raise ConfigError("band names must be unique")
        for name, lo, hi in self.bands:
            if not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", str(name)):
                raise ConfigError(f"invalid band name {name!r}")
            if not 0 < lo < hi:
                raise ConfigError(f"band {name}: need 0 < lo < hi, got {lo}, {hi}")
            if fs_hz is not None and hi >= fs_hz / 2:
                raise ConfigError(f"band {name}: upper edge {hi} Hz not below Nyquist")
        if not self.microstate_ks or any(not 2 <= int(k) <= 12 for k in self.microstate_ks):
            raise ConfigError("microstate_ks must be a non-empty subset of 2..12")
        if len(set(self.microstate_ks)) != len(self.microstate_ks):
            raise ConfigError("microstate_ks must not repeat")
        if int(self.cv_folds) < 2:
            raise ConfigError("cv_folds must be >= 2")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.decomposition not in ("bandpass", "db4_packet"):
            raise ConfigError(f"unknown decomposition {self.decomposition!r}")
        if self.fit_mode not in ("window", "subject"):
            raise ConfigError(f"unknown fit_mode {self.fit_mode!r}")
        for name in self.learners:
            if name not in ("dt", "rf", "svm", "mlp"):
                raise ConfigError(f"unknown learner {name!r}")
        return self

    @property
    def band_tuples(self) -> list[tuple[str, float, float]]:
        return [(str(n), float(lo), float(hi)) for n, lo, hi in self.bands]


def load_config(path: str | Path) -> PipelineConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    cfg = PipelineConfig(**raw)
    if "classifier_params" in raw:
        merged = PipelineConfig().classifier_params
        for kind, params in raw["classifier_params"].items():
            merged.setdefault(kind, {}).update(params)
        cfg.classifier_params = merged
    return cfg.validate()


def save_config(cfg: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Sidecars
# ---------------------------------------------------------------------------


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name.split(".")[0] + ".meta.json")


def _read_sidecar(path: Path) -> dict:
    side = sidecar_path(path)
    if not side.exists():
        raise MalformedInput(f"missing sidecar {side.name}")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"sidecar {side.name} is not valid JSON: {exc}") from None
    if not isinstance(meta, dict):
        raise MalformedInput(f"sidecar {side.name} must hold a JSON object")
    return meta


def _write_sidecar(path: Path, meta: dict) -> None:
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# EEG recordings
# ---------------------------------------------------------------------------


def write_recording(rec: EegRecording, path: str | Path, format: str = "eegr") -> None:
    path = Path(path)
    meta = {"subject_id": rec.subject_id, "label": rec.label}
    if format == "eegr":
        header = _EEGR_HEADER.pack(EEGR_MAGIC, EEGR_VERSION, rec.n_channels,
                                   float(rec.fs_hz), rec.n_samples)
        body = np.ascontiguousarray(rec.samples.T, dtype="<f4").tobytes()
        path.write_bytes(header + body)
    elif format == "csv":
        meta["fs_hz"] = float(rec.fs_hz)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"ch{i + 1}" for i in range(rec.n_channels)])
        for row in rec.samples:
            writer.writerow([repr(float(v)) for v in row])
        path.write_text(buf.getvalue())
    else:
        raise ValueError(f"unknown recording format {format!r}")
    _write_sidecar(path, meta)


def read_recording(path: str | Path, format: str | None = None) -> EegRecording:
    """Read a recording in ``eegr`` or ``csv`` format (inferred from suffix)."""
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "eegr"
    if not path.exists():
        raise DataError(f"no such recording: {path}")
    if format == "eegr":
        samples, fs = _read_eegr_payload(path.read_bytes())
    elif format == "csv":
        samples, fs = _read_csv_payload(path.read_text()), None
    else:
        raise ValueError(f"unknown recording format {format!r}")
    meta = _read_sidecar(path)
    if fs is None:
        if "fs_hz" not in meta:
            raise MalformedInput("CSV sidecar must provide fs_hz")
        fs = float(meta["fs_hz"])
    try:
        subject_id, label = str(meta["subject_id"]), str(meta["label"])
    except KeyError as exc:
        raise MalformedInput(f"sidecar lacks {exc.args[0]}") from None
    return EegRecording(subject_id=subject_id, label=label, fs_hz=fs, samples=samples)


def _read_eegr_payload(data: bytes) -> tuple[np.ndarray, float]:
    if len(data) < _EEGR_HEADER.size:
        raise MalformedInput("EEGR file shorter than its header")
    magic, version, n_channels, fs, n_samples = _EEGR_HEADER.unpack_from(data)
    if magic != EEGR_MAGIC:
        raise MalformedInput(f"bad magic {magic!r}")
    if version != EEGR_VERSION:
        raise MalformedInput(f"unsupported EEGR version {version}")
    if not math.isfinite(fs) or fs <= 0:
        raise DataError(f"fs_hz must be positive, got {fs}")
    if n_channels == 0:
        raise DataError("recording has zero channels")
    expected = _EEGR_HEADER.size + 4 * n_channels * n_samples
    if len(data) != expected:
        raise MalformedInput(f"EEGR payload is {len(data)} bytes, header implies {expected}")
    flat = np.frombuffer(data, dtype="<f4", offset=_EEGR_HEADER.size)
    samples = flat.reshape(n_channels, n_samples).T.astype(np.float64)
    if not np.all(np.isfinite(samples)):
        raise MalformedInput("EEGR payload contains non-finite samples")
    return samples, fs


def _read_csv_payload(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise MalformedInput("empty CSV recording")
    header = rows[0]
    if not header or header != [f"ch{i + 1}" for i in range(len(header))]:
        raise MalformedInput("CSV header must be ch1..chN")
    body = rows[1:]
    if any(len(r) != len(header) for r in body):
        raise MalformedInput("ragged CSV row")
    try:
        samples = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise MalformedInput(f"unparseable CSV value: {exc}") from None
    if not np.all(np.isfinite(samples)):
        raise MalformedInput("CSV contains non-finite samples")
    return samples.reshape(len(body), len(header))


def list_recordings(directory: str | Path) -> list[Path]:
    """Recording files in ``directory`` sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"input directory not found: {directory}")
    return sorted(p for p in directory.iterdir()
                  if p.suffix.lower() in (".eegr", ".csv") and p.is_file())


# ---------------------------------------------------------------------------
# fMRI volume series
# ---------------------------------------------------------------------------


def write_volume_series(series: FmriSeries, path: str | Path) -> None:
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(series.voxels, dtype="<f4").tobytes())
    t, s, h, w = series.voxels.shape
    _write_sidecar(path, {"subject_id": series.subject_id, "label": series.label,
                          "w": w, "h": h, "slices": s, "t": t,
                          "normalized": bool(series.normalized)})


def read_volume_series(path: str | Path) -> FmriSeries:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such volume series: {path}")
    meta = _read_sidecar(path)
    try:
        dims = tuple(int(meta[k]) for k in ("t", "slices", "h", "w"))
        subject_id, label = str(meta["subject_id"]), str(meta["label"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"volume sidecar invalid: {exc}") from None
    if min(dims) < 1:
        raise MalformedInput(f"volume dims must be >= 1, got {dims}")
    data = path.read_bytes()
    expected = 4 * int(np.prod(dims))
    if len(data) != expected:
        raise MalformedInput(f"volume payload is {len(data)} bytes, descriptor implies {expected}")
    voxels = np.frombuffer(data, dtype="<f4").reshape(dims).astype(np.float64)
    return FmriSeries(subject_id=subject_id, label=label, voxels=voxels,
                      normalized=bool(meta.get("normalized", False)))


def write_pgm(img: np.ndarray, path: str | Path, vmax: float = 1.0) -> None:
    """8-bit binary PGM (P5) of a 2-D image scaled from [0, vmax]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DataError("PGM export needs a 2-D image")
    px = np.clip(np.rint(img / vmax * 255.0), 0, 255).astype(np.uint8)
    h, w = px.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM; returns raw 0..maxval integers as float64."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedInput("truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise MalformedInput("only binary P5 PGM is supported")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise MalformedInput("16-bit PGM is not supported")
    pos += 1
    body = data[pos:pos + w * h]
    if len(body) != w * h:
        raise MalformedInput("PGM pixel payload too short")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).astype(np.float64)


# ---------------------------------------------------------------------------
# Feature matrices
# ---------------------------------------------------------------------------


def feature_column(band: str, k: int, state: int | str, feature: str) -> str:
    letter = STATE_LETTERS[state] if isinstance(state, int) else state
    return f"{band}.k{k}.{letter}.{feature}"


def parse_feature_column(name: str) -> tuple[str, int, str, str]:
    m = _COLUMN_RE.match(name)
    if m is None:
        raise SchemaError(f"column {name!r} does not follow <band>.k<k>.<state>.<feature>")
    band, k, state, feature = m.group(1), int(m.group(2)), m.group(3), m.group(4)
    if feature not in FEATURE_NAMES:
        raise SchemaError(f"column {name!r}: unknown feature {feature!r}")
    if not 2 <= k <= 12 or STATE_LETTERS.index(state) >= k:
        raise SchemaError(f"column {name!r}: state {state} invalid for k={k}")
    return band, k, state, feature


def feature_columns(bands: Iterable[str], ks: Iterable[int]) -> list[str]:
    """Canonical (band, k, state, feature) column order."""
    return [feature_column(b, k, s, f)
            for b in bands for k in ks for s in range(k) for f in FEATURE_NAMES]


def validate_columns(columns: Sequence[str]) -> None:
    seen = set()
    for name in columns:
        if name in seen:
            raise SchemaError(f"duplicate column {name!r}")
        seen.add(name)
        parse_feature_column(name)


def write_feature_matrix(matrix: FeatureMatrix, path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["subject_id", "label", *matrix.columns])
    for sid, lab, row in zip(matrix.subject_ids, matrix.labels, matrix.values):
        writer.writerow([sid, lab, *(repr(float(v)) for v in row)])
    Path(path).write_text(buf.getvalue())


def read_feature_matrix(path: str | Path) -> FeatureMatrix:
    rows = list(csv.reader(io.StringIO(Path(path).read_text())))
    if not rows:
        raise MalformedInput("empty feature matrix file")
    header = rows[0]
    if header[:2] != ["subject_id", "label"]:
        raise SchemaError("feature matrix must start with subject_id,label columns")
    columns = header[2:]
    validate_columns(columns)
    body = rows[1:]
    if any(len(r) != len(header) for r in body):
        raise MalformedInput("ragged feature matrix row")
    try:
        values = np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise MalformedInput(f"unparseable feature value: {exc}") from None
    return FeatureMatrix(columns=columns, values=values.reshape(len(body), len(columns)),
                         subject_ids=[r[0] for r in body], labels=[r[1] for r in body])
