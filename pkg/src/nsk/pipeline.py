"""Recording-to-feature-matrix pipeline shared by the CLI and the synthetic study.

Per window: artifact check on raw microvolts, broadband Butterworth, per-channel
z-scoring, band decomposition, then microstate features per band and k.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .dataio import EegRecording, FeatureMatrix, PipelineConfig, feature_columns
from .errors import DataError
from .microstate import (
    FeatureVector,
    band_seeds,
    build_feature_vector,
    fit_microstates,
    fitting_maps,
    gfp_values,
)
from .preprocess import Epoch, band_decompose, butterworth_bandpass, normalize_epoch, reject_artifacts, segment


def subject_seed(seed: int, subject_id: str) -> np.random.SeedSequence:
    # crc32 keeps the stream independent of roster order
    return np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(subject_id.encode("utf-8")),))


def clean_epochs(rec: EegRecording, cfg: PipelineConfig) -> tuple[list[Epoch], int]:
    """Windows that pass the artifact check, filtered and normalized.

    Returns the epochs and the number of dropped windows.
    """
    lo, hi = cfg.broadband_hz
    kept, dropped = [], 0
    for e in segment(rec, cfg.window_s):
        if reject_artifacts(e, cfg.artifact_limit_uv) == "drop":
            dropped += 1
            continue
        e = butterworth_bandpass(e, lo, min(hi, 0.499 * e.fs_hz), cfg.filter_order)
        kept.append(normalize_epoch(e))
    return kept, dropped


def _subject_models(bandsets, cfg: PipelineConfig, seed) -> dict:
    """One model per (band, k) fitted on the pooled GFP-peak maps of all windows."""
    names = list(bandsets[0].bands)
    seeds = band_seeds(seed, len(names), cfg.microstate_ks)
    models = {}
    for b, name in enumerate(names):
        maps = []
        for bs in bandsets:
            x = bs.bands[name].samples
            maps.append(fitting_maps(x, gfp_values(x)))
        maps = np.concatenate(maps)
        models[name] = []
        for i, k in enumerate(cfg.microstate_ks):
            try:
                models[name].append(fit_microstates(maps, k, seeds[b][i], cfg.n_init, cfg.max_iter))
            except DataError:
                models[name].append(None)
    return models


def recording_features(rec: EegRecording, cfg: PipelineConfig) -> tuple[list[FeatureVector], dict]:
    """Feature vectors for every kept window of one recording, plus a log dict."""
    cfg.validate(rec.fs_hz)
    epochs, dropped = clean_epochs(rec, cfg)
    root = subject_seed(cfg.seed, rec.subject_id)
    bandsets = [band_decompose(e, cfg.band_tuples, cfg.decomposition, cfg.filter_order)
                for e in epochs]
    vectors = []
    if cfg.fit_mode == "subject" and bandsets:
        models = _subject_models(bandsets, cfg, root)
        for bs in bandsets:
            vectors.append(build_feature_vector(bs, cfg.microstate_ks, root, cfg.n_init,
                                                cfg.max_iter, models=models))
    else:
        for e, bs in zip(epochs, bandsets):
            seed = np.random.SeedSequence(root.entropy, spawn_key=(*root.spawn_key, e.window_index))
            vectors.append(build_feature_vector(bs, cfg.microstate_ks, seed, cfg.n_init,
                                                cfg.max_iter))
    log = {"subject_id": rec.subject_id, "windows": len(epochs) + dropped,
           "kept": len(epochs), "dropped": dropped,
           "degenerate_channels": sorted({c for e in epochs for c in e.degenerate_channels})}
    return vectors, log


def _features_task(args):
    rec, cfg = args
    return recording_features(rec, cfg)


def build_feature_matrix(recordings, cfg: PipelineConfig, jobs: int = 1) -> tuple[FeatureMatrix, list]:
    """Stack the window rows of every recording in input order."""
    recordings = list(recordings)
    tasks = [(rec, cfg) for rec in recordings]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_features_task, tasks))
    else:
        results = [_features_task(t) for t in tasks]
    columns = feature_columns([b[0] for b in cfg.band_tuples], cfg.microstate_ks)
    rows, sids, labels, logs = [], [], [], []
    for rec, (vectors, log) in zip(recordings, results):
        for v in vectors:
            rows.append(v.values)
            sids.append(rec.subject_id)
            labels.append(rec.label)
        logs.append(log)
    values = np.array(rows) if rows else np.zeros((0, len(columns)))
    return FeatureMatrix(columns, values, sids, labels), logs


def subject_means(matrix: FeatureMatrix) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Average window rows per subject; returns (subject ids, labels 0/1, values)."""
    order = list(dict.fromkeys(matrix.subject_ids))
    sids = np.array(matrix.subject_ids)
    y = matrix.y
    means = np.array([matrix.values[sids == s].mean(axis=0) for s in order])
    labels = np.array([y[sids == s][0] for s in order])
    return order, labels, means
