"""Microstate analysis: global field power, polarity-invariant K-means,
backfitting and the duration/occurrence/coverage/mean-GFP features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import FEATURE_NAMES, STATE_LETTERS, feature_columns
from .errors import DataError
from .preprocess import BandSet, Epoch

N_INIT = 20
MAX_ITER = 100


@dataclass(frozen=True)
class GfpSeries:
    fs_hz: float
    values: np.ndarray


@dataclass(frozen=True)
class MicrostateModel:
    k: int
    templates: np.ndarray  # (k, n_channels), unit norm, zero mean across channels
    gev: float
    seed: int | None = None

    @property
    def labels(self) -> str:
        return STATE_LETTERS[:self.k]


@dataclass(frozen=True)
class LabelSequence:
    labels: np.ndarray  # int state index per sample
    fs_hz: float


@dataclass(frozen=True)
class FeatureVector:
    columns: list
    values: np.ndarray


def gfp_values(x: np.ndarray) -> np.ndarray:
    """Spatial standard deviation across channels (axis 1) at every sample."""
    x = np.asarray(x, dtype=np.float64)
    return np.sqrt(np.mean((x - x.mean(axis=1, keepdims=True)) ** 2, axis=1))


def gfp(e: Epoch) -> GfpSeries:
    if e.n_channels < 2:
        raise DataError("GFP needs at least two channels")
    return GfpSeries(e.fs_hz, gfp_values(e.samples))


def find_gfp_peaks(g) -> np.ndarray:
    """Interior local maxima of a GFP trace.

    A flat top counts once, at its first sample, and only when it is entered by
    a rise and left by a fall. Series shorter than 3 samples have no peaks.
    """
    v = np.asarray(g.values if isinstance(g, GfpSeries) else g, dtype=np.float64)
    if v.size < 3:
        return np.zeros(0, dtype=np.int64)
    starts = np.flatnonzero(np.concatenate(([True], v[1:] != v[:-1])))
    runs = v[starts]
    if runs.size < 3:
        return np.zeros(0, dtype=np.int64)
    mid = (runs[1:-1] > runs[:-2]) & (runs[1:-1] > runs[2:])
    return starts[1:-1][mid].astype(np.int64)


def _center(x: np.ndarray) -> np.ndarray:
    return x - x.mean(axis=1, keepdims=True)


def _unit_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe[:, None], norms


def _fix_sign(t: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(t), axis=1)
    signs = np.sign(t[np.arange(t.shape[0]), idx])
    signs[signs == 0] = 1.0
    return t * signs[:, None]


def _kmeans_run(xc, xn, norms, k, rng, max_iter):
    n = xc.shape[0]
    rows = np.arange(n)
    templates = xn[rng.choice(n, size=k, replace=False)].copy()
    labels = None
    for _ in range(max_iter):
        proj = xc @ templates.T
        new = np.argmax(np.abs(proj), axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        # one power-iteration step toward each cluster's leading eigenvector
        weights = np.zeros((n, k))
        weights[rows, labels] = proj[rows, labels]
        updated = weights.T @ xc
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            fit = np.abs(proj[rows, labels]) / norms
            worst = int(np.argmin(fit))
            updated[j] = xc[worst]
            labels[worst] = j
        templates, _ = _unit_rows(updated)
    templates = _polish(xc, labels, templates)
    corr = xn @ templates.T
    labels = np.argmax(np.abs(corr), axis=1)
    fit = np.abs(corr[rows, labels])
    contrib = (norms * fit) ** 2
    return templates, labels, contrib


def _polish(xc, labels, templates):
    """Replace each template by the exact leading eigenvector of its cluster scatter."""
    out = templates.copy()
    for j in range(templates.shape[0]):
        sub = xc[labels == j]
        if sub.shape[0]:
            _, vecs = np.linalg.eigh(sub.T @ sub)
            out[j] = vecs[:, -1]
    return out


def fit_microstates(maps, k: int, seed=None, n_init: int = N_INIT,
                    max_iter: int = MAX_ITER) -> MicrostateModel:
    """Polarity-invariant (modified) K-means over topographic maps.

    Parameters
    ----------
    maps : ndarray, shape (n_maps, n_channels)
        Topographies to cluster, usually the samples at GFP peaks.
    k : int
        Number of microstate classes.
    seed : int | numpy.random.SeedSequence | None
        Seed for the restarts; the same seed reproduces the same model.
    n_init, max_iter : int
        Restarts (the best by global explained variance wins) and the cap on
        assignment/update rounds per restart.

    Returns
    -------
    MicrostateModel
        Unit-norm, average-referenced templates ordered by descending GEV
        contribution (ties go to the cluster whose first member comes first).
    """
    x = np.asarray(maps, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < k:
        raise DataError(f"need at least k={k} maps, got {x.shape[0] if x.ndim == 2 else 0}")
    xc = _center(x)
    xn, norms = _unit_rows(xc)
    keep = norms > 0
    if keep.sum() < k:
        raise DataError(f"need at least k={k} non-flat maps")
    xc, xn, norms = xc[keep], xn[keep], norms[keep]
    total = float(np.sum(norms ** 2))
    rng = np.random.default_rng(seed)

    best = None
    for _ in range(n_init):
        templates, labels, contrib = _kmeans_run(xc, xn, norms, k, rng, max_iter)
        gev = float(np.sum(contrib) / total)
        if best is None or gev > best[0]:
            best = (gev, templates, labels, contrib)
    gev, templates, labels, contrib = best

    per_cluster = np.bincount(labels, weights=contrib, minlength=k)
    first = np.full(k, labels.size)
    for j in range(k):
        idx = np.flatnonzero(labels == j)
        if idx.size:
            first[j] = idx[0]
    order = sorted(range(k), key=lambda j: (-per_cluster[j], first[j]))
    templates = _fix_sign(templates[order])
    seed_val = seed if isinstance(seed, (int, np.integer)) else None
    return MicrostateModel(k=k, templates=templates, gev=min(max(gev, 0.0), 1.0), seed=seed_val)


def backfit_array(templates: np.ndarray, x: np.ndarray) -> np.ndarray:
    """State index of the template with the largest absolute spatial correlation.

    Flat samples (zero spatial variance) have no defined correlation and fall to
    state 0, as do exact ties among the lowest-indexed templates.
    """
    xc = _center(np.asarray(x, dtype=np.float64))
    tc = _center(np.asarray(templates, dtype=np.float64))
    tn, _ = _unit_rows(tc)
    # |dot| ranks templates like |corr|: each sample's norm is a common factor
    return np.argmax(np.abs(xc @ tn.T), axis=1)


def backfit(m: MicrostateModel, e: Epoch) -> LabelSequence:
    if e.n_channels != m.templates.shape[1]:
        raise DataError(f"model has {m.templates.shape[1]} channels, epoch has {e.n_channels}")
    return LabelSequence(backfit_array(m.templates, e.samples), e.fs_hz)


def run_lengths(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(state, length) of every maximal constant run."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    starts = np.flatnonzero(np.concatenate(([True], labels[1:] != labels[:-1])))
    lengths = np.diff(np.append(starts, labels.size))
    return labels[starts].astype(np.int64), lengths


def extract_features(labels: LabelSequence, g: GfpSeries, k: int) -> np.ndarray:
    """Per-state features, shape (k, 4).

    Columns: duration in ms, occurrences per second, coverage in percent and
    mean GFP. States that never occur get zeros. Runs cut by the window edges
    count as whole segments.
    """
    lab = np.asarray(labels.labels)
    gv = np.asarray(g.values, dtype=np.float64)
    if lab.shape != gv.shape:
        raise DataError("labels and GFP differ in length")
    n = lab.size
    fs = float(labels.fs_hz)
    out = np.zeros((k, len(FEATURE_NAMES)))
    if n == 0:
        return out
    states, lengths = run_lengths(lab)
    n_seg = np.bincount(states, minlength=k)[:k]
    total_len = np.bincount(states, weights=lengths, minlength=k)[:k]
    gfp_sum = np.bincount(lab, weights=gv, minlength=k)[:k]
    duration_s = n / fs
    present = n_seg > 0
    cnt = n_seg[present].astype(np.float64)
    tot = total_len[present]
    out[present, 0] = tot / cnt / fs * 1000.0
    out[present, 1] = cnt / duration_s
    out[present, 2] = tot / n * 100.0
    out[present, 3] = gfp_sum[present] / tot
    return out


def _band_features(x: np.ndarray, fs_hz: float, ks, seeds, n_init, max_iter, models=None):
    g = GfpSeries(fs_hz, gfp_values(x))
    parts = []
    maps = None
    for i, k in enumerate(ks):
        model = models[i] if models is not None else None
        if model is None:
            if maps is None:
                maps = fitting_maps(x, g.values)
            try:
                model = fit_microstates(maps, k, seeds[i], n_init, max_iter)
            except DataError:
                parts.append(np.zeros(k * len(FEATURE_NAMES)))
                continue
        lab = LabelSequence(backfit_array(model.templates, x), fs_hz)
        parts.append(extract_features(lab, g, k).ravel())
    return np.concatenate(parts)


def fitting_maps(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Maps at GFP peaks; falls back to every non-flat sample when peaks are scarce."""
    peaks = find_gfp_peaks(g)
    if peaks.size >= 12:
        return x[peaks]
    return x[g > 0]


def band_seeds(seed, n_bands: int, ks) -> list[list]:
    """Independent seed streams per (band, k)."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [[np.random.SeedSequence(root.entropy, spawn_key=(*root.spawn_key, b, int(k)))
             for k in ks] for b in range(n_bands)]


def build_feature_vector(bandset: BandSet, ks=(4, 5, 6, 7), seed=0, n_init: int = N_INIT,
                         max_iter: int = MAX_ITER, models=None) -> FeatureVector:
    """Concatenate per-state features in (band, k, state, feature) order.

    ``models`` optionally maps band name to a list of pre-fitted models (one per
    k) so that templates can be shared across windows; otherwise each band of
    this window is clustered on its own GFP-peak maps.
    """
    ks = [int(k) for k in ks]
    names = list(bandset.bands)
    seeds = band_seeds(seed, len(names), ks)
    parts = []
    for b, name in enumerate(names):
        ep = bandset.bands[name]
        if ep.n_channels < 2:
            raise DataError("microstate features need at least two channels")
        parts.append(_band_features(ep.samples, ep.fs_hz, ks, seeds[b], n_init, max_iter,
                                    None if models is None else models[name]))
    return FeatureVector(feature_columns(names, ks), np.concatenate(parts))
