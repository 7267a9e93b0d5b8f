"""fMRI slice preprocessing and maximum-intensity-difference maps."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataio import FmriSeries
from .errors import DataError

N_BINS = 256


@dataclass(frozen=True)
class DiffMap:
    maps: np.ndarray  # (slice, h, w) or (h, w) for a single slice
    slice_index: int | None = None


def normalize_intensity(raw) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)) or raw.min(initial=0) < 0 or raw.max(initial=0) > 255:
        raise DataError("raw intensities must lie in [0, 255]")
    return raw / 255.0


def median_filter_3x3(img) -> np.ndarray:
    """3x3 median with replicated borders."""
    img = np.asarray(img, dtype=np.float64)
    padded = np.pad(img, 1, mode="edge")
    windows = sliding_window_view(padded, (3, 3))
    return np.median(windows.reshape(*img.shape, 9), axis=-1)


def _tile_edges(n: int, tiles: int) -> np.ndarray:
    return np.array([len(a) for a in np.array_split(np.arange(n), tiles)]).cumsum()


def _tile_lut(tile: np.ndarray, clip: float) -> np.ndarray | None:
    """Clipped-histogram CDF lookup for one tile; None for a flat tile."""
    if tile.max() == tile.min():
        return None
    bins = np.minimum((tile * N_BINS).astype(np.int64), N_BINS - 1).ravel()
    hist = np.bincount(bins, minlength=N_BINS).astype(np.float64)
    if np.isfinite(clip):
        limit = clip * tile.size / N_BINS
        excess = np.sum(np.maximum(hist - limit, 0.0))
        hist = np.minimum(hist, limit) + excess / N_BINS
    return np.cumsum(hist) / tile.size


def clahe_3x3(img, clip: float = 2.0, tiles=(3, 3)) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization on a tile grid.

    Each tile maps a pixel in bin b (of 256) to the fraction of the tile's
    clipped histogram mass in bins <= b; ``clip`` is the per-bin cap as a
    multiple of the mean bin count, with the excess spread evenly over all
    bins. Pixels blend the mappings of the four nearest tile centres
    bilinearly. A flat tile maps every value to itself.
    """
    img = np.asarray(img, dtype=np.float64)
    if clip < 1:
        raise DataError("CLAHE clip limit must be >= 1")
    if img.min() < 0 or img.max() > 1:
        raise DataError("CLAHE expects intensities in [0, 1]")
    h, w = img.shape
    ty, tx = min(tiles[0], h), min(tiles[1], w)
    ry, rx = _tile_edges(h, ty), _tile_edges(w, tx)
    y_start = np.concatenate(([0], ry[:-1]))
    x_start = np.concatenate(([0], rx[:-1]))

    bins = np.minimum((img * N_BINS).astype(np.int64), N_BINS - 1)
    mapped = np.empty((ty, tx, h, w))
    for i in range(ty):
        for j in range(tx):
            lut = _tile_lut(img[y_start[i]:ry[i], x_start[j]:rx[j]], clip)
            mapped[i, j] = img if lut is None else lut[bins]

    def coords(n, starts, ends, count):
        centres = (starts + ends - 1) / 2.0
        pos = np.arange(n, dtype=np.float64)
        i1 = np.clip(np.searchsorted(centres, pos, side="right"), 1, max(count - 1, 1))
        i0 = i1 - 1
        if count == 1:
            return np.zeros(n, int), np.zeros(n, int), np.zeros(n)
        wgt = np.clip((pos - centres[i0]) / (centres[i1] - centres[i0]), 0.0, 1.0)
        return i0, i1, wgt

    y0, y1, wy = coords(h, y_start, ry, ty)
    x0, x1, wx = coords(w, x_start, rx, tx)
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    wy, wx = wy[:, None], wx[None, :]

    # nested lerp a + w (b - a) is exact where neighbouring mappings agree
    def lerp(a, b, t):
        return a + t * (b - a)

    top = lerp(mapped[y0[:, None], x0[None, :], rows, cols],
               mapped[y0[:, None], x1[None, :], rows, cols], wx)
    bottom = lerp(mapped[y1[:, None], x0[None, :], rows, cols],
                  mapped[y1[:, None], x1[None, :], rows, cols], wx)
    out = lerp(top, bottom, wy)
    return np.clip(out, 0.0, 1.0)


def preprocess_slice(raw, clahe: bool = True, clip: float = 2.0) -> np.ndarray:
    out = median_filter_3x3(normalize_intensity(raw))
    return clahe_3x3(out, clip) if clahe else out


def preprocess_series(series: FmriSeries, clahe: bool = True, clip: float = 2.0) -> FmriSeries:
    """Normalize (if raw), median-filter and optionally CLAHE every slice image."""
    vox = series.voxels if series.normalized else normalize_intensity(series.voxels)
    out = np.empty_like(vox)
    for t in range(vox.shape[0]):
        for s in range(vox.shape[1]):
            img = median_filter_3x3(vox[t, s])
            out[t, s] = clahe_3x3(img, clip) if clahe else img
    return FmriSeries(series.subject_id, series.label, out, normalized=True)


def max_diff_map(series: FmriSeries, slice_index: int | None = None) -> DiffMap:
    """Per voxel, the largest |I_t - I_0| over later time points."""
    if not series.normalized:
        raise DataError("max_diff_map requires a normalized series")
    if series.timepoints < 2:
        raise DataError("need at least two time points")
    vox = series.voxels if slice_index is None else series.voxels[:, slice_index:slice_index + 1]
    diff = np.max(np.abs(vox[1:] - vox[0]), axis=0)
    if slice_index is not None:
        diff = diff[0]
    return DiffMap(diff, slice_index)


def slice_stats(m: DiffMap | np.ndarray) -> tuple[float, float]:
    """Mean and population SD over all voxels."""
    v = np.asarray(m.maps if isinstance(m, DiffMap) else m, dtype=np.float64)
    return float(v.mean()), float(v.std())


def group_slice_table(maps_by_group: dict) -> list[dict]:
    """Average per-subject difference maps within each group, then summarize
    every slice of the group-average map.

    ``maps_by_group`` maps a group label to a list of per-subject DiffMaps of
    shape (slice, h, w). Rows carry slice (1-based), group, mean and sd.
    """
    rows = []
    for group in sorted(maps_by_group):
        stack = np.stack([np.asarray(m.maps) for m in maps_by_group[group]])
        avg = stack.mean(axis=0)
        for s in range(avg.shape[0]):
            mean, sd = slice_stats(avg[s])
            rows.append({"slice": s + 1, "group": group, "mean": mean, "sd": sd})
    rows.sort(key=lambda r: (r["slice"], r["group"]))
    return rows


def write_slice_table(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["slice", "group", "mean", "sd"], lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({**r, "mean": repr(r["mean"]), "sd": repr(r["sd"])})
