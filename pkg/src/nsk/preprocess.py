"""EEG preprocessing: windowing, Butterworth filtering, normalization,
artifact rejection and frequency-band decomposition."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import signal

from .dataio import DEFAULT_BANDS, EegRecording
from .errors import DataError


@dataclass(frozen=True)
class Epoch:
    subject_id: str
    window_index: int
    fs_hz: float
    samples: np.ndarray  # (n_samples, n_channels)
    label: str = "healthy"
    degenerate_channels: tuple = ()

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class BandSet:
    source: Epoch
    bands: dict  # name -> Epoch, in configured order

    def __len__(self):
        return len(self.bands)


def window_length(window_s: float, fs_hz: float) -> int:
    return int(round(window_s * fs_hz))


def segment(rec: EegRecording, window_s: float) -> list[Epoch]:
    """Split a recording into consecutive non-overlapping windows.

    The trailing partial window is dropped.
    """
    if not window_s > 0:
        raise DataError("window_s must be positive")
    n = window_length(window_s, rec.fs_hz)
    if n == 0:
        raise DataError(f"window of {window_s} s at {rec.fs_hz} Hz has zero samples")
    return [
        Epoch(rec.subject_id, i, rec.fs_hz, rec.samples[i * n:(i + 1) * n].copy(), rec.label)
        for i in range(rec.n_samples // n)
    ]


def _check_band(lo_hz: float, hi_hz: float, fs_hz: float) -> None:
    if not 0 < lo_hz < hi_hz < fs_hz / 2:
        raise DataError(f"band edges must satisfy 0 < lo < hi < fs/2; got "
                        f"{lo_hz}, {hi_hz} at fs={fs_hz}")


def butter_sos(lo_hz: float, hi_hz: float, fs_hz: float, order: int = 3) -> np.ndarray:
    _check_band(lo_hz, hi_hz, fs_hz)
    return signal.butter(order, [lo_hz, hi_hz], btype="bandpass", fs=fs_hz, output="sos")


def bandpass_array(x: np.ndarray, lo_hz: float, hi_hz: float, fs_hz: float,
                   order: int = 3, zero_phase: bool = True) -> np.ndarray:
    """Filter along axis 0. Zero-phase mode runs forward and backward with odd
    reflection padding of three times the bandpass order at both ends."""
    sos = butter_sos(lo_hz, hi_hz, fs_hz, order)
    x = np.asarray(x, dtype=np.float64)
    if not zero_phase:
        return signal.sosfilt(sos, x, axis=0)
    padlen = min(3 * 2 * order, x.shape[0] - 1)
    return signal.sosfiltfilt(sos, x, axis=0, padtype="odd", padlen=padlen)


def butterworth_bandpass(e: Epoch, lo_hz: float, hi_hz: float, order: int = 3,
                         zero_phase: bool = True) -> Epoch:
    return replace(e, samples=bandpass_array(e.samples, lo_hz, hi_hz, e.fs_hz, order, zero_phase))


def zscore_columns(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column (x - mean) / population sd. Constant columns become zeros.

    Returns the normalized array and a boolean mask of degenerate columns.
    """
    x = np.asarray(x, dtype=np.float64)
    # rescale by column magnitude so squares of tiny values do not underflow
    scale = np.max(np.abs(x), axis=0)
    scale[scale == 0] = 1.0
    x = x / scale
    centered = x - x.mean(axis=0)
    sd = np.sqrt(np.mean(centered ** 2, axis=0))
    # sd is not exactly 0 for constant columns with rounding in the mean
    degenerate = np.all(centered == 0, axis=0) | (sd <= 1e-12)
    out = np.divide(centered, sd, out=np.zeros_like(centered), where=~degenerate)
    return out, degenerate


def normalize_epoch(e: Epoch) -> Epoch:
    out, degenerate = zscore_columns(e.samples)
    return replace(e, samples=out, degenerate_channels=tuple(np.flatnonzero(degenerate).tolist()))


def reject_artifacts(e: Epoch, limit_uv: float = 150.0) -> str:
    """``"drop"`` if any raw sample magnitude exceeds ``limit_uv``, else ``"keep"``."""
    return "drop" if np.max(np.abs(e.samples)) > limit_uv else "keep"


def band_decompose(e: Epoch, bands=DEFAULT_BANDS, method: str = "bandpass",
                   order: int = 3) -> BandSet:
    bands = [(str(n), float(lo), float(hi)) for n, lo, hi in bands]
    for _, lo, hi in bands:
        _check_band(lo, hi, e.fs_hz)
    if method == "bandpass":
        out = {name: bandpass_array(e.samples, lo, hi, e.fs_hz, order) for name, lo, hi in bands}
    elif method == "db4_packet":
        out = db4_packet_bands(e.samples, e.fs_hz, bands)
    else:
        raise ValueError(f"unknown decomposition method {method!r}")
    return BandSet(e, {name: replace(e, samples=x) for name, x in out.items()})


def db4_packet_level(n_samples: int, fs_hz: float, bands) -> int:
    import pywt

    narrowest = min(hi - lo for _, lo, hi in bands)
    level = 1
    # node width (fs/2)/2^level should be at most half the narrowest band
    while (fs_hz / 2) / 2 ** level > narrowest / 2:
        level += 1
    max_level = pywt.dwt_max_level(n_samples, pywt.Wavelet("db4").dec_len)
    return max(1, min(level, max_level))


def db4_packet_bands(x: np.ndarray, fs_hz: float, bands) -> dict:
    """Approximate band split with a Daubechies-4 wavelet packet tree.

    Each terminal node is assigned to the band containing its dyadic interval's
    centre; a band is rebuilt from its nodes alone. Nodes outside every band are
    discarded. Dyadic edges rarely match the requested edges, so band limits are
    only as sharp as the node width at the chosen level.
    """
    import pywt

    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    level = db4_packet_level(n, fs_hz, bands)
    width = (fs_hz / 2) / 2 ** level
    out = {name: np.empty_like(x) for name, _, _ in bands}
    for ch in range(x.shape[1]):
        wp = pywt.WaveletPacket(x[:, ch], "db4", mode="periodization", maxlevel=level)
        nodes = wp.get_level(level, order="freq")
        for name, lo, hi in bands:
            rec = pywt.WaveletPacket(None, "db4", mode="periodization", maxlevel=level)
            for idx, node in enumerate(nodes):
                centre = (idx + 0.5) * width
                if lo <= centre < hi:
                    rec[node.path] = node.data
            if any(lo <= (i + 0.5) * width < hi for i in range(len(nodes))):
                out[name][:, ch] = rec.reconstruct(update=False)[:n]
            else:
                out[name][:, ch] = 0.0
    return out
