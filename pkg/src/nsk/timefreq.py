"""GFP-to-image pipeline: smoothing, z-scoring, complex Morlet CWT and a
128x128 normalized scalogram image."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft

from .dataio import write_pgm
from .errors import DataError
from .preprocess import zscore_columns

N_SCALES = 127
IMAGE_SIZE = 128
# cmor1.0-1.0: bandwidth B and centre frequency C of the complex Morlet
MORLET_B = 1.0
MORLET_C = 1.0
F_MIN_HZ = 0.5
F_MAX_FRACTION = 0.45  # of fs, i.e. 0.9 of Nyquist


@dataclass(frozen=True)
class Scalogram:
    magnitudes: np.ndarray  # (n_scales, n_samples)
    scales: np.ndarray  # in samples
    fs_hz: float

    @property
    def frequencies(self) -> np.ndarray:
        return scale_to_frequency(self.scales, self.fs_hz)


@dataclass(frozen=True)
class TfImage:
    pixels: np.ndarray


def smooth_moving_average(x, w: int = 5) -> np.ndarray:
    """Centered moving average; edge samples average the truncated window."""
    x = np.asarray(x, dtype=np.float64)
    if w < 1 or w % 2 == 0:
        raise DataError(f"moving-average window must be odd and >= 1, got {w}")
    if x.size < w:
        raise DataError(f"signal of length {x.size} is shorter than the window {w}")
    half = w // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(x.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, x.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def zscore(x) -> tuple[np.ndarray, bool]:
    """Population z-score. Returns the signal and a flag set for constant input."""
    out, degenerate = zscore_columns(np.asarray(x, dtype=np.float64).reshape(-1, 1))
    return out[:, 0], bool(degenerate[0])


def scale_to_frequency(scales, fs_hz: float) -> np.ndarray:
    return MORLET_C * fs_hz / np.asarray(scales, dtype=np.float64)


def default_scales(fs_hz: float, n_scales: int = N_SCALES) -> np.ndarray:
    """Scales (in samples) whose pseudo-frequencies run geometrically from
    0.45 fs down to 0.5 Hz."""
    f_hi = F_MAX_FRACTION * fs_hz
    if f_hi <= F_MIN_HZ:
        raise DataError(f"sampling rate {fs_hz} Hz too low for the scalogram range")
    freqs = np.geomspace(f_hi, F_MIN_HZ, n_scales)
    return MORLET_C * fs_hz / freqs


def morlet_spectrum(omega_cycles: np.ndarray, scale: float) -> np.ndarray:
    """Fourier transform of the L2-normalized, scaled complex Morlet wavelet,
    evaluated at frequencies given in cycles per sample."""
    # psi(t) = (pi B)^-1/2 exp(-t^2/B) exp(2 pi i C t); psi_s(t) = psi(t/s)/sqrt(s)
    return np.sqrt(scale) * np.exp(-np.pi ** 2 * MORLET_B * (scale * omega_cycles - MORLET_C) ** 2)


def cwt_morlet(x, fs_hz: float, n_scales: int = N_SCALES, scales=None) -> Scalogram:
    """Magnitude of the complex Morlet CWT with zero padding at both ends.

    The transform is evaluated as a linear (not circular) convolution: the
    signal is zero-padded by the widest wavelet's effective support before the
    FFT, so the scalogram of a shifted input is the shifted scalogram away
    from the edges.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 8:
        raise DataError("CWT needs a 1-D signal of at least 8 samples")
    scales = default_scales(fs_hz, n_scales) if scales is None else np.asarray(scales, float)
    n = x.size
    # Gaussian envelope exp(-(t/s)^2 / B) is below 1e-16 beyond ~6.1 s sqrt(B)
    support = int(np.ceil(6.5 * np.sqrt(MORLET_B) * scales.max()))
    n_fft = fft.next_fast_len(n + 2 * support)
    spec = fft.fft(x, n_fft)
    freqs = fft.fftfreq(n_fft)
    mags = np.empty((scales.size, n))
    for i, s in enumerate(scales):
        # correlation with psi_s equals convolution with conj(psi_s(-t)),
        # whose spectrum is the real Gaussian above
        coef = fft.ifft(spec * morlet_spectrum(freqs, s))
        mags[i] = np.abs(coef[:n])
    return Scalogram(mags, scales, float(fs_hz))


def resize_bilinear(img: np.ndarray, shape=(IMAGE_SIZE, IMAGE_SIZE)) -> np.ndarray:
    """Bilinear resampling with pixel-centre alignment and edge clamping."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    out_h, out_w = shape

    def axis_weights(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
        pos = np.clip(pos, 0, n_in - 1)
        i0 = np.floor(pos).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, pos - i0

    r0, r1, wr = axis_weights(h, out_h)
    c0, c1, wc = axis_weights(w, out_w)
    top = img[r0][:, c0] * (1 - wc) + img[r0][:, c1] * wc
    bottom = img[r1][:, c0] * (1 - wc) + img[r1][:, c1] * wc
    return top * (1 - wr)[:, None] + bottom * wr[:, None]


def minmax(img: np.ndarray) -> np.ndarray:
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def to_image(s: Scalogram | np.ndarray, size: int = IMAGE_SIZE) -> TfImage:
    mags = s.magnitudes if isinstance(s, Scalogram) else np.asarray(s, dtype=np.float64)
    resized = resize_bilinear(mags, (size, size))
    return TfImage(np.clip(minmax(resized), 0.0, 1.0))


def gfp_to_image(gfp_values, fs_hz: float, w: int = 5) -> tuple[TfImage, dict]:
    """Full chain for one GFP trace; intermediates are returned for plotting."""
    smoothed = smooth_moving_average(gfp_values, w)
    normalized, flat = zscore(smoothed)
    scal = cwt_morlet(normalized, fs_hz)
    return to_image(scal), {"smoothed": smoothed, "normalized": normalized,
                            "flat": flat, "scalogram": scal}


def save_image(img: TfImage, stem: str | Path, meta: dict | None = None) -> None:
    """Raw little-endian f32 pixels plus JSON sidecar and an 8-bit PGM preview."""
    stem = Path(stem)
    stem.with_suffix(".f32").write_bytes(np.ascontiguousarray(img.pixels, dtype="<f4").tobytes())
    h, w = img.pixels.shape
    stem.with_suffix(".meta.json").write_text(
        json.dumps({"h": h, "w": w, **(meta or {})}, indent=2, sort_keys=True) + "\n")
    write_pgm(img.pixels, stem.with_suffix(".pgm"))


def load_image(stem: str | Path) -> TfImage:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".meta.json").read_text())
    raw = np.frombuffer(stem.with_suffix(".f32").read_bytes(), dtype="<f4")
    if raw.size != meta["h"] * meta["w"]:
        raise DataError("image payload does not match its sidecar")
    return TfImage(raw.reshape(meta["h"], meta["w"]).astype(np.float64))
