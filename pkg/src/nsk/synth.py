"""Synthetic two-group EEG with known microstate dynamics.

Every band carries its own semi-Markov state sequence. A state holds one
fixed scalp topography for a gamma-distributed dwell time and is then
replaced by a different state drawn in proportion to the state weights. The
band signal is the active topography, scaled by its state amplitude and
modulated by a carrier at the band centre. Group B (tinnitus) applies the
configured effects on top of the shared generating distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import DEFAULT_BANDS, EegRecording, write_recording
from .errors import ConfigError

EFFECT_FEATURES = ("occurrence", "duration")
DWELL_SHAPE = 4.0

# Occurrence-weight multiplier for state A in every band, calibrated by
# Monte Carlo (see calibrate_effect) so that alpha.k4.A.occurrence_per_s
# separates 40 + 40 default subjects by Cohen's d = 2.0.
CALIBRATED_OCCURRENCE_MULTIPLIER = 1.7


@dataclass(frozen=True)
class Effect:
    """Group-B shift of one generating parameter.

    ``feature`` is ``occurrence`` (the state's selection weight is scaled, so
    it is entered more often at unchanged dwell time) or ``duration`` (its
    mean dwell time is scaled). ``band`` may be ``"*"`` for every band.
    """

    band: str
    state: int
    feature: str
    multiplier: float


@dataclass(frozen=True)
class SynthSpec:
    n_per_group: int = 40
    n_channels: int = 16
    fs_hz: float = 128.0
    duration_s: float = 30.0
    k_true: int = 4
    effects: tuple = ()
    noise_sd: float = 1.0
    seed: int = 0
    template_seed: int = 0
    mean_dwell_s: float = 0.2
    amplitude_uv: float = 10.0
    state_weights: tuple = (0.15, 0.3, 0.3, 0.25)
    state_amplitudes: tuple = (1.5, 1.0, 1.0, 1.0)
    bands: tuple = field(default=DEFAULT_BANDS)

    def validate(self) -> "SynthSpec":
        if self.n_per_group < 2:
            raise ConfigError("n_per_group must be at least 2")
        if self.n_channels < 2:
            raise ConfigError("n_channels must be at least 2")
        if not self.fs_hz > 0 or not self.duration_s > 0:
            raise ConfigError("fs_hz and duration_s must be positive")
        if not 2 <= self.k_true <= self.n_channels - 1:
            raise ConfigError("k_true must lie in 2..n_channels-1")
        if len(self.state_weights) != self.k_true or min(self.state_weights) <= 0:
            raise ConfigError("state_weights needs k_true positive entries")
        if len(self.state_amplitudes) != self.k_true or min(self.state_amplitudes) <= 0:
            raise ConfigError("state_amplitudes needs k_true positive entries")
        if self.noise_sd < 0 or self.amplitude_uv < 0 or not self.mean_dwell_s > 0:
            raise ConfigError("noise_sd, amplitude_uv must be >= 0 and mean_dwell_s > 0")
        names = [b[0] for b in self.bands]
        for _, lo, hi in self.bands:
            if not 0 < lo < hi < self.fs_hz / 2:
                raise ConfigError(f"band {lo}-{hi} Hz is invalid at fs={self.fs_hz}")
        for eff in self.effects:
            if eff.band != "*" and eff.band not in names:
                raise ConfigError(f"effect targets unknown band {eff.band!r}")
            if not 0 <= eff.state < self.k_true:
                raise ConfigError(f"effect targets state {eff.state} outside 0..{self.k_true - 1}")
            if eff.feature not in EFFECT_FEATURES:
                raise ConfigError(f"effect feature must be one of {EFFECT_FEATURES}")
            if not eff.multiplier > 0:
                raise ConfigError("effect multiplier must be positive")
        return self

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.fs_hz))


def occurrence_effect(multiplier: float = CALIBRATED_OCCURRENCE_MULTIPLIER, state: int = 0,
                      band: str = "*") -> tuple:
    return (Effect(band, state, "occurrence", float(multiplier)),)


def true_templates(spec: SynthSpec) -> np.ndarray:
    """Orthonormal, channel-centred generating topographies, (k_true, n_channels).

    They depend on ``template_seed`` only, so every subject seed shares one
    scalp geometry.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.template_seed, spawn_key=(2, 0)))
    m = rng.standard_normal((spec.k_true, spec.n_channels))
    m -= m.mean(axis=1, keepdims=True)
    q, _ = np.linalg.qr(m.T)
    t = q.T[:spec.k_true]
    t -= t.mean(axis=1, keepdims=True)
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def _band_params(spec: SynthSpec, band: str, group: int) -> tuple[np.ndarray, np.ndarray]:
    weights = np.array(spec.state_weights, dtype=np.float64)
    dwell = np.full(spec.k_true, spec.mean_dwell_s)
    if group == 1:
        for eff in spec.effects:
            if eff.band not in ("*", band):
                continue
            if eff.feature == "occurrence":
                weights[eff.state] *= eff.multiplier
            else:
                dwell[eff.state] *= eff.multiplier
    return weights / weights.sum(), dwell


def state_sequence(rng: np.random.Generator, n: int, fs_hz: float, weights, dwell_s) -> np.ndarray:
    """Semi-Markov labels: no self-transitions, gamma dwell times (>= 1 sample)."""
    weights = np.asarray(weights, dtype=np.float64)
    k = weights.size
    labels = np.empty(n, dtype=np.int64)
    state = int(rng.choice(k, p=weights))
    t = 0
    while t < n:
        length = max(1, int(round(rng.gamma(DWELL_SHAPE, dwell_s[state] / DWELL_SHAPE) * fs_hz)))
        labels[t:t + length] = state
        t += length
        p = weights.copy()
        p[state] = 0.0
        state = int(rng.choice(k, p=p / p.sum()))
    return labels


def synth_subject(spec: SynthSpec, group: int, index: int, templates=None) -> tuple[EegRecording, dict]:
    """One recording plus its generating label sequences per band."""
    templates = true_templates(spec) if templates is None else templates
    templates = templates * np.asarray(spec.state_amplitudes)[:, None]
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(group, index)))
    n = spec.n_samples
    t = np.arange(n) / spec.fs_hz
    x = np.zeros((n, spec.n_channels))
    truth = {}
    for name, lo, hi in spec.bands:
        weights, dwell = _band_params(spec, name, group)
        labels = state_sequence(rng, n, spec.fs_hz, weights, dwell)
        phase = rng.uniform(0.0, 2 * np.pi)
        carrier = spec.amplitude_uv * np.cos(2 * np.pi * 0.5 * (lo + hi) * t + phase)
        x += carrier[:, None] * templates[labels]
        truth[name] = labels
    x += spec.noise_sd * rng.standard_normal(x.shape)
    prefix, label = ("h", "healthy") if group == 0 else ("t", "tinnitus")
    rec = EegRecording(f"{prefix}{index:03d}", label, float(spec.fs_hz), x)
    return rec, truth


def synth_eeg(spec: SynthSpec) -> list[EegRecording]:
    """All healthy recordings followed by all tinnitus recordings."""
    spec.validate()
    templates = true_templates(spec)
    return [synth_subject(spec, g, i, templates)[0]
            for g in (0, 1) for i in range(spec.n_per_group)]


def write_synth(spec: SynthSpec, out_dir: str | Path, format: str = "eegr") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for rec in synth_eeg(spec):
        path = out_dir / f"{rec.subject_id}.{format}"
        write_recording(rec, path, format=format)
        paths.append(path)
    return paths


def spec_from_dict(raw: dict) -> SynthSpec:
    raw = dict(raw)
    try:
        effects = tuple(Effect(**e) for e in raw.pop("effects", ()))
        if "bands" in raw:
            raw["bands"] = tuple((str(n), float(lo), float(hi)) for n, lo, hi in raw["bands"])
        for key in ("state_weights", "state_amplitudes"):
            if key in raw:
                raw[key] = tuple(float(w) for w in raw[key])
        return SynthSpec(effects=effects, **raw).validate()
    except TypeError as exc:
        raise ConfigError(f"invalid synth spec: {exc}") from None


TARGET_FEATURE = ("alpha", 4, "A", "occurrence_per_s")


def measure_target_d(spec: SynthSpec, target=TARGET_FEATURE, cfg=None) -> float:
    """Cohen's d (group B minus A) of one feature on subject-mean window features.

    Only the target band and k are computed, which gives the same feature
    distribution as the full pipeline at a fraction of the cost.
    """
    from dataclasses import replace

    from .dataio import PipelineConfig, feature_column
    from .eval.stats import cohens_d
    from .pipeline import build_feature_matrix, subject_means

    band, k, state, feature = target
    edges = {b[0]: b for b in spec.bands}[band]
    cfg = replace(cfg or PipelineConfig(), bands=[list(edges)], microstate_ks=[k])
    fm, _ = build_feature_matrix(synth_eeg(spec), cfg)
    _, y, X = subject_means(fm)
    j = fm.columns.index(feature_column(band, k, state, feature))
    return cohens_d(X[y == 1, j], X[y == 0, j])


def calibrate_effect(base: SynthSpec, multipliers, seeds, target_d: float = 2.0,
                     target=TARGET_FEATURE) -> tuple[float, dict]:
    """Monte Carlo calibration of the occurrence multiplier.

    Measures the mean d over ``seeds`` at every multiplier and linearly
    interpolates the multiplier whose mean d equals ``target_d``.
    """
    from dataclasses import replace

    table = {}
    for m in multipliers:
        ds = [measure_target_d(replace(base, seed=s, effects=occurrence_effect(m)), target)
              for s in seeds]
        table[float(m)] = float(np.mean(ds))
    ms = np.array(sorted(table))
    means = np.array([table[m] for m in ms])
    if not means.min() <= target_d <= means.max():
        raise ConfigError(f"target d={target_d} outside the measured range {means.min():.2f}"
                          f"..{means.max():.2f}")
    order = np.argsort(means)
    return float(np.interp(target_d, means[order], ms[order])), table
