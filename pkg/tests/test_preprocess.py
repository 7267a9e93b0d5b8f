"""Windowing, Butterworth filtering, normalization, artifact checks, band split."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import signal

from nsk.dataio import DEFAULT_BANDS, EegRecording
from nsk.errors import DataError
from nsk.preprocess import (
    Epoch,
    band_decompose,
    bandpass_array,
    butter_sos,
    butterworth_bandpass,
    db4_packet_level,
    normalize_epoch,
    reject_artifacts,
    segment,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def steady_amplitude(y, fs, f, skip):
    """Least-squares amplitude of a sinusoid at ``f`` over ``y[skip:]``."""
    t = np.arange(y.size)[skip:] / fs
    A = np.column_stack([np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)])
    coef, *_ = np.linalg.lstsq(A, y[skip:], rcond=None)
    return float(np.hypot(*coef))


class TestSegment:
    def test_thirty_epochs(self):
        rec = EegRecording("s", "healthy", 10.0, np.zeros((3000, 2)))
        assert len(segment(rec, 10.0)) == 30

    def test_shorter_than_window(self):
        rec = EegRecording("s", "healthy", 10.0, np.zeros((90, 2)))
        assert segment(rec, 10.0) == []

    def test_index_arithmetic(self):
        x = np.arange(100, dtype=float)[:, None]
        epochs = segment(EegRecording("s", "healthy", 4.0, x), 10.0)
        assert len(epochs) == 2
        np.testing.assert_array_equal(epochs[0].samples[:, 0], np.arange(40))
        np.testing.assert_array_equal(epochs[1].samples[:, 0], np.arange(40, 80))
        assert [e.window_index for e in epochs] == [0, 1]

    def test_zero_length_window(self):
        with pytest.raises(DataError):
            segment(EegRecording("s", "healthy", 1.0, np.zeros((4, 1))), 0.2)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 400), st.integers(1, 50))
    def test_concat_preserves_values(self, n, win):
        x = np.random.default_rng(n).standard_normal((n, 2))
        epochs = segment(EegRecording("s", "healthy", 1.0, x), float(win))
        assert len(epochs) == n // win
        if epochs:
            joined = np.concatenate([e.samples for e in epochs])
            np.testing.assert_array_equal(joined, x[:joined.shape[0]])


class TestButterworth:
    fs = 256.0

    def test_zero_in_zero_out(self, make_epoch):
        out = butterworth_bandpass(make_epoch(np.zeros((512, 3)), self.fs), 0.5, 50.0)
        assert np.all(out.samples == 0)

    @pytest.mark.parametrize("f", [0.5, 50.0])
    def test_single_pass_cutoff_gain(self, f):
        t = np.arange(int(240 * self.fs)) / self.fs
        y = bandpass_array(np.sin(2 * np.pi * f * t), 0.5, 50.0, self.fs, 3, zero_phase=False)
        gain = steady_amplitude(y, self.fs, f, skip=int(120 * self.fs))
        assert gain == pytest.approx(1 / np.sqrt(2), rel=0.01)

    def test_cutoff_gain_matches_analytic_response(self):
        sos = butter_sos(0.5, 50.0, self.fs, 3)
        _, h = signal.sosfreqz(sos, worN=[0.5, 50.0], fs=self.fs)
        np.testing.assert_allclose(np.abs(h), 1 / np.sqrt(2), rtol=1e-9)

    @pytest.mark.parametrize("zero_phase", [False, True])
    def test_passband_unity(self, zero_phase):
        t = np.arange(int(30 * self.fs)) / self.fs
        y = bandpass_array(np.sin(2 * np.pi * 10 * t), 0.5, 50.0, self.fs, 3, zero_phase)
        assert steady_amplitude(y, self.fs, 10, skip=int(10 * self.fs)) == pytest.approx(1, abs=0.02)

    def test_zero_phase_has_no_delay(self):
        t = np.arange(int(20 * self.fs)) / self.fs
        x = np.sin(2 * np.pi * 10 * t)
        y = bandpass_array(x, 5.0, 20.0, self.fs, 3, zero_phase=True)
        mid = slice(int(5 * self.fs), int(15 * self.fs))
        lag = np.argmax(signal.correlate(y[mid], x[mid], mode="full")) - (mid.stop - mid.start - 1)
        assert lag == 0

    @pytest.mark.parametrize("lo,hi", [(0.0, 10.0), (10.0, 5.0), (1.0, 128.0)])
    def test_invalid_edges(self, make_epoch, lo, hi):
        with pytest.raises(DataError):
            butterworth_bandpass(make_epoch(np.zeros((64, 2)), self.fs), lo, hi)

    def test_linearity(self, rng):
        x, y = rng.standard_normal((2, 1024, 3))
        a, b = 2.5, -0.75
        lhs = bandpass_array(a * x + b * y, 1.0, 40.0, self.fs)
        rhs = a * bandpass_array(x, 1.0, 40.0, self.fs) + b * bandpass_array(y, 1.0, 40.0, self.fs)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * np.max(np.abs(rhs))


class TestNormalize:
    def test_fixture(self, make_epoch):
        out = normalize_epoch(make_epoch([[1.0], [2.0], [3.0], [4.0]]))
        np.testing.assert_allclose(out.samples[:, 0], [-1.3416, -0.4472, 0.4472, 1.3416], atol=1e-4)

    def test_constant_channel_flagged(self, make_epoch):
        out = normalize_epoch(make_epoch([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0], [5.0, 3.0]]))
        np.testing.assert_array_equal(out.samples[:, 0], 0.0)
        assert out.degenerate_channels == (0,)

    @settings(max_examples=80, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(2, 60), st.integers(1, 4)), elements=finite))
    def test_unit_moments(self, x):
        out = normalize_epoch(Epoch("s", 0, 1.0, x))
        live = [c for c in range(x.shape[1]) if c not in out.degenerate_channels]
        for c in live:
            assert abs(out.samples[:, c].mean()) < 1e-12
            assert abs(out.samples[:, c].std() - 1) < 1e-12
        for c in out.degenerate_channels:
            assert np.all(out.samples[:, c] == 0)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(2, 60), st.integers(1, 4)), elements=finite))
    def test_idempotent(self, x):
        once = normalize_epoch(Epoch("s", 0, 1.0, x))
        twice = normalize_epoch(once)
        np.testing.assert_allclose(twice.samples, once.samples, atol=1e-9)


class TestArtifacts:
    def test_over_limit_dropped(self, make_epoch):
        x = np.zeros((10, 3))
        x[4, 1] = 151.0
        assert reject_artifacts(make_epoch(x)) == "drop"

    def test_zero_kept(self, make_epoch):
        assert reject_artifacts(make_epoch(np.zeros((10, 3)))) == "keep"

    @pytest.mark.parametrize("v", [150.0, -150.0])
    def test_boundary_inclusive(self, make_epoch, v):
        x = np.zeros((10, 3))
        x[2, 2] = v
        assert reject_artifacts(make_epoch(x)) == "keep"

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(2, 6)),
                  elements=st.floats(-300, 300)), st.randoms())
    def test_channel_permutation_invariant(self, x, r):
        perm = list(range(x.shape[1]))
        r.shuffle(perm)
        assert (reject_artifacts(Epoch("s", 0, 1.0, x))
                == reject_artifacts(Epoch("s", 0, 1.0, x[:, perm])))


class TestBandDecompose:
    fs = 256.0

    @pytest.mark.parametrize("method", ["bandpass", "db4_packet"])
    def test_five_entries_same_dims(self, rng, method):
        e = Epoch("s", 0, self.fs, rng.standard_normal((2560, 4)))
        bs = band_decompose(e, DEFAULT_BANDS, method)
        assert list(bs.bands) == [b[0] for b in DEFAULT_BANDS]
        assert all(b.samples.shape == e.samples.shape for b in bs.bands.values())

    @pytest.mark.parametrize("method", ["bandpass", "db4_packet"])
    def test_zero_epoch(self, method):
        bs = band_decompose(Epoch("s", 0, self.fs, np.zeros((2560, 2))), DEFAULT_BANDS, method)
        assert all(np.all(b.samples == 0) for b in bs.bands.values())

    def test_alpha_sinusoid_energy(self):
        t = np.arange(int(10 * self.fs)) / self.fs
        x = np.sin(2 * np.pi * 10 * t)[:, None] * np.ones((1, 2))
        bs = band_decompose(Epoch("s", 0, self.fs, x))
        energy = {name: float(np.sum(b.samples ** 2)) for name, b in bs.bands.items()}
        for name, en in energy.items():
            if name != "alpha":
                assert energy["alpha"] >= 10 * en, name

    def test_above_nyquist(self):
        with pytest.raises(DataError):
            band_decompose(Epoch("s", 0, 80.0, np.zeros((800, 2))), DEFAULT_BANDS)

    def test_packet_level_resolves_narrowest_band(self):
        level = db4_packet_level(2560, self.fs, DEFAULT_BANDS)
        assert (self.fs / 2) / 2 ** level <= 1.5

    def test_packet_bands_low_coherence(self, rng):
        e = Epoch("s", 0, self.fs, rng.standard_normal((int(60 * self.fs), 1)))
        bs = band_decompose(e, DEFAULT_BANDS, "db4_packet")
        worst = max(self._centre_coherence(bs))
        assert worst < 0.2

    def test_bandpass_leakage_at_band_centres(self):
        # |H_j(f_i)|^2 / |H_i(f_i)|^2 for every pair of bands
        for name_i, lo_i, hi_i in DEFAULT_BANDS:
            centre = 0.5 * (lo_i + hi_i)
            own = self._power_response(lo_i, hi_i, centre)
            for name_j, lo_j, hi_j in DEFAULT_BANDS:
                if name_j != name_i:
                    assert self._power_response(lo_j, hi_j, centre) < 0.2 * own, (name_i, name_j)

    def _power_response(self, lo, hi, f):
        # zero-phase filtering squares the single-pass magnitude
        _, h = signal.sosfreqz(butter_sos(lo, hi, self.fs, 3), worN=[f], fs=self.fs)
        return float(np.abs(h[0]) ** 4)

    def _centre_coherence(self, bs):
        names = list(bs.bands)
        for i, (_, lo_i, hi_i) in enumerate(DEFAULT_BANDS):
            for j, (_, lo_j, hi_j) in enumerate(DEFAULT_BANDS):
                if j <= i:
                    continue
                a = bs.bands[names[i]].samples[:, 0]
                b = bs.bands[names[j]].samples[:, 0]
                f, c = signal.coherence(a, b, fs=self.fs, nperseg=512)
                for centre in (0.5 * (lo_i + hi_i), 0.5 * (lo_j + hi_j)):
                    yield float(c[np.argmin(np.abs(f - centre))])
