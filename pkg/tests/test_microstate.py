"""GFP, peaks, polarity-invariant clustering, backfitting and state features."""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nsk.dataio import DEFAULT_BANDS, FEATURE_NAMES, parse_feature_column
from nsk.errors import DataError
from nsk.microstate import (
    GfpSeries,
    LabelSequence,
    MicrostateModel,
    backfit,
    backfit_array,
    build_feature_vector,
    extract_features,
    find_gfp_peaks,
    fit_microstates,
    gfp,
    gfp_values,
)
from nsk.preprocess import BandSet, Epoch

finite = st.floats(-1e3, 1e3, allow_nan=False)
# squares of these stay clear of the subnormal range
normal_range = st.one_of(st.just(0.0), st.floats(1e-100, 1e3), st.floats(-1e3, -1e-100))


def orthonormal_templates(k, n_channels, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n_channels, k))
    m -= m.mean(axis=0)
    q, _ = np.linalg.qr(m)
    t = q.T - q.T.mean(axis=1, keepdims=True)
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def maps_from(templates, n, seed, noise=0.0):
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, templates.shape[0], n)
    amp = rng.uniform(0.5, 2.0, n) * rng.choice([-1.0, 1.0], n)
    x = amp[:, None] * templates[idx]
    return x + noise * rng.standard_normal(x.shape), idx


def spatial_corr(a, b):
    a = a - a.mean()
    b = b - b.mean()
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def enumerate_features(labels, g, k, fs):
    """Direct per-segment enumeration of the state statistics."""
    out = np.zeros((k, 4))
    segs = [(s, len(list(run))) for s, run in itertools.groupby(labels.tolist())]
    n = len(labels)
    for s in range(k):
        lens = [length for state, length in segs if state == s]
        if not lens:
            continue
        total = sum(lens)
        out[s, 0] = total / len(lens) / fs * 1000.0
        out[s, 1] = len(lens) / (n / fs)
        out[s, 2] = total / n * 100.0
        out[s, 3] = g[labels == s].sum() / total
    return out


class TestGfp:
    def test_equal_channels(self, make_epoch):
        assert gfp(make_epoch([[3.0, 3.0, 3.0]])).values[0] == 0.0

    def test_two_channel_fixture(self, make_epoch):
        assert gfp(make_epoch([[1.0, -1.0]])).values[0] == 1.0

    def test_single_channel(self, make_epoch):
        with pytest.raises(DataError):
            gfp(make_epoch(np.zeros((5, 1))))

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(2, 8)), elements=finite),
           st.floats(-100, 100))
    def test_common_offset(self, x, c):
        np.testing.assert_allclose(gfp_values(x + c), gfp_values(x), atol=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(2, 8)), elements=normal_range),
           st.integers(-20, 20), st.sampled_from([1.0, -1.0]))
    def test_power_of_two_scaling_exact(self, x, e, sign):
        alpha = sign * 2.0 ** e
        np.testing.assert_array_equal(gfp_values(alpha * x), abs(alpha) * gfp_values(x))

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(2, 8)), elements=finite),
           st.floats(-50, 50).filter(lambda a: abs(a) > 1e-3))
    def test_scaling(self, x, alpha):
        tol = 1e-12 * abs(alpha) * max(np.max(np.abs(x)), 1.0)
        np.testing.assert_allclose(gfp_values(alpha * x), abs(alpha) * gfp_values(x),
                                   rtol=1e-12, atol=tol)


class TestPeaks:
    def test_increasing(self):
        assert find_gfp_peaks(np.arange(10.0)).size == 0

    def test_two_peaks(self):
        assert find_gfp_peaks([0, 1, 0, 2, 0]).tolist() == [1, 3]

    def test_plateau_first_sample(self):
        assert find_gfp_peaks([0, 1, 1, 0]).tolist() == [1]

    def test_shelf_is_not_peak(self):
        assert find_gfp_peaks([0, 1, 1, 2, 0]).tolist() == [3]

    def test_short(self):
        assert find_gfp_peaks([1.0, 2.0]).size == 0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=3, max_size=40))
    def test_matches_enumeration(self, v):
        expected = []
        for t in range(1, len(v) - 1):
            # walk over the plateau starting at t
            if v[t] == v[t - 1]:
                continue
            end = t
            while end + 1 < len(v) and v[end + 1] == v[t]:
                end += 1
            if end + 1 < len(v) and v[t] > v[t - 1] and v[t] > v[end + 1]:
                expected.append(t)
        assert find_gfp_peaks(v).tolist() == expected


class TestFit:
    def test_recovers_two_orthogonal_templates(self):
        truth = orthonormal_templates(2, 8, 0)
        maps, _ = maps_from(truth, 200, 1)
        model = fit_microstates(maps, 2, seed=0)
        for t in truth:
            assert max(abs(spatial_corr(t, m)) for m in model.templates) > 0.999

    def test_four_templates_gev(self):
        truth = orthonormal_templates(4, 16, 2)
        maps, _ = maps_from(truth, 400, 3, noise=0.02)
        assert fit_microstates(maps, 4, seed=0).gev >= 0.99

    def test_sign_flipped_copies(self):
        truth = orthonormal_templates(3, 8, 4)
        maps, _ = maps_from(truth, 120, 5, noise=0.1)
        a = fit_microstates(maps, 3, seed=9)
        b = fit_microstates(-maps, 3, seed=9)
        np.testing.assert_allclose(np.abs(a.templates), np.abs(b.templates), atol=1e-12)
        np.testing.assert_array_equal(backfit_array(a.templates, maps),
                                      backfit_array(b.templates, maps))

    def test_invariants(self, rng):
        model = fit_microstates(rng.standard_normal((80, 6)), 4, seed=1)
        np.testing.assert_allclose(np.linalg.norm(model.templates, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(model.templates.sum(axis=1), 0.0, atol=1e-12)
        assert 0.0 <= model.gev <= 1.0
        assert model.labels == "ABCD"

    def test_bit_deterministic(self, rng):
        maps = rng.standard_normal((60, 8))
        a = fit_microstates(maps, 5, seed=42)
        b = fit_microstates(maps, 5, seed=42)
        assert a.templates.tobytes() == b.templates.tobytes() and a.gev == b.gev

    def test_ordered_by_contribution(self):
        truth = orthonormal_templates(3, 8, 6)
        rng = np.random.default_rng(7)
        idx = np.repeat([2, 0, 1], [60, 25, 10])
        maps = truth[idx] * rng.uniform(0.5, 1.5, idx.size)[:, None]
        model = fit_microstates(maps, 3, seed=0)
        order = [int(np.argmax([abs(spatial_corr(m, t)) for t in truth])) for m in model.templates]
        assert order == [2, 0, 1]

    def test_too_few_maps(self):
        with pytest.raises(DataError):
            fit_microstates(np.ones((3, 4)) * np.arange(4), 4)

    def test_all_flat(self):
        with pytest.raises(DataError):
            fit_microstates(np.ones((10, 4)), 2)


class TestBackfit:
    def test_template_and_negation(self):
        t = orthonormal_templates(4, 8, 0)
        m = MicrostateModel(4, t, 1.0)
        e = Epoch("s", 0, 1.0, np.vstack([t, -t]))
        assert backfit(m, e).labels.tolist() == [0, 1, 2, 3, 0, 1, 2, 3]

    def test_brute_force(self, rng):
        t = rng.standard_normal((5, 8))
        x = rng.standard_normal((10, 8))
        expected = [int(np.argmax([abs(np.corrcoef(s, tj)[0, 1]) for tj in t])) for s in x]
        assert backfit_array(t, x).tolist() == expected

    def test_tie_goes_to_lowest(self):
        t = np.array([[1.0, -1.0, 0.0], [1.0, -1.0, 0.0]])
        assert backfit_array(t, np.array([[2.0, -2.0, 0.0]])).tolist() == [0]

    def test_channel_mismatch(self):
        with pytest.raises(DataError):
            backfit(MicrostateModel(2, np.eye(2, 4), 1.0), Epoch("s", 0, 1.0, np.zeros((3, 5))))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
    def test_sign_and_scale_invariant(self, seed, scale):
        rng = np.random.default_rng(seed)
        t = rng.standard_normal((4, 6))
        x = rng.standard_normal((30, 6))
        base = backfit_array(t, x)
        np.testing.assert_array_equal(backfit_array(t, -x), base)
        # positive rescaling by a power of two keeps every product exact
        np.testing.assert_array_equal(backfit_array(t, 2.0 ** 7 * x), base)
        np.testing.assert_array_equal(backfit_array(t, scale * x), base)


class TestFeatures:
    def test_hand_fixture(self):
        lab = LabelSequence(np.array([0, 0, 1, 1, 1, 0]), 1.0)
        f = extract_features(lab, GfpSeries(1.0, np.ones(6)), 2)
        np.testing.assert_allclose(f[0, :3], [1500.0, 1 / 3, 50.0])
        np.testing.assert_allclose(f[1, :3], [3000.0, 1 / 6, 50.0])

    def test_single_state(self):
        f = extract_features(LabelSequence(np.zeros(250, int), 125.0), GfpSeries(125.0, np.full(250, 2.0)), 3)
        np.testing.assert_allclose(f[0], [2000.0, 0.5, 100.0, 2.0])
        np.testing.assert_array_equal(f[1:], 0.0)

    def test_mean_gfp(self):
        lab = LabelSequence(np.array([1, 0, 1]), 1.0)
        f = extract_features(lab, GfpSeries(1.0, np.array([2.0, 5.0, 4.0])), 2)
        assert f[1, 3] == 3.0 and f[0, 3] == 5.0

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            extract_features(LabelSequence(np.zeros(3, int), 1.0), GfpSeries(1.0, np.zeros(4)), 2)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 7).flatmap(
        lambda k: st.tuples(st.just(k), st.lists(st.integers(0, k - 1), min_size=1, max_size=300))),
        st.sampled_from([1.0, 128.0, 250.0, 1200.0]))
    def test_coverage_identities(self, k_labels, fs):
        k, labels = k_labels
        lab = np.array(labels)
        f = extract_features(LabelSequence(lab, fs), GfpSeries(fs, np.ones(lab.size)), k)
        assert abs(f[:, 2].sum() - 100.0) < 1e-9
        np.testing.assert_allclose(f[:, 1] * f[:, 0] / 1000.0 * 100.0, f[:, 2], atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 7).flatmap(
        lambda k: st.tuples(st.just(k), st.lists(st.integers(0, k - 1), min_size=1, max_size=200))),
        st.integers(0, 2**31))
    def test_enumeration_oracle(self, k_labels, seed):
        k, labels = k_labels
        lab = np.array(labels)
        g = np.random.default_rng(seed).integers(0, 1000, lab.size).astype(float)
        got = extract_features(LabelSequence(lab, 128.0), GfpSeries(128.0, g), k)
        np.testing.assert_array_equal(got, enumerate_features(lab, g, k, 128.0))


class TestFeatureVector:
    fs = 128.0

    def _bandset(self, x, bands=DEFAULT_BANDS):
        src = Epoch("s", 0, self.fs, x)
        return BandSet(src, {name: Epoch("s", 0, self.fs, x) for name, _, _ in bands})

    def test_width_440(self, rng):
        fv = build_feature_vector(self._bandset(rng.standard_normal((1280, 8))), seed=0, n_init=2)
        assert fv.values.shape == (440,) and len(fv.columns) == 440
        assert np.all(np.isfinite(fv.values))
        per_k = {}
        for name in fv.columns:
            _, k, _, feature = parse_feature_column(name)
            assert feature in FEATURE_NAMES
            per_k[k] = per_k.get(k, 0) + 1
        assert per_k == {4: 80, 5: 100, 6: 120, 7: 140}

    def test_single_k(self, rng):
        fv = build_feature_vector(self._bandset(rng.standard_normal((640, 8))), ks=[4], n_init=2)
        assert fv.values.shape == (80,)

    def test_zero_epoch(self):
        fv = build_feature_vector(self._bandset(np.zeros((640, 8))), n_init=2)
        assert fv.values.shape == (440,) and np.all(fv.values == 0)

    def test_seeded(self, rng):
        bs = self._bandset(rng.standard_normal((640, 8)))
        a = build_feature_vector(bs, ks=[4, 5], seed=3, n_init=3)
        b = build_feature_vector(bs, ks=[4, 5], seed=3, n_init=3)
        assert a.values.tobytes() == b.values.tobytes()

    def test_coverage_per_band_and_k(self, rng):
        fv = build_feature_vector(self._bandset(rng.standard_normal((640, 8))), n_init=2)
        cov = {}
        for name, v in zip(fv.columns, fv.values):
            band, k, _, feature = parse_feature_column(name)
            if feature == "coverage_pct":
                cov[(band, k)] = cov.get((band, k), 0.0) + v
        assert all(abs(total - 100.0) < 1e-9 for total in cov.values())
