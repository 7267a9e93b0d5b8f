"""Intensity scaling, 3x3 median, CLAHE and max-difference maps."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nsk.dataio import FmriSeries
from nsk.errors import DataError
from nsk.fmriprep import (
    clahe_3x3,
    group_slice_table,
    max_diff_map,
    median_filter_3x3,
    normalize_intensity,
    preprocess_series,
    preprocess_slice,
    slice_stats,
    write_slice_table,
)

unit_images = arrays(np.float64, st.tuples(st.integers(1, 24), st.integers(1, 24)),
                     elements=st.floats(0, 1))


def median_oracle(img):
    h, w = img.shape
    out = np.empty_like(img)
    for r in range(h):
        for c in range(w):
            vals = [img[min(max(r + dr, 0), h - 1), min(max(c + dc, 0), w - 1)]
                    for dr in (-1, 0, 1) for dc in (-1, 0, 1)]
            out[r, c] = sorted(vals)[4]
    return out


def equalize_oracle(img):
    """Plain histogram equalization over 256 bins."""
    bins = np.minimum((img * 256).astype(int), 255)
    cdf = np.cumsum(np.bincount(bins.ravel(), minlength=256)) / img.size
    return cdf[bins]


class TestNormalizeIntensity:
    def test_endpoints(self):
        np.testing.assert_array_equal(normalize_intensity([0, 255]), [0.0, 1.0])

    def test_out_of_range(self):
        with pytest.raises(DataError):
            normalize_intensity([256.0])
        with pytest.raises(DataError):
            normalize_intensity([-1.0])

    def test_quantization_bound(self, rng):
        img = rng.random((32, 32))
        back = normalize_intensity(np.round(img * 255))
        assert np.max(np.abs(back - img)) <= 1 / 510 + 1e-15


class TestMedian:
    def test_fixture(self):
        img = np.array([[1, 2, 3], [4, 100, 6], [7, 8, 9]], dtype=float)
        assert median_filter_3x3(img)[1, 1] == 6

    def test_constant_and_single_pixel(self):
        np.testing.assert_array_equal(median_filter_3x3(np.full((5, 4), 0.3)), 0.3)
        np.testing.assert_array_equal(median_filter_3x3([[0.7]]), [[0.7]])

    @settings(max_examples=40, deadline=None)
    @given(unit_images)
    def test_matches_oracle(self, img):
        out = median_filter_3x3(img)
        np.testing.assert_array_equal(out, median_oracle(img))
        assert out.shape == img.shape and 0 <= out.min() and out.max() <= 1

    @pytest.mark.parametrize("kind", ["row", "column", "diagonal", "blocks"])
    def test_binary_root_images_fixed(self, kind):
        r, c = np.mgrid[0:12, 0:15]
        img = {"row": r >= 5, "column": c >= 7, "diagonal": r + c >= 12,
               "blocks": (r // 4 + c // 5) % 2 == 0}[kind].astype(float)
        once = median_filter_3x3(img)
        np.testing.assert_array_equal(median_filter_3x3(once)[1:-1, 1:-1], once[1:-1, 1:-1])

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(3, 12), st.integers(3, 12)),
                  elements=st.sampled_from([0.0, 1.0])))
    def test_binary_iterates_to_root(self, img):
        cur = img
        for _ in range(img.size):
            nxt = median_filter_3x3(cur)
            if np.array_equal(nxt, cur):
                break
            cur = nxt
        np.testing.assert_array_equal(median_filter_3x3(cur), cur)


class TestClahe:
    def test_constant_identity(self):
        np.testing.assert_array_equal(clahe_3x3(np.full((9, 9), 0.42)), 0.42)

    def test_two_valued_single_tile(self):
        img = np.array([[0.25, 0.75], [0.75, 0.25]])
        out = clahe_3x3(img, clip=np.inf, tiles=(1, 1))
        np.testing.assert_allclose(out[img == 0.25], 0.5)
        np.testing.assert_allclose(out[img == 0.75], 1.0)

    @settings(max_examples=30, deadline=None)
    @given(unit_images)
    def test_single_tile_unclipped_is_equalization(self, img):
        out = clahe_3x3(img, clip=np.inf, tiles=(1, 1))
        expected = img if img.max() == img.min() else equalize_oracle(img)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(unit_images, st.floats(1.0, 8.0))
    def test_range_and_dims(self, img, clip):
        out = clahe_3x3(img, clip)
        assert out.shape == img.shape and out.min() >= 0 and out.max() <= 1

    def test_clip_limits_contrast(self, rng):
        img = np.clip(0.5 + 0.01 * rng.standard_normal((48, 48)), 0, 1)
        loose = clahe_3x3(img, clip=np.inf)
        tight = clahe_3x3(img, clip=1.5)
        assert tight.std() < loose.std()

    def test_invalid(self):
        with pytest.raises(DataError):
            clahe_3x3(np.zeros((4, 4)), clip=0.5)
        with pytest.raises(DataError):
            clahe_3x3(np.full((4, 4), 2.0))

    def test_preprocess_slice(self, rng):
        out = preprocess_slice(rng.integers(0, 256, (20, 20)).astype(float))
        assert out.shape == (20, 20) and 0 <= out.min() and out.max() <= 1


class TestDiffMaps:
    def _series(self, vox, normalized=True):
        return FmriSeries("v", "healthy", vox, normalized=normalized)

    def test_time_constant(self, rng):
        frame = rng.random((1, 3, 5, 5))
        dm = max_diff_map(self._series(np.repeat(frame, 6, axis=0)))
        assert np.all(dm.maps == 0)

    def test_single_excursion(self):
        vox = np.full((5, 1, 4, 4), 0.2)
        vox[3, 0, 1, 2] += 0.3
        dm = max_diff_map(self._series(vox), slice_index=0)
        expected = np.zeros((4, 4))
        expected[1, 2] = 0.3
        np.testing.assert_allclose(dm.maps, expected, atol=1e-15)

    def test_requires_normalized(self):
        with pytest.raises(DataError):
            max_diff_map(self._series(np.zeros((2, 1, 2, 2)), normalized=False))

    def test_requires_two_timepoints(self):
        with pytest.raises(DataError):
            max_diff_map(self._series(np.zeros((1, 1, 2, 2))))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.randoms())
    def test_later_timepoint_permutation(self, seed, r):
        vox = np.random.default_rng(seed).random((6, 2, 3, 3))
        perm = list(range(1, 6))
        r.shuffle(perm)
        a = max_diff_map(self._series(vox)).maps
        b = max_diff_map(self._series(vox[[0, *perm]])).maps
        np.testing.assert_array_equal(a, b)

    def test_slice_stats(self):
        mean, sd = slice_stats(np.array([[0, 0.2], [0.4, 0.2]]))
        assert mean == pytest.approx(0.2) and sd == pytest.approx(np.sqrt(0.02), abs=1e-12)
        assert slice_stats(np.zeros((3, 3))) == (0.0, 0.0)

    def test_group_table(self, tmp_path, rng):
        maps = {g: [max_diff_map(self._series(rng.random((3, 4, 5, 5)))) for _ in range(2)]
                for g in ("healthy", "tinnitus")}
        rows = group_slice_table(maps)
        assert [(r["slice"], r["group"]) for r in rows[:2]] == [(1, "healthy"), (1, "tinnitus")]
        assert len(rows) == 8
        avg = np.mean([m.maps[2] for m in maps["tinnitus"]], axis=0)
        row = next(r for r in rows if r["slice"] == 3 and r["group"] == "tinnitus")
        assert row["mean"] == pytest.approx(avg.mean()) and row["sd"] == pytest.approx(avg.std())
        write_slice_table(rows, tmp_path / "t.csv")
        assert (tmp_path / "t.csv").read_text().splitlines()[0] == "slice,group,mean,sd"

    def test_series_preprocessing(self, rng):
        raw = FmriSeries("v", "tinnitus", rng.integers(0, 256, (2, 2, 8, 8)).astype(float))
        out = preprocess_series(raw)
        assert out.normalized and out.voxels.shape == raw.voxels.shape
        assert 0 <= out.voxels.min() and out.voxels.max() <= 1
