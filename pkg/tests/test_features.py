import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eegmove.dsp import PHYSIONET_LABELS, make_montage
from eegmove.features import (
    FEATURE_NAMES,
    FeatureDataset,
    SegmentSpec,
    band_powers,
    feature_table,
    featurize_recording,
    featurize_segment,
    psd,
    segment,
    time_features,
)

FS = 160.0


# Naive per-sample oracles, written with plain Python loops.


def oracle_time(x, fs):
    n = len(x)
    mean = sum(x) / n
    m2 = sum((v - mean) ** 2 for v in x) / n
    m3 = sum((v - mean) ** 3 for v in x) / n
    m4 = sum((v - mean) ** 4 for v in x) / n
    s2 = sum((v - mean) ** 2 for v in x) / (n - 1)
    skew = m3 / s2**1.5
    kurt = m4 / m2**2 - 3
    zc = sum(1 for a, b in zip(x[:-1], x[1:]) if a * b < 0)
    h = 1 / fs
    y = [abs(v) for v in x]
    intervals = n - 1
    simpson_end = intervals if intervals % 2 == 0 else intervals - 1
    area = 0.0
    for i in range(0, simpson_end, 2):
        area += h / 3 * (y[i] + 4 * y[i + 1] + y[i + 2])
    if simpson_end != intervals:
        area += h / 2 * (y[-2] + y[-1])
    return [mean, m2, skew, kurt, zc, area, max(x) - min(x)]


def oracle_relpow(x, fs):
    n = len(x)
    power = []
    for k in range(n // 2 + 1):
        re = sum(v * math.cos(2 * math.pi * k * j / n) for j, v in enumerate(x))
        im = sum(v * math.sin(2 * math.pi * k * j / n) for j, v in enumerate(x))
        p = (re * re + im * im) / (n * fs)
        if 0 < k < n / 2:
            p *= 2
        power.append((k * fs / n, p))
    total = sum(p for f, p in power if 0.5 <= f < 70)
    return [sum(p for f, p in power if lo <= f < hi) / total for lo, hi in ((0.5, 4), (4, 8), (8, 12), (12, 30))]


class TestSegmentSpec:
    def test_default_geometry(self):
        spec = SegmentSpec()
        assert (spec.window, spec.hop, spec.n_samples) == (80, 40, 320)

    @pytest.mark.parametrize("size, window", [(0.25, 10), (0.5, 20), (1.0, 40), (1.75, 70)])
    def test_sweep_sizes(self, size, window):
        spec = SegmentSpec(segment_len=size)
        assert spec.window == window
        assert spec.n_samples == int(size * FS)

    def test_non_integer_window(self):
        with pytest.raises(ValueError, match="non-integer window"):
            SegmentSpec(segment_len=0.33).window

    def test_segment_windows(self):
        data = np.arange(2 * 400.0).reshape(2, 400)
        out = segment(data, SegmentSpec(), start=10)
        assert out.shape == (7, 2, 80)
        np.testing.assert_array_equal(out[3, 1], data[1, 130:210])

    def test_segment_too_short(self):
        with pytest.raises(ValueError, match="segment needs 320"):
            segment(np.zeros((1, 300)), SegmentSpec())


class TestTimeFeatures:
    def test_matches_oracle(self):
        gen = np.random.default_rng(0)
        x = gen.standard_normal((50, 80)) + gen.uniform(-0.5, 0.5, (50, 1))
        got = time_features(x, FS)
        want = np.array([oracle_time(list(row), FS) for row in x])
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("n", [4, 5, 80, 81])
    def test_simpson_parity(self, n):
        x = np.random.default_rng(n).standard_normal(n)
        assert time_features(x, FS)[5] == pytest.approx(oracle_time(list(x), FS)[5], rel=1e-12)

    def test_simpson_exact_for_quadratic(self):
        t = np.arange(81) / FS
        area = time_features(1 + t**2, FS)[5]
        assert area == pytest.approx(t[-1] + t[-1] ** 3 / 3, rel=1e-12)

    def test_constant_window(self):
        feats = time_features(np.full(80, 0.3), FS)
        np.testing.assert_allclose(feats, [0.3, 0, 0, 0, 0, 0.3 * 79 / FS, 0], atol=1e-15)

    def test_gaussian_moments(self):
        x = np.random.default_rng(1).standard_normal(400_000)
        _, var, skew, kurt, *_ = time_features(x, FS)
        assert var == pytest.approx(1, abs=0.01)
        assert abs(skew) < 0.02 and abs(kurt) < 0.03

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, 80, elements=st.floats(-10, 10, allow_nan=False)), st.floats(-5, 5))
    def test_shift_invariants(self, x, c):
        a = time_features(x, FS)
        b = time_features(x + c, FS)
        assert b[0] == pytest.approx(a[0] + c, abs=1e-9)
        np.testing.assert_allclose(b[[1, 6]], a[[1, 6]], atol=1e-9)


class TestSpectrum:
    def test_parseval(self):
        x = np.random.default_rng(2).standard_normal((4, 80))
        freqs, p = psd(x, FS)
        np.testing.assert_allclose(p.sum(-1) * FS / 80, (x**2).mean(-1), rtol=1e-12)

    @pytest.mark.parametrize("f, band", [(2.0, 0), (6.0, 1), (10.0, 2), (20.0, 3)])
    def test_pure_tone_band(self, f, band):
        x = np.sin(2 * np.pi * f * np.arange(80) / FS)
        rel = band_powers(*psd(x, FS))
        assert rel[band] == pytest.approx(1.0, abs=1e-9)
        assert np.delete(rel, band).max() < 1e-9

    def test_relpow_matches_oracle(self):
        x = np.random.default_rng(3).standard_normal((10, 80))
        got = band_powers(*psd(x, FS))
        want = np.array([oracle_relpow(list(row), FS) for row in x])
        np.testing.assert_allclose(got, want, rtol=1e-9)

    def test_relative_to_bands_sums_to_one(self):
        x = np.random.default_rng(4).standard_normal((10, 80))
        rel = band_powers(*psd(x, FS), relative_to="bands")
        np.testing.assert_allclose(rel.sum(-1), 1.0, rtol=1e-12)

    def test_zero_power(self):
        np.testing.assert_array_equal(band_powers(*psd(np.zeros(80), FS)), 0.0)

    def test_bad_denominator(self):
        with pytest.raises(ValueError, match="relative_to"):
            band_powers(*psd(np.ones(80), FS), relative_to="all")

    def test_too_short(self):
        with pytest.raises(ValueError, match="at least 8"):
            psd(np.ones(5), FS)


class TestFeaturize:
    def test_layout(self):
        windows = np.random.default_rng(5).standard_normal((7, 27, 80))
        out = featurize_segment(windows, FS)
        assert out.shape == (7, 297)
        np.testing.assert_allclose(out[2, 5 * 11 : 5 * 11 + 7], time_features(windows[2, 5], FS))

    def test_feature_table(self):
        table = feature_table(make_montage(PHYSIONET_LABELS))
        assert len(table) == 297
        assert table[0] == (0, "AF3-AF4", "mean")
        assert table[296] == (296, "TP7-TP8", "relpow_beta")
        assert table[11 * 16 + 9] == (185, "FT7-FT8", FEATURE_NAMES[9])

    def test_recording(self, small_recordings):
        ds = featurize_recording(small_recordings[0], SegmentSpec(), offsets=(0.0, 1.0))
        assert ds.X.shape == (10, 7, 297)
        assert set(ds.offsets) == {0.0, 1.0}
        assert np.all(np.isfinite(ds.X))

    def test_dataset_shapes(self, small_dataset):
        assert small_dataset.X.shape == (60, 7, 297)
        assert sorted(set(small_dataset.y)) == [0, 1]
        assert len(set(small_dataset.trial_ids)) == 60

    def test_dataset_validation(self):
        with pytest.raises(ValueError, match="inconsistent"):
            FeatureDataset(np.zeros((2, 7, 297)), np.zeros(3), np.zeros(2), ["a", "b"], np.zeros(2))
