"""Extent extraction: smoothing, thresholding, gap closing, TLOP, SNR."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hrrplab.analysis import (MaskParams, activation_mask, estimate_snr_db,
                              lrp_meters, pearson_r, smooth_uniform, tlop)
from hrrplab.core import RangeProfile

RAW = MaskParams(window=1, threshold_frac=0.5, max_gap=14)


def profile(values, delta_r=1.5):
    return RangeProfile(np.asarray(values, dtype=float), delta_r)


class TestSmoothUniform:
    def test_window_one_is_identity(self):
        x = np.array([3.0, 0.0, 5.0, 1.0])
        assert smooth_uniform(x, 1).tolist() == x.tolist()

    def test_interior_mean_and_edge_truncation(self):
        x = np.array([3.0, 0.0, 3.0, 0.0, 3.0])
        out = smooth_uniform(x, 3)
        assert out[2] == pytest.approx(1.0)  # (0+3+0)/3
        assert out[0] == pytest.approx(1.5)  # (3+0)/2, truncated window
        assert out[4] == pytest.approx(1.5)

    def test_even_window_rejected(self):
        with pytest.raises(ValueError):
            smooth_uniform(np.ones(8), 4)


class TestThresholdRule:
    def test_half_of_smoothed_max(self):
        # smoothed == raw at window 1; threshold = 0.5 * 4 = 2; bins >= 2 stay
        mask = activation_mask(profile([0, 1, 2, 4, 1.9, 0]), RAW)
        assert mask.selected.tolist() == [False, False, True, True,
                                          False, False]

    def test_threshold_uses_smoothed_peak(self):
        # raw peak 9 sits alone; with window 3 the smoothed peak is lower, so
        # the cutoff follows the smoothed field, not the raw one
        values = [0, 0, 9, 0, 0, 4, 4, 4, 0, 0]
        smoothed = smooth_uniform(np.array(values, dtype=float), 3)
        cutoff = 0.5 * smoothed.max()
        mask = activation_mask(profile(values),
                               MaskParams(window=3, threshold_frac=0.5,
                                          max_gap=1))
        assert mask.selected.tolist() == (smoothed >= cutoff).tolist()


class TestGapClosing:
    def _span_profile(self, gap):
        values = np.zeros(40)
        values[2] = 1.0
        values[3 + gap] = 1.0
        return profile(values)

    def test_gap_shorter_than_max_closed(self):
        mask = activation_mask(self._span_profile(13), RAW)
        assert mask.selected[2:17].all()  # 13 empty cells bridged

    def test_gap_equal_to_max_not_closed(self):
        mask = activation_mask(self._span_profile(14), RAW)
        assert mask.selected[2] and mask.selected[17]
        assert not mask.selected[3:17].any()

    def test_gap_closing_never_shrinks_span(self):
        closed = activation_mask(self._span_profile(13), RAW)
        kept = activation_mask(self._span_profile(14), RAW)
        assert (closed.first_idx, closed.last_idx) == (2, 16)
        assert (kept.first_idx, kept.last_idx) == (2, 17)


class TestLrp:
    def test_span_first_to_last_inclusive(self):
        # bins 2..17 -> 16 cells -> 24 m at delta_r 1.5, gap left open inside
        values = np.zeros(40)
        values[2] = 1.0
        values[17] = 1.0
        assert lrp_meters(profile(values), RAW) == pytest.approx(16 * 1.5)

    def test_single_bin(self):
        values = np.zeros(10)
        values[4] = 2.0
        assert lrp_meters(profile(values), RAW) == pytest.approx(1.5)

    def test_empty_mask_raises(self):
        with pytest.raises(ValueError, match="no target"):
            lrp_meters(profile(np.zeros(10)), RAW)


class TestTlop:
    def test_axis_grid_points(self):
        assert tlop(100.0, 20.0, 0.0) == pytest.approx(100.0, abs=1e-9)
        assert tlop(100.0, 20.0, 90.0) == pytest.approx(20.0, abs=1e-9)
        assert tlop(100.0, 20.0, 180.0) == pytest.approx(100.0, abs=1e-9)
        assert tlop(100.0, 20.0, 45.0) == pytest.approx(
            (100.0 + 20.0) / math.sqrt(2.0), abs=1e-9)

    @given(st.floats(min_value=10.0, max_value=300.0),
           st.floats(min_value=2.0, max_value=70.0),
           st.floats(min_value=-720.0, max_value=720.0))
    def test_bounds_and_symmetries(self, length, width, theta):
        width = min(width, length)
        value = tlop(length, width, theta)
        assert min(length, width) - 1e-9 <= value
        assert value <= math.hypot(length, width) + 1e-9
        assert value == pytest.approx(tlop(length, width, theta + 180.0),
                                      abs=1e-6)
        assert value == pytest.approx(tlop(length, width, -theta), abs=1e-6)

    def test_half_degree_sweep_consistency(self):
        length, width = 120.0, 25.0
        thetas = np.arange(0.0, 360.0, 0.5)
        values = np.array([tlop(length, width, t) for t in thetas])
        expected = (length * np.abs(np.cos(np.radians(thetas)))
                    + width * np.abs(np.sin(np.radians(thetas))))
        assert np.allclose(values, expected, atol=1e-9)

    def test_positive_dimensions_required(self):
        with pytest.raises(ValueError):
            tlop(0.0, 5.0, 10.0)


class TestEstimateSnr:
    def test_constructed_ratio(self):
        # signal bins at 1.0 (mask), noise bins at 0.1 -> 20 dB exactly
        values = np.full(100, 0.1)
        values[40:50] = 1.0
        est = estimate_snr_db(profile(values), RAW)
        assert est == pytest.approx(20.0, abs=1e-9)

    def test_empty_mask_raises(self):
        with pytest.raises(ValueError):
            estimate_snr_db(profile(np.zeros(10)), RAW)

    def test_full_mask_raises(self):
        with pytest.raises(ValueError, match="every bin"):
            estimate_snr_db(profile(np.ones(10)), RAW)


class TestPearson:
    def test_perfect_correlation(self):
        x = np.arange(10.0)
        assert pearson_r(x, 3.0 * x + 1.0) == pytest.approx(1.0)
        assert pearson_r(x, -x) == pytest.approx(-1.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            pearson_r(np.arange(3.0), np.arange(4.0))
        with pytest.raises(ValueError):
            pearson_r(np.array([1.0]), np.array([2.0]))
        with pytest.raises(ValueError, match="zero variance"):
            pearson_r(np.ones(5), np.arange(5.0))
