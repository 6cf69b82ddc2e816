import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from photon_imager.model import DetectionFrame, GaussianPulse, InstrumentConfig, SampledPulse, Scene
from photon_imager.pixelwise import (
    Imputation,
    cml_reflectivity,
    histogram_depth,
    impute_missing,
    lmf_grid_search,
    log_matched_filter_depth,
    log_matched_filter_image,
    median_filtered_depth,
    normalized_count_reflectivity,
)
from photon_imager.simulator import simulate_frame, simulate_ground_truth_frame


def unit_cfg(B=0.0, N=1000, eta=1.0, S=1.0):
    return InstrumentConfig(eta=eta, S=S, B=B, N=N, T_r=100e-9, T_p=270e-12)


class TestReflectivity:
    def test_examples(self):
        assert cml_reflectivity(unit_cfg(), 0) == 0
        assert cml_reflectivity(unit_cfg(B=0.3), 0) == 0
        assert cml_reflectivity(unit_cfg(), 500) == pytest.approx(math.log(2), rel=1e-15)
        assert cml_reflectivity(unit_cfg(B=0.8), 500) == 0
        assert normalized_count_reflectivity(unit_cfg(), 0) == 0
        cfg = InstrumentConfig(eta=0.5, S=0.02, B=0.0, N=1000, T_r=100e-9, T_p=270e-12)
        assert normalized_count_reflectivity(cfg, 1) == pytest.approx(0.1, rel=1e-14)

    def test_saturation_flag(self):
        est, sat = cml_reflectivity(unit_cfg(N=10), np.array([3, 10]), return_saturated=True)
        assert np.isinf(est[1]) and sat.tolist() == [False, True]

    def test_range_check(self):
        with pytest.raises(ValueError):
            cml_reflectivity(unit_cfg(N=10), 11)

    @given(N=st.integers(1, 5000), B=st.floats(0, 0.1), eta_s=st.floats(1e-4, 1.0))
    def test_cml_nondecreasing_in_k(self, N, B, eta_s):
        cfg = unit_cfg(B=B, N=N, S=eta_s)
        est = cml_reflectivity(cfg, np.arange(N + 1))
        assert np.all(np.diff(est) >= 0)

    @given(k=st.integers(0, 20))
    def test_normalized_count_is_first_order_cml(self, k):
        cfg = unit_cfg(N=100_000, S=1e-3)
        a, b = cml_reflectivity(cfg, k), normalized_count_reflectivity(cfg, k)
        assert abs(a - b) <= b * (k / cfg.N) + 1e-15


class TestLogMatchedFilter:
    def test_single_time(self, cfg, pulse):
        t0 = 1000 * cfg.delta
        assert log_matched_filter_depth(cfg, pulse, [t0]) == pytest.approx(cfg.c * t0 / 2, rel=1e-15)

    def test_two_times(self, cfg, pulse):
        got = log_matched_filter_depth(cfg, pulse, [10e-9, 20e-9])
        assert got == pytest.approx(2.998e8 * 7.5e-9, rel=1e-14)
        assert got == pytest.approx(2.2485, rel=1e-12)

    def test_empty_is_missing(self, cfg, pulse):
        assert np.isnan(log_matched_filter_depth(cfg, pulse, []))

    @given(st.lists(st.integers(200, 12000), min_size=1, max_size=12))
    def test_grid_path_matches_closed_form(self, bins):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=1e-3, N=1000, T_r=100e-9, T_p=270e-12)
        pulse = GaussianPulse(cfg.S, cfg.T_p)
        times = np.array(bins) * cfg.delta
        a = log_matched_filter_depth(cfg, pulse, times)
        b = log_matched_filter_depth(cfg, pulse, times, method="grid")
        assert b == pytest.approx(a, rel=1e-12)

    def test_sampled_pulse_grid_search(self, cfg):
        t = np.linspace(-1.5e-9, 1.5e-9, 61)
        sp = SampledPulse(t, np.exp(-0.5 * (t / 3e-10) ** 2), 1.0)
        z_true = 4.2
        times = np.array([2 * z_true / cfg.c])
        assert lmf_grid_search(sp, times, cfg) == pytest.approx(z_true, abs=cfg.c * cfg.delta / 2)

    def test_image_uses_keep(self, cfg, pulse):
        f = DetectionFrame(np.array([[2, 0]]).reshape(1, 2).repeat(2, 0), np.array([10e-9, 30e-9, 10e-9, 30e-9]))
        z = log_matched_filter_image(f, cfg, pulse)
        assert z[0, 0] == pytest.approx(cfg.c * 10e-9, rel=1e-14)
        assert np.isnan(z[0, 1])
        zk = log_matched_filter_image(f, cfg, pulse, keep=np.array([True, False, True, False]))
        assert zk[0, 0] == pytest.approx(cfg.c * 5e-9, rel=1e-14)

    def test_background_only_estimates_are_metres_off(self, cfg, pulse):
        n = 64
        scene = Scene(np.zeros((n, n)), np.full((n, n), 7.5))
        f = simulate_frame(scene, cfg.replace(B=2e-3), pulse, seed=3)
        z = log_matched_filter_image(f, cfg, pulse)
        ok = ~np.isnan(z)
        assert ok.sum() > 1000
        assert np.sqrt(np.mean((z[ok] - 7.5) ** 2)) > 3.0


class TestHistogram:
    def test_identical_times(self, cfg, pulse):
        bw = cfg.T_p / 2
        t = 123 * bw + 0.1 * bw
        got = histogram_depth(cfg, pulse, [t] * 5)
        assert got == pytest.approx(cfg.c / 2 * (123.5 * bw), rel=1e-12)

    def test_tie_goes_to_earlier_bin(self, cfg, pulse):
        bw = cfg.T_p / 2
        got = histogram_depth(cfg, pulse, [40.2 * bw, 10.2 * bw])
        assert got == pytest.approx(cfg.c / 2 * 10.5 * bw, rel=1e-12)

    def test_empty_and_bin_check(self, cfg, pulse):
        assert np.isnan(histogram_depth(cfg, pulse, []))
        with pytest.raises(ValueError):
            histogram_depth(cfg, pulse, [1e-9], bin_width=cfg.delta / 2)

    @staticmethod
    def _high_sbr_frame(sbr, k, seed):
        S = 0.03
        cfg = InstrumentConfig(eta=0.35, S=S, B=0.35 * S / sbr, N=1000, T_r=100e-9, T_p=270e-12)
        pulse = GaussianPulse(cfg.S, cfg.T_p)
        scene = Scene(np.ones((40, 40)), np.full((40, 40), 5.0))
        frame = simulate_ground_truth_frame(scene, cfg, pulse, seed=seed, min_detections=k)
        return cfg, pulse, frame.time_lists()

    def test_high_count_error_within_one_bin(self):
        # Monte Carlo over 1600 pixels with 200 detections each at SBR 1000
        cfg, pulse, lists = self._high_sbr_frame(1000, 200, seed=1)
        h = np.array([histogram_depth(cfg, pulse, t) for t in lists])
        bin_depth = cfg.T_p / 2 * cfg.c / 2
        assert np.sqrt(np.mean((h - 5.0) ** 2)) <= bin_depth

    def test_agrees_with_log_matched_filter_at_high_sbr(self):
        cfg, pulse, lists = self._high_sbr_frame(100, 100, seed=2)
        h = np.array([histogram_depth(cfg, pulse, t) for t in lists])
        m = np.array([log_matched_filter_depth(cfg, pulse, t) for t in lists])
        agree = np.mean(np.abs(h - m) <= cfg.T_p / 2 * cfg.c / 2)
        assert agree >= 0.95, f"only {agree:.1%} of trials agree within one bin"


class TestImputation:
    def test_identity(self):
        img = np.arange(9.0).reshape(3, 3)
        np.testing.assert_array_equal(impute_missing(img), img)

    def test_single_hole(self):
        img = np.full((3, 3), 2.5)
        img[1, 1] = np.nan
        assert impute_missing(img)[1, 1] == 2.5

    def test_checkerboard_one_pass(self):
        rng = np.random.default_rng(0)
        img = rng.random((8, 8))
        hole = (np.add.outer(np.arange(8), np.arange(8)) % 2).astype(bool)
        img[hole] = np.nan
        out = impute_missing(img)
        # one pass: every filled value is the mean of its known neighbours in the input
        for i, j in zip(*np.nonzero(hole)):
            nb = [img[a, b] for a in range(i - 1, i + 2) for b in range(j - 1, j + 2)
                  if 0 <= a < 8 and 0 <= b < 8 and (a, b) != (i, j) and not hole[a, b]]
            assert len(nb) >= 2
            assert out[i, j] == pytest.approx(np.mean(nb), rel=1e-14)

    def test_flood_fill_large_region(self):
        img = np.full((10, 10), np.nan)
        img[0, 0] = 3.0
        np.testing.assert_allclose(impute_missing(img), 3.0)

    def test_all_missing(self):
        with pytest.raises(ValueError):
            impute_missing(np.full((3, 3), np.nan))

    def test_random_uniform(self, cfg):
        img = np.full((50, 50), np.nan)
        out = impute_missing(img, Imputation.RANDOM_UNIFORM, cfg=cfg, seed=4)
        assert np.all((out >= 0) & (out < cfg.z_max))
        np.testing.assert_array_equal(out, impute_missing(img, "random_uniform", cfg=cfg, seed=4))
        with pytest.raises(ValueError):
            impute_missing(img, Imputation.RANDOM_UNIFORM)

    def test_median_filtered_removes_impulse(self):
        img = np.full((9, 9), 4.0)
        img[4, 4] = 12.0
        img[2, 2] = np.nan
        np.testing.assert_allclose(median_filtered_depth(img), 4.0)
