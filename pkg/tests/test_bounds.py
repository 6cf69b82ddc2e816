import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from photon_imager.bounds import (
    Estimate,
    crlb_depth,
    crlb_reflectivity,
    expint_excess,
    mc_depth_mse_gaussian,
    mc_poisson_limit_mse,
    ml_bias_test,
    mse_depth_gaussian,
    mse_depth_gaussian_from_count,
    poisson_limit_ml_reflectivity,
    poisson_limit_mse,
    random_guess_mse,
    reflectivity_sweep,
    write_sweep_csv,
    SWEEP_HEADER,
)
from photon_imager.model import GaussianPulse, InstrumentConfig, SampledPulse, mean_count
from photon_imager.pixelwise import normalized_count_reflectivity


def unit_cfg(**kw):
    base = dict(eta=1.0, S=1.0, B=0.0, N=1000, T_r=100e-9, T_p=270e-12)
    base.update(kw)
    return InstrumentConfig(**base)


class TestReflectivityBounds:
    def test_examples(self):
        cfg = unit_cfg(B=0.5)
        assert crlb_reflectivity(cfg, 0.5) == pytest.approx((math.e - 1) / 1000, rel=1e-14)
        assert (math.e - 1) / 1000 == pytest.approx(1.7183e-3, abs=1e-7)
        assert crlb_reflectivity(cfg, 0.5, approximate=True) == pytest.approx(1.0e-3, rel=1e-14)
        assert crlb_reflectivity(cfg.replace(N=2000), 0.5) == pytest.approx(crlb_reflectivity(cfg, 0.5) / 2, rel=1e-14)

    @given(alpha=st.floats(0, 50), B=st.floats(0, 5), S=st.floats(1e-4, 1.0))
    def test_exact_at_least_approximation(self, alpha, B, S):
        cfg = unit_cfg(B=B, S=S, eta=0.35)
        assert crlb_reflectivity(cfg, alpha) >= crlb_reflectivity(cfg, alpha, approximate=True)

    def test_poisson_limit_estimator(self):
        cfg = unit_cfg(S=0.01)
        k = np.arange(0, 50)
        np.testing.assert_allclose(poisson_limit_ml_reflectivity(cfg, k), normalized_count_reflectivity(cfg, k))
        cfgb = unit_cfg(S=0.01, B=0.002)
        assert poisson_limit_ml_reflectivity(cfgb, 0) == pytest.approx(-0.2)

    @pytest.mark.parametrize("alpha,N", [(0.2, 500), (1.0, 1000), (3.0, 2000)])
    def test_mc_respects_bound(self, alpha, N):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=3.5e-4, N=N, T_r=100e-9, T_p=270e-12)
        mc = mc_poisson_limit_mse(cfg, alpha, trials=200_000, seed=N)
        assert mc.value >= crlb_reflectivity(cfg, alpha) * (1 - 0.03)
        assert mc.ci_lo <= poisson_limit_mse(cfg, alpha) * 1.01 and mc.ci_hi >= poisson_limit_mse(cfg, alpha) * 0.99


class TestBias:
    def test_positive_bias(self):
        cfg = InstrumentConfig(eta=1.0, S=0.05, B=0.0, N=100, T_r=100e-9, T_p=270e-12)
        est = ml_bias_test(cfg, 1.0, trials=200_000, seed=1)
        assert est.ci_lo > 0
        assert est.excluded == 0

    def test_bias_shrinks_with_N(self):
        C = 5.0
        vals = []
        for N in [100, 1000, 10_000]:
            cfg = InstrumentConfig(eta=1.0, S=C / N, B=0.0, N=N, T_r=100e-9, T_p=270e-12)
            vals.append(ml_bias_test(cfg, 1.0, trials=400_000, seed=N).value)
        assert vals[0] > vals[1] > vals[2] > 0

    def test_saturated_draws_excluded(self):
        cfg = InstrumentConfig(eta=1.0, S=3.0, B=0.0, N=5, T_r=100e-9, T_p=270e-12)
        est = ml_bias_test(cfg, 1.0, trials=20_000, seed=3)
        assert est.excluded > 0 and est.trials == 20_000 - est.excluded

    def test_invalid(self):
        cfg = unit_cfg()
        with pytest.raises(ValueError):
            ml_bias_test(cfg, 0.0, 100)


class TestDepthBounds:
    def test_background_free_gaussian(self):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=0.0, N=1000, T_r=100e-9, T_p=270e-12)
        pulse = GaussianPulse(cfg.S, cfg.T_p)
        C = float(mean_count(cfg, 0.8))
        assert crlb_depth(cfg, pulse, 0.8, 6.0) == pytest.approx((cfg.c * cfg.T_p / 2) ** 2 / C, rel=1e-6)

    @given(z1=st.floats(1.0, 13.0), z2=st.floats(1.0, 13.0))
    def test_shift_invariance(self, z1, z2):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=2e-4, N=1000, T_r=100e-9, T_p=270e-12)
        pulse = GaussianPulse(cfg.S, cfg.T_p)
        assert crlb_depth(cfg, pulse, 0.6, z1) == pytest.approx(crlb_depth(cfg, pulse, 0.6, z2), rel=1e-6)

    def test_decreasing_in_alpha(self):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=2e-4, N=1000, T_r=100e-9, T_p=270e-12)
        pulse = GaussianPulse(cfg.S, cfg.T_p)
        vals = [crlb_depth(cfg, pulse, a, 5.0) for a in np.linspace(0.05, 2, 12)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_sampled_pulse_close_to_gaussian(self):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=0.0, N=1000, T_r=100e-9, T_p=270e-12)
        t = np.linspace(-6 * cfg.T_p, 6 * cfg.T_p, 2001)
        sp = SampledPulse(t, np.exp(-0.5 * (t / cfg.T_p) ** 2), cfg.S)
        gp = GaussianPulse(cfg.S, cfg.T_p)
        assert crlb_depth(cfg, sp, 0.8, 5.0) == pytest.approx(crlb_depth(cfg, gp, 0.8, 5.0), rel=1e-2)

    @given(st.floats(0, 40))
    def test_expint_excess(self, C):
        # integral_0^C (e^t - 1)/t dt = Ei(C) - gamma - log C; that difference
        # cancels catastrophically for small C, where the series C + C^2/4 + C^3/18 is exact enough
        if C < 1e-3:
            ref = C + C**2 / 4 + C**3 / 18
        else:
            ref = special.expi(C) - np.euler_gamma - math.log(C)
        assert expint_excess(C) == pytest.approx(ref, rel=1e-10, abs=1e-300)

    def test_mse_at_zero_count(self):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=0.0, N=1000, T_r=100e-9, T_p=270e-12)
        z = 3.0
        half = cfg.c * cfg.T_r / 2
        assert mse_depth_gaussian_from_count(cfg, 0.0, z, uncorrected=True) == half**2 + (z - half / 2) ** 2
        assert mse_depth_gaussian_from_count(cfg, 0.0, z) == random_guess_mse(cfg, z)
        assert random_guess_mse(cfg, z) == pytest.approx(half**2 / 12 + (z - half / 2) ** 2, rel=1e-15)

    def test_uniform_guess_mse_by_quadrature(self):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=0.0, N=1000, T_r=100e-9, T_p=270e-12)
        for z in [0.0, 4.0, 10.0]:
            ref, _ = integrate.quad(lambda g: (g - z) ** 2 / cfg.z_max, 0, cfg.z_max)
            assert random_guess_mse(cfg, z) == pytest.approx(ref, rel=1e-12)

    def test_efficient_at_large_count(self):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=0.0, N=1000, T_r=100e-9, T_p=270e-12)
        pulse = GaussianPulse(cfg.S, cfg.T_p)
        # choose alpha so that C = 50
        alpha = -math.log1p(-50 / cfg.N) / (cfg.eta * cfg.S)
        assert float(mean_count(cfg, alpha)) == pytest.approx(50)
        ratio = mse_depth_gaussian(cfg, alpha, 5.0) / crlb_depth(cfg, pulse, alpha, 5.0)
        assert ratio == pytest.approx(1.0, rel=0.05)

    def test_large_count_series_is_continuous(self):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=0.0, N=1000, T_r=100e-9, T_p=270e-12)
        below = mse_depth_gaussian_from_count(cfg, 699.999, 5.0)
        above = mse_depth_gaussian_from_count(cfg, 700.0, 5.0)
        assert above == pytest.approx(below, rel=1e-5)

    def test_requires_background_free(self):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=1e-4, N=1000, T_r=100e-9, T_p=270e-12)
        with pytest.raises(ValueError):
            mse_depth_gaussian(cfg, 1.0, 3.0)

    @pytest.mark.parametrize("C", [0.5, 2.0])
    def test_mc_depth_quick(self, C):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=0.0, N=1000, T_r=100e-9, T_p=270e-12)
        mc = mc_depth_mse_gaussian(cfg, C, 5.0, trials=200_000, seed=7)
        exact = mse_depth_gaussian_from_count(cfg, C, 5.0)
        assert mc.ci_lo - 0.01 * exact <= exact <= mc.ci_hi + 0.01 * exact


class TestSweep:
    @pytest.mark.parametrize("param,values", [("alpha", [0.2, 1.0]), ("N", [200, 1000]), ("sbr", [1.0, 7.0])])
    def test_rows(self, tmp_path, param, values):
        cfg = InstrumentConfig(eta=0.35, S=1e-3, B=3.5e-4, N=1000, T_r=100e-9, T_p=270e-12)
        rows = reflectivity_sweep(cfg, param, values, trials=20_000)
        assert [r[1] for r in rows] == values
        for r in rows:
            assert r[4] <= r[3] <= r[5]
        path = tmp_path / "sweep.csv"
        write_sweep_csv(rows, path)
        with open(path) as fh:
            data = list(csv.reader(fh))
        assert tuple(data[0]) == SWEEP_HEADER == ("param", "value", "bound", "mc_estimate", "ci_lo", "ci_hi")
        assert float(data[1][2]) == rows[0][2]

    def test_unknown_param(self):
        with pytest.raises(ValueError):
            reflectivity_sweep(unit_cfg(), "T_p", [1.0])

    def test_estimate_interval(self):
        e = Estimate.from_samples(np.array([1.0, 2.0, 3.0, 4.0]))
        assert e.value == 2.5 and e.ci_lo < 2.5 < e.ci_hi and e.trials == 4
